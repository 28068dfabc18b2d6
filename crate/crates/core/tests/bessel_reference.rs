//! Bessel values against a table computed from the defining power series in
//! high-precision arithmetic.

use bh_stability::special::bessel_j;

#[test]
fn bessel_matches_reference_table() {
    let table = include_str!("data/bessel_series.txt");
    let mut checked = 0;
    let mut worst = (0.0f64, String::new());
    for line in table.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(f.len(), 3, "malformed line {line:?}");
        let nu = f[0].parse::<f64>().unwrap() / 2.0;
        let x: f64 = f[1].parse().unwrap();
        let want: f64 = f[2].parse().unwrap();
        let got = bessel_j(nu, x).unwrap();
        let err = (got - want).abs();
        if err > worst.0 {
            worst = (err, line.to_string());
        }
        assert!(err <= 1e-10, "J_{nu}({x}) = {got}, table {want}, error {err:e}");
        checked += 1;
    }
    assert!(checked > 100, "only {checked} table rows");
    eprintln!("{checked} values, worst error {:.2e} at {}", worst.0, worst.1);
}
