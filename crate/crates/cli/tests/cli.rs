use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bhstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bhstab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bhstab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_eig_asym_certify_on_two_disks() {
    let tmp = tempfile::tempdir().unwrap();
    let dom = tmp.path().join("pair.grid");
    let p = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
    ok(&[
        "gen", "two_disks", "radius=1", "separation=3", "--resolution", "0.0625", "--out", &p("pair.grid"),
    ]);
    assert!(fs::read_to_string(&dom).unwrap().starts_with("GRID "));

    ok(&["eig", &p("pair.grid"), "--k", "3", "--out", &p("eig.json")]);
    let eig = json(&tmp.path().join("eig.json"));
    assert_eq!(eig["kernel_dimension"], 2);
    assert_eq!(eig["eigenvalues"].as_array().unwrap().len(), 3);

    let asym: serde_json::Value = serde_json::from_str(&ok(&["asym", &p("pair.grid")])).unwrap();
    assert!(asym["A2"]["value"].as_f64().unwrap() < 0.05, "{asym}");
    assert!(asym["A"]["value"].as_f64().unwrap() > 0.3, "{asym}");

    ok(&["certify", &p("pair.grid"), "--seed", "3", "--out", &p("report.json")]);
    let report = json(&tmp.path().join("report.json"));
    for key in ["mu2_scaled", "mu2_star", "bh_deficit", "A2", "D_quadrature", "alpha_beta"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert!(report["bh_deficit"].as_f64().unwrap().abs() < 0.5);
}

#[test]
fn sweep_then_report_reproduces_the_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{
            "families": [
                {"family": "disk", "fixed": {"radius": 1.0}},
                {"family": "rectangle", "fixed": {"height": 1.0},
                 "ranges": [{"name": "width", "min": 1.0, "max": 2.0, "steps": 2}]}
            ],
            "resolutions": [0.03125],
            "tol": 1e-8,
            "seed": 42,
            "output_dir": "ignored"
        }"#,
    )
    .unwrap();
    let run = tmp.path().join("run");
    ok(&["sweep", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    let csv = fs::read_to_string(run.join("corpus.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("family,params,h,"));
    assert!(run.join("report.json").exists() && run.join("scatter.svg").exists());

    let again = tmp.path().join("again");
    ok(&[
        "report",
        run.join("corpus.csv").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(fs::read_to_string(again.join("corpus.csv")).unwrap(), csv);
    let summary = json(&again.join("report.json"));
    assert_eq!(summary["rows"], 3);
    assert_eq!(summary["failed_rows"], 0);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(bhstab(&[]).status.code(), Some(1));
    assert_eq!(bhstab(&["eig"]).status.code(), Some(1));
    assert_eq!(bhstab(&["--help"]).status.code(), Some(0));
    assert_eq!(bhstab(&["gen", "hexagon", "--resolution", "0.1"]).status.code(), Some(1));
    let missing = tmp.path().join("missing.grid");
    assert_eq!(bhstab(&["eig", missing.to_str().unwrap()]).status.code(), Some(1));

    let dom = tmp.path().join("disk.grid");
    ok(&["gen", "disk", "radius=1", "--resolution", "0.0625", "--out", dom.to_str().unwrap()]);
    let out = bhstab(&["eig", dom.to_str().unwrap(), "--tol", "1e-30"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
