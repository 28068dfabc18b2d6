use std::fs;

use bh_stability::asymmetry::fraenkel2;
use bh_stability::domain::{generate, ShapeSpec};
use bh_stability::experiments::{
    certify_instance, csv_string, emit_report, fit_exponent, parse_csv, run_sweep, ReportSummary,
    SweepConfig, A2_THRESHOLD,
};
use bh_stability::special::{mu1_ball, mu2_star};
use bh_stability::spectral::convergence_study;

fn two_disk_config(dir: &str) -> SweepConfig {
    SweepConfig::from_json(&format!(
        r#"{{
            "families": [{{
                "family": "two_disks",
                "fixed": {{"radius": 1.0}},
                "ranges": [{{"name": "separation", "min": 2.0, "max": 3.0, "steps": 3}}]
            }}],
            "resolutions": [0.015625],
            "tol": 1e-8,
            "seed": 42,
            "output_dir": "{dir}"
        }}"#
    ))
    .unwrap()
}

#[test]
fn two_disk_sweep_is_near_equality_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = two_disk_config(tmp.path().to_str().unwrap());
    let rows = run_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 3);
    let star = mu2_star(2).unwrap();
    for r in &rows {
        assert!(r.is_ok(), "{}", r.status);
        assert!(r.bh_deficit <= 0.5, "{} {}: {}", r.family, r.params, r.bh_deficit);
        assert!(r.bh_deficit.abs() <= 0.02 * star);
        assert!(r.a2 < 0.05, "{}: A2 = {}", r.params, r.a2);
    }

    let files = emit_report(&rows, cfg.seed, tmp.path()).unwrap();
    let text = fs::read_to_string(&files.csv).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert_eq!(text, csv_string(&rows));

    let again = run_sweep(&cfg).unwrap();
    assert_eq!(csv_string(&again), text, "rerun changed the CSV");

    let back = parse_csv(text.as_bytes()).unwrap();
    assert_eq!(csv_string(&back), text);
}

#[test]
fn report_files_for_a_perturbed_disk_family() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SweepConfig::from_json(
        r#"{
            "families": [{
                "family": "perturbed_disk",
                "fixed": {"radius": 1.0, "mode": 2.0},
                "ranges": [{"name": "amplitude", "min": 0.05, "max": 0.3, "steps": 6}]
            }],
            "resolutions": [0.03125],
            "tol": 1e-8,
            "seed": 7,
            "output_dir": "unused"
        }"#,
    )
    .unwrap();
    let rows = run_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 6);
    let qualifying = rows
        .iter()
        .filter(|r| r.is_ok() && r.a2 > A2_THRESHOLD && r.bh_deficit > 0.0)
        .count();
    assert_eq!(qualifying, 6);
    let fit = fit_exponent(&rows).unwrap();
    assert!(fit.min_ratio > 0.0 && fit.all_above_reference);

    let files = emit_report(&rows, cfg.seed, tmp.path()).unwrap();
    assert_eq!(fs::read_to_string(&files.csv).unwrap().lines().count(), 7);

    let json = fs::read_to_string(&files.json).unwrap();
    let generic: serde_json::Value = serde_json::from_str(&json).unwrap();
    let summary: ReportSummary = serde_json::from_value(generic.clone()).unwrap();
    assert_eq!(serde_json::to_value(&summary).unwrap(), generic);
    assert_eq!(summary.seed, 7);
    assert_eq!(summary.rows, 6);
    let min = summary.empirical_constants.thm11_min.unwrap();
    assert!((min - fit.min_ratio).abs() <= 1e-12 * min);

    let svg = fs::read_to_string(&files.svg).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let markers = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("marker"))
        .count();
    assert_eq!(markers, qualifying);
    assert_eq!(
        doc.descendants()
            .filter(|n| n.attribute("class") == Some("reference"))
            .count(),
        1
    );
}

#[test]
fn empty_family_list_is_rejected() {
    let err = SweepConfig::from_json(
        r#"{"families": [], "resolutions": [0.1], "tol": 1e-8, "seed": 1, "output_dir": "x"}"#,
    )
    .unwrap_err();
    assert!(err.to_string().contains("no families"), "{err}");
}

#[test]
fn single_disk_falls_strictly_below_two_ball_value() {
    let r = certify_instance(&ShapeSpec::Disk { radius: 1.0 }, 1.0 / 64.0, 1e-8, 42).unwrap();
    let star = mu2_star(2).unwrap();
    assert!(r.mu2_scaled < star);
    assert!((r.bh_deficit - (star - r.mu2_scaled)).abs() < 1e-12);
    // the second nonzero disk eigenvalue is the double μ₁ of the disk
    assert!((r.mu2 - r.mu1).abs() < 1e-6 * r.mu1);
    assert!(r.a2 > A2_THRESHOLD);
}

#[test]
fn dumbbell_certificate_is_consistent() {
    let spec = ShapeSpec::Dumbbell {
        radius: 1.0,
        separation: 2.5,
        neck: 0.2,
    };
    let r = certify_instance(&spec, 1.0 / 64.0, 1e-8, 42).unwrap();
    assert!(r.sum_alpha_sq > 0.0);
    let (d1, d2) = r.alpha_beta.relation_defects();
    assert!(d1.abs().max(d2.abs()) <= r.alpha_beta_tolerance);
    assert!(r.d_quadrature >= r.d_closedform_lower - r.quadrature_slack);
    assert!(r.mu2 <= r.rayleigh_bound * (1.0 + 5e-2));
    assert!(r.rayleigh_bound <= mu1_ball(r.r_omega, 2).unwrap() * (1.0 + 5e-2));
    assert!(r.bh_deficit > 0.0);
}

#[test]
fn two_ball_asymmetry_decreases_as_disks_separate() {
    let mut prev = f64::INFINITY;
    let mut values = Vec::new();
    for k in 0..=4 {
        let delta = 0.5 * k as f64;
        let spec = ShapeSpec::TwoDisks {
            radius: 1.0,
            separation: delta,
        };
        let a2 = fraenkel2(&generate(&spec, 1.0 / 32.0).unwrap()).unwrap().value;
        values.push(a2);
        assert!(a2 <= prev + 2e-3, "A2 rose at separation {delta}: {values:?}");
        prev = a2;
    }
    assert!(values[4] < 0.05 && values[0] > 0.3, "{values:?}");
}

#[test]
fn disk_and_two_disk_extrapolation() {
    // the h = 1/32 staircase is too coarse for three-point extrapolation of the disk
    let hs = [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0];
    let disk = convergence_study(&ShapeSpec::Disk { radius: 1.0 }, &hs, 2, 1e-10).unwrap();
    let mu1 = disk.extrapolated[1].expect("disk mu1 extrapolation").value;
    let exact = mu1_ball(1.0, 2).unwrap();
    assert!((mu1 - exact).abs() < 5e-3 * exact, "{mu1} vs {exact}");

    let pair = ShapeSpec::TwoDisks {
        radius: 1.0,
        separation: 3.0,
    };
    let study = convergence_study(&pair, &hs, 3, 1e-10).unwrap();
    let scaled = study
        .extrapolate_scaled(2)
        .unwrap()
        .expect("two-disk extrapolation")
        .value;
    let star = mu2_star(2).unwrap();
    assert!((scaled - star).abs() < 1e-2 * star, "{scaled} vs {star}");
}
