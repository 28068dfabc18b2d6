//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any FAIL.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bh_stability::asymmetry::{fraenkel2, fraenkel2_exhaustive};
use bh_stability::certificate::{cbar_constant, lemma32_bounds, ORTHOGONALITY_TOL};
use bh_stability::domain::{generate, symdiff_ballpair, ShapeSpec};
use bh_stability::experiments::{default_corpus, run_sweep_detailed, SweepRecord, A2_THRESHOLD};
use bh_stability::special::{
    mu2_star, ode_residual, ode_residual_for, weinberger_beta, ProfileParams,
};
use bh_stability::spectral::{assemble, convergence_study, lowest_eigenpairs};

type Outcome = Result<(bool, String), String>;

/// Power series of `J_n` for integer `n`, written out independently of the
/// library.
fn j_int(n: i32, x: f64) -> f64 {
    let mut term = (x / 2.0).powi(n);
    for k in 1..=n {
        term /= k as f64;
    }
    let mut sum = term;
    for m in 1..80 {
        term *= -(x * x / 4.0) / (m as f64 * (m + n) as f64);
        sum += term;
    }
    sum
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

fn beta_roots() -> Outcome {
    let t = Instant::now();
    // J₁'(x) = J₀(x) - J₁(x)/x
    let oracle2 = bisect(|x| j_int(0, x) - j_int(1, x) / x, 1.0, 3.0);
    // N=3 profile x^{-1/2} J_{3/2}(x) ∝ (sin x - x cos x)/x², whose derivative has
    // numerator (x² - 2) sin x + 2x cos x
    let oracle3 = bisect(|x| (x * x - 2.0) * x.sin() + 2.0 * x * x.cos(), 1.0, 3.0);
    let b2 = weinberger_beta(2).map_err(|e| e.to_string())?;
    let b3 = weinberger_beta(3).map_err(|e| e.to_string())?;
    let el = t.elapsed();
    let ok = (b2 - oracle2).abs() < 1e-9
        && (b3 - oracle3).abs() < 1e-9
        && (b2 - 1.8411837813).abs() < 1e-9
        && (b3 - 2.0815759778).abs() < 1e-9
        && within(el, 1.0);
    Ok((
        ok,
        format!(
            "beta(2)={b2:.12} (oracle {oracle2:.12}), beta(3)={b3:.12} (oracle {oracle3:.12}), {el:.2?}"
        ),
    ))
}

fn ode_residuals() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for n in [2u32, 3] {
        for r in [0.5, 1.0, 2.0] {
            let p = ProfileParams::new(n, r).map_err(|e| e.to_string())?;
            let beta = weinberger_beta(n).map_err(|e| e.to_string())?;
            // independent profile x^{1-N/2} J_{N/2}(βx/r) from closed forms
            let profile = |x: f64| {
                let s = beta / r;
                match n {
                    2 => {
                        let (j0, j1) = (j_int(0, s * x), j_int(1, s * x));
                        (j1, s * (j0 - j1 / (s * x)))
                    }
                    _ => {
                        // x^{-1/2} J_{3/2}(sx) ∝ (sin y - y cos y)/y² with y = sx
                        let y = s * x;
                        let v = (y.sin() - y * y.cos()) / (y * y);
                        let dv = (y * y * y.sin() - 2.0 * y.sin() + 2.0 * y * y.cos()) / (y * y * y);
                        (v, s * dv)
                    }
                }
            };
            for i in 1..=100 {
                let x = r * i as f64 / 101.0;
                let res = ode_residual(x, &p).map_err(|e| e.to_string())?;
                worst = worst.max(res.abs());
                let (g, _) = profile(x);
                let scale = g.abs().max(1e-300);
                let rel = ode_residual_for(x, &p, profile) / scale;
                worst_oracle = worst_oracle.max(rel.abs() * p.capped(x).0.abs());
            }
        }
    }
    let el = t.elapsed();
    Ok((
        worst <= 1e-4 && worst_oracle <= 1e-4 && within(el, 1.0),
        format!(
            "max residual {worst:.2e} (independent closed-form profile {worst_oracle:.2e}), {el:.2?}"
        ),
    ))
}

fn unit_square() -> Outcome {
    let t = Instant::now();
    let h = 1.0 / 64.0;
    let spec = ShapeSpec::Rectangle {
        width: 1.0,
        height: 1.0,
    };
    let d = generate(&spec, h).map_err(|e| e.to_string())?;
    let s = lowest_eigenpairs(&assemble(&d).map_err(|e| e.to_string())?, 3, 1e-10)
        .map_err(|e| e.to_string())?;
    let exact = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
    let err = (s.eigenvalues[1] - exact).abs();
    let study = convergence_study(&spec, &[1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0], 2, 1e-10)
        .map_err(|e| e.to_string())?;
    let ex = study.extrapolated[1]
        .as_ref()
        .ok_or("no extrapolation for mu1")?
        .value;
    let rel = (ex - PI * PI).abs() / (PI * PI);
    let el = t.elapsed();
    Ok((
        err < 1e-8 && rel < 5e-3 && within(el, 30.0),
        format!(
            "mu1={:.12} vs discrete {exact:.12} (|diff| {err:.1e}), extrapolated {ex:.6} ({:.3}% from pi^2), {el:.2?}",
            s.eigenvalues[1],
            100.0 * rel
        ),
    ))
}

fn unit_disk() -> Outcome {
    let t = Instant::now();
    let target = weinberger_beta(2).map_err(|e| e.to_string())?.powi(2);
    let mut errs = Vec::new();
    let mut mu = Vec::new();
    for k in [64.0, 128.0, 256.0] {
        let d = generate(&ShapeSpec::Disk { radius: 1.0 }, 1.0 / k).map_err(|e| e.to_string())?;
        let s = lowest_eigenpairs(&assemble(&d).map_err(|e| e.to_string())?, 2, 1e-8)
            .map_err(|e| e.to_string())?;
        mu.push(s.eigenvalues[1]);
        errs.push((s.eigenvalues[1] - target).abs());
    }
    let el = t.elapsed();
    let ok = errs[1] / target < 0.02 && errs[0] > errs[1] && errs[1] > errs[2] && within(el, 120.0);
    Ok((
        ok,
        format!(
            "mu1 at h=1/64,1/128,1/256: {:.5}, {:.5}, {:.5} vs beta^2={target:.5}; errors {:.2e} > {:.2e} > {:.2e}, {el:.2?}",
            mu[0], mu[1], mu[2], errs[0], errs[1], errs[2]
        ),
    ))
}

fn two_disks_equality() -> Outcome {
    let t = Instant::now();
    let d = generate(
        &ShapeSpec::TwoDisks {
            radius: 1.0,
            separation: 3.0,
        },
        1.0 / 128.0,
    )
    .map_err(|e| e.to_string())?;
    let s = lowest_eigenpairs(&assemble(&d).map_err(|e| e.to_string())?, 4, 1e-8)
        .map_err(|e| e.to_string())?;
    let kernel = s.eigenvalues.iter().filter(|&&m| m < 1e-8).count();
    let scaled = d.measure() * s.eigenvalues[2];
    let star = mu2_star(2).map_err(|e| e.to_string())?;
    let rel = (scaled - star).abs() / star;
    let el = t.elapsed();
    Ok((
        kernel == 2 && rel < 0.02 && within(el, 120.0),
        format!(
            "{kernel} eigenvalues below 1e-8, |Omega| mu2 = {scaled:.5} vs {star:.5} ({:.3}%), {el:.2?}",
            100.0 * rel
        ),
    ))
}

fn corpus_inequality(recs: &[SweepRecord]) -> Outcome {
    let mut worst: Option<(f64, String)> = None;
    let mut failed = 0;
    for r in recs {
        match &r.report {
            Some(rep) => {
                let excess = rep.mu2_scaled / rep.mu2_star - 1.0;
                if worst.as_ref().map_or(true, |w| excess > w.0) {
                    worst = Some((excess, format!("{} {} h={}", r.row.family, r.row.params, r.row.h)));
                }
            }
            None => failed += 1,
        }
    }
    let (excess, at) = worst.ok_or("no successful rows")?;
    Ok((
        failed == 0 && excess <= 0.05,
        format!(
            "{} rows, {failed} failed; max |Omega| mu2 / mu2* - 1 = {excess:+.4} at {at}",
            recs.len()
        ),
    ))
}

fn corpus_rayleigh(recs: &[SweepRecord]) -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    let mut max_ratio = 0.0f64;
    for r in recs {
        let Some(rep) = &r.report else { continue };
        if rep.orthogonality_residual_norm > ORTHOGONALITY_TOL {
            continue;
        }
        checked += 1;
        let ratio = rep.rayleigh_bound / rep.mu1_ball;
        max_ratio = max_ratio.max(ratio);
        if !(rep.mu2 <= rep.rayleigh_bound && ratio <= 1.05) {
            bad.push(format!("{} {} h={}", r.row.family, r.row.params, r.row.h));
        }
    }
    Ok((
        checked == recs.len() && bad.is_empty(),
        format!(
            "{checked}/{} rows with residual <= 1e-6; mu2 <= RQ on all; max RQ/mu1(B) = {max_ratio:.4}; violations {bad:?}",
            recs.len()
        ),
    ))
}

fn corpus_alpha_beta(recs: &[SweepRecord]) -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_rel = 0.0f64;
    let mut bad = 0;
    for rep in recs.iter().filter_map(|r| r.report.as_ref()) {
        let (e1, e2) = rep.alpha_beta.relation_defects();
        let e = e1.abs().max(e2.abs());
        worst = worst.max(e);
        worst_rel = worst_rel.max(e / rep.alpha_beta_tolerance);
        if e > rep.alpha_beta_tolerance {
            bad += 1;
        }
    }
    Ok((
        bad == 0 && recs.iter().all(|r| r.report.is_some()),
        format!("max defect {worst:.1e} (at most {worst_rel:.1e} of the quantization tolerance), {bad} violations"),
    ))
}

/// Composite Simpson rule for `∫ f` over an annulus in ℝ^N.
fn simpson_annulus(p: &ProfileParams, a: f64, b: f64) -> f64 {
    let n = p.dimension() as i32;
    let area = p.omega_n() * n as f64;
    let m = 4000;
    let dr = (b - a) / m as f64;
    let w = |r: f64| p.f(r) * r.powi(n - 1);
    let mut s = w(a) + w(b);
    for i in 1..m {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * w(a + i as f64 * dr);
    }
    area * s * dr / 3.0
}

fn annulus_bounds() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut min_lower_gap = f64::INFINITY;
    let mut min_upper_gap = f64::INFINITY;
    for n in [2u32, 3] {
        for _ in 0..20 {
            let r = rng.gen_range(0.3..2.0);
            let p = ProfileParams::new(n, r).map_err(|e| e.to_string())?;
            let r1 = rng.gen_range(0.0..r);
            let r2 = rng.gen_range(r..3.0 * r);
            let (lo, up) = lemma32_bounds(r1, r2, &p).map_err(|e| e.to_string())?;
            let inner = simpson_annulus(&p, r1, r);
            let outer = simpson_annulus(&p, r, r2);
            min_lower_gap = min_lower_gap.min(inner - lo);
            min_upper_gap = min_upper_gap.min(up - outer);
        }
    }
    let el = t.elapsed();
    Ok((
        min_lower_gap >= 0.0 && min_upper_gap >= 0.0 && within(el, 5.0),
        format!(
            "40 pairs; min(quadrature - lower) = {min_lower_gap:.3e}, min(upper - quadrature) = {min_upper_gap:.3e}, {el:.2?}"
        ),
    ))
}

fn cbar() -> Outcome {
    let t = Instant::now();
    let c = 0.5;
    let ratio = |a: f64| (1.0 + c * a - (1.0 + a).powf(c)) / (a * a);
    let mut oracle = f64::INFINITY;
    for i in 1..=1_000_000 {
        oracle = oracle.min(ratio(i as f64 / 1e6));
    }
    let value = cbar_constant(2).map_err(|e| e.to_string())?;
    let closed = 1.5 - 2f64.sqrt();
    let mut violations = 0;
    for i in 1..=10_000 {
        let a = i as f64 / 10_000.0;
        if (1.0 + a).powf(c) > 1.0 + c * a - value * a * a + 1e-15 {
            violations += 1;
        }
    }
    let el = t.elapsed();
    Ok((
        (value - closed).abs() < 1e-8 && (oracle - closed).abs() < 1e-8 && violations == 0,
        format!(
            "cbar(2)={value:.12}, 3/2-sqrt2={closed:.12}, sampling oracle {oracle:.12}; {violations} violations at 1e4 alphas, {el:.2?}"
        ),
    ))
}

fn fraenkel2_fixtures() -> Outcome {
    let t = Instant::now();
    let h = 1.0 / 24.0;
    let mut parts = Vec::new();
    let mut ok = true;
    for spec in [
        ShapeSpec::TwoDisks {
            radius: 1.0,
            separation: 2.0,
        },
        ShapeSpec::Disk { radius: 1.0 },
        ShapeSpec::Dumbbell {
            radius: 1.0,
            separation: 2.5,
            neck: 0.2,
        },
    ] {
        let d = generate(&spec, h).map_err(|e| e.to_string())?;
        let a = fraenkel2(&d).map_err(|e| e.to_string())?;
        let o = fraenkel2_exhaustive(&d, 2.0 * h).map_err(|e| e.to_string())?;
        // the reported value is the symmetric difference of the returned pair
        let direct = symdiff_ballpair(&d, a.pair().ok_or("no pair")?) / d.measure();
        let diff = (a.value - o.value).abs();
        ok &= diff <= 1e-3 && a.value <= o.value + 1e-9 && (direct - a.value).abs() < 1e-9;
        parts.push(format!("{} {:.6} vs oracle {:.6}", spec.family(), a.value, o.value));
    }
    let el = t.elapsed();
    Ok((
        ok && within(el, 300.0),
        format!("h=1/24, step 2h: {}, {el:.2?}", parts.join("; ")),
    ))
}

fn stability_constant(recs: &[SweepRecord], sweep_time: Duration) -> Outcome {
    let min_at = |h: Option<f64>| {
        recs.iter()
            .filter(|r| r.row.is_ok() && r.row.a2 > A2_THRESHOLD)
            .filter(|r| h.map_or(true, |h| r.row.h == h))
            .map(|r| (r.row.bh_deficit / r.row.a2.powi(3), r))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    };
    let (overall, at) = min_at(None).ok_or("no rows with A2 > 0.05")?;
    let (m64, _) = min_at(Some(1.0 / 64.0)).ok_or("no qualifying rows at h=1/64")?;
    let (m128, _) = min_at(Some(1.0 / 128.0)).ok_or("no qualifying rows at h=1/128")?;
    let factor = m64.max(m128) / m64.min(m128);
    Ok((
        overall > 0.0 && factor <= 2.0 && within(sweep_time, 1800.0),
        format!(
            "min BH/A2^3 = {overall:.4} ({} {} h={}); h=1/64: {m64:.4}, h=1/128: {m128:.4} (factor {factor:.3}); sweep {sweep_time:.1?}",
            at.row.family, at.row.params, at.row.h
        ),
    ))
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("weinberger_beta roots", beta_roots()),
        ("profile ODE residual", ode_residuals()),
        ("unit square spectrum", unit_square()),
        ("unit disk convergence", unit_disk()),
        ("two disjoint disks equality case", two_disks_equality()),
    ];
    let start = Instant::now();
    let sweep = run_sweep_detailed(&default_corpus("unused"));
    let sweep_time = start.elapsed();
    match &sweep {
        Ok(recs) => {
            results.push(("two-ball upper bound on the corpus", corpus_inequality(recs)));
            results.push(("Rayleigh bound chain on the corpus", corpus_rayleigh(recs)));
            results.push(("alpha/beta relations on the corpus", corpus_alpha_beta(recs)));
        }
        Err(e) => {
            for name in [
                "two-ball upper bound on the corpus",
                "Rayleigh bound chain on the corpus",
                "alpha/beta relations on the corpus",
            ] {
                results.push((name, Err(format!("sweep failed: {e}"))));
            }
        }
    }
    results.push(("annulus bounds (g^2 reading)", annulus_bounds()));
    results.push(("cbar constant", cbar()));
    results.push(("Fraenkel-2 optimizer vs pair-grid oracle", fraenkel2_fixtures()));
    results.push((
        "empirical two-ball stability constant",
        match &sweep {
            Ok(recs) => stability_constant(recs, sweep_time),
            Err(e) => Err(format!("sweep failed: {e}")),
        },
    ));

    let mut all = true;
    for (i, (name, outcome)) in results.iter().enumerate() {
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (*ok, d.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        all &= ok;
        println!(
            "{} [{:>2}] {name}: {detail}",
            if ok { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
