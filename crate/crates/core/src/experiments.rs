//! Corpus sweeps, CSV/JSON/SVG emission and the empirical exponent fit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::asymmetry::DEFAULT_SEED;
use crate::certificate::{stability_report_with, ReportOptions, StabilityReport};
use crate::domain::{generate, r_omega, ShapeSpec};
use crate::error::{Error, Result};
use crate::spectral::{assemble, lowest_eigenpairs_with, LobpcgOptions};
use crate::special::ProfileParams;

/// Spatial dimension of every grid computation.
pub const DIMENSION: u32 = 2;
/// Rows with `A₂` at or below this are excluded from the exponent fit.
pub const A2_THRESHOLD: f64 = 0.05;
/// `Σα²` at or below this makes `ratio_prop31` uninformative.
pub const ALPHA_SQ_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl ParamRange {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.max
                } else {
                    self.min + (self.max - self.min) * i as f64 / last
                }
            })
            .collect()
    }
}

/// A shape family with some parameters held fixed and others swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyTemplate {
    pub family: String,
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
    #[serde(default)]
    pub ranges: Vec<ParamRange>,
}

impl FamilyTemplate {
    /// Every instance of the template, in lexicographic order of the swept
    /// values (ranges in the order given).
    pub fn instances(&self) -> Result<Vec<ShapeSpec>> {
        let mut combos: Vec<BTreeMap<String, f64>> = vec![self.fixed.clone()];
        for range in &self.ranges {
            if range.steps == 0 {
                return Err(Error::InvalidArgument(format!(
                    "range '{}' of family '{}' has zero steps",
                    range.name, self.family
                )));
            }
            if self.fixed.contains_key(&range.name) {
                return Err(Error::InvalidArgument(format!(
                    "parameter '{}' of family '{}' is both fixed and swept",
                    range.name, self.family
                )));
            }
            let vals = range.values();
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    vals.iter().map(move |&v| {
                        let mut c = c.clone();
                        c.insert(range.name.clone(), v);
                        c
                    })
                })
                .collect();
        }
        combos
            .iter()
            .map(|c| ShapeSpec::from_params(&self.family, c))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub families: Vec<FamilyTemplate>,
    pub resolutions: Vec<f64>,
    pub tol: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::InvalidArgument("sweep config has no families".into()));
        }
        if self.resolutions.is_empty() {
            return Err(Error::InvalidArgument("sweep config has no resolutions".into()));
        }
        if let Some(h) = self.resolutions.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(Error::InvalidArgument(format!("resolution {h} must be positive")));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidArgument(format!("tol {} outside (0, 1)", self.tol)));
        }
        for f in &self.families {
            f.instances()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<SweepConfig> {
        let cfg: SweepConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<SweepConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Every `(instance, h)` pair in row order.
    pub fn jobs(&self) -> Result<Vec<(ShapeSpec, f64)>> {
        self.validate()?;
        let mut specs = Vec::new();
        for f in &self.families {
            specs.extend(f.instances()?);
        }
        specs.sort_by(|a, b| {
            a.family().cmp(b.family()).then_with(|| {
                let pa: Vec<f64> = a.params().iter().map(|p| p.1).collect();
                let pb: Vec<f64> = b.params().iter().map(|p| p.1).collect();
                pa.partial_cmp(&pb).unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        specs.dedup();
        let mut hs = self.resolutions.clone();
        hs.sort_by(f64::total_cmp);
        hs.dedup();
        Ok(specs
            .into_iter()
            .flat_map(|s| hs.iter().map(move |&h| (s.clone(), h)))
            .collect())
    }
}

fn range(name: &str, min: f64, max: f64, steps: usize) -> ParamRange {
    ParamRange {
        name: name.into(),
        min,
        max,
        steps,
    }
}

fn template(family: &str, fixed: &[(&str, f64)], ranges: Vec<ParamRange>) -> FamilyTemplate {
    FamilyTemplate {
        family: family.into(),
        fixed: fixed.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        ranges,
    }
}

/// The default corpus: overlapping through separated disk pairs, dumbbells
/// with a varying neck, perturbed disks, square, 2×1 rectangle and disk.
pub fn default_corpus(output_dir: impl Into<PathBuf>) -> SweepConfig {
    SweepConfig {
        families: vec![
            template("two_disks", &[("radius", 1.0)], vec![range("separation", 1.0, 3.0, 9)]),
            template(
                "dumbbell",
                &[("radius", 1.0), ("separation", 2.5)],
                vec![range("neck", 0.1, 0.8, 8)],
            ),
            template(
                "perturbed_disk",
                &[("radius", 1.0)],
                vec![range("amplitude", 0.05, 0.3, 6), range("mode", 2.0, 3.0, 2)],
            ),
            template("rectangle", &[("width", 1.0), ("height", 1.0)], vec![]),
            template("rectangle", &[("width", 2.0), ("height", 1.0)], vec![]),
            template("disk", &[("radius", 1.0)], vec![]),
        ],
        resolutions: vec![1.0 / 64.0, 1.0 / 128.0],
        tol: 1e-8,
        seed: DEFAULT_SEED,
        output_dir: output_dir.into(),
    }
}

/// One sweep row. Missing values (failed rows, degenerate ratios) are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRow {
    pub family: String,
    /// `name=value` pairs joined by `;`.
    pub params: String,
    pub h: f64,
    pub measure: f64,
    pub r_omega: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu2_scaled: f64,
    pub bh_deficit: f64,
    pub a2: f64,
    pub a2_oracle_gap: f64,
    pub sum_alpha_sq: f64,
    pub d_quadrature: f64,
    pub ratio_prop31: f64,
    pub ratio_lemma33: f64,
    pub ratio_thm11: f64,
    pub orthogonality_residual: f64,
    /// `ok`, or `error: <message>`.
    pub status: String,
    /// Seconds; kept out of the CSV so the file is reproducible.
    pub wall_time: f64,
}

pub const CSV_HEADER: [&str; 18] = [
    "family",
    "params",
    "h",
    "measure",
    "r_omega",
    "mu1",
    "mu2",
    "mu2_scaled",
    "bh_deficit",
    "A2",
    "A2_oracle_gap",
    "sum_alpha_sq",
    "D_quadrature",
    "ratio_prop31",
    "ratio_lemma33",
    "ratio_thm11",
    "orthogonality_residual",
    "status",
];

impl CorpusRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn numbers(&self) -> [f64; 15] {
        [
            self.h,
            self.measure,
            self.r_omega,
            self.mu1,
            self.mu2,
            self.mu2_scaled,
            self.bh_deficit,
            self.a2,
            self.a2_oracle_gap,
            self.sum_alpha_sq,
            self.d_quadrature,
            self.ratio_prop31,
            self.ratio_lemma33,
            self.ratio_thm11,
            self.orthogonality_residual,
        ]
    }

    fn record(&self) -> Vec<String> {
        let mut out = vec![self.family.clone(), self.params.clone()];
        out.extend(self.numbers().iter().map(|&x| sig12(x)));
        out.push(self.status.clone());
        out
    }

    fn from_record(rec: &csv::StringRecord, line: usize) -> Result<CorpusRow> {
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", CSV_HEADER.len(), rec.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            let s = rec[i].trim();
            if s.is_empty() {
                return Ok(f64::NAN);
            }
            s.parse().map_err(|_| Error::Parse {
                line,
                message: format!("field '{}' is not a number: '{s}'", CSV_HEADER[i]),
            })
        };
        Ok(CorpusRow {
            family: rec[0].to_string(),
            params: rec[1].to_string(),
            h: num(2)?,
            measure: num(3)?,
            r_omega: num(4)?,
            mu1: num(5)?,
            mu2: num(6)?,
            mu2_scaled: num(7)?,
            bh_deficit: num(8)?,
            a2: num(9)?,
            a2_oracle_gap: num(10)?,
            sum_alpha_sq: num(11)?,
            d_quadrature: num(12)?,
            ratio_prop31: num(13)?,
            ratio_lemma33: num(14)?,
            ratio_thm11: num(15)?,
            orthogonality_residual: num(16)?,
            status: rec[17].to_string(),
            wall_time: f64::NAN,
        })
    }

    fn failed(spec: &ShapeSpec, h: f64, message: String, wall_time: f64) -> CorpusRow {
        let nan = f64::NAN;
        CorpusRow {
            family: spec.family().into(),
            params: params_text(spec),
            h,
            measure: nan,
            r_omega: nan,
            mu1: nan,
            mu2: nan,
            mu2_scaled: nan,
            bh_deficit: nan,
            a2: nan,
            a2_oracle_gap: nan,
            sum_alpha_sq: nan,
            d_quadrature: nan,
            ratio_prop31: nan,
            ratio_lemma33: nan,
            ratio_thm11: nan,
            orthogonality_residual: nan,
            status: format!("error: {message}"),
            wall_time,
        }
    }

    fn from_report(spec: &ShapeSpec, h: f64, r: &StabilityReport, wall_time: f64) -> CorpusRow {
        let opt = |x: Option<f64>| x.unwrap_or(f64::NAN);
        CorpusRow {
            family: spec.family().into(),
            params: params_text(spec),
            h,
            measure: r.measure,
            r_omega: r.r_omega,
            mu1: r.mu1,
            mu2: r.mu2,
            mu2_scaled: r.mu2_scaled,
            bh_deficit: r.bh_deficit,
            a2: r.a2,
            a2_oracle_gap: opt(r.a2_oracle_gap),
            sum_alpha_sq: r.sum_alpha_sq,
            d_quadrature: r.d_quadrature,
            ratio_prop31: opt(r.ratio_prop31),
            ratio_lemma33: opt(r.ratio_lemma33),
            ratio_thm11: opt(r.ratio_thm11),
            orthogonality_residual: r.orthogonality_residual_norm,
            status: "ok".into(),
            wall_time,
        }
    }
}

/// `%.12g`-style text; NaN becomes the empty string.
pub fn sig12(x: f64) -> String {
    if x.is_nan() {
        return String::new();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mant.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn params_text(spec: &ShapeSpec) -> String {
    spec.params()
        .iter()
        .map(|(n, v)| format!("{n}={}", sig12(*v)))
        .collect::<Vec<_>>()
        .join(";")
}

/// A sweep row together with the full report it was built from.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub spec: ShapeSpec,
    pub row: CorpusRow,
    pub report: Option<StabilityReport>,
}

/// Full pipeline for one instance.
pub fn certify_instance(spec: &ShapeSpec, h: f64, tol: f64, seed: u64) -> Result<StabilityReport> {
    let d = generate(spec, h)?;
    let op = assemble(&d)?;
    let opts = LobpcgOptions {
        tol,
        seed,
        ..LobpcgOptions::default()
    };
    let spectral = lowest_eigenpairs_with(&op, 3, &opts)?;
    let p = ProfileParams::new(DIMENSION, r_omega(&d, DIMENSION)?)?;
    stability_report_with(
        &d,
        &spectral,
        &p,
        &ReportOptions {
            seed: Some(seed),
            asymmetry: None,
        },
    )
}

/// Runs every job in row order; failures are recorded in the row status.
pub fn run_sweep_detailed(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    let jobs = cfg.jobs()?;
    let mut out = Vec::with_capacity(jobs.len());
    for (spec, h) in jobs {
        let start = Instant::now();
        let result = certify_instance(&spec, h, cfg.tol, cfg.seed);
        let wall = start.elapsed().as_secs_f64();
        let record = match result {
            Ok(report) => SweepRecord {
                row: CorpusRow::from_report(&spec, h, &report, wall),
                report: Some(report),
                spec,
            },
            Err(e) => {
                log::warn!("{} at h={h}: {e}", params_text(&spec));
                SweepRecord {
                    row: CorpusRow::failed(&spec, h, e.to_string(), wall),
                    report: None,
                    spec,
                }
            }
        };
        log::info!(
            "{} {} h={} {} ({:.2}s)",
            record.row.family,
            record.row.params,
            sig12(h),
            record.row.status,
            wall
        );
        out.push(record);
    }
    Ok(out)
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<CorpusRow>> {
    Ok(run_sweep_detailed(cfg)?.into_iter().map(|r| r.row).collect())
}

pub fn write_csv(rows: &[CorpusRow], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_io(path, e))?;
    for row in rows {
        w.write_record(row.record()).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn csv_string(rows: &[CorpusRow]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for row in rows {
        w.write_record(row.record()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Csv(e)
    }
}

pub fn read_csv(path: &Path) -> Result<Vec<CorpusRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file)
}

pub fn parse_csv(input: impl std::io::Read) -> Result<Vec<CorpusRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        rows.push(CorpusRow::from_record(&rec?, i + 2)?);
    }
    Ok(rows)
}

/// Least-squares line through `(log A₂, log BH)` and the corpus minimum of
/// `BH / A₂^{N+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub min_ratio: f64,
    /// Row index (into the fitted slice) attaining `min_ratio`.
    pub min_ratio_row: usize,
    pub qualifying_rows: usize,
    /// Every qualifying point lies on or above the slope-`N+1` line through
    /// the minimal-ratio point.
    pub all_above_reference: bool,
}

fn qualifies(r: &CorpusRow) -> bool {
    r.is_ok() && r.a2 > A2_THRESHOLD && r.bh_deficit > 0.0
}

pub fn fit_exponent(rows: &[CorpusRow]) -> Result<ExponentFit> {
    let pts: Vec<(usize, f64, f64)> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| qualifies(r))
        .map(|(i, r)| (i, r.a2.ln(), r.bh_deficit.ln()))
        .collect();
    if pts.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "the fit needs at least 5 rows with A2 > {A2_THRESHOLD} and bh_deficit > 0, found {} \
             (below that threshold both sides are within discretization noise)",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.2).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.1 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.1 - mx) * (p.2 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.2 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all qualifying rows share one A2 value".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    let k = (DIMENSION + 1) as i32;
    let (min_ratio_row, min_ratio) = pts
        .iter()
        .map(|&(i, _, _)| (i, rows[i].bh_deficit / rows[i].a2.powi(k)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least five points");
    let anchor = min_ratio.ln();
    let all_above_reference = pts
        .iter()
        .all(|&(_, x, y)| y >= anchor + k as f64 * x - 1e-12);
    Ok(ExponentFit {
        slope,
        intercept,
        r_squared,
        min_ratio,
        min_ratio_row,
        qualifying_rows: pts.len(),
        all_above_reference,
    })
}

/// Corpus-wide extreme ratios, overall and per resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalConstants {
    /// `min BH / A₂^{N+1}` over rows with `A₂ > 0.05`.
    pub thm11_min: Option<f64>,
    /// `min BH / Σα²` over rows with `Σα² > 1e-6`.
    pub prop31_min: Option<f64>,
    /// `max A₂^{N+1} / Σα²` over rows with `Σα² > 1e-6`.
    pub lemma33_max: Option<f64>,
    pub thm11_min_by_h: BTreeMap<String, f64>,
    pub lemma33_max_by_h: BTreeMap<String, f64>,
}

fn fold(it: impl Iterator<Item = f64>, max: bool) -> Option<f64> {
    it.filter(|x| x.is_finite())
        .fold(None, |acc: Option<f64>, x| match acc {
            None => Some(x),
            Some(a) => Some(if max { a.max(x) } else { a.min(x) }),
        })
}

pub fn empirical_constants(rows: &[CorpusRow]) -> EmpiricalConstants {
    let ok: Vec<&CorpusRow> = rows.iter().filter(|r| r.is_ok()).collect();
    let thm = |r: &&CorpusRow| r.a2 > A2_THRESHOLD;
    let alpha = |r: &&CorpusRow| r.sum_alpha_sq > ALPHA_SQ_THRESHOLD;
    let mut hs: Vec<f64> = ok.iter().map(|r| r.h).collect();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    let mut thm11_min_by_h = BTreeMap::new();
    let mut lemma33_max_by_h = BTreeMap::new();
    for &h in &hs {
        let at = ok.iter().copied().filter(|r| r.h == h);
        if let Some(v) = fold(at.clone().filter(thm).map(|r| r.ratio_thm11), false) {
            thm11_min_by_h.insert(sig12(h), v);
        }
        if let Some(v) = fold(at.filter(alpha).map(|r| r.ratio_lemma33), true) {
            lemma33_max_by_h.insert(sig12(h), v);
        }
    }
    EmpiricalConstants {
        thm11_min: fold(ok.iter().copied().filter(thm).map(|r| r.ratio_thm11), false),
        prop31_min: fold(ok.iter().copied().filter(alpha).map(|r| r.ratio_prop31), false),
        lemma33_max: fold(ok.iter().copied().filter(alpha).map(|r| r.ratio_lemma33), true),
        thm11_min_by_h,
        lemma33_max_by_h,
    }
}

/// The `report.json` summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub rows: usize,
    pub failed_rows: usize,
    /// Minimum `ratio_thm11` per family over rows with `A₂ > 0.05`.
    pub family_min_ratio_thm11: BTreeMap<String, f64>,
    pub fit: Option<ExponentFit>,
    pub fit_error: Option<String>,
    pub empirical_constants: EmpiricalConstants,
    /// Per-row wall times in seconds, when known.
    pub wall_time: Option<Vec<f64>>,
}

pub fn summarize(rows: &[CorpusRow], seed: u64) -> ReportSummary {
    let mut family_min = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_ok() && r.a2 > A2_THRESHOLD) {
        if r.ratio_thm11.is_finite() {
            let e = family_min.entry(r.family.clone()).or_insert(f64::INFINITY);
            *e = r.ratio_thm11.min(*e);
        }
    }
    let (fit, fit_error) = match fit_exponent(rows) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let times: Vec<f64> = rows.iter().map(|r| r.wall_time).collect();
    ReportSummary {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        rows: rows.len(),
        failed_rows: rows.iter().filter(|r| !r.is_ok()).count(),
        family_min_ratio_thm11: family_min,
        fit,
        fit_error,
        empirical_constants: empirical_constants(rows),
        wall_time: times.iter().all(|t| t.is_finite()).then_some(times),
    }
}

/// Log-log scatter of `(A₂, BH)` for the fit rows with the slope-`N+1` line
/// through the minimal-ratio point.
pub fn scatter_svg(rows: &[CorpusRow], fit: Option<&ExponentFit>) -> String {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| qualifies(r))
        .map(|r| (r.a2.log10(), r.bh_deficit.log10()))
        .collect();
    let (w, h, pad) = (640.0, 480.0, 60.0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let (x0, x1, y0, y1) = if pts.is_empty() {
        (-1.0, 0.0, -1.0, 0.0)
    } else {
        let f = |sel: fn(&(f64, f64)) -> f64, max: bool| {
            pts.iter().map(sel).fold(if max { f64::MIN } else { f64::MAX }, |a, b| {
                if max {
                    a.max(b)
                } else {
                    a.min(b)
                }
            })
        };
        let (a, b) = (f(|p| p.0, false), f(|p| p.0, true));
        let (c, d) = (f(|p| p.1, false), f(|p| p.1, true));
        let mx = ((b - a) * 0.1).max(0.05);
        let my = ((d - c) * 0.1).max(0.05);
        (a - mx, b + mx, c - my, d + my)
    };
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">log10 A2 [{:.2}, {:.2}]</text>"#,
        w / 2.0,
        h - 20.0,
        x0,
        x1
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" font-size="14" transform="rotate(-90 20 {})" text-anchor="middle">log10 BH [{:.2}, {:.2}]</text>"#,
        h / 2.0,
        h / 2.0,
        y0,
        y1
    );
    if let Some(fit) = fit {
        let k = (DIMENSION + 1) as f64;
        let c = fit.min_ratio.log10();
        let _ = writeln!(
            s,
            r#"<line class="reference" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="red" stroke-dasharray="6 4"/>"#,
            sx(x0),
            sy(c + k * x0),
            sx(x1),
            sy(c + k * x1)
        );
    }
    let _ = writeln!(
        s,
        r#"<clipPath id="plot"><rect x="{pad}" y="{pad}" width="{}" height="{}"/></clipPath>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(s, r#"<g clip-path="url(#plot)">"#);
    for (x, y) in &pts {
        let _ = writeln!(
            s,
            r#"<circle class="marker" cx="{:.3}" cy="{:.3}" r="4" fill="steelblue"/>"#,
            sx(*x),
            sy(*y)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svg: PathBuf,
}

/// Writes `corpus.csv`, `report.json` and `scatter.svg` into `dir`.
pub fn emit_report(rows: &[CorpusRow], seed: u64, dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        csv: dir.join("corpus.csv"),
        json: dir.join("report.json"),
        svg: dir.join("scatter.svg"),
    };
    write_csv(rows, &files.csv)?;
    let summary = summarize(rows, seed);
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(&files.json, json + "\n").map_err(|e| Error::io(&files.json, e))?;
    fs::write(&files.svg, scatter_svg(rows, summary.fit.as_ref()))
        .map_err(|e| Error::io(&files.svg, e))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(family: &str, a2: f64, bh: f64) -> CorpusRow {
        let mut r = CorpusRow::failed(&ShapeSpec::Disk { radius: 1.0 }, 0.5, String::new(), 0.0);
        r.family = family.into();
        r.status = "ok".into();
        r.a2 = a2;
        r.bh_deficit = bh;
        r.ratio_thm11 = bh / a2.powi(3);
        r
    }

    #[test]
    fn sig12_formatting() {
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(1.0), "1");
        assert_eq!(sig12(0.015625), "0.015625");
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(21.29973251734784), "21.2997325173");
        assert_eq!(sig12(-2.5e-7), "-2.5e-7");
        assert_eq!(sig12(f64::NAN), "");
        for x in [std::f64::consts::PI, 1e-9 / 7.0, 123456.789, 6.02e23] {
            let back: f64 = sig12(x).parse().unwrap();
            assert!((back - x).abs() <= 1e-11 * x.abs(), "{x}");
        }
    }

    #[test]
    fn ranges_and_instances() {
        assert_eq!(range("a", 1.0, 3.0, 9).values().len(), 9);
        assert_eq!(range("a", 1.0, 3.0, 9).values()[8], 3.0);
        assert_eq!(range("a", 1.0, 3.0, 9).values()[1], 1.25);
        assert_eq!(range("a", 0.4, 9.0, 1).values(), vec![0.4]);
        let t = template(
            "perturbed_disk",
            &[("radius", 1.0)],
            vec![range("amplitude", 0.05, 0.3, 6), range("mode", 2.0, 3.0, 2)],
        );
        assert_eq!(t.instances().unwrap().len(), 12);
        let bad = template("disk", &[("radius", 1.0)], vec![range("radius", 1.0, 2.0, 0)]);
        assert!(bad.instances().is_err());
        let clash = template("disk", &[("radius", 1.0)], vec![range("radius", 1.0, 2.0, 2)]);
        assert!(clash.instances().is_err());
    }

    #[test]
    fn config_validation_and_order() {
        let cfg = default_corpus("out");
        cfg.validate().unwrap();
        let jobs = cfg.jobs().unwrap();
        assert_eq!(jobs.len(), 2 * (9 + 8 + 12 + 3));
        assert_eq!(jobs[0].0.family(), "disk");
        assert!(jobs[0].1 < jobs[1].1);
        let mut empty = cfg.clone();
        empty.families.clear();
        assert!(empty.validate().is_err());
        let mut no_h = cfg.clone();
        no_h.resolutions.clear();
        assert!(no_h.validate().is_err());
        let json = serde_json::to_string(&cfg).unwrap();
        for key in ["families", "resolutions", "tol", "seed", "output_dir"] {
            assert!(json.contains(&format!("\"{key}\"")));
        }
        assert_eq!(SweepConfig::from_json(&json).unwrap(), cfg);
    }

    #[test]
    fn fit_preconditions() {
        assert!(fit_exponent(&[row("disk", 0.5, 1.0)]).is_err());
        let small: Vec<CorpusRow> = (0..6).map(|i| row("x", 0.01 + 0.001 * i as f64, 1.0)).collect();
        let e = fit_exponent(&small).unwrap_err().to_string();
        assert!(e.contains("A2 > 0.05"), "{e}");
    }

    #[test]
    fn fit_recovers_power_law() {
        let rows: Vec<CorpusRow> = (1..=6)
            .map(|i| {
                let a = 0.1 * i as f64;
                row("x", a, 2.0 * a.powi(2))
            })
            .collect();
        let f = fit_exponent(&rows).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 2f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(f.min_ratio_row, 5);
        assert!(f.all_above_reference);
    }

    #[test]
    fn csv_round_trip() {
        let mut rows = vec![row("disk", 0.6, 0.9), row("two_disks", 0.2, 0.01)];
        rows[1].status = "error: no convergence, residual 1e-3".into();
        rows[1].mu1 = f64::NAN;
        let text = csv_string(&rows);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        let back = parse_csv(text.as_bytes()).unwrap();
        assert_eq!(back[1].status, rows[1].status);
        assert!(back[1].mu1.is_nan());
        assert_eq!(csv_string(&back), text);
    }
}
