//! Fraenkel asymmetry `A(Ω)` and two-ball asymmetry `A₂(Ω)`.
//!
//! All searches run on the cropped raster of the domain in cell units, so
//! values are exactly invariant under whole-cell translations. Each search is
//! repeated in the four axis-reflected frames and the smallest value wins,
//! which makes values exactly invariant under axis mirroring as well.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{BallPair, GridDomain, Point, Raster, SUPERSAMPLE};
use crate::error::{Error, Result};

/// Largest number of unordered center pairs an exhaustive scan may visit.
pub const PAIR_BUDGET: u64 = 10_000_000;
/// Seed of the random restarts.
pub const DEFAULT_SEED: u64 = 42;
const RESTARTS: usize = 8;
const FRAMES: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Ball { center: Point, radius: f64 },
    Pair(BallPair),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryResult {
    pub value: f64,
    pub optimizer: Optimizer,
    pub evaluations: u64,
    /// Exhaustive-scan value minus the returned value (two-ball case).
    pub oracle_gap: Option<f64>,
}

impl AsymmetryResult {
    pub fn pair(&self) -> Option<&BallPair> {
        match &self.optimizer {
            Optimizer::Pair(p) => Some(p),
            Optimizer::Ball { .. } => None,
        }
    }
}

type Uv = (f64, f64);

/// A raster in one reflected frame, with the ball radius in cell units.
struct Frame {
    raster: Raster,
    flip: (bool, bool),
    ru: f64,
    total_samples: f64,
    evaluations: u64,
}

impl Frame {
    fn new(base: &Raster, flip: (bool, bool), ru: f64) -> Frame {
        let raster = base.reflected(flip.0, flip.1);
        let total_samples = (raster.count() * SUPERSAMPLE * SUPERSAMPLE) as f64;
        Frame {
            raster,
            flip,
            ru,
            total_samples,
            evaluations: 0,
        }
    }

    fn hits(&mut self, c: Uv) -> u64 {
        self.evaluations += 1;
        self.raster.ball_hits(c, self.ru)
    }

    /// `|Ω Δ B|/|Ω|` for one ball of measure `|Ω|`.
    fn single(&mut self, c: Uv) -> f64 {
        2.0 - 2.0 * self.hits(c) as f64 / self.total_samples
    }

    /// `|Ω Δ (B ∪ B̃)|/|Ω|` for two disjoint balls of measure `|Ω|/2`.
    fn pair(&mut self, c1: Uv, c2: Uv) -> f64 {
        2.0 - 2.0 * (self.hits(c1) + self.hits(c2)) as f64 / self.total_samples
    }

    fn to_world(&self, d: &GridDomain, (u, v): Uv) -> Point {
        let u = if self.flip.0 { self.raster.ni as f64 - u } else { u };
        let v = if self.flip.1 { self.raster.nj as f64 - v } else { v };
        self.raster.to_world(d, u, v)
    }

    fn centroid(&self) -> Uv {
        self.raster.centroid()
    }

    fn diameter(&self) -> f64 {
        (self.raster.ni as f64).hypot(self.raster.nj as f64)
    }
}

/// Push two centers apart symmetrically to distance exactly `2 ru` if closer.
fn project(c1: Uv, c2: Uv, ru: f64) -> (Uv, Uv) {
    let (dx, dy) = (c2.0 - c1.0, c2.1 - c1.1);
    let dist = dx.hypot(dy);
    if dist >= 2.0 * ru {
        return (c1, c2);
    }
    let (ax, ay) = if dist > 0.0 { (dx / dist, dy / dist) } else { (1.0, 0.0) };
    let mid = (0.5 * (c1.0 + c2.0), 0.5 * (c1.1 + c2.1));
    (
        (mid.0 - ru * ax, mid.1 - ru * ay),
        (mid.0 + ru * ax, mid.1 + ru * ay),
    )
}

fn lex_less(a: (Uv, Uv), b: (Uv, Uv)) -> bool {
    [a.0 .0, a.0 .1, a.1 .0, a.1 .1]
        .partial_cmp(&[b.0 .0, b.0 .1, b.1 .0, b.1 .1])
        .map_or(false, |o| o.is_lt())
}

fn ordered(c1: Uv, c2: Uv) -> (Uv, Uv) {
    if (c2.0, c2.1) < (c1.0, c1.1) {
        (c2, c1)
    } else {
        (c1, c2)
    }
}

/// Ball radius in cell units for `|B| = |Ω| / balls`.
fn radius_cells(raster: &Raster, balls: f64) -> f64 {
    (raster.count() as f64 / (balls * PI)).sqrt()
}

struct Scan {
    value: f64,
    best: Vec<(Uv, Uv)>,
}

/// Exhaustive search over lattice center pairs with spacing `s` cells,
/// anchored at the raster corner and covering the raster inflated by one
/// radius. Returns up to `keep` best pairs with distinct first centers.
///
/// With `snap`, lattice pairs closer than `2 ru` by at most `2s` are also
/// evaluated after projection to distance exactly `2 ru`; these are the
/// lattice roundings of configurations on the disjointness constraint.
fn scan_pairs(frame: &mut Frame, s: f64, keep: usize, snap: bool) -> Result<Scan> {
    let ru = frame.ru;
    let a0 = (-ru / s).ceil() as i64;
    let a1 = ((frame.raster.ni as f64 + ru) / s).floor() as i64;
    let b0 = (-ru / s).ceil() as i64;
    let b1 = ((frame.raster.nj as f64 + ru) / s).floor() as i64;
    let (na, nb) = ((a1 - a0 + 1).max(0), (b1 - b0 + 1).max(0));
    let m = (na * nb) as u64;
    let pairs = m * m.saturating_sub(1) / 2;
    if pairs > PAIR_BUDGET {
        return Err(Error::BudgetExceeded {
            pairs,
            budget: PAIR_BUDGET,
        });
    }
    let mut pts: Vec<(u64, Uv)> = Vec::with_capacity(m as usize);
    for b in b0..=b1 {
        for a in a0..=a1 {
            let c = (a as f64 * s, b as f64 * s);
            pts.push((frame.hits(c), c));
        }
    }
    let lattice = pts.clone();
    // stable sort keeps lattice order among ties
    pts.sort_by(|x, y| y.0.cmp(&x.0));
    let min_d2 = (2.0 * ru) * (2.0 * ru) * (1.0 - 1e-12);
    let mut found: Vec<(u64, Uv, Uv)> = Vec::new();
    let threshold = |found: &Vec<(u64, Uv, Uv)>| {
        if found.len() < keep {
            None
        } else {
            Some(found[keep - 1].0)
        }
    };
    let insert = |found: &mut Vec<(u64, Uv, Uv)>, sum: u64, p: Uv, q: Uv| {
        let at = found.partition_point(|f| f.0 >= sum);
        found.insert(at, (sum, p, q));
        found.truncate(keep);
    };
    for i in 0..pts.len() {
        if i + 1 < pts.len() {
            if let Some(t) = threshold(&found) {
                if pts[i].0 + pts[i + 1].0 <= t {
                    break;
                }
            }
        }
        for j in i + 1..pts.len() {
            let sum = pts[i].0 + pts[j].0;
            if let Some(t) = threshold(&found) {
                if sum <= t {
                    break;
                }
            }
            let (p, q) = (pts[i].1, pts[j].1);
            if (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2) < min_d2 {
                continue;
            }
            // only the best partner of each first center is kept, which
            // keeps the seeds diverse
            insert(&mut found, sum, p, q);
            break;
        }
    }
    if snap {
        let reach = (2.0 * ru / s).ceil() as i64;
        let lo = ((2.0 * ru - 2.0 * s) / s).max(0.0);
        let mut offsets = Vec::new();
        for da in 0..=reach {
            for db in -reach..=reach {
                if da == 0 && db <= 0 {
                    continue;
                }
                let dist = (da as f64).hypot(db as f64);
                if dist >= lo && dist * dist * s * s < min_d2 {
                    offsets.push((da, db));
                }
            }
        }
        for b in 0..nb {
            for a in 0..na {
                let p = lattice[(b * na + a) as usize].1;
                for &(da, db) in &offsets {
                    let (qa, qb) = (a + da, b + db);
                    if qa >= na || qb < 0 || qb >= nb {
                        continue;
                    }
                    let q = lattice[(qb * na + qa) as usize].1;
                    let (p2, q2) = project(p, q, ru);
                    let sum = frame.hits(p2) + frame.hits(q2);
                    if threshold(&found).map_or(true, |t| sum > t) {
                        insert(&mut found, sum, p2, q2);
                    }
                }
            }
        }
    }
    if found.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no disjoint center pair on the step-{s} lattice"
        )));
    }
    let value = 2.0 - 2.0 * found[0].0 as f64 / frame.total_samples;
    Ok(Scan {
        value,
        best: found.iter().map(|&(_, p, q)| ordered(p, q)).collect(),
    })
}

/// Best-improvement pattern search over two centers, step halving down to
/// `min_step` cells.
fn pattern_search(frame: &mut Frame, start: (Uv, Uv), step0: f64, min_step: f64) -> (f64, (Uv, Uv)) {
    let ru = frame.ru;
    let (mut c1, mut c2) = project(start.0, start.1, ru);
    let mut best = frame.pair(c1, c2);
    let mut step = step0.max(min_step);
    loop {
        let (ax, ay) = {
            let (dx, dy) = (c2.0 - c1.0, c2.1 - c1.1);
            let n = dx.hypot(dy).max(1e-300);
            (dx / n, dy / n)
        };
        // breathing and rotation move each center by half a step
        let half = 0.5;
        let polls: [(f64, f64, f64, f64); 16] = [
            (1.0, 0.0, 0.0, 0.0),
            (-1.0, 0.0, 0.0, 0.0),
            (0.0, 1.0, 0.0, 0.0),
            (0.0, -1.0, 0.0, 0.0),
            (0.0, 0.0, 1.0, 0.0),
            (0.0, 0.0, -1.0, 0.0),
            (0.0, 0.0, 0.0, 1.0),
            (0.0, 0.0, 0.0, -1.0),
            (1.0, 0.0, 1.0, 0.0),
            (-1.0, 0.0, -1.0, 0.0),
            (0.0, 1.0, 0.0, 1.0),
            (0.0, -1.0, 0.0, -1.0),
            (-ax * half, -ay * half, ax * half, ay * half),
            (ax * half, ay * half, -ax * half, -ay * half),
            (ay * half, -ax * half, -ay * half, ax * half),
            (-ay * half, ax * half, ay * half, -ax * half),
        ];
        let mut winner: Option<(f64, (Uv, Uv))> = None;
        for &(d1u, d1v, d2u, d2v) in &polls {
            let (p, q) = project(
                (c1.0 + step * d1u, c1.1 + step * d1v),
                (c2.0 + step * d2u, c2.1 + step * d2v),
                ru,
            );
            let v = frame.pair(p, q);
            let better = match winner {
                None => v < best,
                Some((wv, _)) => v < wv,
            };
            if better {
                winner = Some((v, (p, q)));
            }
        }
        match winner {
            Some((v, (p, q))) => {
                best = v;
                c1 = p;
                c2 = q;
            }
            None => {
                if step <= min_step {
                    break;
                }
                step = (0.5 * step).max(min_step);
            }
        }
    }
    (best, ordered(c1, c2))
}

/// Smallest lattice multiple `m` of `base` cells for which the pair scan fits
/// the budget.
fn scan_multiple(frame: &Frame, base: f64) -> f64 {
    let ru = frame.ru;
    let count = |s: f64| {
        let a = ((frame.raster.ni as f64 + ru) / s).floor() - (-ru / s).ceil() + 1.0;
        let b = ((frame.raster.nj as f64 + ru) / s).floor() - (-ru / s).ceil() + 1.0;
        a * b
    };
    let mut m = 1.0;
    while {
        let c = count(base * m);
        c * (c - 1.0) / 2.0 > PAIR_BUDGET as f64
    } {
        m += 1.0;
    }
    m
}

struct FrameBest {
    value: f64,
    centers: (Uv, Uv),
    scan_value: f64,
}

fn fraenkel2_frame(frame: &mut Frame, seed: u64) -> Result<FrameBest> {
    let m = scan_multiple(frame, 2.0);
    let scan_step = 2.0 * m;
    // at the oracle spacing the scan visits exactly the oracle's candidates
    let scan = scan_pairs(frame, scan_step, 3, m == 1.0)?;
    let min_step = 0.25;
    let mut best = FrameBest {
        value: scan.value,
        centers: scan.best[0],
        scan_value: scan.value,
    };
    let consider = |best: &mut FrameBest, v: f64, c: (Uv, Uv)| {
        if v < best.value || (v == best.value && lex_less(c, best.centers)) {
            best.value = v;
            best.centers = c;
        }
    };
    for &start in &scan.best {
        let (v, c) = pattern_search(frame, start, 0.5 * scan_step, min_step);
        consider(&mut best, v, c);
    }
    let big = 0.25 * frame.diameter();
    let s = frame.raster.structural_seeds();
    let (v, c) = pattern_search(frame, s, big, min_step);
    consider(&mut best, v, c);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ru = frame.ru;
    let (w, hgt) = (frame.raster.ni as f64, frame.raster.nj as f64);
    for _ in 0..RESTARTS {
        let mut draw = || {
            (
                rng.gen_range(-ru..w + ru),
                rng.gen_range(-ru..hgt + ru),
            )
        };
        let start = (draw(), draw());
        let (v, c) = pattern_search(frame, start, big, min_step);
        consider(&mut best, v, c);
    }
    Ok(best)
}

/// `A₂(Ω)` by multistart pattern search in all four reflected frames.
pub fn fraenkel2(d: &GridDomain) -> Result<AsymmetryResult> {
    fraenkel2_seeded(d, DEFAULT_SEED)
}

pub fn fraenkel2_seeded(d: &GridDomain, seed: u64) -> Result<AsymmetryResult> {
    let base = Raster::new(d);
    let ru = radius_cells(&base, 2.0);
    let mut result: Option<(f64, Point, Point)> = None;
    let mut evaluations = 0;
    let mut identity_scan = f64::NAN;
    for flip in FRAMES {
        let mut frame = Frame::new(&base, flip, ru);
        let fb = fraenkel2_frame(&mut frame, seed)?;
        evaluations += frame.evaluations;
        if flip == (false, false) {
            identity_scan = fb.scan_value;
        }
        let p = frame.to_world(d, fb.centers.0);
        let q = frame.to_world(d, fb.centers.1);
        let (p, q) = if (q.x, q.y) < (p.x, p.y) { (q, p) } else { (p, q) };
        let take = match &result {
            None => true,
            Some((v, bp, bq)) => {
                fb.value < *v
                    || (fb.value == *v && [p.x, p.y, q.x, q.y] < [bp.x, bp.y, bq.x, bq.y])
            }
        };
        if take {
            result = Some((fb.value, p, q));
        }
    }
    let (value, p, q) = result.expect("four frames searched");
    let r = ru * d.h();
    let pair = BallPair::new(p, q, r)?;
    Ok(AsymmetryResult {
        value,
        optimizer: Optimizer::Pair(pair),
        evaluations,
        oracle_gap: Some(identity_scan - value),
    })
}

/// Exhaustive minimum over disjoint center pairs on a lattice of spacing
/// `step` (world units, at least `h`) anchored at the domain's bounding box.
/// Lattice pairs slightly too close are included after being pushed apart
/// to tangency, so constraint-active optima are not missed by a whole step.
pub fn fraenkel2_exhaustive(d: &GridDomain, step: f64) -> Result<AsymmetryResult> {
    if !(step >= d.h() * (1.0 - 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "lattice step {step} smaller than the cell size {}",
            d.h()
        )));
    }
    let base = Raster::new(d);
    let ru = radius_cells(&base, 2.0);
    let mut frame = Frame::new(&base, (false, false), ru);
    let scan = scan_pairs(&mut frame, step / d.h(), 1, true)?;
    let (c1, c2) = scan.best[0];
    let pair = BallPair::new(frame.to_world(d, c1), frame.to_world(d, c2), ru * d.h())?;
    Ok(AsymmetryResult {
        value: scan.value,
        optimizer: Optimizer::Pair(pair),
        evaluations: frame.evaluations,
        oracle_gap: None,
    })
}

/// Fraenkel asymmetry `A(Ω)` by pattern search from the centroid.
pub fn fraenkel(d: &GridDomain) -> Result<AsymmetryResult> {
    let base = Raster::new(d);
    let ru = radius_cells(&base, 1.0);
    let mut result: Option<(f64, Point)> = None;
    let mut evaluations = 0;
    for flip in FRAMES {
        let mut frame = Frame::new(&base, flip, ru);
        let mut c = frame.centroid();
        let mut best = frame.single(c);
        let mut step = 0.25 * frame.diameter();
        let polls = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)];
        while step >= 0.25 {
            let mut winner: Option<(f64, Uv)> = None;
            for (du, dv) in polls {
                let p = (c.0 + step * du, c.1 + step * dv);
                let v = frame.single(p);
                if v < winner.map_or(best, |w| w.0) {
                    winner = Some((v, p));
                }
            }
            match winner {
                Some((v, p)) => {
                    best = v;
                    c = p;
                }
                None => step *= 0.5,
            }
        }
        evaluations += frame.evaluations;
        let w = frame.to_world(d, c);
        let take = match result {
            None => true,
            Some((v, bw)) => best < v || (best == v && (w.x, w.y) < (bw.x, bw.y)),
        };
        if take {
            result = Some((best, w));
        }
    }
    let (value, center) = result.expect("four frames searched");
    Ok(AsymmetryResult {
        value,
        optimizer: Optimizer::Ball {
            center,
            radius: ru * d.h(),
        },
        evaluations,
        oracle_gap: None,
    })
}

/// Exhaustive single-ball search over centers on a lattice of spacing `step`.
pub fn fraenkel_exhaustive(d: &GridDomain, step: f64) -> Result<AsymmetryResult> {
    if !(step >= d.h() * (1.0 - 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "lattice step {step} smaller than the cell size {}",
            d.h()
        )));
    }
    let base = Raster::new(d);
    let ru = radius_cells(&base, 1.0);
    let mut frame = Frame::new(&base, (false, false), ru);
    let s = step / d.h();
    let mut best: Option<(f64, Uv)> = None;
    let nb = (frame.raster.nj as f64 / s).floor() as i64;
    let na = (frame.raster.ni as f64 / s).floor() as i64;
    for b in 0..=nb {
        for a in 0..=na {
            let c = (a as f64 * s, b as f64 * s);
            let v = frame.single(c);
            if best.map_or(true, |(bv, _)| v < bv) {
                best = Some((v, c));
            }
        }
    }
    let (value, c) = best.expect("lattice is non-empty");
    Ok(AsymmetryResult {
        value,
        optimizer: Optimizer::Ball {
            center: frame.to_world(d, c),
            radius: ru * d.h(),
        },
        evaluations: frame.evaluations,
        oracle_gap: None,
    })
}
