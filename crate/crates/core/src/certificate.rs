//! Test fields, orthogonal test points, the mass split and the quantities
//! entering the quantitative two-ball inequality.

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asymmetry::{fraenkel2_seeded, AsymmetryResult, DEFAULT_SEED};
use crate::domain::{lens_area, symdiff_ballpair, BallPair, GridDomain, Point, Raster};
use crate::error::{Error, Result};
use crate::spectral::SpectralResult;
use crate::special::{bessel_j, mu2_star, unit_ball_measure, weinberger_beta, ProfileParams};

/// Residual norm below which a test pair counts as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-6;
/// Nodes of the composite midpoint rule for radial integrals.
pub const RADIAL_NODES: usize = 10_000;
const RANDOM_STARTS: usize = 8;
const DEGENERATE: f64 = 1e-12;

/// Two distinct points and the mediator line between them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestPair {
    a: Point,
    b: Point,
}

impl TestPair {
    pub fn new(a: Point, b: Point) -> Result<TestPair> {
        let dist = a.dist(b);
        if !(dist > 0.0) || !dist.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "test points must be distinct and finite, got {a:?} and {b:?}"
            )));
        }
        Ok(TestPair { a, b })
    }

    pub fn a(&self) -> Point {
        self.a
    }

    pub fn b(&self) -> Point {
        self.b
    }

    pub fn swapped(&self) -> TestPair {
        TestPair {
            a: self.b,
            b: self.a,
        }
    }

    /// Unit vector from `A` to `B`.
    pub fn ab(&self) -> Point {
        (self.b - self.a) * (1.0 / self.a.dist(self.b))
    }

    pub fn midpoint(&self) -> Point {
        (self.a + self.b) * 0.5
    }

    /// Membership in `H_A`; points on the mediator belong to `H_A`.
    pub fn in_h_a(&self, x: Point) -> bool {
        (x - self.midpoint()).dot(self.b - self.a) <= 0.0
    }
}

/// `G(|x - A|)/|x - A| · (x - A)`, zero at `x = A`.
pub fn g_vector_field(x: Point, a: Point, p: &ProfileParams) -> Point {
    let v = x - a;
    let d = v.norm();
    if d == 0.0 {
        return Point::default();
    }
    v * p.capped_over_r(d)
}

/// `g_A` on `H_A`; on `H_B`, `g_B` with its component along `ab` reversed.
pub fn g_ab(x: Point, tp: &TestPair, p: &ProfileParams) -> Point {
    g_ab_raw(x, tp.a, tp.b, p)
}

fn g_ab_raw(x: Point, a: Point, b: Point, p: &ProfileParams) -> Point {
    let e = b - a;
    let mid = (a + b) * 0.5;
    if (x - mid).dot(e) <= 0.0 {
        g_vector_field(x, a, p)
    } else {
        let w = g_vector_field(x, b, p);
        let u = e * (1.0 / e.norm());
        w - u * (2.0 * w.dot(u))
    }
}

fn active_centers(d: &GridDomain) -> Vec<Point> {
    d.active_cells()
        .into_iter()
        .map(|c| d.cell_center(c % d.nx(), c / d.nx()))
        .collect()
}

/// Raw sums `Σ g·e_i h²` and `Σ (g·e_i) u h²`.
fn ortho_sums(centers: &[Point], u: &[f64], a: Point, b: Point, p: &ProfileParams, h2: f64) -> [f64; 4] {
    let mut s = [0.0; 4];
    for (x, &ux) in centers.iter().zip(u) {
        let g = g_ab_raw(*x, a, b, p);
        s[0] += g.x;
        s[1] += g.y;
        s[2] += g.x * ux;
        s[3] += g.y * ux;
    }
    s.map(|v| v * h2)
}

fn normalize_residual(s: [f64; 4], measure: f64, u_norm: f64, p: &ProfileParams) -> [f64; 4] {
    let c = 1.0 / (measure * p.g_cap());
    let cu = 1.0 / (measure.sqrt() * u_norm * p.g_cap());
    [s[0] * c, s[1] * c, s[2] * cu, s[3] * cu]
}

fn l2_norm(d: &GridDomain, u: &[f64]) -> f64 {
    (u.iter().map(|x| x * x).sum::<f64>() * d.h() * d.h()).sqrt()
}

fn norm4(r: &[f64; 4]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `∫ g^{AB}·e_i` and `∫ (g^{AB}·e_i) u₁` for `i = 1, 2`. The first pair is
/// divided by `|Ω| g(r_Ω)`, the second by `|Ω|^{1/2} ‖u₁‖ g(r_Ω)`, so both are
/// dimensionless and at most 1 in magnitude.
pub fn orthogonality_residual(
    tp: &TestPair,
    d: &GridDomain,
    u1: &[f64],
    p: &ProfileParams,
) -> Result<[f64; 4]> {
    if u1.len() != d.active_count() {
        return Err(Error::InvalidArgument(format!(
            "eigenvector has {} entries for {} cells",
            u1.len(),
            d.active_count()
        )));
    }
    let s = ortho_sums(&active_centers(d), u1, tp.a, tp.b, p, d.h() * d.h());
    Ok(normalize_residual(s, d.measure(), l2_norm(d, u1), p))
}

/// The eigenvector of `μ₁` with its mean removed and unit `L²` norm. On a
/// disconnected domain `μ₁ = 0` and this is the kernel direction orthogonal
/// to constants.
pub fn first_eigenfunction(d: &GridDomain, spectral: &SpectralResult) -> Result<Vec<f64>> {
    let v = spectral.eigenvectors.get(1).ok_or_else(|| {
        Error::InvalidArgument("spectral result lacks the first non-trivial eigenvector".into())
    })?;
    if v.len() != d.active_count() {
        return Err(Error::InvalidArgument("eigenvector does not match the domain".into()));
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let mut u: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let norm = l2_norm(d, &u);
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("first eigenvector is constant".into()));
    }
    u.iter_mut().for_each(|x| *x /= norm);
    Ok(u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPointSearch {
    pub pair: TestPair,
    pub residual: [f64; 4],
    pub residual_norm: f64,
    /// Residual norm at most [`ORTHOGONALITY_TOL`].
    pub converged: bool,
    pub evaluations: u64,
}

/// Residual evaluation in the frame of the domain's bounding box, so the
/// search is exactly equivariant under whole-cell translations.
struct Field<'a> {
    centers: Vec<Point>,
    u: &'a [f64],
    p: &'a ProfileParams,
    h: f64,
    measure: f64,
    u_norm: f64,
    evaluations: u64,
}

impl Field<'_> {
    fn residual(&mut self, x: &[f64; 4]) -> [f64; 4] {
        self.evaluations += 1;
        let s = ortho_sums(
            &self.centers,
            self.u,
            Point::new(x[0], x[1]),
            Point::new(x[2], x[3]),
            self.p,
            self.h * self.h,
        );
        normalize_residual(s, self.measure, self.u_norm, self.p)
    }

    fn separated(&self, x: &[f64; 4]) -> bool {
        (x[0] - x[2]).hypot(x[1] - x[3]) >= self.h
    }

    /// Damped Gauss-Newton with a central-difference Jacobian of step `h`.
    fn gauss_newton(&mut self, start: [f64; 4]) -> ([f64; 4], [f64; 4], f64) {
        let mut x = start;
        if !self.separated(&x) {
            let (mx, my) = (0.5 * (x[0] + x[2]), 0.5 * (x[1] + x[3]));
            x = [mx - self.h, my, mx + self.h, my];
        }
        let mut r = self.residual(&x);
        let mut n = norm4(&r);
        let max_step = self.p.r_omega();
        for _ in 0..60 {
            if n <= ORTHOGONALITY_TOL || !n.is_finite() {
                break;
            }
            let mut jac = Matrix4::zeros();
            for c in 0..4 {
                let (mut xp, mut xm) = (x, x);
                xp[c] += self.h;
                xm[c] -= self.h;
                let (rp, rm) = (self.residual(&xp), self.residual(&xm));
                for row in 0..4 {
                    jac[(row, c)] = (rp[row] - rm[row]) / (2.0 * self.h);
                }
            }
            let svd = jac.svd(true, true);
            let smax = svd.singular_values.max();
            let Ok(delta) = svd.solve(&Vector4::from(r), 1e-10 * smax) else {
                break;
            };
            let mut delta = -delta;
            let len = delta.norm();
            if !len.is_finite() || len == 0.0 {
                break;
            }
            if len > max_step {
                delta *= max_step / len;
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..16 {
                let xn = [
                    x[0] + t * delta[0],
                    x[1] + t * delta[1],
                    x[2] + t * delta[2],
                    x[3] + t * delta[3],
                ];
                if self.separated(&xn) {
                    let rn = self.residual(&xn);
                    let nn = norm4(&rn);
                    if nn < n {
                        x = xn;
                        r = rn;
                        n = nn;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (x, r, n)
    }
}

/// Search two points whose field `g^{AB}` is orthogonal to constants and to
/// `u₁`, with the default seed.
pub fn find_test_points(d: &GridDomain, u1: &[f64], p: &ProfileParams) -> Result<TestPointSearch> {
    find_test_points_seeded(d, u1, p, DEFAULT_SEED)
}

/// Starts, in order: the structural seeds (component centroids or principal
/// halves), then random pairs in the bounding box. The first start reaching
/// [`ORTHOGONALITY_TOL`] is returned; otherwise the best one, unconverged.
pub fn find_test_points_seeded(
    d: &GridDomain,
    u1: &[f64],
    p: &ProfileParams,
    seed: u64,
) -> Result<TestPointSearch> {
    if u1.len() != d.active_count() {
        return Err(Error::InvalidArgument("eigenvector does not match the domain".into()));
    }
    let raster = Raster::new(d);
    let h = d.h();
    let corner = raster.to_world(d, 0.0, 0.0);
    let centers: Vec<Point> = d
        .active_cells()
        .into_iter()
        .map(|c| {
            Point::new(
                ((c % d.nx() - raster.i0) as f64 + 0.5) * h,
                ((c / d.nx() - raster.j0) as f64 + 0.5) * h,
            )
        })
        .collect();
    let mut field = Field {
        centers,
        u: u1,
        p,
        h,
        measure: d.measure(),
        u_norm: l2_norm(d, u1),
        evaluations: 0,
    };
    let (sa, sb) = raster.structural_seeds();
    let mut starts = vec![[sa.0 * h, sa.1 * h, sb.0 * h, sb.1 * h]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, ht) = (raster.ni as f64 * h, raster.nj as f64 * h);
    for _ in 0..RANDOM_STARTS {
        starts.push([
            rng.gen_range(0.0..w),
            rng.gen_range(0.0..ht),
            rng.gen_range(0.0..w),
            rng.gen_range(0.0..ht),
        ]);
    }
    let mut best: Option<([f64; 4], [f64; 4], f64)> = None;
    for start in starts {
        let (x, r, n) = field.gauss_newton(start);
        if n.is_finite() && best.map_or(true, |b| n < b.2) {
            best = Some((x, r, n));
        }
        if n <= ORTHOGONALITY_TOL {
            break;
        }
    }
    let Some((x, residual, residual_norm)) = best else {
        return Err(Error::TestPointSearch {
            best_residual: f64::INFINITY,
        });
    };
    let pair = TestPair::new(
        corner + Point::new(x[0], x[1]),
        corner + Point::new(x[2], x[3]),
    )?;
    if residual_norm > ORTHOGONALITY_TOL {
        log::warn!("test-point search stopped at residual {residual_norm:e}");
    }
    Ok(TestPointSearch {
        pair,
        residual,
        residual_norm,
        converged: residual_norm <= ORTHOGONALITY_TOL,
        evaluations: field.evaluations,
    })
}

/// `(∫_{Ω∩H_A} f(d_A) + ∫_{Ω∩H_B} f(d_B)) / (∫_{Ω∩H_A} G²(d_A) + ∫_{Ω∩H_B} G²(d_B))`.
pub fn rayleigh_quotient(d: &GridDomain, tp: &TestPair, p: &ProfileParams) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for x in active_centers(d) {
        let r = if tp.in_h_a(x) { x.dist(tp.a) } else { x.dist(tp.b) };
        num += p.f(r);
        den += p.capped(r).0.powi(2);
    }
    if !(den > 0.0) {
        return Err(Error::InvalidArgument("zero denominator in the Rayleigh quotient".into()));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// Per-cell geometry relative to a test pair.
struct Classified {
    in_h_a: Vec<bool>,
    d_a: Vec<f64>,
    d_b: Vec<f64>,
    in_ball_a: Vec<bool>,
    in_ball_b: Vec<bool>,
}

fn classify(d: &GridDomain, tp: &TestPair, r: f64) -> Classified {
    let centers = active_centers(d);
    let d_a: Vec<f64> = centers.iter().map(|x| x.dist(tp.a)).collect();
    let d_b: Vec<f64> = centers.iter().map(|x| x.dist(tp.b)).collect();
    Classified {
        in_h_a: centers.iter().map(|&x| tp.in_h_a(x)).collect(),
        in_ball_a: d_a.iter().map(|&v| v < r).collect(),
        in_ball_b: d_b.iter().map(|&v| v < r).collect(),
        d_a,
        d_b,
    }
}

/// Labels of the cells of `S = Ω \ (B_{A,r_Ω} ∪ B_{B,r_Ω})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSplit {
    /// Active-cell indices of `S`, ascending.
    pub cells: Vec<usize>,
    pub labels: Vec<Side>,
    /// `|B_{r_Ω}| - |Ω ∩ H_A ∩ B_{A,r_Ω}|`, clamped at zero.
    pub quota_a: f64,
    pub quota_b: f64,
    /// Measure by which an in-ball term exceeded `|B_{r_Ω}|` (lattice noise).
    pub quota_excess: f64,
}

impl MassSplit {
    pub fn measure(&self, side: Side, h: f64) -> f64 {
        self.labels.iter().filter(|&&s| s == side).count() as f64 * h * h
    }
}

/// Split `S` into `Ω_A` and `Ω_B` meeting the balance
/// `|Ω_A| + |Ω ∩ H_A ∩ B_{A,r_Ω}| = |B_{r_Ω}|` (and the same for `B`) within
/// half a cell. Cells start at the nearer center; then cells of the side in
/// surplus move across in increasing order of `|d_A - d_B|`.
pub fn mass_split(d: &GridDomain, tp: &TestPair, p: &ProfileParams) -> Result<MassSplit> {
    let ball = p.ball_measure();
    if (d.measure() - 2.0 * ball).abs() > 0.01 * d.measure() {
        return Err(Error::InvalidArgument(format!(
            "|Ω| = {} is not twice |B_r| = {}",
            d.measure(),
            ball
        )));
    }
    let h2 = d.h() * d.h();
    let c = classify(d, tp, p.r_omega());
    let n = c.d_a.len();
    let beta_a = (0..n).filter(|&k| c.in_h_a[k] && c.in_ball_a[k]).count() as f64;
    let beta_b = (0..n).filter(|&k| !c.in_h_a[k] && c.in_ball_b[k]).count() as f64;
    let cells: Vec<usize> = (0..n).filter(|&k| !c.in_ball_a[k] && !c.in_ball_b[k]).collect();
    let ball_cells = ball / h2;
    let raw_a = ball_cells - beta_a;
    let raw_b = ball_cells - beta_b;
    let excess = (-raw_a).max(0.0) + (-raw_b).max(0.0);
    let allowance = 2.0 * std::f64::consts::PI * p.r_omega() / d.h() + 1.0;
    if excess > allowance {
        return Err(Error::QuotaUnreachable(format!(
            "in-ball cells exceed |B_r| by {excess} cells (allowance {allowance})"
        )));
    }
    let total = cells.len() as f64;
    let (quota_a, quota_b) = if raw_a < 0.0 {
        (0.0, total)
    } else if raw_b < 0.0 {
        (total, 0.0)
    } else {
        (raw_a, raw_b)
    };

    let a_first = (tp.a.x, tp.a.y) <= (tp.b.x, tp.b.y);
    let mut labels: Vec<Side> = cells
        .iter()
        .map(|&k| {
            if c.d_a[k] < c.d_b[k] || (c.d_a[k] == c.d_b[k] && a_first) {
                Side::A
            } else {
                Side::B
            }
        })
        .collect();
    let mut count_a = labels.iter().filter(|&&s| s == Side::A).count() as f64;
    let surplus = if count_a > quota_a { Side::A } else { Side::B };
    let mut order: Vec<usize> = (0..cells.len()).filter(|&i| labels[i] == surplus).collect();
    order.sort_by(|&i, &j| {
        let (ki, kj) = (cells[i], cells[j]);
        (c.d_a[ki] - c.d_b[ki])
            .abs()
            .total_cmp(&(c.d_a[kj] - c.d_b[kj]).abs())
            .then(ki.cmp(&kj))
    });
    for i in order {
        if (count_a - quota_a).abs() <= 0.5 + 1e-9 {
            break;
        }
        labels[i] = if surplus == Side::A { Side::B } else { Side::A };
        count_a += if surplus == Side::A { -1.0 } else { 1.0 };
    }
    if (count_a - quota_a).abs() > 0.5 + 1e-9 {
        return Err(Error::QuotaUnreachable(format!(
            "|S| = {total} cells cannot meet quota {quota_a}"
        )));
    }
    Ok(MassSplit {
        cells,
        labels,
        quota_a: quota_a * h2,
        quota_b: quota_b * h2,
        quota_excess: excess * h2,
    })
}

/// The six normalized measures `α₁..α₄`, `β₁`, `β₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaBeta {
    pub alpha: [f64; 4],
    pub beta: [f64; 2],
}

impl AlphaBeta {
    pub fn sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum()
    }

    /// `(α₁ + α₃ + β₁ - 1, α₂ + α₄ + β₂ - 1)`.
    pub fn relation_defects(&self) -> (f64, f64) {
        (
            self.alpha[0] + self.alpha[2] + self.beta[0] - 1.0,
            self.alpha[1] + self.alpha[3] + self.beta[1] - 1.0,
        )
    }
}

/// Quantization tolerance of the α/β relations: `4h · 2πr_Ω / |B_{r_Ω}|`.
pub fn alpha_beta_tolerance(d: &GridDomain, p: &ProfileParams) -> f64 {
    8.0 * d.h() / p.r_omega()
}

pub fn alpha_beta(d: &GridDomain, tp: &TestPair, ms: &MassSplit, p: &ProfileParams) -> AlphaBeta {
    let c = classify(d, tp, p.r_omega());
    let unit = d.h() * d.h() / p.ball_measure();
    let mut alpha = [0.0; 4];
    for (&k, &side) in ms.cells.iter().zip(&ms.labels) {
        let idx = match (side, c.in_h_a[k]) {
            (Side::A, true) => 0,
            (Side::B, true) => 1,
            (Side::A, false) => 2,
            (Side::B, false) => 3,
        };
        alpha[idx] += unit;
    }
    let n = c.d_a.len();
    let beta = [
        (0..n).filter(|&k| c.in_h_a[k] && c.in_ball_a[k]).count() as f64 * unit,
        (0..n).filter(|&k| !c.in_h_a[k] && c.in_ball_b[k]).count() as f64 * unit,
    ];
    AlphaBeta { alpha, beta }
}

/// `2∫_{B_{r_Ω}} f` by radial quadrature minus the six cell integrals over
/// `Ω∩H_A∩B_A`, `Ω_A∩H_A`, `Ω_B∩H_A` (weight `f(d_A)`) and their `H_B`
/// counterparts (weight `f(d_B)`).
pub fn deficit_d(d: &GridDomain, tp: &TestPair, ms: &MassSplit, p: &ProfileParams) -> f64 {
    let c = classify(d, tp, p.r_omega());
    let h2 = d.h() * d.h();
    let weight = |k: usize| {
        if c.in_h_a[k] {
            p.f(c.d_a[k])
        } else {
            p.f(c.d_b[k])
        }
    };
    let mut in_balls = 0.0;
    for k in 0..c.d_a.len() {
        if (c.in_h_a[k] && c.in_ball_a[k]) || (!c.in_h_a[k] && c.in_ball_b[k]) {
            in_balls += weight(k);
        }
    }
    let mut split = 0.0;
    for &k in &ms.cells {
        split += weight(k);
    }
    2.0 * p.annulus_integral_f(0.0, p.r_omega(), RADIAL_NODES) - (in_balls + split) * h2
}

/// `(N-1) ω g² r^{N-2} (2 - β₁ - β₂) + N ω g² r^{N-2} Σ (1 - (1 + α_i)^{(N-1)/N})`.
pub fn deficit_lower(ab: &AlphaBeta, p: &ProfileParams) -> f64 {
    let n = p.dimension() as f64;
    let base = p.omega_n() * p.g_cap().powi(2) * p.r_omega().powf(n - 2.0);
    let c = (n - 1.0) / n;
    (n - 1.0) * base * (2.0 - ab.beta[0] - ab.beta[1])
        + n * base * ab.alpha.iter().map(|&a| -(c * a.ln_1p()).exp_m1()).sum::<f64>()
}

/// Closed forms bounding `∫ f` over the annuli `r₁ < |x| < r_Ω` (from below)
/// and `r_Ω < |x| < r₂` (from above).
pub fn lemma32_bounds(r1: f64, r2: f64, p: &ProfileParams) -> Result<(f64, f64)> {
    let r = p.r_omega();
    if !(0.0 <= r1 && r1 <= r && r <= r2) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= r1 <= r_omega <= r2, got {r1}, {r}, {r2}"
        )));
    }
    let n = p.dimension() as i32;
    let nf = n as f64;
    let g2 = p.g_cap().powi(2);
    let lower = (nf - 1.0) * p.omega_n() * g2 / (r * r) * (r.powi(n) - r1.powi(n));
    let upper = nf * p.omega_n() * g2 / r * (r2.powi(n - 1) - r.powi(n - 1));
    Ok((lower, upper))
}

fn cbar_ratio(alpha: f64, c: f64) -> f64 {
    (c * alpha - (c * alpha.ln_1p()).exp_m1()) / (alpha * alpha)
}

/// `inf_{0 < α ≤ 1} (1 + cα - (1+α)^c)/α²` with `c = (N-1)/N`.
pub fn cbar_constant(dimension: u32) -> Result<f64> {
    if !(2..=6).contains(&dimension) {
        return Err(Error::InvalidArgument(format!(
            "cbar_constant needs 2 <= N <= 6, got {dimension}"
        )));
    }
    let c = (dimension as f64 - 1.0) / dimension as f64;
    let samples = 10_000;
    let (mut best_i, mut best) = (samples, cbar_ratio(1.0, c));
    for i in 1..samples {
        let v = cbar_ratio(i as f64 / samples as f64, c);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    // golden-section refinement around the best sample
    let (mut lo, mut hi) = (
        (best_i as f64 - 1.0).max(0.5) / samples as f64,
        ((best_i + 1) as f64 / samples as f64).min(1.0),
    );
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if cbar_ratio(m1, c) <= cbar_ratio(m2, c) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    Ok(best.min(cbar_ratio(0.5 * (lo + hi), c)))
}

/// `∫_{B₁} J²_{N/2}(β |x|) |x|^{2-N} dx`.
fn unit_ball_profile_mass(dimension: u32) -> Result<f64> {
    let beta = weinberger_beta(dimension)?;
    let nu = dimension as f64 / 2.0;
    let nodes = RADIAL_NODES;
    let dr = 1.0 / nodes as f64;
    let mut sum = 0.0;
    for i in 0..nodes {
        let s = (i as f64 + 0.5) * dr;
        sum += s * bessel_j(nu, beta * s)?.powi(2);
    }
    Ok(dimension as f64 * unit_ball_measure(dimension) * sum * dr)
}

/// Lower constant expected of `ratio_prop31`:
/// `(2ω)^{2/N} c̄ N ω J²_{N/2}(β) / (2 ∫_{B₁} J²(β|x|)|x|^{2-N})`.
pub fn prop31_constant(dimension: u32) -> Result<f64> {
    let n = dimension as f64;
    let omega = unit_ball_measure(dimension);
    let jb = bessel_j(n / 2.0, weinberger_beta(dimension)?)?;
    Ok((2.0 * omega).powf(2.0 / n) * cbar_constant(dimension)? * n * omega * jb * jb
        / (2.0 * unit_ball_profile_mass(dimension)?))
}

/// Overlap of the two test balls and the translated disjoint pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lens {
    /// `max(0, 2r_Ω - |AB|)`.
    pub width: f64,
    pub area: f64,
    /// `|B_A ∩ B_B| / (l^{(N+1)/2} |Ω|^{(N-1)/(2N)})`, when `l > 0`.
    pub comparability: Option<f64>,
    /// `B_{A,r_Ω}` moved by `-l·ab`, and `B_{B,r_Ω}`.
    pub translated: BallPair,
    /// `|Ω Δ (translated pair)| / |Ω|`, an upper bound on `A₂`.
    pub a2_bound: f64,
}

pub fn lens(d: &GridDomain, tp: &TestPair, p: &ProfileParams) -> Result<Lens> {
    let r = p.r_omega();
    let dist = tp.a.dist(tp.b);
    let width = (2.0 * r - dist).max(0.0);
    let area = lens_area(r, dist);
    let a_moved = if width > 0.0 {
        tp.a - tp.ab() * width
    } else {
        tp.a
    };
    let translated = BallPair::new(a_moved, tp.b, r)?;
    let n = p.dimension() as f64;
    let comparability = (width > 0.0).then(|| {
        area / (width.powf((n + 1.0) / 2.0) * d.measure().powf((n - 1.0) / (2.0 * n)))
    });
    Ok(Lens {
        width,
        area,
        comparability,
        a2_bound: symdiff_ballpair(d, &translated) / d.measure(),
        translated,
    })
}

/// Estimated grid error of `D`. The domain is a union of cells, so the only
/// error is the midpoint rule on `Ω`: `h²/24 · |Ω| · sup|Δf|` for the smooth
/// part and `h² · diam(Ω) · sup|f'|` for the kink of the reflected field
/// along the mediator.
pub fn quadrature_slack(d: &GridDomain, p: &ProfileParams) -> f64 {
    let r = p.r_omega();
    let n1 = p.dimension() as f64 - 1.0;
    let nodes = 3000;
    let dr = 3.0 * r / nodes as f64;
    let (mut lap, mut slope) = (0.0f64, 0.0f64);
    for i in 1..nodes {
        let x = i as f64 * dr;
        let (a, b, c) = (p.f(x - dr), p.f(x), p.f(x + dr));
        let d1 = (c - a) / (2.0 * dr);
        let d2 = (c - 2.0 * b + a) / (dr * dr);
        lap = lap.max((d2 + n1 * d1 / x).abs());
        slope = slope.max(d1.abs());
    }
    let h = d.h();
    let (i0, j0, i1, j1) = d.bounding_box();
    let diam = h * ((i1 - i0) as f64).hypot((j1 - j0) as f64);
    h * h * (d.measure() * lap / 24.0 + diam * slope)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub measure: f64,
    pub r_omega: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu2_scaled: f64,
    pub mu2_star: f64,
    pub bh_deficit: f64,
    pub rayleigh_bound: f64,
    /// `μ₁(B_{r_Ω})`, the value the Rayleigh bound approaches.
    pub mu1_ball: f64,
    #[serde(rename = "A2")]
    pub a2: f64,
    #[serde(rename = "A2_oracle_gap")]
    pub a2_oracle_gap: Option<f64>,
    pub a2_optimizer: Option<BallPair>,
    pub test_points: TestPair,
    pub orthogonality_residual: [f64; 4],
    pub orthogonality_residual_norm: f64,
    pub test_points_converged: bool,
    pub alpha_beta: AlphaBeta,
    pub alpha_beta_tolerance: f64,
    pub quota_excess: f64,
    pub sum_alpha_sq: f64,
    #[serde(rename = "D_quadrature")]
    pub d_quadrature: f64,
    #[serde(rename = "D_closedform_lower")]
    pub d_closedform_lower: f64,
    pub quadrature_slack: f64,
    pub cbar: f64,
    pub prop31_constant: f64,
    pub lens: Lens,
    pub ratio_prop31: Option<f64>,
    pub ratio_lemma33: Option<f64>,
    pub ratio_thm11: Option<f64>,
    /// Names of ratios whose denominators fell below `1e-12`.
    pub degenerate: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    pub seed: Option<u64>,
    /// A precomputed `A₂` result; computed when absent.
    pub asymmetry: Option<AsymmetryResult>,
}

pub fn stability_report(
    d: &GridDomain,
    spectral: &SpectralResult,
    p: &ProfileParams,
) -> Result<StabilityReport> {
    stability_report_with(d, spectral, p, &ReportOptions::default())
}

pub fn stability_report_with(
    d: &GridDomain,
    spectral: &SpectralResult,
    p: &ProfileParams,
    opts: &ReportOptions,
) -> Result<StabilityReport> {
    if spectral.eigenvalues.len() < 3 {
        return Err(Error::InvalidArgument(
            "the report needs at least three eigenvalues (μ₀, μ₁, μ₂)".into(),
        ));
    }
    let seed = opts.seed.unwrap_or(DEFAULT_SEED);
    let n = p.dimension();
    let measure = d.measure();
    let mu1 = spectral.eigenvalues[1];
    let mu2 = spectral.eigenvalues[2];
    let mu2_scaled = measure.powf(2.0 / n as f64) * mu2;
    let mu2_star = mu2_star(n)?;
    let bh_deficit = mu2_star - mu2_scaled;

    let u1 = first_eigenfunction(d, spectral)?;
    let search = find_test_points_seeded(d, &u1, p, seed)?;
    let tp = search.pair;
    let rayleigh_bound = rayleigh_quotient(d, &tp, p)?;
    let ms = mass_split(d, &tp, p)?;
    let ab = alpha_beta(d, &tp, &ms, p);
    let d_quadrature = deficit_d(d, &tp, &ms, p);
    let d_lower = deficit_lower(&ab, p);
    let asym = match &opts.asymmetry {
        Some(a) => a.clone(),
        None => fraenkel2_seeded(d, seed)?,
    };
    let a2 = asym.value;
    let lens = lens(d, &tp, p)?;
    let sum_alpha_sq = ab.sum_sq();
    let a2_pow = a2.powi(n as i32 + 1);

    let mut degenerate = Vec::new();
    let mut ratio = |name: &str, num: f64, den: f64| {
        if den.abs() > DEGENERATE {
            Some(num / den)
        } else {
            degenerate.push(name.to_string());
            None
        }
    };
    let ratio_prop31 = ratio("ratio_prop31", bh_deficit, sum_alpha_sq);
    let ratio_lemma33 = ratio("ratio_lemma33", a2_pow, sum_alpha_sq);
    let ratio_thm11 = ratio("ratio_thm11", bh_deficit, a2_pow);

    Ok(StabilityReport {
        measure,
        r_omega: p.r_omega(),
        mu1,
        mu2,
        mu2_scaled,
        mu2_star,
        bh_deficit,
        rayleigh_bound,
        mu1_ball: p.mu1(),
        a2,
        a2_oracle_gap: asym.oracle_gap,
        a2_optimizer: asym.pair().copied(),
        test_points: tp,
        orthogonality_residual: search.residual,
        orthogonality_residual_norm: search.residual_norm,
        test_points_converged: search.converged,
        alpha_beta: ab,
        alpha_beta_tolerance: alpha_beta_tolerance(d, p),
        quota_excess: ms.quota_excess,
        sum_alpha_sq,
        d_quadrature,
        d_closedform_lower: d_lower,
        quadrature_slack: quadrature_slack(d, p),
        cbar: cbar_constant(n)?,
        prop31_constant: prop31_constant(n)?,
        lens,
        ratio_prop31,
        ratio_lemma33,
        ratio_thm11,
        degenerate,
    })
}
