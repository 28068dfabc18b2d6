//! Bessel functions of half-integer order, the Weinberger constant and the
//! radial profiles built from them.
//!
//! The profile `g(r) = r^{1-N/2} J_{N/2}(β r / r_Ω)` is evaluated through the
//! regular series `S_ν(x) = J_ν(x) / x^ν`, so that `g(r)/r` and `g'(r)` stay
//! finite at the origin without any 0/0 forms:
//!
//! ```text
//! g(r)  = r k^ν S_ν(k r)
//! g'(r) = k^ν (S_ν(z) - z² S_{ν+1}(z)),   z = k r,  k = β / r_Ω
//! ```

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Upper end of the range served by the power series.
const SERIES_LIMIT: f64 = 12.0;
const SERIES_MAX_TERMS: usize = 60;
const SERIES_EPS: f64 = 1e-18;
const MAX_ARGUMENT: f64 = 100.0;

/// Γ(t/2 + 1) for integer `t >= -1`.
fn gamma_half_plus_one(t: i32) -> f64 {
    debug_assert!(t >= -1);
    if t % 2 == 0 {
        (1..=t / 2).fold(1.0, |acc, k| acc * k as f64)
    } else {
        // Γ(1/2) = √π, Γ(a + 1) = a Γ(a)
        let mut g = PI.sqrt();
        let mut a = 0.5;
        while a < t as f64 / 2.0 + 1.0 - 1e-9 {
            g *= a;
            a += 1.0;
        }
        g
    }
}

/// `J_ν(x) / x^ν` for `ν = t/2` by the defining power series.
pub(crate) fn scaled_series(t: i32, x: f64) -> f64 {
    let nu = t as f64 / 2.0;
    let mut term = 1.0 / (2f64.powf(nu) * gamma_half_plus_one(t));
    let q = -0.25 * x * x;
    let mut sum = term;
    for m in 1..SERIES_MAX_TERMS {
        let mf = m as f64;
        term *= q / (mf * (mf + nu));
        sum += term;
        if term.abs() < SERIES_EPS * sum.abs().max(SERIES_EPS) {
            break;
        }
    }
    sum
}

/// `J_0 .. J_nmax` at `x > 0` by Miller's downward recurrence, normalised with
/// `J_0 + 2 Σ J_{2k} = 1`.
fn miller_integer(x: f64, nmax: usize) -> Vec<f64> {
    let start = nmax.max(x as usize) + 20 + (40.0 * (nmax.max(x as usize) as f64 + 1.0)).sqrt() as usize;
    let top = start + start % 2;
    let mut vals = vec![0.0; top + 2];
    vals[top] = 1e-30;
    for k in (1..=top).rev() {
        vals[k - 1] = 2.0 * k as f64 / x * vals[k] - vals[k + 1];
        if vals[k - 1].abs() > 1e250 {
            for v in vals.iter_mut().skip(k - 1) {
                *v *= 1e-250;
            }
        }
    }
    let norm = vals[0] + 2.0 * vals.iter().skip(2).step_by(2).take(top / 2).sum::<f64>();
    vals.truncate(nmax + 1);
    vals.iter_mut().for_each(|v| *v /= norm);
    vals
}

/// `J_{t/2}(x)` for `t >= -1`, `x >= 0`. No validation.
pub(crate) fn bessel_twice(t: i32, x: f64) -> f64 {
    let nu = t as f64 / 2.0;
    if x == 0.0 {
        return match t {
            -1 => f64::INFINITY,
            0 => 1.0,
            _ => 0.0,
        };
    }
    if x <= SERIES_LIMIT {
        return x.powf(nu) * scaled_series(t, x);
    }
    if t % 2 == 0 {
        let n = (t / 2) as usize;
        miller_integer(x, n)[n]
    } else {
        // J_{-1/2}, J_{1/2} in closed form, then upward recurrence (stable for ν < x).
        let amp = (2.0 / (PI * x)).sqrt();
        let mut prev = amp * x.cos();
        if t == -1 {
            return prev;
        }
        let mut cur = amp * x.sin();
        let mut order = 0.5;
        while order < nu - 1e-9 {
            let next = 2.0 * order / x * cur - prev;
            prev = cur;
            cur = next;
            order += 1.0;
        }
        cur
    }
}

fn twice_order(nu: f64) -> Result<i32> {
    let t = 2.0 * nu;
    if (t - t.round()).abs() > 1e-12 || !(1.0..=6.0).contains(&t.round()) {
        return Err(Error::UnsupportedOrder(nu));
    }
    Ok(t.round() as i32)
}

fn check_argument(x: f64) -> Result<()> {
    if !(0.0..=MAX_ARGUMENT).contains(&x) {
        return Err(Error::OutOfRange(x));
    }
    Ok(())
}

/// Bessel function of the first kind `J_ν(x)` for `ν ∈ {1/2, 1, ..., 3}` and
/// `x ∈ [0, 100]`.
pub fn bessel_j(nu: f64, x: f64) -> Result<f64> {
    let t = twice_order(nu)?;
    check_argument(x)?;
    Ok(bessel_twice(t, x))
}

/// `J'_ν(x) = J_{ν-1}(x) - (ν/x) J_ν(x)`; at the origin the limits are used
/// (`+∞` for `ν = 1/2`).
pub fn bessel_j_prime(nu: f64, x: f64) -> Result<f64> {
    let t = twice_order(nu)?;
    check_argument(x)?;
    if x == 0.0 {
        return Ok(match t {
            1 => f64::INFINITY,
            2 => 0.5,
            _ => 0.0,
        });
    }
    Ok(bessel_twice(t - 2, x) - nu / x * bessel_twice(t, x))
}

/// Measure of the unit ball in ℝ^N, `π^{N/2} / Γ(N/2 + 1)`.
pub fn unit_ball_measure(dimension: u32) -> f64 {
    PI.powf(dimension as f64 / 2.0) / gamma_half_plus_one(dimension as i32)
}

fn check_dimension(dimension: u32) -> Result<()> {
    if !(2..=6).contains(&dimension) {
        return Err(Error::InvalidArgument(format!(
            "dimension {dimension} outside 2..=6"
        )));
    }
    Ok(())
}

/// d/dr [ r^{1-ν} J_ν(r) ] expressed through the scaled series.
fn radial_derivative(t: i32, r: f64) -> f64 {
    scaled_series(t, r) - r * r * scaled_series(t + 2, r)
}

/// The Weinberger constant `β_{N/2,1}`: first positive stationary point of
/// `r ↦ r^{1-N/2} J_{N/2}(r)`.
pub fn weinberger_beta(dimension: u32) -> Result<f64> {
    check_dimension(dimension)?;
    let t = dimension as i32;
    let (mut lo, mut hi) = (0.5, 0.5);
    let mut f_lo = radial_derivative(t, lo);
    let mut found = false;
    for step in 1..=110 {
        hi = 0.5 + 0.05 * step as f64;
        let f_hi = radial_derivative(t, hi);
        if f_lo.signum() != f_hi.signum() {
            found = true;
            break;
        }
        lo = hi;
        f_lo = f_hi;
    }
    if !found {
        return Err(Error::Bracketing(format!(
            "no sign change of the radial derivative on [0.5, 6] for N = {dimension}"
        )));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = radial_derivative(t, mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// First nonzero Neumann eigenvalue of the ball of radius `radius` in ℝ^N.
pub fn mu1_ball(radius: f64, dimension: u32) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius {radius} must be positive")));
    }
    let beta = weinberger_beta(dimension)?;
    Ok(beta * beta / (radius * radius))
}

/// The scale-free maximal value `2^{2/N} |B|^{2/N} μ₁(B)`, attained by two
/// disjoint equal balls.
pub fn mu2_star(dimension: u32) -> Result<f64> {
    let beta = weinberger_beta(dimension)?;
    let n = dimension as f64;
    Ok(2f64.powf(2.0 / n) * unit_ball_measure(dimension).powf(2.0 / n) * beta * beta)
}

/// Dimension, half-measure radius and Weinberger constant that parameterise
/// the profiles `g`, `G` and `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileParams {
    dimension: u32,
    r_omega: f64,
    beta: f64,
    omega_n: f64,
    // k^ν with k = β / r_Ω
    scale: f64,
    g_cap: f64,
}

impl ProfileParams {
    pub fn new(dimension: u32, r_omega: f64) -> Result<Self> {
        if !(r_omega > 0.0) || !r_omega.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "r_omega {r_omega} must be positive"
            )));
        }
        let beta = weinberger_beta(dimension)?;
        let nu = dimension as f64 / 2.0;
        let scale = (beta / r_omega).powf(nu);
        let mut p = ProfileParams {
            dimension,
            r_omega,
            beta,
            omega_n: unit_ball_measure(dimension),
            scale,
            g_cap: 0.0,
        };
        p.g_cap = p.g_uncapped(r_omega).0;
        Ok(p)
    }

    pub fn dimension(&self) -> u32 {
        self.dimension
    }

    pub fn r_omega(&self) -> f64 {
        self.r_omega
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn omega_n(&self) -> f64 {
        self.omega_n
    }

    /// `g(r_Ω)`, the value of the cap.
    pub fn g_cap(&self) -> f64 {
        self.g_cap
    }

    /// `μ₁(B_{r_Ω}) = β² / r_Ω²`.
    pub fn mu1(&self) -> f64 {
        (self.beta / self.r_omega).powi(2)
    }

    /// Measure of `B_{r_Ω}`.
    pub fn ball_measure(&self) -> f64 {
        self.omega_n * self.r_omega.powi(self.dimension as i32)
    }

    fn k(&self) -> f64 {
        self.beta / self.r_omega
    }

    /// The Bessel profile and its derivative without the cap, any `r >= 0`.
    pub(crate) fn g_uncapped(&self, r: f64) -> (f64, f64) {
        let t = self.dimension as i32;
        let z = self.k() * r;
        let s = scaled_series(t, z);
        let s_next = scaled_series(t + 2, z);
        (r * self.scale * s, self.scale * (s - z * z * s_next))
    }

    /// `(G(r), G'(r))`.
    pub fn capped(&self, r: f64) -> (f64, f64) {
        if r <= self.r_omega {
            self.g_uncapped(r)
        } else {
            (self.g_cap, 0.0)
        }
    }

    /// `G(r)/r`, finite at the origin.
    pub fn capped_over_r(&self, r: f64) -> f64 {
        if r <= self.r_omega {
            self.scale * scaled_series(self.dimension as i32, self.k() * r)
        } else {
            self.g_cap / r
        }
    }

    /// `f(r) = G'(r)² + (N-1) G(r)²/r²`.
    pub fn f(&self, r: f64) -> f64 {
        let n1 = self.dimension as f64 - 1.0;
        if r <= self.r_omega {
            let (_, gp) = self.g_uncapped(r);
            let q = self.capped_over_r(r);
            gp * gp + n1 * q * q
        } else {
            n1 * self.g_cap * self.g_cap / (r * r)
        }
    }

    /// `∫ f` over the annulus `a <= |x| <= b` in ℝ^N, composite midpoint rule.
    pub fn annulus_integral_f(&self, a: f64, b: f64, nodes: usize) -> f64 {
        self.radial_integral(a, b, nodes, |r| self.f(r))
    }

    /// `∫ G²` over the annulus `a <= |x| <= b`.
    pub fn annulus_integral_g2(&self, a: f64, b: f64, nodes: usize) -> f64 {
        self.radial_integral(a, b, nodes, |r| self.capped(r).0.powi(2))
    }

    fn radial_integral(&self, a: f64, b: f64, nodes: usize, w: impl Fn(f64) -> f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let n = self.dimension as i32;
        let dr = (b - a) / nodes as f64;
        let sum: f64 = (0..nodes)
            .map(|i| {
                let r = a + (i as f64 + 0.5) * dr;
                w(r) * r.powi(n - 1)
            })
            .sum();
        n as f64 * self.omega_n * sum * dr
    }
}

/// `(g(r), g'(r))` on `[0, r_Ω]`.
pub fn profile_eval(r: f64, p: &ProfileParams) -> Result<(f64, f64)> {
    if !(0.0..=p.r_omega).contains(&r) {
        return Err(Error::OutOfRange(r));
    }
    Ok(p.g_uncapped(r))
}

/// `(G(r), G'(r))` for `r >= 0`.
pub fn capped_eval(r: f64, p: &ProfileParams) -> Result<(f64, f64)> {
    if !(r >= 0.0) {
        return Err(Error::OutOfRange(r));
    }
    Ok(p.capped(r))
}

/// `f(r) = G'² + (N-1) G²/r²`, with the limit `N g'(0)²` at the origin.
pub fn weight_f(r: f64, p: &ProfileParams) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::OutOfRange(r));
    }
    Ok(p.f(r))
}

/// Residual of the radial eigenvalue equation for an arbitrary profile
/// returning `(value, derivative)`; the second derivative is a centered
/// difference of the derivative with step `1e-5 r_Ω`.
pub fn ode_residual_for(r: f64, p: &ProfileParams, profile: impl Fn(f64) -> (f64, f64)) -> f64 {
    let n1 = p.dimension as f64 - 1.0;
    let s = 1e-5 * p.r_omega;
    let (g, gp) = profile(r);
    let gpp = (profile(r + s).1 - profile(r - s).1) / (2.0 * s);
    gpp + n1 / r * gp + (p.mu1() - n1 / (r * r)) * g
}

/// Residual of `g'' + (N-1)/r g' + (μ₁(B_{r_Ω}) - (N-1)/r²) g` for the Bessel
/// profile, `0 < r < r_Ω`.
pub fn ode_residual(r: f64, p: &ProfileParams) -> Result<f64> {
    if !(r > 0.0 && r < p.r_omega) {
        return Err(Error::OutOfRange(r));
    }
    Ok(ode_residual_for(r, p, |x| p.g_uncapped(x)))
}
