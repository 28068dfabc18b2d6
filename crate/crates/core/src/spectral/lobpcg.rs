//! Block LOBPCG with soft locking and full reorthogonalization.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::multigrid::Multigrid;
use super::NeumannOperator;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LobpcgOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the random starting block.
    pub seed: u64,
    /// Guard vectors iterated beyond the requested `k`.
    pub extra: usize,
    /// Preconditioner shift in units of `1/|Ω|`.
    pub shift: f64,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        LobpcgOptions {
            tol: 1e-8,
            max_iter: 2000,
            seed: 42,
            extra: 4,
            shift: 1.0,
        }
    }
}

type Block = Vec<Vec<f64>>;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthonormalize `cands` against `basis` (assumed orthonormal) and each
/// other with two Gram-Schmidt passes; nearly dependent candidates are dropped.
fn orthonormalize_into(basis: &[Vec<f64>], cands: Block) -> Block {
    let mut accepted: Block = Vec::new();
    for mut v in cands {
        let norm0 = dot(&v, &v).sqrt();
        if norm0 == 0.0 || !norm0.is_finite() {
            continue;
        }
        for _ in 0..2 {
            for q in basis.iter().chain(accepted.iter()) {
                let c = dot(q, &v);
                axpy(-c, q, &mut v);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-10 * norm0 {
            v.iter_mut().for_each(|x| *x /= norm);
            accepted.push(v);
        }
    }
    accepted
}

fn combine(cols: &[&Vec<f64>], coef: &DMatrix<f64>, j: usize, row0: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (i, c) in cols.iter().enumerate() {
        let a = coef[(row0 + i, j)];
        if a != 0.0 {
            axpy(a, c, &mut out);
        }
    }
    out
}

/// Returns eigenvalues, Euclidean-orthonormal eigenvectors and the iteration count.
pub(super) fn solve(
    op: &NeumannOperator,
    k: usize,
    opts: &LobpcgOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    let n = op.len();
    let m = (k + opts.extra).min(n);
    let area = n as f64 * op.h() * op.h();
    let precond = Multigrid::new(
        op.grid_coords(),
        op.neighbours().to_vec(),
        1.0 / (op.h() * op.h()),
        opts.shift / area,
    );
    let apply = |x: &[f64]| {
        let mut y = vec![0.0; n];
        op.apply(x, &mut y);
        y
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start: Block = (0..m)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut x = orthonormalize_into(&[], start);
    if x.len() < m {
        return Err(Error::InvalidArgument("degenerate starting block".into()));
    }
    let mut ax: Block = x.iter().map(|v| apply(v)).collect();
    let mut lambda = vec![0.0; m];
    let mut p: Block = Vec::new();
    let mut residuals = vec![f64::INFINITY; m];

    // initial Rayleigh-Ritz on the random block
    {
        let (vals, c) = rayleigh_ritz(&x, &ax, m);
        let refs: Vec<&Vec<f64>> = x.iter().collect();
        let arefs: Vec<&Vec<f64>> = ax.iter().collect();
        let nx: Block = (0..m).map(|j| combine(&refs, &c, j, 0, n)).collect();
        let nax: Block = (0..m).map(|j| combine(&arefs, &c, j, 0, n)).collect();
        x = nx;
        ax = nax;
        lambda = vals;
    }

    for iter in 1..=opts.max_iter {
        let mut r: Block = Vec::with_capacity(m);
        for j in 0..m {
            let mut rj = ax[j].clone();
            axpy(-lambda[j], &x[j], &mut rj);
            residuals[j] = dot(&rj, &rj).sqrt();
            r.push(rj);
        }
        let converged: Vec<bool> = (0..m)
            .map(|j| residuals[j] <= opts.tol * lambda[j].abs().max(1.0))
            .collect();
        if converged[..k].iter().all(|&c| c) {
            return Ok((lambda[..k].to_vec(), x.into_iter().take(k).collect(), iter));
        }
        let active: Vec<usize> = (0..m).filter(|&j| !converged[j]).collect();

        let w: Block = active
            .iter()
            .map(|&j| {
                let mut z = vec![0.0; n];
                precond.apply(&r[j], &mut z);
                z
            })
            .collect();
        let w = orthonormalize_into(&x, w);
        let mut basis_xw: Block = x.clone();
        basis_xw.extend(w.iter().cloned());
        let pa: Block = if p.is_empty() {
            Vec::new()
        } else {
            active.iter().map(|&j| p[j].clone()).collect()
        };
        let pa = orthonormalize_into(&basis_xw, pa);
        let aw: Block = w.iter().map(|v| apply(v)).collect();
        let apa: Block = pa.iter().map(|v| apply(v)).collect();

        let mut s: Vec<&Vec<f64>> = x.iter().collect();
        s.extend(w.iter());
        s.extend(pa.iter());
        let mut as_: Vec<&Vec<f64>> = ax.iter().collect();
        as_.extend(aw.iter());
        as_.extend(apa.iter());
        let dim = s.len();
        let mut g = DMatrix::zeros(dim, dim);
        for a in 0..dim {
            for b in a..dim {
                let v = 0.5 * (dot(s[a], as_[b]) + dot(s[b], as_[a]));
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        let (vals, c) = sorted_eigen(g, m);

        let np: Block = (0..m).map(|j| combine(&s[m..], &c, j, m, n)).collect();
        let nx: Block = (0..m).map(|j| combine(&s, &c, j, 0, n)).collect();
        let nax: Block = (0..m).map(|j| combine(&as_, &c, j, 0, n)).collect();
        x = nx;
        ax = nax;
        p = np;
        lambda = vals;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residuals: residuals[..k].to_vec(),
    })
}

fn rayleigh_ritz(x: &Block, ax: &Block, m: usize) -> (Vec<f64>, DMatrix<f64>) {
    let dim = x.len();
    let mut g = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        for b in a..dim {
            let v = 0.5 * (dot(&x[a], &ax[b]) + dot(&x[b], &ax[a]));
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    sorted_eigen(g, m)
}

/// The `m` smallest eigenpairs of a small symmetric matrix, ascending.
fn sorted_eigen(g: DMatrix<f64>, m: usize) -> (Vec<f64>, DMatrix<f64>) {
    let dim = g.nrows();
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut c = DMatrix::zeros(dim, m);
    for (j, &i) in order.iter().take(m).enumerate() {
        c.set_column(j, &eig.eigenvectors.column(i));
    }
    (order.iter().take(m).map(|&i| eig.eigenvalues[i]).collect(), c)
}
