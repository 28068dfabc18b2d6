//! Neumann Laplacian on grid domains and its lowest eigenpairs.

mod lobpcg;
mod multigrid;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::domain::{generate, GridDomain, ShapeSpec};
use crate::error::{Error, Result};

pub use lobpcg::LobpcgOptions;

const NONE: u32 = u32::MAX;
/// Problems up to this many cells are solved densely.
const DENSE_LIMIT: usize = 300;

/// Cell-centered 5-point Laplacian with no-flux boundary links dropped.
#[derive(Debug, Clone)]
pub struct NeumannOperator {
    h: f64,
    nx: usize,
    /// Grid index of each unknown (row-major order).
    cells: Vec<usize>,
    /// Active neighbours in the order -x, +x, -y, +y.
    nbr: Vec<[u32; 4]>,
}

impl NeumannOperator {
    pub fn assemble(d: &GridDomain) -> Result<NeumannOperator> {
        let cells = d.active_cells();
        if cells.is_empty() {
            return Err(Error::InvalidDomain("empty domain".into()));
        }
        let mut index = vec![NONE; d.nx() * d.ny()];
        for (k, &c) in cells.iter().enumerate() {
            index[c] = k as u32;
        }
        let nx = d.nx();
        let nbr = cells
            .iter()
            .map(|&c| [index[c - 1], index[c + 1], index[c - nx], index[c + nx]])
            .collect();
        Ok(NeumannOperator {
            h: d.h(),
            nx,
            cells,
            nbr,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn degree(&self, k: usize) -> usize {
        self.nbr[k].iter().filter(|&&j| j != NONE).count()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let s = 1.0 / (self.h * self.h);
        (0..self.len()).map(|k| self.degree(k) as f64 * s).collect()
    }

    /// `y = A x`, written as a sum of differences so constants map to zero
    /// exactly.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let s = 1.0 / (self.h * self.h);
        for (k, nb) in self.nbr.iter().enumerate() {
            let xk = x[k];
            let mut acc = 0.0;
            for &j in nb {
                if j != NONE {
                    acc += xk - x[j as usize];
                }
            }
            y[k] = acc * s;
        }
    }

    /// Discrete Dirichlet energy `Σ_links (x_i - x_j)²`, each link counted
    /// once. Equals `h² ⟨A x, x⟩`, the grid analogue of `∫|∇u|²`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let mut e = 0.0;
        for (k, nb) in self.nbr.iter().enumerate() {
            for j in [nb[1], nb[3]] {
                if j != NONE {
                    e += (x[k] - x[j as usize]).powi(2);
                }
            }
        }
        e
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let s = 1.0 / (self.h * self.h);
        let mut m = DMatrix::zeros(n, n);
        for (k, nb) in self.nbr.iter().enumerate() {
            for &j in nb {
                if j != NONE {
                    m[(k, k)] += s;
                    m[(k, j as usize)] -= s;
                }
            }
        }
        m
    }

    pub(crate) fn neighbours(&self) -> &[[u32; 4]] {
        &self.nbr
    }

    pub(crate) fn grid_coords(&self) -> Vec<(u32, u32)> {
        self.cells
            .iter()
            .map(|&c| ((c % self.nx) as u32, (c / self.nx) as u32))
            .collect()
    }
}

pub fn assemble(d: &GridDomain) -> Result<NeumannOperator> {
    NeumannOperator::assemble(d)
}

/// Lowest eigenpairs of the Neumann Laplacian, counted with multiplicity.
///
/// Eigenvectors are indexed like [`GridDomain::active_cells`] and normalized
/// so that `Σ v² h² = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl SpectralResult {
    /// Number of eigenvalues below `threshold`.
    pub fn kernel_dimension(&self, threshold: f64) -> usize {
        self.eigenvalues.iter().filter(|&&m| m < threshold).count()
    }
}

/// The `k` smallest eigenpairs with the default seed.
pub fn lowest_eigenpairs(op: &NeumannOperator, k: usize, tol: f64) -> Result<SpectralResult> {
    lowest_eigenpairs_with(
        op,
        k,
        &LobpcgOptions {
            tol,
            ..LobpcgOptions::default()
        },
    )
}

pub fn lowest_eigenpairs_with(
    op: &NeumannOperator,
    k: usize,
    opts: &LobpcgOptions,
) -> Result<SpectralResult> {
    let n = op.len();
    if k == 0 || k > 8 || k > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= k <= min(8, cells = {n}), got k = {k}"
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {} must be positive", opts.tol)));
    }
    let (vals, mut vecs, iterations) = if n <= DENSE_LIMIT {
        dense_eigenpairs(op, k)
    } else {
        lobpcg::solve(op, k, opts)?
    };
    let mut residuals = Vec::with_capacity(k);
    let mut av = vec![0.0; n];
    for (v, &mu) in vecs.iter_mut().zip(&vals) {
        fix_sign(v);
        op.apply(v, &mut av);
        residuals.push(
            av.iter()
                .zip(v.iter())
                .map(|(a, x)| (a - mu * x).powi(2))
                .sum::<f64>()
                .sqrt(),
        );
        let scale = 1.0 / op.h();
        v.iter_mut().for_each(|x| *x *= scale);
    }
    Ok(SpectralResult {
        eigenvalues: vals,
        eigenvectors: vecs,
        residuals,
        iterations,
    })
}

fn dense_eigenpairs(op: &NeumannOperator, k: usize) -> (Vec<f64>, Vec<Vec<f64>>, usize) {
    let eig = SymmetricEigen::new(op.to_dense());
    let mut order: Vec<usize> = (0..op.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order[..k]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (vals, vecs, 0)
}

/// Make the entry of largest magnitude (first one on ties) positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() * (1.0 + 1e-9) {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn connected_components(d: &GridDomain) -> usize {
    d.component_labels().1
}

/// Richardson extrapolation from the last three values of a geometric
/// refinement sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub value: f64,
    pub order: f64,
}

/// `None` when the successive differences do not shrink monotonically.
pub fn richardson(h: &[f64], values: &[f64]) -> Result<Option<Extrapolation>> {
    if h.len() != values.len() || h.len() < 3 {
        return Err(Error::InvalidArgument(
            "richardson extrapolation needs at least three resolutions".into(),
        ));
    }
    let n = h.len();
    let ratio = h[n - 3] / h[n - 2];
    if !(ratio > 1.0) || ((h[n - 2] / h[n - 1]) / ratio - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "resolutions {:?} are not a geometric refinement",
            &h[n - 3..]
        )));
    }
    let d1 = values[n - 2] - values[n - 3];
    let d2 = values[n - 1] - values[n - 2];
    if d1 == 0.0 || d2 == 0.0 || d1.signum() != d2.signum() || d2.abs() >= d1.abs() {
        return Ok(None);
    }
    let order = (d1 / d2).ln() / ratio.ln();
    let value = values[n - 1] + d2 / (ratio.powf(order) - 1.0);
    Ok(Some(Extrapolation { value, order }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub h: Vec<f64>,
    pub measures: Vec<f64>,
    /// `eigenvalues[i][j]`: eigenvalue `j` at resolution `i`.
    pub eigenvalues: Vec<Vec<f64>>,
    pub extrapolated: Vec<Option<Extrapolation>>,
    pub warnings: Vec<String>,
}

impl ConvergenceStudy {
    /// Extrapolation of the scale-free products `|Ω| μ_j`.
    pub fn extrapolate_scaled(&self, j: usize) -> Result<Option<Extrapolation>> {
        let scaled: Vec<f64> = self
            .eigenvalues
            .iter()
            .zip(&self.measures)
            .map(|(ev, m)| ev[j] * m)
            .collect();
        richardson(&self.h, &scaled)
    }
}

pub fn convergence_study(
    spec: &ShapeSpec,
    h_list: &[f64],
    k: usize,
    tol: f64,
) -> Result<ConvergenceStudy> {
    if h_list.len() < 3 {
        return Err(Error::InvalidArgument(
            "a convergence study needs at least three resolutions".into(),
        ));
    }
    let mut study = ConvergenceStudy {
        h: h_list.to_vec(),
        measures: Vec::new(),
        eigenvalues: Vec::new(),
        extrapolated: Vec::new(),
        warnings: Vec::new(),
    };
    for &h in h_list {
        let d = generate(spec, h)?;
        let res = lowest_eigenpairs(&assemble(&d)?, k, tol)?;
        study.measures.push(d.measure());
        study.eigenvalues.push(res.eigenvalues);
    }
    for j in 0..k {
        let column: Vec<f64> = study.eigenvalues.iter().map(|ev| ev[j]).collect();
        let ex = richardson(h_list, &column)?;
        if ex.is_none() && column.iter().any(|&m| m > 1e-8) {
            let msg = format!("eigenvalue {j}: non-monotone differences {column:?}, extrapolation skipped");
            log::warn!("{msg}");
            study.warnings.push(msg);
        }
        study.extrapolated.push(ex);
    }
    Ok(study)
}
