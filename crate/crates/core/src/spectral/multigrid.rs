//! Aggregation multigrid for the shifted operator `A + σM` on a cell graph.
//!
//! Cells are merged in 2×2 blocks of their grid coordinates. With piecewise
//! constant prolongation the Galerkin coarse operator is again a weighted
//! 5-point graph Laplacian plus a lumped mass term, so every level shares
//! one representation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

const COARSEST: usize = 400;
const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Level {
    coords: Vec<(u32, u32)>,
    /// Neighbours in the order -x, +x, -y, +y.
    nbr: Vec<[u32; 4]>,
    w: Vec<[f64; 4]>,
    mass: Vec<f64>,
    diag: Vec<f64>,
}

impl Level {
    fn len(&self) -> usize {
        self.coords.len()
    }

    fn residual(&self, x: &[f64], b: &[f64], r: &mut [f64]) {
        for i in 0..self.len() {
            let mut s = self.diag[i] * x[i];
            for d in 0..4 {
                let j = self.nbr[i][d];
                if j != NONE {
                    s -= self.w[i][d] * x[j as usize];
                }
            }
            r[i] = b[i] - s;
        }
    }

    fn relax(&self, x: &mut [f64], b: &[f64], i: usize) {
        let mut s = b[i];
        for d in 0..4 {
            let j = self.nbr[i][d];
            if j != NONE {
                s += self.w[i][d] * x[j as usize];
            }
        }
        x[i] = s / self.diag[i];
    }

    fn coarsen(&self, sigma: f64) -> (Level, Vec<u32>) {
        let mut keys: Vec<(u32, u32)> = self.coords.iter().map(|&(x, y)| (y / 2, x / 2)).collect();
        keys.sort_unstable();
        keys.dedup();
        let agg: Vec<u32> = self
            .coords
            .iter()
            .map(|&(x, y)| keys.binary_search(&(y / 2, x / 2)).unwrap() as u32)
            .collect();
        let nc = keys.len();
        let mut coarse = Level {
            coords: keys.iter().map(|&(y, x)| (x, y)).collect(),
            nbr: vec![[NONE; 4]; nc],
            w: vec![[0.0; 4]; nc],
            mass: vec![0.0; nc],
            diag: vec![0.0; nc],
        };
        for i in 0..self.len() {
            let ci = agg[i] as usize;
            coarse.mass[ci] += self.mass[i];
            for d in 0..4 {
                let j = self.nbr[i][d];
                if j == NONE {
                    continue;
                }
                let cj = agg[j as usize];
                if cj as usize != ci {
                    coarse.nbr[ci][d] = cj;
                    coarse.w[ci][d] += self.w[i][d];
                }
            }
        }
        for i in 0..nc {
            coarse.diag[i] = coarse.w[i].iter().sum::<f64>() + sigma * coarse.mass[i];
        }
        (coarse, agg)
    }
}

/// Symmetric W-cycle approximating `(A + σI)^{-1}`.
#[derive(Debug, Clone)]
pub(crate) struct Multigrid {
    levels: Vec<Level>,
    /// `aggregates[l][i]` is the level-`l+1` node containing node `i` of level `l`.
    aggregates: Vec<Vec<u32>>,
    coarse_solver: Cholesky<f64, Dyn>,
}

impl Multigrid {
    /// `coords` are grid coordinates of the unknowns, `nbr` their active
    /// neighbours (-x, +x, -y, +y), `link` the weight of every link.
    pub fn new(coords: Vec<(u32, u32)>, nbr: Vec<[u32; 4]>, link: f64, sigma: f64) -> Multigrid {
        let n = coords.len();
        let w: Vec<[f64; 4]> = nbr
            .iter()
            .map(|nb| nb.map(|j| if j == NONE { 0.0 } else { link }))
            .collect();
        let diag = w.iter().map(|row| row.iter().sum::<f64>() + sigma).collect();
        let mut levels = vec![Level {
            coords,
            nbr,
            w,
            mass: vec![1.0; n],
            diag,
        }];
        let mut aggregates = Vec::new();
        while levels.last().unwrap().len() > COARSEST {
            let (coarse, agg) = levels.last().unwrap().coarsen(sigma);
            if coarse.len() == levels.last().unwrap().len() {
                break;
            }
            levels.push(coarse);
            aggregates.push(agg);
        }
        let last = levels.last().unwrap();
        let nc = last.len();
        let mut dense = DMatrix::zeros(nc, nc);
        for i in 0..nc {
            dense[(i, i)] = last.diag[i];
            for d in 0..4 {
                let j = last.nbr[i][d];
                if j != NONE {
                    dense[(i, j as usize)] -= last.w[i][d];
                }
            }
        }
        let coarse_solver = Cholesky::new(dense).expect("shifted coarse operator is SPD");
        Multigrid {
            levels,
            aggregates,
            coarse_solver,
        }
    }

    pub fn apply(&self, b: &[f64], x: &mut [f64]) {
        self.cycle(0, b, x);
    }

    fn cycle(&self, l: usize, b: &[f64], x: &mut [f64]) {
        let lev = &self.levels[l];
        let n = lev.len();
        if l + 1 == self.levels.len() {
            let sol = self.coarse_solver.solve(&DVector::from_column_slice(b));
            x.copy_from_slice(sol.as_slice());
            return;
        }
        x.fill(0.0);
        for i in 0..n {
            lev.relax(x, b, i);
        }
        let agg = &self.aggregates[l];
        let nc = self.levels[l + 1].len();
        let mut r = vec![0.0; n];
        let mut rc = vec![0.0; nc];
        let mut ec = vec![0.0; nc];
        // two coarse visits per level (W-cycle)
        for _ in 0..2 {
            lev.residual(x, b, &mut r);
            rc.fill(0.0);
            for i in 0..n {
                rc[agg[i] as usize] += r[i];
            }
            self.cycle(l + 1, &rc, &mut ec);
            for i in 0..n {
                x[i] += ec[agg[i] as usize];
            }
        }
        for i in (0..n).rev() {
            lev.relax(x, b, i);
        }
    }
}
