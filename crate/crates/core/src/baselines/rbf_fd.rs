//! RBF-FD weights with the Matérn kernel `(1 + s r) e^{-s r}`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{GfdmError, Result};
use crate::geometry::PointCloud;
use crate::gmls::{RowWeights, StencilView};
use crate::sparse::CsrMatrix;
use crate::stencil::{Frames, NeighborTable};

pub const MAX_COND: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbfConfig {
    pub shape: f64,
    pub k: usize,
}

impl RbfConfig {
    pub fn phi(&self, r: f64) -> f64 {
        (1.0 + self.shape * r) * (-self.shape * r).exp()
    }

    /// `φ'(r) / r`, finite at the origin.
    pub fn dphi_over_r(&self, r: f64) -> f64 {
        -self.shape * self.shape * (-self.shape * r).exp()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Laplace–Beltrami weights from the kernel interpolant on one stencil.
pub fn rbf_fd_row_weights(base: usize, neighbors: &[usize], stencil: &StencilView, cfg: &RbfConfig) -> Result<RowWeights> {
    if !(cfg.shape > 0.0) {
        return Err(GfdmError::InvalidArgument("shape parameter must be positive".into()));
    }
    let pts = &stencil.points;
    let kk = pts.len();
    let n = pts[0].len();
    let a = DMatrix::from_fn(kk, kk, |j, k| cfg.phi(dist(pts[j], pts[k])));
    let eig = a.clone().symmetric_eigen();
    let (lmin, lmax) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
    let cond = lmax / lmin;
    if !(cond <= MAX_COND) {
        return Err(GfdmError::IllConditioned { cond });
    }
    let ainv = a
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(GfdmError::IllConditioned { cond })?;

    // projected kernel gradients: grad[j][k] = P(x_j) ∇φ(|x − x_k|) at x_j
    let mut grad = vec![vec![vec![0.0; n]; kk]; kk];
    let mut diff = vec![0.0; n];
    for j in 0..kk {
        let tj = &stencil.tangents[j];
        for k in 0..kk {
            let f = cfg.dphi_over_r(dist(pts[j], pts[k]));
            for m in 0..n {
                diff[m] = f * (pts[j][m] - pts[k][m]);
            }
            let g = &mut grad[j][k];
            for t in tj {
                let c: f64 = t.iter().zip(&diff).map(|(a, b)| a * b).sum();
                for m in 0..n {
                    g[m] += c * t[m];
                }
            }
        }
    }
    let mut row = vec![0.0; kk];
    for ell in 0..n {
        let b = DMatrix::from_fn(kk, kk, |j, k| grad[j][k][ell]);
        let g = b.row(0) * &ainv;
        let gb = &g * &b;
        let contrib = gb * &ainv;
        for k in 0..kk {
            row[k] += contrib[k];
        }
    }
    Ok(RowWeights::new(base, neighbors.to_vec(), row))
}

pub fn rbf_fd_operator(
    cloud: &PointCloud,
    table: &NeighborTable,
    frames: &Frames,
    cfg: &RbfConfig,
) -> Result<(CsrMatrix, Vec<RowWeights>)> {
    let rows: Vec<Result<RowWeights>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let view = StencilView::from_table(cloud, table, frames, i);
            rbf_fd_row_weights(i, table.row(i), &view, cfg)
        })
        .collect();
    let rows: Vec<RowWeights> = rows.into_iter().collect::<Result<_>>()?;
    Ok((CsrMatrix::from_rows(cloud.len(), &rows), rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let c = RbfConfig { shape: 0.7, k: 5 };
        assert_eq!(c.phi(0.0), 1.0);
        assert!((c.dphi_over_r(0.0) + 0.49).abs() < 1e-15);
        // φ'(r) = -s² r e^{-sr}
        let r = 0.3;
        let h = 1e-6;
        let fd = (c.phi(r + h) - c.phi(r - h)) / (2.0 * h);
        assert!((fd / r - c.dphi_over_r(r)).abs() < 1e-8);
    }

    #[test]
    fn mirror_neighbors_get_equal_weights() {
        let pts: Vec<[f64; 2]> = vec![[0.0, 0.0], [0.1, 0.0], [-0.1, 0.0], [0.2, 0.0], [-0.2, 0.0]];
        let t = [1.0, 0.0];
        let view = StencilView {
            points: pts.iter().map(|p| p.as_slice()).collect(),
            tangents: (0..5).map(|_| vec![t.as_slice()]).collect(),
        };
        let cfg = RbfConfig { shape: 1.0, k: 5 };
        let w = rbf_fd_row_weights(0, &[0, 1, 2, 3, 4], &view, &cfg).unwrap().weights;
        assert!((w[1] - w[2]).abs() < 1e-9 * w[1].abs());
        assert!((w[3] - w[4]).abs() < 1e-9 * w[3].abs().max(1.0));
    }
}
