//! Intrinsic-polynomial least-squares weights for the Laplace–Beltrami operator.

use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GfdmError, Result};
use crate::geometry::PointCloud;
use crate::sparse::CsrMatrix;
use crate::stencil::{Frames, NeighborTable};

/// Relative singular-value cutoff for the basis matrix.
pub const RANK_TOL: f64 = 1e-10;

/// Multi-indices with `|α| ≤ l` in graded lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndexSet {
    pub degree: usize,
    pub dim: usize,
    pub alphas: Vec<Vec<usize>>,
}

impl MultiIndexSet {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

pub fn enumerate_multi_indices(l: usize, d: usize) -> Result<MultiIndexSet> {
    if l < 2 {
        return Err(GfdmError::InvalidArgument(format!("degree {l} < 2 cannot resolve second derivatives")));
    }
    if d == 0 {
        return Err(GfdmError::InvalidArgument("intrinsic dimension must be positive".into()));
    }
    let mut alphas = Vec::with_capacity(binomial(l + d, d));
    for total in 0..=l {
        let mut level = Vec::new();
        compositions(total, d, &mut Vec::with_capacity(d), &mut level);
        alphas.extend(level);
    }
    Ok(MultiIndexSet { degree: l, dim: d, alphas })
}

/// Compositions of `total` into `d` parts, first part largest first.
fn compositions(total: usize, d: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if d == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        compositions(total - first, d - 1, prefix, out);
        prefix.pop();
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn monomial(z: &[f64], alpha: &[usize]) -> f64 {
    z.iter().zip(alpha).map(|(zi, &a)| zi.powi(a as i32)).product()
}

/// `z_i = t_i · (x − x0)`.
pub fn intrinsic_coords(frame: &[&[f64]], x0: &[f64], x: &[f64]) -> Vec<f64> {
    let diff: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
    frame.iter().map(|t| dot(t, &diff)).collect()
}

/// Intrinsic monomial `z^α` at `x`.
pub fn eval_basis(frame: &[&[f64]], x0: &[f64], x: &[f64], alpha: &[usize]) -> f64 {
    monomial(&intrinsic_coords(frame, x0, x), alpha)
}

/// Component `ell` of `P(x_eval) ∇ z^α (x_eval)`, with `P` given by its tangent vectors.
pub fn eval_g_basis(
    frame: &[&[f64]],
    eval_frame: &[&[f64]],
    x0: &[f64],
    x_eval: &[f64],
    alpha: &[usize],
    ell: usize,
) -> f64 {
    let z = intrinsic_coords(frame, x0, x_eval);
    let mut out = 0.0;
    for (i, t0) in frame.iter().enumerate() {
        if alpha[i] == 0 {
            continue;
        }
        let mut lowered = alpha.to_vec();
        lowered[i] -= 1;
        let coef = alpha[i] as f64 * monomial(&z, &lowered);
        let proj_l: f64 = eval_frame.iter().map(|te| te[ell] * dot(te, t0)).sum();
        out += coef * proj_l;
    }
    out
}

/// Where the projection inside the gradient operator is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionAt {
    Base,
    #[default]
    Neighbor,
}

impl FromStr for ProjectionAt {
    type Err = GfdmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(ProjectionAt::Base),
            "neighbor" => Ok(ProjectionAt::Neighbor),
            _ => Err(GfdmError::InvalidArgument(format!("projection_at must be base|neighbor, got `{s}`"))),
        }
    }
}

/// One operator row.
#[derive(Clone, Debug, PartialEq)]
pub struct RowWeights {
    pub base: usize,
    pub neighbors: Vec<usize>,
    pub weights: Vec<f64>,
    pub w1_negative: bool,
}

impl RowWeights {
    pub fn new(base: usize, neighbors: Vec<usize>, weights: Vec<f64>) -> Self {
        let w1_negative = weights[0] < 0.0;
        RowWeights { base, neighbors, weights, w1_negative }
    }

    pub fn w1(&self) -> f64 {
        self.weights[0]
    }

    pub fn abs_sum(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }
}

/// Stencil geometry: points (base first) and the tangent vectors at each.
pub struct StencilView<'a> {
    pub points: Vec<&'a [f64]>,
    pub tangents: Vec<Vec<&'a [f64]>>,
}

impl<'a> StencilView<'a> {
    pub fn from_table(cloud: &'a PointCloud, table: &NeighborTable, frames: &'a Frames, i: usize) -> Self {
        let row = table.row(i);
        StencilView {
            points: row.iter().map(|&j| cloud.point(j)).collect(),
            tangents: row
                .iter()
                .map(|&j| (0..frames.d).map(|t| frames.tangent(j, t)).collect())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest distance from the base point.
    pub fn radius(&self) -> f64 {
        let x0 = self.points[0];
        self.points
            .iter()
            .map(|p| p.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .fold(0.0, f64::max)
            .sqrt()
    }

    /// Tangent coordinates divided by the stencil radius.
    fn scaled_coords(&self, h: f64) -> Vec<Vec<f64>> {
        let frame = &self.tangents[0];
        self.points
            .iter()
            .map(|p| {
                intrinsic_coords(frame, self.points[0], p)
                    .into_iter()
                    .map(|z| z / h)
                    .collect()
            })
            .collect()
    }
}

/// `Φ_kj = ẑ_k^{α_j}` with `ẑ = z / radius`.
///
/// The column scaling leaves the least-squares weights unchanged and keeps
/// the rank test meaningful across stencil sizes.
pub fn basis_matrix(stencil: &StencilView, basis: &MultiIndexSet) -> DMatrix<f64> {
    let h = stencil.radius();
    let z = stencil.scaled_coords(if h > 0.0 { h } else { 1.0 });
    DMatrix::from_fn(stencil.len(), basis.len(), |k, j| monomial(&z[k], &basis.alphas[j]))
}

/// `Φ⁺` through a thin QR, after a rank check on `R`.
fn pseudo_inverse(phi: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let qr = phi.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let smax = sv.max();
    if !(smax > 0.0) || sv.min() < RANK_TOL * smax {
        return None;
    }
    r.solve_upper_triangular(&qr.q().transpose())
}

/// Laplace–Beltrami weights of a single stencil.
///
/// Returns `None` when the basis matrix is numerically rank deficient.
pub fn stencil_weights(stencil: &StencilView, basis: &MultiIndexSet, at: ProjectionAt) -> Option<Vec<f64>> {
    let kk = stencil.len();
    let m = basis.len();
    let d = basis.dim;
    if kk <= m {
        return None;
    }
    let h = stencil.radius();
    if !(h > 0.0) {
        return None;
    }
    let z = stencil.scaled_coords(h);
    let phi = DMatrix::from_fn(kk, m, |k, j| monomial(&z[k], &basis.alphas[j]));
    let pinv = pseudo_inverse(&phi)?;
    let n = stencil.points[0].len();
    let frame0 = &stencil.tangents[0];

    // v[k][i] = P(x_k) t_{0,i}
    let v: Vec<Vec<Vec<f64>>> = (0..kk)
        .map(|k| {
            frame0
                .iter()
                .map(|t0| match at {
                    ProjectionAt::Base => t0.to_vec(),
                    ProjectionAt::Neighbor => {
                        let mut out = vec![0.0; n];
                        for te in &stencil.tangents[k] {
                            let c = dot(te, t0);
                            for (o, x) in out.iter_mut().zip(*te) {
                                *o += c * x;
                            }
                        }
                        out
                    }
                })
                .collect()
        })
        .collect();
    // dz[k][j][i] = ∂_{z_i} ẑ^{α_j} at stencil point k
    let mut lowered = vec![0usize; d];
    let dz: Vec<Vec<Vec<f64>>> = (0..kk)
        .map(|k| {
            basis
                .alphas
                .iter()
                .map(|alpha| {
                    (0..d)
                        .map(|i| {
                            if alpha[i] == 0 {
                                return 0.0;
                            }
                            lowered.copy_from_slice(alpha);
                            lowered[i] -= 1;
                            alpha[i] as f64 * monomial(&z[k], &lowered) / h
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut c = vec![0.0; m];
    let mut b = DMatrix::<f64>::zeros(kk, m);
    for ell in 0..n {
        for k in 0..kk {
            for j in 0..m {
                b[(k, j)] = (0..d).map(|i| dz[k][j][i] * v[k][i][ell]).sum();
            }
        }
        // g = B_ℓ[0,:] Φ⁺, then c += g B_ℓ
        let g: Vec<f64> = (0..kk)
            .map(|k| (0..m).map(|j| b[(0, j)] * pinv[(j, k)]).sum())
            .collect();
        for j in 0..m {
            c[j] += (0..kk).map(|k| g[k] * b[(k, j)]).sum::<f64>();
        }
    }
    Some((0..kk).map(|k| (0..m).map(|j| c[j] * pinv[(j, k)]).sum()).collect())
}

/// Weights for the stencil of base point `base`.
pub fn gmls_row_weights(
    base: usize,
    neighbors: &[usize],
    stencil: &StencilView,
    basis: &MultiIndexSet,
    at: ProjectionAt,
) -> Result<RowWeights> {
    let w = stencil_weights(stencil, basis, at).ok_or(GfdmError::RankDeficient { indices: vec![base] })?;
    Ok(RowWeights::new(base, neighbors.to_vec(), w))
}

/// Raw operator and its rows.
pub struct Assembly {
    pub operator: CsrMatrix,
    pub rows: Vec<RowWeights>,
}

pub fn assemble_operator(
    cloud: &PointCloud,
    table: &NeighborTable,
    frames: &Frames,
    basis: &MultiIndexSet,
    at: ProjectionAt,
) -> Result<Assembly> {
    if table.len() != cloud.len() || frames.len() != cloud.len() || frames.d != basis.dim {
        return Err(GfdmError::InvalidArgument("table, frames and cloud disagree".into()));
    }
    let rows: Vec<Option<RowWeights>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let view = StencilView::from_table(cloud, table, frames, i);
            stencil_weights(&view, basis, at).map(|w| RowWeights::new(i, table.row(i).to_vec(), w))
        })
        .collect();
    let bad: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.is_none().then_some(i))
        .collect();
    if !bad.is_empty() {
        return Err(GfdmError::RankDeficient { indices: bad });
    }
    let rows: Vec<RowWeights> = rows.into_iter().flatten().collect();
    let operator = CsrMatrix::from_rows(cloud.len(), &rows);
    Ok(Assembly { operator, rows })
}
