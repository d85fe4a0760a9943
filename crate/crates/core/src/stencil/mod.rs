//! Neighbor stencils and tangent frames.

pub mod kdtree;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GfdmError, Result};
use crate::geometry::{analytic_frame, sample_manifold, ManifoldSpec, PointCloud};
use crate::gmls::enumerate_multi_indices;
pub use kdtree::{brute_force_nearest, KdTree};

/// K nearest neighbors per point, self first.
#[derive(Clone, Debug)]
pub struct NeighborTable {
    pub k: usize,
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl NeighborTable {
    pub fn len(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.indices.len() / self.k
        }
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn row_distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// The table restricted to the first `k` neighbors of each row.
    pub fn truncate(&self, k: usize) -> Result<NeighborTable> {
        if k == 0 || k > self.k {
            return Err(GfdmError::InvalidArgument(format!("cannot truncate K={} to {k}", self.k)));
        }
        let n = self.len();
        let mut indices = Vec::with_capacity(n * k);
        let mut distances = Vec::with_capacity(n * k);
        for i in 0..n {
            indices.extend_from_slice(&self.row(i)[..k]);
            distances.extend_from_slice(&self.row_distances(i)[..k]);
        }
        Ok(NeighborTable { k, indices, distances })
    }
}

/// Exact KNN with ties broken by smaller index.
pub fn build_knn(cloud: &PointCloud, k: usize) -> Result<NeighborTable> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(GfdmError::TooManyNeighbors { k, n });
    }
    let tree = KdTree::new(&cloud.ambient, cloud.n);
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(k);
            row.push((i, 0.0));
            row.extend(tree.nearest(cloud.point(i), k - 1, Some(i)));
            row
        })
        .collect();
    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for row in rows {
        for (j, dist) in row {
            indices.push(j);
            distances.push(dist);
        }
    }
    Ok(NeighborTable { k, indices, distances })
}

/// Per-row maximum neighbor distance.
pub fn h_k_max(table: &NeighborTable) -> Vec<f64> {
    (0..table.len())
        .map(|i| table.row_distances(i).iter().copied().fold(0.0, f64::max))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameSource {
    Analytic,
    /// First-order local SVD.
    Estimated,
    /// Local SVD refined by a quadratic fit of the neighborhood.
    EstimatedQuadratic,
    /// Local SVD refined by a cubic fit of the neighborhood.
    EstimatedCubic,
}

/// Orthonormal tangent vectors per point.
#[derive(Clone, Debug)]
pub struct Frames {
    pub n: usize,
    pub d: usize,
    /// Tangent `j` of point `i` lives at `[(i*d + j)*n ..][..n]`.
    pub data: Vec<f64>,
    pub source: FrameSource,
}

impl Frames {
    pub fn len(&self) -> usize {
        self.data.len() / (self.n * self.d)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tangent(&self, i: usize, j: usize) -> &[f64] {
        let o = (i * self.d + j) * self.n;
        &self.data[o..o + self.n]
    }

    /// `n × d` matrix with the tangents of point `i` as columns.
    pub fn basis(&self, i: usize) -> DMatrix<f64> {
        let o = i * self.d * self.n;
        DMatrix::from_column_slice(self.n, self.d, &self.data[o..o + self.n * self.d])
    }

    pub fn projection(&self, i: usize) -> DMatrix<f64> {
        let t = self.basis(i);
        &t * t.transpose()
    }

    /// `P_i v` computed as `T (Tᵀ v)`.
    pub fn project(&self, i: usize, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..self.d {
            let t = self.tangent(i, j);
            let c: f64 = t.iter().zip(v).map(|(a, b)| a * b).sum();
            for (o, ti) in out.iter_mut().zip(t) {
                *o += c * ti;
            }
        }
    }
}

/// Frames from the family's Jacobian; needs intrinsic coordinates.
pub fn analytic_frames(cloud: &PointCloud) -> Result<Frames> {
    let spec = cloud
        .spec
        .filter(|_| cloud.has_intrinsic())
        .ok_or_else(|| GfdmError::InvalidArgument("analytic frames need a sampled cloud".into()))?;
    let mut data = Vec::with_capacity(cloud.len() * cloud.n * cloud.d);
    for i in 0..cloud.len() {
        for t in analytic_frame(spec, cloud.param(i)) {
            data.extend(t);
        }
    }
    Ok(Frames {
        n: cloud.n,
        d: cloud.d,
        data,
        source: FrameSource::Analytic,
    })
}

/// `2√N` rounded to the nearest odd integer.
pub fn default_kp(n: usize) -> usize {
    let x = 2.0 * (n as f64).sqrt();
    let k = 2.0 * ((x - 1.0) / 2.0).round() + 1.0;
    (k.max(1.0) as usize).min(n.max(1))
}

fn orient(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Top-`d` right singular vectors of a centered neighborhood.
///
/// Returns `None` when the `d`-th singular value is below `1e-12` of the first.
pub fn local_svd_tangent(points: &[&[f64]], d: usize) -> Option<Vec<Vec<f64>>> {
    let k = points.len();
    let n = points.first()?.len();
    if d == 0 || d > k.min(n) {
        return None;
    }
    let mut mean = vec![0.0; n];
    for p in points {
        for (m, x) in mean.iter_mut().zip(*p) {
            *m += x / k as f64;
        }
    }
    let centered = DMatrix::from_fn(k, n, |r, c| points[r][c] - mean[c]);
    let svd = centered.svd(false, true);
    let vt = svd.v_t?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s0 = svd.singular_values[order[0]];
    if !(svd.singular_values[order[d - 1]] >= 1e-12 * s0) || s0 == 0.0 {
        return None;
    }
    Some(
        order[..d]
            .iter()
            .map(|&r| {
                let mut v: Vec<f64> = vt.row(r).iter().copied().collect();
                orient(&mut v);
                v
            })
            .collect(),
    )
}

/// Tangents from a degree-`degree` least-squares fit around `points[0]`.
///
/// The first-order frame supplies local coordinates `τ`; the linear
/// coefficients of `y − x₀ ≈ Aτ + (higher monomials in τ)` are then
/// orthonormalized.
pub fn local_poly_tangent(points: &[&[f64]], d: usize, degree: usize) -> Option<Vec<Vec<f64>>> {
    let first = local_svd_tangent(points, d)?;
    if degree < 2 {
        return Some(first);
    }
    let alphas: Vec<Vec<usize>> = enumerate_multi_indices(degree, d)
        .ok()?
        .alphas
        .into_iter()
        .filter(|a| a.iter().sum::<usize>() > 0)
        .collect();
    let k = points.len();
    let n = points[0].len();
    if k < alphas.len() + 1 {
        return None;
    }
    let x0 = points[0];
    let mut tau = DMatrix::zeros(k, d);
    for (r, p) in points.iter().enumerate() {
        for (j, t) in first.iter().enumerate() {
            tau[(r, j)] = t.iter().zip(p.iter().zip(x0)).map(|(a, (x, y))| a * (x - y)).sum::<f64>();
        }
    }
    let radius = tau.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if radius == 0.0 {
        return None;
    }
    tau /= radius;
    let phi = DMatrix::from_fn(k, alphas.len(), |r, c| {
        alphas[c].iter().enumerate().map(|(j, &e)| tau[(r, j)].powi(e as i32)).product::<f64>()
    });
    let rhs = DMatrix::from_fn(k, n, |r, c| points[r][c] - x0[c]);
    let coef = phi.svd(true, true).solve(&rhs, 1e-12).ok()?;
    // degree-one monomials come first in graded order
    let lin = coef.rows(0, d).into_owned();
    let svd = lin.svd(false, true);
    let vt = svd.v_t?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s0 = svd.singular_values[order[0]];
    if !(svd.singular_values[order[d - 1]] >= 1e-12 * s0) || s0 == 0.0 {
        return None;
    }
    Some(
        order[..d]
            .iter()
            .map(|&r| {
                let mut v: Vec<f64> = vt.row(r).iter().copied().collect();
                orient(&mut v);
                v
            })
            .collect(),
    )
}

/// First-order local SVD frames over the first `k_p` neighbors of each row.
pub fn estimate_tangent(cloud: &PointCloud, table: &NeighborTable, k_p: usize) -> Result<Frames> {
    estimate_frames(cloud, table, k_p, FrameSource::Estimated)
}

/// Frames of the requested kind; `table` rows must start with the point itself.
pub fn frames_for(cloud: &PointCloud, table: &NeighborTable, k_p: usize, source: FrameSource) -> Result<Frames> {
    match source {
        FrameSource::Analytic => analytic_frames(cloud),
        other => estimate_frames(cloud, table, k_p, other),
    }
}

fn estimate_frames(cloud: &PointCloud, table: &NeighborTable, k_p: usize, source: FrameSource) -> Result<Frames> {
    let d = cloud.d;
    if k_p < d + 1 || k_p > table.k {
        return Err(GfdmError::InvalidArgument(format!(
            "K_P = {k_p} must lie in [{}, {}]",
            d + 1,
            table.k
        )));
    }
    let per_point: Vec<Option<Vec<Vec<f64>>>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let pts: Vec<&[f64]> = table.row(i)[..k_p].iter().map(|&j| cloud.point(j)).collect();
            match source {
                FrameSource::EstimatedQuadratic => local_poly_tangent(&pts, d, 2),
                FrameSource::EstimatedCubic => local_poly_tangent(&pts, d, 3),
                _ => local_svd_tangent(&pts, d),
            }
        })
        .collect();
    let bad: Vec<usize> = per_point
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.is_none().then_some(i))
        .collect();
    if !bad.is_empty() {
        return Err(GfdmError::DegenerateNeighborhood { indices: bad });
    }
    let data = per_point.into_iter().flatten().flatten().flatten().collect();
    Ok(Frames { n: cloud.n, d, data, source })
}

/// Max over probe points of the ambient distance to the nearest cloud point.
pub fn fill_distance_at(cloud: &PointCloud, probes: &[f64]) -> f64 {
    let tree = KdTree::new(&cloud.ambient, cloud.n);
    probes
        .chunks(cloud.n)
        .map(|q| tree.nearest(q, 1, None).first().map_or(f64::INFINITY, |p| p.1))
        .fold(0.0, f64::max)
}

/// Monte-Carlo lower bound on the ambient fill distance.
pub fn estimate_fill_distance(spec: ManifoldSpec, cloud: &PointCloud, probes: usize, seed: u64) -> f64 {
    let probe_cloud = sample_manifold(spec, probes, seed);
    fill_distance_at(cloud, &probe_cloud.ambient)
}
