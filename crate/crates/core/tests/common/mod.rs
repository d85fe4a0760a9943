#![allow(dead_code)]

use gfdm::geometry::{FieldSpec, ManifoldSpec, PointCloud};
use gfdm::gmls::{enumerate_multi_indices, ProjectionAt, StencilView};
use nalgebra::DMatrix;

/// Dense reference: unscaled coordinates, SVD pseudo-inverse, full `G_ℓ` matrices.
pub fn oracle(view: &StencilView, degree: usize, at: ProjectionAt) -> Vec<f64> {
    let d = view.tangents[0].len();
    let alphas = enumerate_multi_indices(degree, d).unwrap().alphas;
    let kk = view.points.len();
    let n = view.points[0].len();
    let x0 = view.points[0];
    let t0 = &view.tangents[0];
    let z: Vec<Vec<f64>> = view
        .points
        .iter()
        .map(|p| t0.iter().map(|t| t.iter().zip(p.iter().zip(x0)).map(|(a, (x, y))| a * (x - y)).sum()).collect())
        .collect();
    let mono = |z: &[f64], a: &[usize]| -> f64 { z.iter().zip(a).map(|(v, &e)| v.powi(e as i32)).product() };
    let phi = DMatrix::from_fn(kk, alphas.len(), |k, j| mono(&z[k], &alphas[j]));
    let pinv = phi.pseudo_inverse(1e-14).unwrap();
    let mut lap = DMatrix::<f64>::zeros(kk, kk);
    for ell in 0..n {
        let b = DMatrix::from_fn(kk, alphas.len(), |k, j| {
            let proj = DMatrix::<f64>::from_fn(n, n, |r, c| match at {
                ProjectionAt::Base => t0.iter().map(|t| t[r] * t[c]).sum::<f64>(),
                ProjectionAt::Neighbor => view.tangents[k].iter().map(|t| t[r] * t[c]).sum::<f64>(),
            });
            let mut grad = vec![0.0; n];
            for i in 0..d {
                if alphas[j][i] == 0 {
                    continue;
                }
                let mut low = alphas[j].clone();
                low[i] -= 1;
                let c = alphas[j][i] as f64 * mono(&z[k], &low);
                for (g, tv) in grad.iter_mut().zip(t0[i]) {
                    *g += c * tv;
                }
            }
            (0..n).map(|c| proj[(ell, c)] * grad[c]).sum()
        });
        let g = &b * &pinv;
        lap += &g * &g;
    }
    lap.row(0).iter().copied().collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

pub fn raw_cloud(n: usize, ambient: Vec<f64>) -> PointCloud {
    PointCloud { n, ambient, d: 1, intrinsic: Vec::new(), spec: None, seed: None }
}

/// O(N²) reference: sort every other point by (distance², index).
pub fn brute(cloud: &PointCloud, k: usize) -> Vec<Vec<usize>> {
    (0..cloud.len())
        .map(|i| {
            let mut order: Vec<(f64, usize)> = (0..cloud.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let d2: f64 = cloud.point(i).iter().zip(cloud.point(j)).map(|(a, b)| (a - b).powi(2)).sum();
                    (d2, j)
                })
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            std::iter::once(i).chain(order.into_iter().take(k - 1).map(|p| p.1)).collect()
        })
        .collect()
}

pub const H: f64 = 1e-3;

/// Fourth-order central difference of `f` along coordinate `i`.
pub fn d4(f: &dyn Fn(&[f64]) -> f64, p: &[f64], i: usize) -> f64 {
    let at = |s: f64| {
        let mut q = p.to_vec();
        q[i] += s * H;
        f(&q)
    };
    (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * H)
}

/// Metric from finite differences of the embedding only.
pub fn metric(spec: ManifoldSpec, p: &[f64]) -> DMatrix<f64> {
    let d = spec.intrinsic_dim();
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..spec.ambient_dim()).map(|c| d4(&|q: &[f64]| spec.embed(q)[c], p, i)).collect())
        .collect();
    DMatrix::from_fn(d, d, |a, b| cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum())
}

/// `(1/√g) ∂_i (√g g^{ij} ∂_j u)` with every derivative taken numerically.
pub fn fd_laplacian(spec: ManifoldSpec, field: FieldSpec, p: &[f64]) -> f64 {
    let d = spec.intrinsic_dim();
    let u = |q: &[f64]| field.value(spec, q).unwrap();
    let flux = |q: &[f64], i: usize| {
        let g = metric(spec, q);
        let sqrt_g = g.determinant().sqrt();
        let inv = g.try_inverse().unwrap();
        sqrt_g * (0..d).map(|j| inv[(i, j)] * d4(&u, q, j)).sum::<f64>()
    };
    let sqrt_g = metric(spec, p).determinant().sqrt();
    (0..d).map(|i| d4(&|q: &[f64]| flux(q, i), p, i)).sum::<f64>() / sqrt_g
}

