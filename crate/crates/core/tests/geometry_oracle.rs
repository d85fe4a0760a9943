mod common;

use common::{d4, fd_laplacian, metric};
use gfdm::geometry::{analytic_frame, analytic_laplacian, boundary_distance, sample_manifold, FieldSpec, ManifoldSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn families() -> Vec<(ManifoldSpec, FieldSpec)> {
    vec![
        (ManifoldSpec::Ellipse, FieldSpec::SinTheta),
        (ManifoldSpec::GeneralTorus { q: 1 }, FieldSpec::SinThetaSinPhi),
        (ManifoldSpec::GeneralTorus { q: 4 }, FieldSpec::SinThetaSinPhi),
        (ManifoldSpec::GeneralTorus { q: 4 }, FieldSpec::SinTheta),
        (ManifoldSpec::SemiTorus, FieldSpec::SinThetaSinPhi),
    ]
}

#[test]
fn analytic_laplacian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (spec, field) in families() {
        let dom = spec.parameter_domain();
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let p: Vec<f64> = dom.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
            let exact = analytic_laplacian(spec, field, &p).unwrap();
            let fd = fd_laplacian(spec, field, &p);
            let err = (exact - fd).abs() / exact.abs().max(1.0);
            worst = worst.max(err);
        }
        assert!(worst <= 1e-6, "{spec} {field:?}: {worst:e}");
    }
}

#[test]
fn frames_are_orthonormal_and_span_the_tangent_plane() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (spec, _) in families() {
        let dom = spec.parameter_domain();
        for _ in 0..100 {
            let p: Vec<f64> = dom.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
            let t = analytic_frame(spec, &p);
            let n = spec.ambient_dim();
            let gram = DMatrix::<f64>::from_fn(t.len(), t.len(), |a, b| t[a].iter().zip(&t[b]).map(|(x, y)| x * y).sum());
            assert!((gram - DMatrix::identity(t.len(), t.len())).amax() < 1e-12);
            // FD Jacobian columns lie in span(t): their residual after projection vanishes
            for i in 0..spec.intrinsic_dim() {
                let col = DVector::from_fn(n, |c, _| d4(&|q: &[f64]| spec.embed(q)[c], &p, i));
                let mut res = col.clone();
                for tv in &t {
                    let tv = DVector::from_column_slice(tv);
                    res -= &tv * tv.dot(&col);
                }
                assert!(res.amax() <= 1e-9 * col.amax().max(1.0), "{spec} at {p:?}");
            }
        }
    }
}

#[test]
fn torus_embedding_is_isometric_up_to_constants() {
    // g = diag(S, q (c0 + cos θ)²)
    let q = 3;
    let spec = ManifoldSpec::GeneralTorus { q };
    let s: f64 = (1..=q).map(|i| 1.0 / (i * i) as f64).sum();
    for p in [[0.3, 1.1], [2.0, 4.0], [5.5, 0.2]] {
        let g = metric(spec, &p);
        assert!((g[(0, 0)] - s).abs() < 1e-10);
        assert!(g[(0, 1)].abs() < 1e-10);
        assert!((g[(1, 1)] - q as f64 * (2.0 + p[0].cos()).powi(2)).abs() < 1e-9);
    }
}

#[test]
fn samples_lie_on_the_manifold() {
    let cloud = sample_manifold(ManifoldSpec::Ellipse, 500, 3);
    for i in 0..500 {
        let x = cloud.point(i);
        assert!(((x[0] / 1.0).powi(2) + (x[1] / 2.0).powi(2) - 1.0).abs() < 1e-12);
    }
    let cloud = sample_manifold(ManifoldSpec::SemiTorus, 500, 3);
    for i in 0..500 {
        let x = cloud.point(i);
        let rho = x[0].hypot(x[1]);
        assert!(((rho - 2.0).powi(2) + x[2] * x[2] - 1.0).abs() < 1e-12);
        assert!(x[1] >= -1e-15, "semi-torus keeps y ≥ 0");
        assert!(boundary_distance(ManifoldSpec::SemiTorus, cloud.param(i)).unwrap() >= 0.0);
    }
}

#[test]
fn constant_field_has_zero_laplacian() {
    for (spec, _) in families() {
        let p = vec![0.7; spec.intrinsic_dim()];
        assert_eq!(analytic_laplacian(spec, FieldSpec::Constant(3.0), &p).unwrap(), 0.0);
    }
}
