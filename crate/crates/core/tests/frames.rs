use gfdm::geometry::{sample_manifold, ManifoldSpec, PointCloud};
use gfdm::stencil::{
    analytic_frames, build_knn, default_kp, estimate_fill_distance, estimate_tangent, fill_distance_at, frames_for, local_svd_tangent,
    FrameSource, Frames,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest principal angle between the tangent spaces of two frames at point `i`.
fn principal_angle(a: &Frames, b: &Frames, i: usize) -> f64 {
    let m = a.basis(i).transpose() * b.basis(i);
    let smin = m.singular_values().min();
    smin.min(1.0).acos()
}

fn projection_error(a: &Frames, b: &Frames, i: usize) -> f64 {
    (a.projection(i) - b.projection(i)).norm()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn coplanar_points_recover_the_plane() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (u, v) = ([1.0, 2.0, 0.5], [0.0, -1.0, 3.0]);
    let pts: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            let (s, t): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (0..3).map(|c| 0.3 + s * u[c] + t * v[c]).collect()
        })
        .collect();
    let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
    let t = local_svd_tangent(&refs, 2).unwrap();
    let est = DMatrix::from_fn(3, 2, |r, c| t[c][r]);
    let plane = DMatrix::from_row_slice(3, 2, &[u[0], v[0], u[1], v[1], u[2], v[2]]).qr().q();
    // sine of the largest principal angle
    let residual = &est - &plane * (plane.transpose() * &est);
    assert!(residual.singular_values().max() <= 1e-10);
    for tv in &t {
        let first = tv.iter().find(|x| x.abs() > 1e-12).unwrap();
        assert!(*first > 0.0);
    }
}

#[test]
fn collinear_points_give_the_line_direction() {
    let dir = [2.0f64, -1.0, 2.0];
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let pts: Vec<Vec<f64>> = (0..10).map(|i| dir.iter().map(|d| 1.0 + i as f64 * 0.37 * d).collect()).collect();
    let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
    let t = &local_svd_tangent(&refs, 1).unwrap()[0];
    let cos: f64 = t.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>() / norm;
    assert!((cos - 1.0).abs() <= 1e-12);
}

#[test]
fn degenerate_neighborhood_is_flagged() {
    // duplicate points leave no spread for a tangent
    let cloud = PointCloud { n: 2, ambient: vec![1.0; 2 * 8], d: 1, intrinsic: vec![], spec: None, seed: None };
    let table = build_knn(&cloud, 5).unwrap();
    assert!(estimate_tangent(&cloud, &table, 5).is_err());
    assert!(estimate_tangent(&cloud, &table, 6).is_err());
}

#[test]
fn ellipse_estimated_frames_are_accurate() {
    let cloud = sample_manifold(ManifoldSpec::Ellipse, 3200, 21);
    let table = build_knn(&cloud, 20).unwrap();
    let est = estimate_tangent(&cloud, &table, 20).unwrap();
    let exact = analytic_frames(&cloud).unwrap();
    let worst = (0..3200).map(|i| principal_angle(&est, &exact, i)).fold(0.0, f64::max);
    assert!(worst <= 0.05, "max angle {worst}");
}

#[test]
fn projection_error_decreases_with_n() {
    for source in [FrameSource::Estimated, FrameSource::EstimatedCubic] {
        for spec in [ManifoldSpec::Ellipse, ManifoldSpec::GeneralTorus { q: 4 }] {
            let meds: Vec<f64> = [800, 3200, 12800]
                .iter()
                .map(|&n| {
                    let cloud = sample_manifold(spec, n, 8);
                    let kp = default_kp(n);
                    let table = build_knn(&cloud, kp).unwrap();
                    let est = frames_for(&cloud, &table, kp, source).unwrap();
                    let exact = analytic_frames(&cloud).unwrap();
                    median((0..n).map(|i| projection_error(&est, &exact, i)).collect())
                })
                .collect();
            assert!(meds[0] > meds[1] && meds[1] > meds[2], "{spec} {source:?}: {meds:?}");
        }
    }
}

#[test]
fn cubic_fit_beats_first_order_on_the_torus() {
    let n = 6400;
    let cloud = sample_manifold(ManifoldSpec::GeneralTorus { q: 4 }, n, 3);
    let kp = default_kp(n);
    let table = build_knn(&cloud, kp).unwrap();
    let exact = analytic_frames(&cloud).unwrap();
    let err = |s| {
        let f = frames_for(&cloud, &table, kp, s).unwrap();
        median((0..n).map(|i| projection_error(&f, &exact, i)).collect())
    };
    assert!(err(FrameSource::EstimatedCubic) < 0.25 * err(FrameSource::Estimated));
}

#[test]
fn frames_are_orthonormal() {
    let cloud = sample_manifold(ManifoldSpec::SemiTorus, 1500, 2);
    let kp = default_kp(1500);
    let table = build_knn(&cloud, kp).unwrap();
    for source in [FrameSource::Analytic, FrameSource::Estimated, FrameSource::EstimatedQuadratic, FrameSource::EstimatedCubic] {
        let f = frames_for(&cloud, &table, kp, source).unwrap();
        assert_eq!(f.source, source);
        for i in 0..1500 {
            let b = f.basis(i);
            assert!((b.transpose() * &b - DMatrix::identity(2, 2)).amax() < 1e-12);
        }
    }
}

#[test]
fn default_kp_values() {
    assert_eq!(default_kp(1600), 81);
    assert_eq!(default_kp(3200), 113);
    assert_eq!(default_kp(100), 21);
    assert_eq!(default_kp(1), 1);
}

#[test]
fn fill_distance_of_a_single_point() {
    let cloud = gfdm::geometry::cloud_from_params(ManifoldSpec::Ellipse, vec![0.0]).unwrap();
    // the farthest ellipse point from (1, 0) is at distance ≥ 2
    assert!(estimate_fill_distance(ManifoldSpec::Ellipse, &cloud, 4000, 1) >= 2.0);
    assert_eq!(fill_distance_at(&cloud, &[1.0, 0.0]), 0.0);
}

#[test]
fn fill_distance_scales_like_inverse_n_on_the_ellipse() {
    let f = |n: usize| median((0..5).map(|s| estimate_fill_distance(ManifoldSpec::Ellipse, &sample_manifold(ManifoldSpec::Ellipse, n, s), 20000, 99 + s)).collect());
    let r = f(800) / f(3200);
    assert!((2.0..=6.0).contains(&r), "ratio {r}");
}
