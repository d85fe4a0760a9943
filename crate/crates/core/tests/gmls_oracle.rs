mod common;

use common::{oracle, rel_err};
use gfdm::geometry::{sample_manifold, ManifoldSpec};
use gfdm::gmls::{assemble_operator, enumerate_multi_indices, gmls_row_weights, stencil_weights, ProjectionAt, StencilView};
use gfdm::stencil::{analytic_frames, build_knn, estimate_tangent};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn fifty_random_stencils_match_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let families = [ManifoldSpec::Ellipse, ManifoldSpec::GeneralTorus { q: 4 }, ManifoldSpec::SemiTorus];
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let spec = families[case % 3];
        let n = [400, 800, 1600][rng.random_range(0..3)];
        let cloud = sample_manifold(spec, n, rng.random());
        let degree = if spec.intrinsic_dim() == 1 { rng.random_range(2..6) } else { rng.random_range(2..5) };
        let k = if spec.intrinsic_dim() == 1 { 21 } else { [25, 41, 51][rng.random_range(0..3)] };
        let table = build_knn(&cloud, k).unwrap();
        let frames = analytic_frames(&cloud).unwrap();
        let i = rng.random_range(0..n);
        let at = if case % 2 == 0 { ProjectionAt::Neighbor } else { ProjectionAt::Base };
        let view = StencilView::from_table(&cloud, &table, &frames, i);
        let basis = enumerate_multi_indices(degree, cloud.d).unwrap();
        let w = stencil_weights(&view, &basis, at).unwrap();
        let e = rel_err(&w, &oracle(&view, degree, at));
        worst = worst.max(e);
        assert!(e <= 1e-8, "case {case}: {spec} l={degree} K={k} rel err {e:e}");
    }
    assert!(worst.is_finite());
}

#[test]
fn k25_l2_planar_stencil_matches_oracle() {
    let cloud = sample_manifold(ManifoldSpec::SemiTorus, 1000, 9);
    let table = build_knn(&cloud, 25).unwrap();
    let frames = analytic_frames(&cloud).unwrap();
    let view = StencilView::from_table(&cloud, &table, &frames, 17);
    let basis = enumerate_multi_indices(2, 2).unwrap();
    let w = stencil_weights(&view, &basis, ProjectionAt::Neighbor).unwrap();
    assert!(rel_err(&w, &oracle(&view, 2, ProjectionAt::Neighbor)) <= 1e-8);
}

#[test]
fn constants_are_annihilated_by_every_assembled_operator() {
    for (spec, k) in [(ManifoldSpec::Ellipse, 21), (ManifoldSpec::GeneralTorus { q: 4 }, 41), (ManifoldSpec::SemiTorus, 51)] {
        let cloud = sample_manifold(spec, 1200, 3);
        let table = build_knn(&cloud, k).unwrap();
        for frames in [analytic_frames(&cloud).unwrap(), estimate_tangent(&cloud, &build_knn(&cloud, 69).unwrap(), 69).unwrap()] {
            for l in 2..=4 {
                let basis = enumerate_multi_indices(l, cloud.d).unwrap();
                for at in [ProjectionAt::Neighbor, ProjectionAt::Base] {
                    let asm = assemble_operator(&cloud, &table, &frames, &basis, at).unwrap();
                    let ones = vec![1.0; cloud.len()];
                    let scale = asm.rows.iter().map(|r| r.abs_sum()).fold(0.0, f64::max);
                    let r = asm.operator.matvec(&ones).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    assert!(r <= 1e-9 * scale, "{spec} l={l} {at:?}: {r:e} vs {scale:e}");
                    for i in 0..cloud.len() {
                        assert_eq!(asm.operator.row(i).0, table.row(i));
                    }
                }
            }
        }
    }
}

#[test]
fn assembled_rows_match_single_row_recomputation() {
    let cloud = sample_manifold(ManifoldSpec::Ellipse, 1600, 12);
    let table = build_knn(&cloud, 21).unwrap();
    let frames = analytic_frames(&cloud).unwrap();
    let basis = enumerate_multi_indices(2, 1).unwrap();
    let asm = assemble_operator(&cloud, &table, &frames, &basis, ProjectionAt::Neighbor).unwrap();
    for i in (0..1600).step_by(7) {
        let view = StencilView::from_table(&cloud, &table, &frames, i);
        let row = gmls_row_weights(i, table.row(i), &view, &basis, ProjectionAt::Neighbor).unwrap();
        assert_eq!(asm.operator.row(i).1, row.weights.as_slice());
        assert_eq!(row.w1_negative, row.weights[0] < 0.0);
    }
}

#[test]
fn rank_deficient_stencil_is_reported() {
    use gfdm::GfdmError;
    // three distinct tangent coordinates cannot carry a degree-3 fit
    let cloud = sample_manifold(ManifoldSpec::Ellipse, 3, 1);
    let table = build_knn(&cloud, 3).unwrap();
    let frames = analytic_frames(&cloud).unwrap();
    let basis = enumerate_multi_indices(3, 1).unwrap();
    let view = StencilView::from_table(&cloud, &table, &frames, 0);
    assert!(stencil_weights(&view, &basis, ProjectionAt::Neighbor).is_none());
    assert!(matches!(
        gmls_row_weights(0, table.row(0), &view, &basis, ProjectionAt::Neighbor),
        Err(GfdmError::RankDeficient { indices }) if indices == vec![0]
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn weights_scale_as_inverse_length_squared(seed in any::<u64>(), s in 0.1f64..10.0, i in 0usize..300) {
        let cloud = sample_manifold(ManifoldSpec::GeneralTorus { q: 2 }, 300, seed);
        let mut scaled = cloud.clone();
        scaled.ambient.iter_mut().for_each(|v| *v *= s);
        let basis = enumerate_multi_indices(3, 2).unwrap();
        let w = |c: &gfdm::PointCloud| {
            let table = build_knn(c, 30).unwrap();
            let frames = analytic_frames(c).unwrap();
            stencil_weights(&StencilView::from_table(c, &table, &frames, i), &basis, ProjectionAt::Neighbor).unwrap()
        };
        let a = w(&cloud);
        let b: Vec<f64> = w(&scaled).iter().map(|v| v * s * s).collect();
        prop_assert!(rel_err(&b, &a) <= 1e-8);
    }

    #[test]
    fn surface_rows_sum_to_zero_and_match_oracle(seed in any::<u64>(), l in 2usize..5, i in 0usize..500) {
        let cloud = sample_manifold(ManifoldSpec::SemiTorus, 500, seed);
        let table = build_knn(&cloud, 40).unwrap();
        let frames = analytic_frames(&cloud).unwrap();
        let view = StencilView::from_table(&cloud, &table, &frames, i);
        let w = stencil_weights(&view, &enumerate_multi_indices(l, 2).unwrap(), ProjectionAt::Neighbor).unwrap();
        let o = oracle(&view, l, ProjectionAt::Neighbor);
        let sum: f64 = w.iter().sum();
        prop_assert!(sum.abs() <= 1e-9 * w.iter().map(|v| v.abs()).sum::<f64>());
        prop_assert!(rel_err(&w, &o) <= 1e-8);
    }
}
