use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gfdm::geometry::{sample_manifold, ManifoldSpec};
use gfdm::gmls::{assemble_operator, basis_matrix, enumerate_multi_indices, gmls_row_weights, ProjectionAt, StencilView};
use gfdm::pde::solve_closed;
use gfdm::stabilizer::stabilize_row;
use gfdm::stencil::{analytic_frames, build_knn};

fn knn(c: &mut Criterion) {
    let cloud = sample_manifold(ManifoldSpec::GeneralTorus { q: 4 }, 6400, 1);
    c.bench_function("knn torus9 N=6400 K=41", |b| b.iter(|| build_knn(black_box(&cloud), 41).unwrap()));
}

fn rows(c: &mut Criterion) {
    let cloud = sample_manifold(ManifoldSpec::SemiTorus, 3200, 2);
    let table = build_knn(&cloud, 51).unwrap();
    let frames = analytic_frames(&cloud).unwrap();
    for l in [2, 4] {
        let basis = enumerate_multi_indices(l, 2).unwrap();
        let view = StencilView::from_table(&cloud, &table, &frames, 100);
        let raw = gmls_row_weights(100, table.row(100), &view, &basis, ProjectionAt::Neighbor).unwrap();
        c.bench_function(&format!("gmls row K=51 l={l}"), |b| {
            b.iter(|| gmls_row_weights(100, table.row(100), black_box(&view), &basis, ProjectionAt::Neighbor).unwrap())
        });
        let phi = basis_matrix(&view, &basis);
        if raw.w1_negative {
            c.bench_function(&format!("lp row K=51 l={l}"), |b| b.iter(|| stabilize_row(black_box(&raw), &phi).unwrap()));
        }
    }
}

fn solve(c: &mut Criterion) {
    let cloud = sample_manifold(ManifoldSpec::GeneralTorus { q: 4 }, 6400, 3);
    let table = build_knn(&cloud, 41).unwrap();
    let frames = analytic_frames(&cloud).unwrap();
    let basis = enumerate_multi_indices(2, 2).unwrap();
    let op = assemble_operator(&cloud, &table, &frames, &basis, ProjectionAt::Neighbor).unwrap().operator;
    let a = vec![1.0; 6400];
    let f: Vec<f64> = (0..6400).map(|i| (i as f64).sin()).collect();
    let mut g = c.benchmark_group("sparse");
    g.sample_size(10);
    g.bench_function("closed solve torus9 N=6400 K=41", |b| b.iter(|| solve_closed(black_box(&op), &a, &f).unwrap()));
    g.finish();
}

criterion_group!(benches, knn, rows, solve);
criterion_main!(benches);
