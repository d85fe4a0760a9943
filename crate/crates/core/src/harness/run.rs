use std::collections::BTreeMap;
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{rbf_fd_operator, vbdm_laplacian, RbfConfig, VbdmConfig};
use crate::error::{GfdmError, Result};
use crate::geometry::{analytic_laplacian, sample_manifold, sample_with_boundary, FieldSpec, ManifoldSpec, PointCloud};
use crate::gmls::{assemble_operator, basis_matrix, enumerate_multi_indices, StencilView};
use crate::harness::config::{BoundaryMode, ExperimentConfig, Method, Problem};
use crate::harness::records::RunRecord;
use crate::pde::{detect_interior, restrict_eps, solve_closed, solve_dirichlet, InteriorSplit};
use crate::sparse::{inv_norm_estimate, CsrMatrix};
use crate::stabilizer::{stabilize_operator_with, FlaggedRows, StabilizationReport};
use crate::stencil::{build_knn, default_kp, frames_for, FrameSource, Frames, NeighborTable};

/// Deterministic per-cell seed; shared by every degree of the cell.
pub fn cell_seed(base: u64, n: usize, trial: usize) -> u64 {
    // splitmix64 finalizer over the packed coordinates
    let mut z = base ^ ((n as u64) << 20) ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Everything a cell computes once and reuses across degrees.
pub struct CellData {
    pub spec: ManifoldSpec,
    pub cloud: PointCloud,
    /// Marks supplied boundary nodes in `given_boundary` mode.
    pub boundary_mask: Vec<bool>,
    pub table: NeighborTable,
    pub frames: Frames,
    pub u: Vec<f64>,
    pub lap: Vec<f64>,
}

pub fn prepare_cell(cfg: &ExperimentConfig, n: usize, trial: usize) -> Result<CellData> {
    let spec = cfg.spec()?;
    let field = cfg.field_spec()?;
    let seed = cell_seed(cfg.seed, n, trial);
    let (cloud, boundary_mask) = if cfg.boundary == BoundaryMode::GivenBoundary {
        let per_side = (n as f64).sqrt().round() as usize;
        sample_with_boundary(spec, n, per_side, seed)?
    } else {
        (sample_manifold(spec, n, seed), vec![false; n])
    };
    let total = cloud.len();
    let k_p = if cfg.k_p == 0 { default_kp(total) } else { cfg.k_p };
    let kmax = match cfg.frames {
        FrameSource::Analytic => cfg.k,
        _ => cfg.k.max(k_p),
    };
    let full = build_knn(&cloud, kmax.min(total))?;
    let frames = frames_for(&cloud, &full, k_p.min(total), cfg.frames)?;
    let table = if full.k == cfg.k { full } else { full.truncate(cfg.k)? };
    let (u, lap) = exact_fields(spec, field, &cloud)?;
    Ok(CellData { spec, cloud, boundary_mask, table, frames, u, lap })
}

pub fn exact_fields(spec: ManifoldSpec, field: FieldSpec, cloud: &PointCloud) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut u = Vec::with_capacity(cloud.len());
    let mut lap = Vec::with_capacity(cloud.len());
    for i in 0..cloud.len() {
        u.push(field.value(spec, cloud.param(i))?);
        lap.push(analytic_laplacian(spec, field, cloud.param(i))?);
    }
    Ok((u, lap))
}

/// `max_i |lap_i − (L u)_i|` over `rows`.
pub fn forward_error(op: &CsrMatrix, u: &[f64], lap: &[f64], rows: &[usize]) -> f64 {
    let lu = op.matvec(u);
    rows.iter().map(|&i| (lap[i] - lu[i]).abs()).fold(0.0, f64::max)
}

pub fn inverse_error(sol: &[f64], u: &[f64]) -> f64 {
    sol.iter().zip(u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

struct OperatorRun {
    degree: usize,
    op: CsrMatrix,
    report: Option<StabilizationReport>,
    split: Option<InteriorSplit>,
}

/// Row sets to solve on, labelled by variant.
fn solve_sets(cfg: &ExperimentConfig, cell: &CellData, split: Option<&InteriorSplit>) -> Result<Vec<(String, Vec<usize>)>> {
    let n = cell.cloud.len();
    Ok(match (cfg.problem, cfg.boundary) {
        (Problem::Consistency, BoundaryMode::GivenBoundary) | (Problem::Dirichlet, BoundaryMode::GivenBoundary) => {
            vec![("given".into(), (0..n).filter(|&i| !cell.boundary_mask[i]).collect())]
        }
        (Problem::Dirichlet, mode) => {
            let split = split.ok_or_else(|| GfdmError::Config("Dirichlet solves need the boundary detector".into()))?;
            let mut sets = vec![("Y".to_string(), split.interior.clone())];
            if mode == BoundaryMode::EpsSweep {
                let eps_star = split.eps_star.unwrap_or(0.0);
                for &m in &cfg.eps_multipliers {
                    sets.push((format!("eps{m}"), restrict_eps(&cell.cloud, cell.spec, m * eps_star)?));
                }
            }
            sets
        }
        _ => vec![("all".into(), (0..n).collect())],
    })
}

fn evaluate(cfg: &ExperimentConfig, cell: &CellData, run: &OperatorRun, hash: &str, n: usize, trial: usize, t0: Instant) -> Vec<RunRecord> {
    let base = RunRecord {
        config_hash: hash.to_string(),
        method: cfg.method.as_str().to_string(),
        degree: run.degree,
        n,
        trial,
        variant: "all".into(),
        fe: None,
        ie: None,
        c_max: run.report.as_ref().map_or(0.0, |r| r.c_max()),
        c_mean: run.report.as_ref().map_or(0.0, |r| r.c_mean()),
        c_nonzero_rows: run.report.as_ref().map_or(0, |r| r.c_nonzero_rows()),
        fallback_rows: run.report.as_ref().map_or(0, |r| r.fallback_rows()),
        flagged: run.split.as_ref().map_or(0, |s| s.flagged.len()),
        eps_star: run.split.as_ref().and_then(|s| s.eps_star),
        inv_norm: None,
        status: "ok".into(),
        wall_time: 0.0,
    };
    let sets = match solve_sets(cfg, cell, run.split.as_ref()) {
        Ok(s) => s,
        Err(e) => {
            return vec![RunRecord { status: format!("error: {e}"), wall_time: t0.elapsed().as_secs_f64(), ..base }];
        }
    };
    let fe_rows: Vec<usize> = (0..cell.cloud.len()).filter(|&i| !cell.boundary_mask[i]).collect();
    let fe = forward_error(&run.op, &cell.u, &cell.lap, &fe_rows);
    let inv_norm = if cfg.inv_norm {
        let shifted = run.op.scale_shift(-1.0, &vec![1.0; run.op.nrows]);
        Some(inv_norm_estimate(&shifted))
    } else {
        None
    };
    let mut out = Vec::with_capacity(sets.len());
    for (variant, rows) in sets {
        let mut rec = RunRecord { variant, fe: Some(fe), ..base.clone() };
        let mut failure: Option<GfdmError> = None;
        match &inv_norm {
            Some(Ok(v)) => rec.inv_norm = Some(*v),
            Some(Err(e)) => failure = Some(GfdmError::Singular(format!("inverse norm: {e}"))),
            None => {}
        }
        let solved = match cfg.problem {
            Problem::Consistency => Ok(None),
            Problem::Closed => {
                let a = vec![cfg.a; cell.cloud.len()];
                let f: Vec<f64> = cell.u.iter().zip(&cell.lap).map(|(u, l)| cfg.a * u - l).collect();
                solve_closed(&run.op, &a, &f).map(Some)
            }
            Problem::Dirichlet => solve_dirichlet(&run.op, &rows, &cell.lap).map(Some),
        };
        match solved {
            Ok(Some(sol)) => rec.ie = Some(inverse_error(&sol.u, &cell.u)),
            Ok(None) => {}
            Err(e) => failure = failure.or(Some(e)),
        }
        if let Some(e) = failure {
            rec.status = format!("error: {e}");
        }
        rec.wall_time = t0.elapsed().as_secs_f64();
        out.push(rec);
    }
    out
}

fn failed(cfg: &ExperimentConfig, hash: &str, degree: usize, n: usize, trial: usize, e: &GfdmError, t0: Instant) -> RunRecord {
    RunRecord {
        config_hash: hash.to_string(),
        method: cfg.method.as_str().to_string(),
        degree,
        n,
        trial,
        variant: String::new(),
        fe: None,
        ie: None,
        c_max: 0.0,
        c_mean: 0.0,
        c_nonzero_rows: 0,
        fallback_rows: 0,
        flagged: 0,
        eps_star: None,
        inv_norm: None,
        status: format!("error: {e}"),
        wall_time: t0.elapsed().as_secs_f64(),
    }
}

fn gfdm_operator(cfg: &ExperimentConfig, cell: &CellData, degree: usize, stabilize: bool) -> Result<OperatorRun> {
    let basis = enumerate_multi_indices(degree, cell.cloud.d)?;
    let asm = assemble_operator(&cell.cloud, &cell.table, &cell.frames, &basis, cfg.projection_at)?;
    let split = detect_interior(&asm.rows, &cell.cloud)?;
    let (op, report) = if stabilize {
        // rows left in the solve are attempted; detector-removed rows are skipped
        let flagged = if cell.spec.has_boundary() && cfg.boundary != BoundaryMode::GivenBoundary {
            FlaggedRows::Skip
        } else {
            FlaggedRows::Attempt
        };
        let phi_of = |i: usize| basis_matrix(&StencilView::from_table(&cell.cloud, &cell.table, &cell.frames, i), &basis);
        let (op, rep) = stabilize_operator_with(cell.cloud.len(), &asm.rows, phi_of, flagged)?;
        (op, Some(rep))
    } else {
        (asm.operator, None)
    };
    Ok(OperatorRun { degree, op, report, split: Some(split) })
}

/// All records of one `(N, trial)` cell.
pub fn run_cell(cfg: &ExperimentConfig, n_index: usize, trial: usize) -> Vec<RunRecord> {
    let hash = cfg.hash();
    let n = cfg.n[n_index];
    let t0 = Instant::now();
    let cell = match prepare_cell(cfg, n, trial) {
        Ok(c) => c,
        Err(e) => {
            let degrees = if cfg.method.is_gfdm() { cfg.degrees.clone() } else { vec![0] };
            return degrees.into_iter().map(|l| failed(cfg, &hash, l, n, trial, &e, t0)).collect();
        }
    };
    let mut out = Vec::new();
    match cfg.method {
        Method::GfdmRaw | Method::GfdmLp => {
            for &l in &cfg.degrees {
                let t0 = Instant::now();
                match gfdm_operator(cfg, &cell, l, cfg.method == Method::GfdmLp) {
                    Ok(run) => out.extend(evaluate(cfg, &cell, &run, &hash, n, trial, t0)),
                    Err(e) => out.push(failed(cfg, &hash, l, n, trial, &e, t0)),
                }
            }
        }
        Method::RbfFd => {
            let rbf = RbfConfig { shape: cfg.rbf_shape, k: cfg.k };
            match rbf_fd_operator(&cell.cloud, &cell.table, &cell.frames, &rbf) {
                Ok((op, _)) => {
                    let run = OperatorRun { degree: 0, op, report: None, split: None };
                    out.extend(evaluate(cfg, &cell, &run, &hash, n, trial, t0));
                }
                Err(e) => out.push(failed(cfg, &hash, 0, n, trial, &e, t0)),
            }
        }
        Method::Vbdm => {
            let (k1, k2) = cfg.vbdm_k(n_index);
            let vcfg = VbdmConfig { k1, k2, d: cell.cloud.d, eps: None };
            let result = vbdm_laplacian(&cell.cloud, &vcfg).and_then(|v| {
                // the row set comes from the GFDM detector on the same cloud
                let split = if cfg.problem == Problem::Dirichlet && cfg.boundary != BoundaryMode::GivenBoundary {
                    let l = cfg.degrees.first().copied().unwrap_or(2);
                    gfdm_operator(cfg, &cell, l, false)?.split
                } else {
                    None
                };
                Ok(OperatorRun { degree: 0, op: v.operator, report: None, split })
            });
            match result {
                Ok(run) => out.extend(evaluate(cfg, &cell, &run, &hash, n, trial, t0)),
                Err(e) => out.push(failed(cfg, &hash, 0, n, trial, &e, t0)),
            }
        }
    }
    out
}

/// Run every cell, handing records to `sink` in deterministic cell order.
pub fn run_experiment_with<F>(cfg: &ExperimentConfig, mut sink: F) -> Result<Vec<RunRecord>>
where
    F: FnMut(&RunRecord) -> Result<()>,
{
    cfg.validate()?;
    let cells: Vec<(usize, usize)> = (0..cfg.n.len())
        .flat_map(|i| (0..cfg.trials).map(move |t| (i, t)))
        .collect();
    let (tx, rx) = mpsc::channel::<(usize, Vec<RunRecord>)>();
    let mut all = Vec::new();
    let mut sink_err = None;
    std::thread::scope(|scope| {
        let cells = &cells;
        scope.spawn(move || {
            cells.par_iter().enumerate().for_each_with(tx, |tx, (idx, &(ni, t))| {
                let recs = run_cell(cfg, ni, t);
                let _ = tx.send((idx, recs));
            });
        });
        let mut pending: BTreeMap<usize, Vec<RunRecord>> = BTreeMap::new();
        let mut next = 0;
        for (idx, recs) in rx {
            pending.insert(idx, recs);
            while let Some(recs) = pending.remove(&next) {
                for r in &recs {
                    if sink_err.is_none() {
                        if let Err(e) = sink(r) {
                            sink_err = Some(e);
                        }
                    }
                    if !r.is_ok() {
                        log::warn!("N={} trial={} degree={}: {}", r.n, r.trial, r.degree, r.status);
                    }
                }
                log::info!("cell {}/{} done", next + 1, cells.len());
                all.extend(recs);
                next += 1;
            }
        }
    });
    match sink_err {
        Some(e) => Err(e),
        None => Ok(all),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    run_experiment_with(cfg, |_| Ok(()))
}
