//! Per-row linear programs that trade raw weights for diagonally dominant ones.

use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{GfdmError, Result};
use crate::gmls::RowWeights;
use crate::lp::{lp_solve, LpProblem, LpStatus};
use crate::sparse::CsrMatrix;

/// Objective values at or below this count as zero.
pub const C_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct StabilizedRow {
    pub weights: Vec<f64>,
    pub c: f64,
    pub feasible: bool,
    pub diagonally_dominant: bool,
    pub fallback_used: bool,
    /// The optimum sits on the relaxed boundary `ŵ₁ = 0`.
    pub w1_zero: bool,
}

/// `|min_{k≥2} w_k|`, the relaxation level of the trivial witness.
pub fn witness_c(w: &[f64]) -> f64 {
    w[1..].iter().copied().fold(f64::INFINITY, f64::min).abs()
}

/// Scaled LP in variables `(C, ŵ₁, v₂..v_K)` with `v_k = ŵ_k + C`.
///
/// Every inequality of the original program becomes a simple bound.
fn build_lp(w: &[f64], phi: &DMatrix<f64>, scale: f64, c_cap: f64) -> LpProblem {
    let k = w.len();
    let m = phi.ncols();
    let nv = k + 1;
    let ws: Vec<f64> = w.iter().map(|v| v / scale).collect();
    let mut a_eq = vec![0.0; m * nv];
    let mut b_eq = vec![0.0; m];
    for j in 0..m {
        let row = &mut a_eq[j * nv..(j + 1) * nv];
        row[0] = -(1..k).map(|kk| phi[(kk, j)]).sum::<f64>();
        for kk in 0..k {
            row[kk + 1] = phi[(kk, j)];
        }
        let mut rhs: f64 = (0..k).map(|kk| ws[kk] * phi[(kk, j)]).sum();
        let norm = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
            rhs /= norm;
        }
        b_eq[j] = rhs;
    }
    let mut objective = vec![0.0; nv];
    objective[0] = 1.0;
    let mut lower = vec![0.0; nv];
    let mut upper = vec![f64::INFINITY; nv];
    upper[0] = c_cap;
    lower[1] = f64::NEG_INFINITY;
    upper[1] = 0.0;
    LpProblem { objective, a_eq, b_eq, lower, upper }
}

fn to_lp_vars(w_hat: &[f64], c: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(w_hat.len() + 1);
    x.push(c);
    x.push(w_hat[0]);
    x.extend(w_hat[1..].iter().map(|v| v + c));
    x
}

fn dump_row(raw: &RowWeights, phi: &DMatrix<f64>) -> String {
    format!("weights = {:?}\nphi = {phi:.6e}", raw.weights)
}

/// Stabilize one row; the raw row must have `w₁ < 0`.
pub fn stabilize_row(raw: &RowWeights, phi: &DMatrix<f64>) -> Result<StabilizedRow> {
    if !(raw.weights[0] < 0.0) {
        return Err(GfdmError::NonNegativeDiagonal { base: raw.base, w1: raw.weights[0] });
    }
    solve_row(raw, phi, true)
}

/// Try the program on a row with `w₁ ≥ 0`; keeps the raw weights when it has no solution.
pub fn attempt_row(raw: &RowWeights, phi: &DMatrix<f64>) -> Result<StabilizedRow> {
    solve_row(raw, phi, raw.weights[0] < 0.0)
}

fn solve_row(raw: &RowWeights, phi: &DMatrix<f64>, witnessed: bool) -> Result<StabilizedRow> {
    let w = &raw.weights;
    if phi.nrows() != w.len() || w.len() < 2 {
        return Err(GfdmError::InvalidArgument(format!("row {}: Φ has {} rows for {} weights", raw.base, phi.nrows(), w.len())));
    }
    let scale = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return Err(GfdmError::InvalidArgument(format!("row {} is identically zero", raw.base)));
    }
    let cmax = witness_c(w);
    let cap = if witnessed { cmax / scale } else { f64::INFINITY };
    let lp = build_lp(w, phi, scale, cap);

    if witnessed {
        let witness = to_lp_vars(&w.iter().map(|v| v / scale).collect::<Vec<_>>(), cmax / scale);
        if lp.residual(&witness) > 1e-9 || lp.bound_violation(&witness) > 1e-9 {
            return Err(GfdmError::LpInfeasible {
                base: raw.base,
                dump: format!("feasibility witness rejected\n{}", dump_row(raw, phi)),
            });
        }
    }

    let fallback = || StabilizedRow {
        weights: w.clone(),
        c: cmax,
        feasible: witnessed,
        diagonally_dominant: witnessed && cmax <= C_TOL,
        fallback_used: true,
        w1_zero: false,
    };
    let sol = lp_solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Stalled => return Ok(fallback()),
        LpStatus::Infeasible | LpStatus::Unbounded if !witnessed => return Ok(fallback()),
        LpStatus::Infeasible | LpStatus::Unbounded => {
            return Err(GfdmError::LpInfeasible {
                base: raw.base,
                dump: format!("solver status {:?}\n{}", sol.status, dump_row(raw, phi)),
            })
        }
    }
    let c_scaled = sol.x[0].max(0.0);
    let mut weights = Vec::with_capacity(w.len());
    weights.push(sol.x[1].min(0.0) * scale);
    weights.extend(sol.x[2..].iter().map(|v| (v - c_scaled) * scale));
    let c = c_scaled * scale;

    // reproduction of every basis column, in unscaled units
    let tol = 1e-8 * scale;
    let consistent = (0..phi.ncols()).all(|j| {
        let got: f64 = (0..w.len()).map(|k| weights[k] * phi[(k, j)]).sum();
        let want: f64 = (0..w.len()).map(|k| w[k] * phi[(k, j)]).sum();
        let colmax = (0..w.len()).fold(0.0f64, |a, k| a.max(phi[(k, j)].abs())).max(1.0);
        (got - want).abs() <= tol * colmax
    });
    if !consistent {
        log::warn!("row {}: LP solution lost consistency, keeping raw weights", raw.base);
        return Ok(fallback());
    }
    Ok(StabilizedRow {
        w1_zero: weights[0] == 0.0,
        diagonally_dominant: c <= C_TOL,
        feasible: true,
        fallback_used: false,
        c,
        weights,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowReport {
    pub index: usize,
    /// `None` for rows that were not stabilized.
    pub c: Option<f64>,
    pub feasible: bool,
    pub fallback: bool,
    pub w1_zero: bool,
}

#[derive(Clone, Debug, Default)]
pub struct StabilizationReport {
    pub rows: Vec<RowReport>,
}

impl StabilizationReport {
    fn solved(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().filter_map(|r| r.c)
    }

    pub fn c_max(&self) -> f64 {
        self.solved().fold(0.0, f64::max)
    }

    pub fn c_mean(&self) -> f64 {
        let (s, n) = self.solved().fold((0.0, 0usize), |(s, n), c| (s + c, n + 1));
        if n == 0 {
            0.0
        } else {
            s / n as f64
        }
    }

    pub fn c_nonzero_rows(&self) -> usize {
        self.solved().filter(|&c| c > C_TOL).count()
    }

    pub fn fallback_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.fallback).count()
    }

    pub fn skipped_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.c.is_none()).count()
    }

    pub fn w1_zero_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.w1_zero).count()
    }

    /// Columns: index, C, feasible, fallback.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "index,C,feasible,fallback")?;
        for r in &self.rows {
            let c = r.c.map(|c| format!("{c:.17e}")).unwrap_or_default();
            writeln!(w, "{},{},{},{}", r.index, c, r.feasible, r.fallback)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Treatment of rows whose raw `w₁` is nonnegative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlaggedRows {
    /// Keep raw weights; reported as skipped.
    Skip,
    /// Keep raw weights; reported as fallbacks.
    PassThrough,
    /// Run the program without a witness; raw weights if it has no solution.
    Attempt,
}

/// Stabilize every row with `w₁ < 0`.
///
/// Other rows keep their raw weights; with `force` they are marked as fallbacks,
/// otherwise they are reported as skipped.
pub fn stabilize_operator<F>(n: usize, rows: &[RowWeights], phi_of: F, force: bool) -> Result<(CsrMatrix, StabilizationReport)>
where
    F: Fn(usize) -> DMatrix<f64> + Sync,
{
    let policy = if force { FlaggedRows::PassThrough } else { FlaggedRows::Skip };
    stabilize_operator_with(n, rows, phi_of, policy)
}

pub fn stabilize_operator_with<F>(
    n: usize,
    rows: &[RowWeights],
    phi_of: F,
    flagged: FlaggedRows,
) -> Result<(CsrMatrix, StabilizationReport)>
where
    F: Fn(usize) -> DMatrix<f64> + Sync,
{
    let results: Vec<Result<(Vec<f64>, RowReport)>> = rows
        .par_iter()
        .enumerate()
        .map(|(i, raw)| {
            let keep = |fallback: bool| {
                Ok((raw.weights.clone(), RowReport { index: raw.base, c: None, feasible: false, fallback, w1_zero: false }))
            };
            if !raw.w1_negative {
                match flagged {
                    FlaggedRows::Skip => return keep(false),
                    FlaggedRows::PassThrough => return keep(true),
                    FlaggedRows::Attempt => {
                        let s = attempt_row(raw, &phi_of(i))?;
                        if s.fallback_used {
                            return keep(true);
                        }
                        return Ok((
                            s.weights,
                            RowReport { index: raw.base, c: Some(s.c), feasible: true, fallback: false, w1_zero: s.w1_zero },
                        ));
                    }
                }
            }
            let s = stabilize_row(raw, &phi_of(i))?;
            Ok((
                s.weights,
                RowReport { index: raw.base, c: Some(s.c), feasible: s.feasible, fallback: s.fallback_used, w1_zero: s.w1_zero },
            ))
        })
        .collect();
    let mut op = CsrMatrix::from_rows(n, rows);
    let mut report = StabilizationReport { rows: Vec::with_capacity(rows.len()) };
    for (i, r) in results.into_iter().enumerate() {
        let (w, rep) = r?;
        op.set_row_values(i, &w);
        report.rows.push(rep);
    }
    Ok((op, report))
}
