//! Boundary detection, closed and Dirichlet Poisson solves, max-principle checks.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{GfdmError, Result};
use crate::geometry::{boundary_distance, ManifoldSpec, PointCloud};
use crate::gmls::RowWeights;
use crate::sparse::{sparse_solve, CsrMatrix, SolveStats};

/// Split of the cloud by the sign of each row's own weight.
#[derive(Clone, Debug, PartialEq)]
pub struct InteriorSplit {
    /// Rows with `w₁ < 0`.
    pub interior: Vec<usize>,
    /// Rows with `w₁ ≥ 0`.
    pub flagged: Vec<usize>,
    /// Flagged rows with `w₁` exactly zero.
    pub zero_w1: usize,
    /// Largest boundary distance among flagged points, when the family has a boundary.
    pub eps_star: Option<f64>,
}

pub fn detect_interior(rows: &[RowWeights], cloud: &PointCloud) -> Result<InteriorSplit> {
    let mut interior = Vec::new();
    let mut flagged = Vec::new();
    let mut zero_w1 = 0;
    for r in rows {
        if r.w1() < 0.0 {
            interior.push(r.base);
        } else {
            zero_w1 += usize::from(r.w1() == 0.0);
            flagged.push(r.base);
        }
    }
    let eps_star = match cloud.spec {
        Some(spec) if spec.has_boundary() && cloud.has_intrinsic() => {
            let mut m = 0.0f64;
            for &i in &flagged {
                m = m.max(boundary_distance(spec, cloud.param(i))?);
            }
            Some(m)
        }
        _ => None,
    };
    Ok(InteriorSplit { interior, flagged, zero_w1, eps_star })
}

/// Points farther than `eps` from the boundary.
pub fn restrict_eps(cloud: &PointCloud, spec: ManifoldSpec, eps: f64) -> Result<Vec<usize>> {
    if !spec.has_boundary() {
        return Err(GfdmError::NoBoundary(spec.to_string()));
    }
    if !cloud.has_intrinsic() {
        return Err(GfdmError::InvalidArgument("boundary distance needs intrinsic coordinates".into()));
    }
    let mut out = Vec::new();
    for i in 0..cloud.len() {
        if boundary_distance(spec, cloud.param(i))? > eps {
            out.push(i);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemKind {
    /// `(a − Δ)u = f` on a closed manifold.
    ClosedShifted { a: Vec<f64> },
    /// `Δu = f` on the rows in `rows`, `u = 0` elsewhere.
    DirichletHomogeneous { rows: Vec<usize> },
}

#[derive(Clone, Debug)]
pub struct PoissonProblem {
    pub kind: ProblemKind,
    pub forcing: Vec<f64>,
}

impl PoissonProblem {
    pub fn solve(&self, operator: &CsrMatrix) -> Result<Solution> {
        match &self.kind {
            ProblemKind::ClosedShifted { a } => solve_closed(operator, a, &self.forcing),
            ProblemKind::DirichletHomogeneous { rows } => solve_dirichlet(operator, rows, &self.forcing),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub u: Vec<f64>,
    pub residual: f64,
    pub stats: SolveStats,
}

/// Solve `(diag(a) − L) U = f`.
pub fn solve_closed(op: &CsrMatrix, a: &[f64], f: &[f64]) -> Result<Solution> {
    let n = op.nrows;
    if a.len() != n || f.len() != n || op.ncols != n {
        return Err(GfdmError::InvalidArgument("closed problem dimensions disagree".into()));
    }
    if let Some(i) = a.iter().position(|&v| !(v > 0.0)) {
        return Err(GfdmError::InvalidArgument(format!("a must be positive, a[{i}] = {}", a[i])));
    }
    let sys = op.scale_shift(-1.0, a);
    let (u, stats) = sparse_solve(&sys, f)?;
    Ok(Solution { u, residual: stats.residual, stats })
}

/// Solve the principal-submatrix system `L_S U_S = f_S` with `U = 0` off `S`.
pub fn solve_dirichlet(op: &CsrMatrix, s: &[usize], f: &[f64]) -> Result<Solution> {
    let n = op.nrows;
    if f.len() != n {
        return Err(GfdmError::InvalidArgument("forcing length differs from operator size".into()));
    }
    if let Some(&bad) = s.iter().find(|&&i| i >= n) {
        return Err(GfdmError::InvalidArgument(format!("row {bad} out of range")));
    }
    let sub = op.principal_submatrix(s);
    let fs: Vec<f64> = s.iter().map(|&i| f[i]).collect();
    let (us, stats) = sparse_solve(&sub, &fs)?;
    let mut u = vec![0.0; n];
    for (&i, v) in s.iter().zip(us) {
        u[i] = v;
    }
    Ok(Solution { u, residual: stats.residual, stats })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MaxPrincipleReport {
    /// `(Lv)_i ≥ 0` on all of `S`.
    pub subharmonic: bool,
    /// `(Lv)_i ≤ 0` on all of `S`.
    pub superharmonic: bool,
    /// Rows of `S` where the conclusion fails.
    pub violations: Vec<usize>,
}

impl MaxPrincipleReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the discrete maximum and minimum principles for `v` on rows `S`.
///
/// If `Lv ≥ 0` on `S`, the max of `v` over `S` and its neighbors must be
/// attained on neighbors outside `S`; symmetrically for the minimum.
pub fn check_discrete_max_principle(op: &CsrMatrix, s: &[usize], v: &[f64]) -> MaxPrincipleReport {
    let n = op.nrows;
    let mut in_s = vec![false; n];
    s.iter().for_each(|&i| in_s[i] = true);
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let mut sub = true;
    let mut sup = true;
    let mut outside: Vec<usize> = Vec::new();
    let mut seen = vec![false; n];
    for &i in s {
        let (cols, vals) = op.row(i);
        let lv: f64 = cols.iter().zip(vals).map(|(&j, &w)| w * v[j]).sum();
        let tol = 1e-10 * vals.iter().map(|w| w.abs()).sum::<f64>() * vmax;
        sub &= lv >= -tol;
        sup &= lv <= tol;
        for &j in cols {
            if !in_s[j] && !seen[j] {
                seen[j] = true;
                outside.push(j);
            }
        }
    }
    let mut report = MaxPrincipleReport { subharmonic: sub, superharmonic: sup, violations: Vec::new() };
    if outside.is_empty() {
        return report;
    }
    let tol = 1e-9 * vmax;
    let out_max = outside.iter().map(|&j| v[j]).fold(f64::NEG_INFINITY, f64::max);
    let out_min = outside.iter().map(|&j| v[j]).fold(f64::INFINITY, f64::min);
    for &i in s {
        if (sub && v[i] > out_max + tol) || (sup && v[i] < out_min - tol) {
            report.violations.push(i);
        }
    }
    report
}

/// Columns: index, intrinsic coordinates, U, u_exact, |U − u|.
pub fn write_solution_csv(path: &Path, cloud: &PointCloud, u: &[f64], exact: Option<&[f64]>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec!["index".to_string()];
    if cloud.has_intrinsic() {
        header.extend((0..cloud.d).map(|k| format!("s{k}")));
    }
    header.extend(["U", "u_exact", "abs_error"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for i in 0..u.len() {
        let mut row = vec![i.to_string()];
        if cloud.has_intrinsic() {
            row.extend(cloud.param(i).iter().map(|v| format!("{v:.17e}")));
        }
        row.push(format!("{:.17e}", u[i]));
        match exact {
            Some(e) => {
                row.push(format!("{:.17e}", e[i]));
                row.push(format!("{:.17e}", (u[i] - e[i]).abs()));
            }
            None => row.extend([String::new(), String::new()]),
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
