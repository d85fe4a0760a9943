//! Compressed sparse rows, direct LU solves and inverse-norm estimation.

use std::io::{BufWriter, Write};
use std::path::Path;

use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{GfdmError, Result};
use crate::gmls::RowWeights;

/// Square or rectangular CSR matrix; column order within a row is preserved.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_rows(n: usize, rows: &[RowWeights]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in rows {
            col_idx.extend_from_slice(&r.neighbors);
            values.extend_from_slice(&r.weights);
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { nrows: rows.len(), ncols: n, row_ptr, col_idx, values }
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        if let Some(&(i, j, _)) = sorted.iter().find(|(i, j, _)| *i >= nrows || *j >= ncols) {
            return Err(GfdmError::InvalidArgument(format!("entry ({i}, {j}) out of bounds")));
        }
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            col_idx.push(j);
            values.push(v);
            row_ptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.iter().zip(v).filter(|(&cj, _)| cj == j).map(|(_, &x)| x).sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `scale · self + diag(shift)`; the diagonal is inserted when absent.
    pub fn scale_shift(&self, scale: f64, shift: &[f64]) -> CsrMatrix {
        assert_eq!(self.nrows, self.ncols);
        assert_eq!(shift.len(), self.nrows);
        let mut triplets = Vec::with_capacity(self.nnz() + self.nrows);
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                triplets.push((i, j, scale * a));
            }
            triplets.push((i, i, shift[i]));
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, &triplets).expect("indices in range")
    }

    /// Rows and columns in `keep` (in that order); other columns are dropped.
    pub fn principal_submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &i in keep {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                if map[j] != usize::MAX {
                    col_idx.push(map[j]);
                    values.push(a);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { nrows: keep.len(), ncols: keep.len(), row_ptr, col_idx, values }
    }

    /// Replace row `i`'s values; the pattern must match.
    pub fn set_row_values(&mut self, i: usize, vals: &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        assert_eq!(r.len(), vals.len());
        self.values[r].copy_from_slice(vals);
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                triplets.push(Triplet::new(i, j, a));
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .map_err(|e| GfdmError::InvalidArgument(format!("sparse matrix construction: {e:?}")))
    }

    /// `row,col,value` lines.
    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# {} {}", self.nrows, self.ncols)?;
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                writeln!(w, "{i},{j},{a:e}")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_triplets(path: &Path) -> Result<CsrMatrix> {
        let text = std::fs::read_to_string(path)?;
        let mut dims = None;
        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let parse_err = |msg: &str| GfdmError::Parse { line: lineno + 1, msg: msg.into() };
            if let Some(h) = line.strip_prefix('#') {
                let v: Vec<usize> = h.split_whitespace().filter_map(|t| t.parse().ok()).collect();
                if v.len() == 2 {
                    dims = Some((v[0], v[1]));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(parse_err("expected row,col,value"));
            }
            let i = f[0].trim().parse().map_err(|_| parse_err("bad row"))?;
            let j = f[1].trim().parse().map_err(|_| parse_err("bad col"))?;
            let v = f[2].trim().parse().map_err(|_| parse_err("bad value"))?;
            trip.push((i, j, v));
        }
        let (nr, nc) = dims.ok_or_else(|| GfdmError::Parse { line: 1, msg: "missing `# nrows ncols` header".into() })?;
        // keep the stored column order by not sorting within rows
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nr];
        for (i, j, v) in trip {
            if i >= nr || j >= nc {
                return Err(GfdmError::InvalidArgument(format!("entry ({i}, {j}) out of bounds")));
            }
            rows[i].push((j, v));
        }
        let mut m = CsrMatrix { nrows: nr, ncols: nc, row_ptr: vec![0], col_idx: vec![], values: vec![] };
        for r in rows {
            for (j, v) in r {
                m.col_idx.push(j);
                m.values.push(v);
            }
            m.row_ptr.push(m.col_idx.len());
        }
        Ok(m)
    }
}

/// Sparse LU with partial pivoting.
pub struct SparseLu {
    lu: Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix) -> Result<SparseLu> {
        if a.nrows != a.ncols {
            return Err(GfdmError::InvalidArgument(format!("matrix is {}×{}", a.nrows, a.ncols)));
        }
        let lu = a
            .to_faer()?
            .sp_lu()
            .map_err(|e| GfdmError::Singular(format!("factorization failed: {e:?}")))?;
        Ok(SparseLu { lu, n: a.nrows })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Col::<f64>::from_fn(self.n, |i| b[i]);
        let x: Col<f64> = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[i]).collect()
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Col::<f64>::from_fn(self.n, |i| b[i]);
        let x: Col<f64> = self.lu.solve_transpose(&rhs);
        (0..self.n).map(|i| x[i]).collect()
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Residual bound used for every direct solve.
///
/// The absolute part is the stated contract; the second term is the backward
/// error floor of LU, which dominates only when `‖A‖‖x‖` is huge.
pub fn residual_tolerance(a_norm: f64, b: &[f64], x: &[f64]) -> f64 {
    1e-10 * inf_norm(b).max(1.0) + 64.0 * f64::EPSILON * a_norm * inf_norm(x)
}

#[derive(Clone, Debug)]
pub struct SolveStats {
    pub residual: f64,
    /// Residual before each refinement step, first entry is the plain solve.
    pub history: Vec<f64>,
    pub nnz: usize,
}

/// Direct solve with one step of iterative refinement and a residual check.
pub fn sparse_solve(a: &CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
    let lu = SparseLu::factor(a)?;
    solve_with(&lu, a, b)
}

pub fn solve_with(lu: &SparseLu, a: &CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
    let resid = |x: &[f64]| -> Vec<f64> { a.matvec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect() };
    let mut x = lu.solve(b);
    let mut r = resid(&x);
    let mut history = vec![inf_norm(&r)];
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GfdmError::Singular(format!("non-finite solution, residual history {history:?}")));
    }
    let dx = lu.solve(&r);
    if dx.iter().all(|v| v.is_finite()) {
        let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let rc = resid(&cand);
        if inf_norm(&rc) <= history[0] {
            x = cand;
            r = rc;
        }
    }
    let residual = inf_norm(&r);
    history.push(residual);
    let tol = residual_tolerance(a.norm_inf(), b, &x);
    if !(residual <= tol) {
        return Err(GfdmError::Residual { residual, tol });
    }
    Ok((x, SolveStats { residual, history, nnz: a.nnz() }))
}

/// Lower-bound estimate of `‖A⁻¹‖_∞` (Hager–Higham on `A⁻ᵀ`).
pub fn inv_norm_estimate(a: &CsrMatrix) -> Result<f64> {
    let lu = SparseLu::factor(a)?;
    let n = a.nrows;
    if n == 0 {
        return Ok(0.0);
    }
    // ‖A⁻¹‖_∞ = ‖A⁻ᵀ‖_1; apply the 1-norm estimator to B = A⁻ᵀ.
    let apply_b = |v: &[f64]| lu.solve_transpose(v);
    let apply_bt = |v: &[f64]| lu.solve(v);
    let check = |v: &[f64]| -> Result<()> {
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(GfdmError::Singular("non-finite value in norm estimate".into()))
        }
    };

    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0;
    let mut last_j = usize::MAX;
    for _ in 0..5 {
        let y = apply_b(&x);
        check(&y)?;
        let norm_y: f64 = y.iter().map(|v| v.abs()).sum();
        if norm_y <= est && last_j != usize::MAX {
            break;
        }
        est = norm_y;
        let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let z = apply_bt(&xi);
        check(&z)?;
        let (j, zmax) = z
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if zmax <= ztx || j == last_j {
            break;
        }
        last_j = j;
        x = vec![0.0; n];
        x[j] = 1.0;
    }
    // Higham's alternating-sign safeguard
    let alt: Vec<f64> = (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
        })
        .collect();
    let y = apply_b(&alt);
    check(&y)?;
    let alt_est = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
    Ok(est.max(alt_est))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_solve_returns_rhs() {
        let b = vec![1.0, -2.0, 3.5];
        let (x, _) = sparse_solve(&CsrMatrix::identity(3), &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn periodic_shifted_laplacian() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            t.push((i, (i + 1) % n, -1.0));
            t.push((i, (i + n - 1) % n, -1.0));
        }
        let a = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let (x, stats) = sparse_solve(&a, &vec![1.0; n]).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!(stats.residual < 1e-14);
    }

    #[test]
    fn diagonal_inverse_norm() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 4.0)]).unwrap();
        assert!((inv_norm_estimate(&a).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singular_is_reported() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(sparse_solve(&a, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn submatrix_and_shift() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 1, 2.0), (1, 0, 1.0), (1, 2, 5.0), (2, 2, 7.0)]).unwrap();
        let s = a.principal_submatrix(&[2, 1]);
        assert_eq!(s.get(0, 0), 7.0);
        assert_eq!(s.get(1, 0), 5.0);
        assert_eq!(s.nnz(), 2);
        let sh = a.scale_shift(-1.0, &[1.0, 1.0, 1.0]);
        assert_eq!(sh.get(0, 0), 1.0);
        assert_eq!(sh.get(2, 2), -6.0);
        assert_eq!(sh.get(0, 1), -2.0);
    }

    #[test]
    fn triplet_round_trip() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 1, 0.1), (2, 0, -1.0 / 3.0)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        a.write_triplets(&p).unwrap();
        assert_eq!(CsrMatrix::read_triplets(&p).unwrap(), a);
    }
}
