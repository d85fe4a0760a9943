//! Dense bounded-variable primal simplex with Bland's rule.
//!
//! Solves `min cᵀx  s.t.  A x = b,  lo ≤ x ≤ hi` where bounds may be infinite.

use nalgebra::{DMatrix, DVector};

use crate::error::{GfdmError, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-11;
const REFRESH_EVERY: usize = 50;

#[derive(Clone, Debug)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    /// Row-major `rows × vars`.
    pub a_eq: Vec<f64>,
    pub b_eq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn rows(&self) -> usize {
        self.b_eq.len()
    }

    fn validate(&self) -> Result<()> {
        let (n, m) = (self.vars(), self.rows());
        if self.a_eq.len() != n * m || self.lower.len() != n || self.upper.len() != n {
            return Err(GfdmError::InvalidArgument("LP dimensions are inconsistent".into()));
        }
        if let Some(j) = (0..n).find(|&j| self.lower[j] > self.upper[j] || self.lower[j].is_nan() || self.upper[j].is_nan()) {
            return Err(GfdmError::InvalidArgument(format!("variable {j} has empty bounds")));
        }
        if self.a_eq.iter().chain(&self.b_eq).chain(&self.objective).any(|v| !v.is_finite()) {
            return Err(GfdmError::InvalidArgument("LP data must be finite".into()));
        }
        Ok(())
    }

    /// Largest violation of the equality rows at `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let n = self.vars();
        (0..self.rows())
            .map(|i| {
                let ax: f64 = (0..n).map(|j| self.a_eq[i * n + j] * x[j]).sum();
                (ax - self.b_eq[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest bound violation at `x`.
    pub fn bound_violation(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Stalled,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum State {
    Basic(usize),
    Lower,
    Upper,
    /// Free variable resting at zero.
    Zero,
}

struct Simplex {
    m: usize,
    ncol: usize,
    /// Original columns, `m × ncol` (structural then artificial).
    a: DMatrix<f64>,
    b: DVector<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    tab: DMatrix<f64>,
    iterations: usize,
    cap: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

impl Simplex {
    /// Recompute `B⁻¹A` and the basic values from scratch.
    fn refresh(&mut self) -> bool {
        if self.m == 0 {
            return true;
        }
        let bmat = DMatrix::from_fn(self.m, self.m, |i, k| self.a[(i, self.basis[k])]);
        let lu = bmat.lu();
        let Some(tab) = lu.solve(&self.a) else { return false };
        let mut rhs = self.b.clone();
        for j in 0..self.ncol {
            if !matches!(self.state[j], State::Basic(_)) && self.x[j] != 0.0 {
                rhs.axpy(-self.x[j], &self.a.column(j), 1.0);
            }
        }
        let Some(xb) = lu.solve(&rhs) else { return false };
        self.tab = tab;
        for (r, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[r];
        }
        true
    }

    fn step(&mut self, cost: &[f64]) -> Step {
        let m = self.m;
        // Bland: smallest improving index enters
        let mut entering = None;
        for j in 0..self.ncol {
            let st = self.state[j];
            if matches!(st, State::Basic(_)) || self.lo[j] == self.hi[j] {
                continue;
            }
            let dj = cost[j] - (0..m).map(|r| cost[self.basis[r]] * self.tab[(r, j)]).sum::<f64>();
            let dir = match st {
                State::Lower if dj < -COST_TOL => 1.0,
                State::Upper if dj > COST_TOL => -1.0,
                State::Zero if dj < -COST_TOL => 1.0,
                State::Zero if dj > COST_TOL => -1.0,
                _ => continue,
            };
            entering = Some((j, dir));
            break;
        }
        let Some((j, dir)) = entering else { return Step::Optimal };

        // ratio test; ties to the smallest variable index
        let mut best: Option<(f64, usize, Option<usize>)> = None;
        let mut consider = |t: f64, var: usize, row: Option<usize>| {
            let t = t.max(0.0);
            match best {
                None => best = Some((t, var, row)),
                Some((bt, bv, _)) if t < bt || (t == bt && var < bv) => best = Some((t, var, row)),
                _ => {}
            }
        };
        if self.lo[j].is_finite() && self.hi[j].is_finite() {
            consider(self.hi[j] - self.lo[j], j, None);
        }
        for r in 0..m {
            let alpha = dir * self.tab[(r, j)];
            let bj = self.basis[r];
            if alpha > PIVOT_TOL && self.lo[bj].is_finite() {
                consider((self.x[bj] - self.lo[bj]) / alpha, bj, Some(r));
            } else if alpha < -PIVOT_TOL && self.hi[bj].is_finite() {
                consider((self.hi[bj] - self.x[bj]) / -alpha, bj, Some(r));
            }
        }
        let Some((t, _, row)) = best else { return Step::Unbounded };

        self.x[j] += dir * t;
        for r in 0..m {
            let bj = self.basis[r];
            self.x[bj] -= dir * t * self.tab[(r, j)];
        }
        match row {
            None => {
                self.state[j] = if dir > 0.0 { State::Upper } else { State::Lower };
                self.x[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
            }
            Some(r) => {
                let leave = self.basis[r];
                let alpha = dir * self.tab[(r, j)];
                if alpha > 0.0 {
                    self.state[leave] = State::Lower;
                    self.x[leave] = self.lo[leave];
                } else {
                    self.state[leave] = State::Upper;
                    self.x[leave] = self.hi[leave];
                }
                self.pivot(r, j);
            }
        }
        self.iterations += 1;
        if self.iterations % REFRESH_EVERY == 0 {
            self.refresh();
        }
        Step::Pivoted
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let p = self.tab[(r, j)];
        let prow = self.tab.row(r) / p;
        self.tab.set_row(r, &prow);
        for i in 0..self.m {
            if i != r {
                let f = self.tab[(i, j)];
                if f != 0.0 {
                    let upd = self.tab.row(i) - &prow * f;
                    self.tab.set_row(i, &upd);
                }
            }
        }
        self.basis[r] = j;
        self.state[j] = State::Basic(r);
    }

    fn run(&mut self, cost: &[f64]) -> Option<LpStatus> {
        loop {
            if self.iterations >= self.cap {
                return Some(LpStatus::Stalled);
            }
            match self.step(cost) {
                Step::Optimal => return None,
                Step::Unbounded => return Some(LpStatus::Unbounded),
                Step::Pivoted => {}
            }
        }
    }
}

pub fn lp_solve(p: &LpProblem) -> Result<LpSolution> {
    p.validate()?;
    let (n, m) = (p.vars(), p.rows());
    let mut x = vec![0.0; n + m];
    let mut state = Vec::with_capacity(n + m);
    for j in 0..n {
        if p.lower[j].is_finite() {
            x[j] = p.lower[j];
            state.push(State::Lower);
        } else if p.upper[j].is_finite() {
            x[j] = p.upper[j];
            state.push(State::Upper);
        } else {
            state.push(State::Zero);
        }
    }
    let mut a = DMatrix::<f64>::zeros(m, n + m);
    for i in 0..m {
        let mut r = p.b_eq[i];
        for j in 0..n {
            a[(i, j)] = p.a_eq[i * n + j];
            r -= a[(i, j)] * x[j];
        }
        a[(i, n + i)] = if r >= 0.0 { 1.0 } else { -1.0 };
        x[n + i] = r.abs();
        state.push(State::Basic(i));
    }
    let mut lo = p.lower.clone();
    let mut hi = p.upper.clone();
    lo.extend(std::iter::repeat_n(0.0, m));
    hi.extend(std::iter::repeat_n(f64::INFINITY, m));
    let mut s = Simplex {
        m,
        ncol: n + m,
        tab: a.clone(),
        a,
        b: DVector::from_column_slice(&p.b_eq),
        lo,
        hi,
        x,
        state,
        basis: (n..n + m).collect(),
        iterations: 0,
        cap: 10_000 * (n + m),
    };
    for i in 0..m {
        let sgn = s.a[(i, n + i)];
        for j in 0..n + m {
            s.tab[(i, j)] *= sgn;
        }
    }

    let finish = |s: &Simplex, status: LpStatus| LpSolution {
        x: s.x[..n].to_vec(),
        objective: (0..n).map(|j| p.objective[j] * s.x[j]).sum(),
        status,
        iterations: s.iterations,
    };

    let mut phase1 = vec![0.0; n + m];
    phase1[n..].iter_mut().for_each(|c| *c = 1.0);
    if let Some(status) = s.run(&phase1) {
        // phase I is bounded below by zero; only a stall can end it early
        return Ok(finish(&s, status));
    }
    s.refresh();
    let infeas: f64 = s.x[n..].iter().sum();
    let scale = p.b_eq.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    if infeas > 1e-9 * scale {
        return Ok(finish(&s, LpStatus::Infeasible));
    }
    // drive artificials out of the basis, or pin them at zero
    for r in 0..m {
        if s.basis[r] < n {
            continue;
        }
        let cand = (0..n)
            .filter(|&j| !matches!(s.state[j], State::Basic(_)))
            .max_by(|&a, &b| s.tab[(r, a)].abs().total_cmp(&s.tab[(r, b)].abs()).then(b.cmp(&a)));
        if let Some(j) = cand.filter(|&j| s.tab[(r, j)].abs() > PIVOT_TOL) {
            let leave = s.basis[r];
            s.state[leave] = State::Lower;
            s.x[leave] = 0.0;
            s.pivot(r, j);
        }
    }
    for j in n..n + m {
        s.hi[j] = 0.0;
        if !matches!(s.state[j], State::Basic(_)) {
            s.x[j] = 0.0;
        }
    }
    s.refresh();

    let mut cost = p.objective.clone();
    cost.extend(std::iter::repeat_n(0.0, m));
    let status = s.run(&cost).unwrap_or(LpStatus::Optimal);
    if status == LpStatus::Optimal && !s.refresh() {
        return Ok(finish(&s, LpStatus::Stalled));
    }
    Ok(finish(&s, status))
}
