//! Variable-bandwidth diffusion-maps graph Laplacian.

use crate::error::{GfdmError, Result};
use crate::geometry::PointCloud;
use crate::sparse::CsrMatrix;
use crate::stencil::{build_knn, NeighborTable};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VbdmConfig {
    /// Graph neighbors (self included).
    pub k1: usize,
    /// Neighbors for the initial bandwidth (self included).
    pub k2: usize,
    pub d: usize,
    /// Fixed bandwidth of the final kernel; tuned when `None`.
    pub eps: Option<f64>,
}

impl VbdmConfig {
    pub const BETA: f64 = -0.5;

    pub fn alpha(&self) -> f64 {
        -(self.d as f64) / 4.0 + 0.5
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k2 < 2 || self.k2 > self.k1 || self.k1 > n || self.d == 0 {
            return Err(GfdmError::InvalidArgument(format!(
                "VBDM needs 2 ≤ k2 ≤ k1 ≤ N, got k2={} k1={} N={n}",
                self.k2, self.k1
            )));
        }
        Ok(())
    }
}

/// Exponents of the bandwidth grid, `2^-20 .. 2^10` in quarter steps.
pub fn eps_grid() -> Vec<f64> {
    (0..=120).map(|i| -20.0 + 0.25 * i as f64).collect()
}

/// Symmetrized k-NN graph as per-row `(column, squared distance)` lists.
struct Graph {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Graph {
    fn new(cloud: &PointCloud, table: &NeighborTable, k: usize) -> Graph {
        let n = cloud.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(k + 4); n];
        for i in 0..n {
            for (&j, &dist) in table.row(i)[..k].iter().zip(&table.row_distances(i)[..k]) {
                rows[i].push((j, dist * dist));
                if j != i {
                    rows[j].push((i, dist * dist));
                }
            }
        }
        for r in rows.iter_mut() {
            r.sort_by_key(|e| e.0);
            r.dedup_by_key(|e| e.0);
        }
        Graph { rows }
    }

    /// `Σ_ij exp(-r²/(c ε b_i b_j))`.
    fn kernel_sum(&self, eps: f64, c: f64, bw: &[f64]) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|&(j, d2)| (-d2 / (c * eps * bw[i] * bw[j])).exp()).sum::<f64>())
            .sum()
    }
}

/// Bandwidth maximizing the log-log slope of the kernel sum, and that slope.
fn tune(graph: &Graph, c: f64, bw: &[f64]) -> Result<(f64, f64)> {
    let grid = eps_grid();
    let logt: Vec<f64> = grid.iter().map(|&e| graph.kernel_sum(2f64.powf(e), c, bw).ln()).collect();
    let mut best: Option<(usize, f64)> = None;
    for k in 0..grid.len() - 1 {
        let slope = (logt[k + 1] - logt[k]) / ((grid[k + 1] - grid[k]) * std::f64::consts::LN_2);
        if slope.is_finite() && best.is_none_or(|(_, s)| slope > s) {
            best = Some((k, slope));
        }
    }
    match best {
        Some((k, slope)) if slope > 1e-6 => Ok((2f64.powf(0.5 * (grid[k] + grid[k + 1])), slope)),
        _ => Err(GfdmError::AutotuneFailed),
    }
}

struct Prepared {
    graph: Graph,
    /// Final bandwidth, normalized to unit mean.
    rho: Vec<f64>,
    eps_density: f64,
}

fn prepare(cloud: &PointCloud, cfg: &VbdmConfig) -> Result<Prepared> {
    let n = cloud.len();
    cfg.validate(n)?;
    let table = build_knn(cloud, cfg.k1)?;
    let rho0: Vec<f64> = (0..n)
        .map(|i| {
            let d = &table.row_distances(i)[1..cfg.k2];
            (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt()
        })
        .collect();
    if rho0.iter().any(|&r| !(r > 0.0)) {
        return Err(GfdmError::InvalidArgument("coincident points break the VBDM bandwidth".into()));
    }
    let graph = Graph::new(cloud, &table, cfg.k1);
    let (eps0, _) = tune(&graph, 2.0, &rho0)?;
    let dim = cfg.d as i32;
    let mut rho: Vec<f64> = graph
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let s: f64 = r.iter().map(|&(j, d2)| (-d2 / (2.0 * eps0 * rho0[i] * rho0[j])).exp()).sum();
            (s / rho0[i].powi(dim)).powf(VbdmConfig::BETA)
        })
        .collect();
    let mean = rho.iter().sum::<f64>() / n as f64;
    rho.iter_mut().for_each(|r| *r /= mean);
    Ok(Prepared { graph, rho, eps_density: eps0 })
}

/// Bandwidth of the final kernel chosen by the kernel-sum slope criterion.
pub fn vbdm_autotune_eps(cloud: &PointCloud, cfg: &VbdmConfig) -> Result<(f64, f64)> {
    let p = prepare(cloud, cfg)?;
    tune(&p.graph, 4.0, &p.rho)
}

pub struct VbdmOperator {
    pub operator: CsrMatrix,
    pub eps: f64,
    pub eps_density: f64,
    pub rho: Vec<f64>,
}

/// `L = P^{-2} (D^{-1} K − I) / ε` with `P = diag(ρ)`.
pub fn vbdm_laplacian(cloud: &PointCloud, cfg: &VbdmConfig) -> Result<VbdmOperator> {
    let p = prepare(cloud, cfg)?;
    let eps = match cfg.eps {
        Some(e) if e > 0.0 => e,
        Some(e) => return Err(GfdmError::InvalidArgument(format!("bandwidth must be positive, got {e}"))),
        None => tune(&p.graph, 4.0, &p.rho)?.0,
    };
    let n = cloud.len();
    let rho = &p.rho;
    let dim = cfg.d as i32;
    let kern: Vec<Vec<f64>> = p
        .graph
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.iter().map(|&(j, d2)| (-d2 / (4.0 * eps * rho[i] * rho[j])).exp()).collect())
        .collect();
    let q: Vec<f64> = kern
        .iter()
        .enumerate()
        .map(|(i, k)| k.iter().sum::<f64>() / rho[i].powi(dim))
        .collect();
    let alpha = cfg.alpha();
    let mut triplets = Vec::with_capacity(kern.iter().map(Vec::len).sum());
    for (i, r) in p.graph.rows.iter().enumerate() {
        let vals: Vec<f64> = r.iter().zip(&kern[i]).map(|(&(j, _), k)| k * q[j].powf(-alpha)).collect();
        let d: f64 = vals.iter().sum();
        let scale = 1.0 / (eps * rho[i] * rho[i]);
        for (&(j, _), v) in r.iter().zip(vals) {
            let mut w = v / d;
            if j == i {
                w -= 1.0;
            }
            triplets.push((i, j, w * scale));
        }
    }
    let mut operator = CsrMatrix::from_triplets(n, n, &triplets)?;
    // row sums are zero up to rounding; remove the residue through the diagonal
    for i in 0..n {
        let start = operator.row_ptr[i];
        let (cols, vals) = operator.row(i);
        let s: f64 = vals.iter().sum();
        if let Some(pos) = cols.iter().position(|&c| c == i) {
            operator.values[start + pos] -= s;
        }
    }
    Ok(VbdmOperator { operator, eps, eps_density: p.eps_density, rho: p.rho })
}
