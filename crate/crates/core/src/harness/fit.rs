use std::collections::BTreeMap;

use crate::error::{GfdmError, Result};
use crate::harness::records::RunRecord;

/// Values below this are treated as round-off.
pub const ROUNDOFF_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Fe,
    Ie,
    InvNorm,
}

impl Metric {
    pub fn of(&self, r: &RunRecord) -> Option<f64> {
        match self {
            Metric::Fe => r.fe,
            Metric::Ie => r.ie,
            Metric::InvNorm => r.inv_norm,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// `(N, median)` pairs that entered the fit.
    pub used: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Per-size statistics over successful records.
pub fn summarize(records: &[RunRecord], metric: Metric) -> Vec<Summary> {
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        if let Some(v) = metric.of(r).filter(|v| v.is_finite()) {
            by_n.entry(r.n).or_default().push(v);
        }
    }
    by_n.into_iter()
        .map(|(n, mut v)| {
            v.sort_by(f64::total_cmp);
            let c = v.len();
            let median = if c % 2 == 1 { v[c / 2] } else { 0.5 * (v[c / 2 - 1] + v[c / 2]) };
            let mean = v.iter().sum::<f64>() / c as f64;
            let var = if c > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (c - 1) as f64 } else { 0.0 };
            Summary { n, median, mean, std: var.sqrt(), count: c }
        })
        .collect()
}

pub fn median_by_n(records: &[RunRecord], metric: Metric) -> Vec<(usize, f64)> {
    summarize(records, metric).into_iter().map(|s| (s.n, s.median)).collect()
}

fn ols(points: &[(usize, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(GfdmError::TooFewPoints { needed: 3, got: points.len() });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(SlopeFit { slope, intercept: my - slope * mx, used: points.to_vec() })
}

/// Points kept by the round-off rules, from per-size medians sorted by N.
pub fn pre_roundoff(points: &[(usize, f64)], floor: f64) -> Vec<(usize, f64)> {
    let argmin = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map_or(0, |(i, _)| i);
    points
        .iter()
        .enumerate()
        .filter(|&(i, &(_, v))| v >= floor && !(i > argmin && v > points[i - 1].1))
        .map(|(_, &p)| p)
        .collect()
}

/// Log-log slope of the per-size median, excluding the round-off regime.
pub fn fit_slope(records: &[RunRecord], metric: Metric) -> Result<SlopeFit> {
    fit_slope_with_floor(records, metric, ROUNDOFF_FLOOR)
}

pub fn fit_slope_with_floor(records: &[RunRecord], metric: Metric, floor: f64) -> Result<SlopeFit> {
    ols(&pre_roundoff(&median_by_n(records, metric), floor))
}

/// Log-log slope over every size, without exclusions.
pub fn fit_slope_plain(records: &[RunRecord], metric: Metric) -> Result<SlopeFit> {
    ols(&median_by_n(records, metric))
}

/// Plain OLS slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(usize, f64)]) -> Result<f64> {
    ols(points).map(|f| f.slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(points: &[(usize, f64)]) -> Vec<RunRecord> {
        points
            .iter()
            .map(|&(n, v)| RunRecord {
                config_hash: String::new(),
                method: "m".into(),
                degree: 2,
                n,
                trial: 0,
                variant: "all".into(),
                fe: Some(v),
                ie: Some(v),
                c_max: 0.0,
                c_mean: 0.0,
                c_nonzero_rows: 0,
                fallback_rows: 0,
                flagged: 0,
                eps_star: None,
                inv_norm: None,
                status: "ok".into(),
                wall_time: 0.0,
            })
            .collect()
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<(usize, f64)> = [800, 1600, 3200, 6400].iter().map(|&n| (n, (n as f64).powi(-2))).collect();
        let f = fit_slope(&recs(&pts), Metric::Fe).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
    }

    #[test]
    fn floor_tail_is_excluded() {
        // decay 1e2·N⁻² meets a rising floor 1e-10·N² after N = 800
        let pts: Vec<(usize, f64)> = [100usize, 200, 400, 800, 1600, 3200]
            .iter()
            .map(|&n| (n, (1e2 * (n as f64).powi(-2)).max(1e-10 * (n as f64).powi(2))))
            .collect();
        let f = fit_slope(&recs(&pts), Metric::Fe).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12, "{f:?}");
        assert_eq!(f.used.len(), 4);
    }

    #[test]
    fn too_few_points() {
        let pts = [(10, 1e-12), (20, 1e-3), (40, 1e-4)];
        assert!(matches!(fit_slope(&recs(&pts), Metric::Fe), Err(GfdmError::TooFewPoints { .. })));
    }

    #[test]
    fn medians_ignore_failed_records() {
        let mut r = recs(&[(10, 1.0), (10, 3.0), (10, 100.0)]);
        r[2].status = "error: x".into();
        assert_eq!(median_by_n(&r, Metric::Fe), vec![(10, 2.0)]);
    }
}
