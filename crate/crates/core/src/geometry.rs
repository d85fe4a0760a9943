//! Analytic manifold families, sampling, exact Laplacians and XYZ I/O.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GfdmError, Result};

/// A parameterized manifold family with fixed constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManifoldSpec {
    /// `(cos θ, 2 sin θ)` in the plane.
    Ellipse,
    /// Two-dimensional torus embedded in `R^(2q+1)`.
    GeneralTorus { q: usize },
    /// Half torus `φ ∈ [0, π]`, with boundary at `φ ∈ {0, π}`.
    SemiTorus,
}

impl ManifoldSpec {
    pub const ELLIPSE_AXES: (f64, f64) = (1.0, 2.0);
    pub const TORUS_C0: f64 = 2.0;
    pub const SEMI_TORUS_R: f64 = 2.0;
    pub const SEMI_TORUS_TUBE: f64 = 1.0;

    pub fn ambient_dim(&self) -> usize {
        match *self {
            ManifoldSpec::Ellipse => 2,
            ManifoldSpec::GeneralTorus { q } => 2 * q + 1,
            ManifoldSpec::SemiTorus => 3,
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            ManifoldSpec::Ellipse => 1,
            _ => 2,
        }
    }

    pub fn has_boundary(&self) -> bool {
        matches!(self, ManifoldSpec::SemiTorus)
    }

    /// Parameter domain as `[lo, hi)` intervals per intrinsic coordinate.
    pub fn parameter_domain(&self) -> Vec<(f64, f64)> {
        match self {
            ManifoldSpec::Ellipse => vec![(0.0, TAU)],
            ManifoldSpec::GeneralTorus { .. } => vec![(0.0, TAU), (0.0, TAU)],
            ManifoldSpec::SemiTorus => vec![(0.0, TAU), (0.0, PI)],
        }
    }

    fn torus_s(q: usize) -> f64 {
        (1..=q).map(|i| 1.0 / (i * i) as f64).sum()
    }

    pub fn embed(&self, p: &[f64]) -> Vec<f64> {
        match *self {
            ManifoldSpec::Ellipse => {
                let (a, b) = Self::ELLIPSE_AXES;
                vec![a * p[0].cos(), b * p[0].sin()]
            }
            ManifoldSpec::GeneralTorus { q } => {
                let (th, ph) = (p[0], p[1]);
                let rad = Self::TORUS_C0 + th.cos();
                let mut x = Vec::with_capacity(2 * q + 1);
                for i in 1..=q {
                    let fi = i as f64;
                    x.push(rad * (fi * ph).cos() / fi);
                    x.push(rad * (fi * ph).sin() / fi);
                }
                x.push(Self::torus_s(q).sqrt() * th.sin());
                x
            }
            ManifoldSpec::SemiTorus => {
                let (th, ph) = (p[0], p[1]);
                let rad = Self::SEMI_TORUS_R + Self::SEMI_TORUS_TUBE * th.cos();
                vec![
                    rad * ph.cos(),
                    rad * ph.sin(),
                    Self::SEMI_TORUS_TUBE * th.sin(),
                ]
            }
        }
    }

    /// Columns of the embedding Jacobian, one per intrinsic coordinate.
    pub fn jacobian(&self, p: &[f64]) -> Vec<Vec<f64>> {
        match *self {
            ManifoldSpec::Ellipse => {
                let (a, b) = Self::ELLIPSE_AXES;
                vec![vec![-a * p[0].sin(), b * p[0].cos()]]
            }
            ManifoldSpec::GeneralTorus { q } => {
                let (th, ph) = (p[0], p[1]);
                let rad = Self::TORUS_C0 + th.cos();
                let mut dth = Vec::with_capacity(2 * q + 1);
                let mut dph = Vec::with_capacity(2 * q + 1);
                for i in 1..=q {
                    let fi = i as f64;
                    dth.push(-th.sin() * (fi * ph).cos() / fi);
                    dth.push(-th.sin() * (fi * ph).sin() / fi);
                    dph.push(-rad * (fi * ph).sin());
                    dph.push(rad * (fi * ph).cos());
                }
                dth.push(Self::torus_s(q).sqrt() * th.cos());
                dph.push(0.0);
                vec![dth, dph]
            }
            ManifoldSpec::SemiTorus => {
                let (th, ph) = (p[0], p[1]);
                let r = Self::SEMI_TORUS_TUBE;
                let rad = Self::SEMI_TORUS_R + r * th.cos();
                vec![
                    vec![-r * th.sin() * ph.cos(), -r * th.sin() * ph.sin(), r * th.cos()],
                    vec![-rad * ph.sin(), rad * ph.cos(), 0.0],
                ]
            }
        }
    }
}

impl fmt::Display for ManifoldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldSpec::Ellipse => write!(f, "ellipse"),
            ManifoldSpec::GeneralTorus { q } => write!(f, "torus:{q}"),
            ManifoldSpec::SemiTorus => write!(f, "semitorus"),
        }
    }
}

impl FromStr for ManifoldSpec {
    type Err = GfdmError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "ellipse" => Ok(ManifoldSpec::Ellipse),
            "semitorus" | "semi-torus" | "semi_torus" => Ok(ManifoldSpec::SemiTorus),
            "torus" => Ok(ManifoldSpec::GeneralTorus { q: 4 }),
            _ => {
                let q = s
                    .strip_prefix("torus:")
                    .and_then(|q| q.parse::<usize>().ok())
                    .filter(|&q| q >= 1)
                    .ok_or_else(|| GfdmError::InvalidArgument(format!("unknown manifold `{s}`")))?;
                Ok(ManifoldSpec::GeneralTorus { q })
            }
        }
    }
}

/// Manufactured scalar fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FieldSpec {
    SinTheta,
    SinThetaSinPhi,
    Constant(f64),
}

impl FieldSpec {
    /// The field used by the reference experiments on each family.
    pub fn default_for(spec: ManifoldSpec) -> Self {
        match spec {
            ManifoldSpec::Ellipse => FieldSpec::SinTheta,
            _ => FieldSpec::SinThetaSinPhi,
        }
    }

    fn check(&self, spec: ManifoldSpec) -> Result<()> {
        let ok = match self {
            FieldSpec::SinTheta => true,
            FieldSpec::SinThetaSinPhi => spec.intrinsic_dim() == 2,
            FieldSpec::Constant(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(GfdmError::IncompatibleField {
                field: format!("{self:?}"),
                manifold: spec.to_string(),
            })
        }
    }

    pub fn value(&self, spec: ManifoldSpec, p: &[f64]) -> Result<f64> {
        self.check(spec)?;
        Ok(match self {
            FieldSpec::SinTheta => p[0].sin(),
            FieldSpec::SinThetaSinPhi => p[0].sin() * p[1].sin(),
            FieldSpec::Constant(c) => *c,
        })
    }
}

impl FromStr for FieldSpec {
    type Err = GfdmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sin_theta" => Ok(FieldSpec::SinTheta),
            "sin_theta_sin_phi" => Ok(FieldSpec::SinThetaSinPhi),
            other => other
                .strip_prefix("constant:")
                .and_then(|c| c.parse::<f64>().ok())
                .map(FieldSpec::Constant)
                .ok_or_else(|| GfdmError::InvalidArgument(format!("unknown field `{other}`"))),
        }
    }
}

/// Points on a manifold, stored row-major.
#[derive(Clone, Debug)]
pub struct PointCloud {
    pub n: usize,
    pub ambient: Vec<f64>,
    pub d: usize,
    /// Row-major intrinsic coordinates; empty when unknown.
    pub intrinsic: Vec<f64>,
    pub spec: Option<ManifoldSpec>,
    pub seed: Option<u64>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        if self.n == 0 {
            0
        } else {
            self.ambient.len() / self.n
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ambient.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.ambient[i * self.n..(i + 1) * self.n]
    }

    pub fn has_intrinsic(&self) -> bool {
        !self.intrinsic.is_empty()
    }

    pub fn param(&self, i: usize) -> &[f64] {
        &self.intrinsic[i * self.d..(i + 1) * self.d]
    }

    fn from_params(spec: ManifoldSpec, intrinsic: Vec<f64>, seed: Option<u64>) -> Self {
        let d = spec.intrinsic_dim();
        let ambient = intrinsic.chunks(d).flat_map(|p| spec.embed(p)).collect();
        PointCloud {
            n: spec.ambient_dim(),
            ambient,
            d,
            intrinsic,
            spec: Some(spec),
            seed,
        }
    }

    /// Concatenate two clouds of the same family.
    pub fn concat(&self, other: &PointCloud) -> Result<PointCloud> {
        if self.n != other.n || self.d != other.d || self.spec != other.spec {
            return Err(GfdmError::InvalidArgument("cannot concatenate unlike clouds".into()));
        }
        let mut out = self.clone();
        out.ambient.extend_from_slice(&other.ambient);
        if self.has_intrinsic() && other.has_intrinsic() {
            out.intrinsic.extend_from_slice(&other.intrinsic);
        } else {
            out.intrinsic.clear();
        }
        Ok(out)
    }

    /// First pair of bitwise-identical rows, if any.
    pub fn find_duplicate(&self) -> Option<(usize, usize)> {
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(self.len());
        for i in 0..self.len() {
            let key: Vec<u64> = self.point(i).iter().map(|v| (v + 0.0).to_bits()).collect();
            if let Some(&j) = seen.get(&key) {
                return Some((j, i));
            }
            seen.insert(key, i);
        }
        None
    }
}

fn draw_params(spec: ManifoldSpec, count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dom = spec.parameter_domain();
    let mut out = Vec::with_capacity(count * dom.len());
    for _ in 0..count {
        for &(lo, hi) in &dom {
            out.push(rng.random_range(lo..hi));
        }
    }
    out
}

/// I.i.d. uniform samples in the parameter domain.
pub fn sample_manifold(spec: ManifoldSpec, count: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = draw_params(spec, count, &mut rng);
    PointCloud::from_params(spec, params, Some(seed))
}

/// Interior samples followed by `per_side` uniform-θ points on each boundary circle.
///
/// Returns the cloud and a mask marking the boundary rows.
pub fn sample_with_boundary(
    spec: ManifoldSpec,
    count: usize,
    per_side: usize,
    seed: u64,
) -> Result<(PointCloud, Vec<bool>)> {
    if !spec.has_boundary() {
        return Err(GfdmError::NoBoundary(spec.to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = draw_params(spec, count, &mut rng);
    for phi in [0.0, PI] {
        for _ in 0..per_side {
            params.push(rng.random_range(0.0..TAU));
            params.push(phi);
        }
    }
    let mut mask = vec![false; count];
    mask.resize(count + 2 * per_side, true);
    Ok((PointCloud::from_params(spec, params, Some(seed)), mask))
}

/// Embed given intrinsic coordinates.
pub fn cloud_from_params(spec: ManifoldSpec, intrinsic: Vec<f64>) -> Result<PointCloud> {
    if intrinsic.len() % spec.intrinsic_dim() != 0 {
        return Err(GfdmError::InvalidArgument("intrinsic length not a multiple of d".into()));
    }
    Ok(PointCloud::from_params(spec, intrinsic, None))
}

/// Orthonormal tangent vectors, columns of the normalized Jacobian.
pub fn analytic_frame(spec: ManifoldSpec, p: &[f64]) -> Vec<Vec<f64>> {
    let mut cols = spec.jacobian(p);
    for j in 0..cols.len() {
        for k in 0..j {
            let dot: f64 = cols[j].iter().zip(&cols[k]).map(|(a, b)| a * b).sum();
            let prev = cols[k].clone();
            for (c, v) in cols[j].iter_mut().zip(prev) {
                *c -= dot * v;
            }
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        for c in cols[j].iter_mut() {
            *c /= norm;
        }
    }
    cols
}

/// Exact Laplace–Beltrami of a manufactured field.
pub fn analytic_laplacian(spec: ManifoldSpec, field: FieldSpec, p: &[f64]) -> Result<f64> {
    field.check(spec)?;
    if let FieldSpec::Constant(_) = field {
        return Ok(0.0);
    }
    Ok(match spec {
        ManifoldSpec::Ellipse => {
            // only SinTheta is valid for d = 1
            let (s, c) = p[0].sin_cos();
            let g = s * s + 4.0 * c * c;
            -s / g + 3.0 * s * c * c / (g * g)
        }
        ManifoldSpec::GeneralTorus { q } => {
            let (st, ct) = p[0].sin_cos();
            let c0 = ManifoldSpec::TORUS_C0;
            let big_s = ManifoldSpec::torus_s(q);
            let rad = c0 + ct;
            let (u_th, u_thth, u_phph) = theta_derivs(field, p);
            // (1/rad) d/dθ(rad u_θ / S) + u_φφ / (q rad²)
            (rad * u_thth - st * u_th) / (big_s * rad) + u_phph / (q as f64 * rad * rad)
        }
        ManifoldSpec::SemiTorus => {
            let (st, ct) = p[0].sin_cos();
            let r = ManifoldSpec::SEMI_TORUS_TUBE;
            let rad = ManifoldSpec::SEMI_TORUS_R + r * ct;
            let (u_th, u_thth, u_phph) = theta_derivs(field, p);
            (rad * u_thth - r * st * u_th) / (r * r * rad) + u_phph / (rad * rad)
        }
    })
}

/// `(u_θ, u_θθ, u_φφ)` for the two-dimensional fields.
fn theta_derivs(field: FieldSpec, p: &[f64]) -> (f64, f64, f64) {
    let (st, ct) = p[0].sin_cos();
    match field {
        FieldSpec::SinTheta => (ct, -st, 0.0),
        FieldSpec::SinThetaSinPhi => {
            let sp = p[1].sin();
            (ct * sp, -st * sp, -st * sp)
        }
        FieldSpec::Constant(_) => (0.0, 0.0, 0.0),
    }
}

/// First-order geodesic distance to the semi-torus boundary.
///
/// Only meaningful close to the boundary.
pub fn boundary_distance(spec: ManifoldSpec, p: &[f64]) -> Result<f64> {
    match spec {
        ManifoldSpec::SemiTorus => {
            let rad = ManifoldSpec::SEMI_TORUS_R + ManifoldSpec::SEMI_TORUS_TUBE * p[0].cos();
            Ok(rad * p[1].min(PI - p[1]))
        }
        other => Err(GfdmError::NoBoundary(other.to_string())),
    }
}

/// Read whitespace-separated ambient rows; `#` starts a comment.
pub fn load_xyz(path: &Path, d: usize) -> Result<PointCloud> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut ambient = Vec::new();
    let mut ncol = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut count = 0;
        for tok in body.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| GfdmError::Parse {
                line: lineno + 1,
                msg: format!("not a number: `{tok}`"),
            })?;
            ambient.push(v);
            count += 1;
        }
        match ncol {
            None => ncol = Some(count),
            Some(c) if c != count => {
                return Err(GfdmError::RaggedRow {
                    line: lineno + 1,
                    expected: c,
                    found: count,
                })
            }
            _ => {}
        }
    }
    let n = ncol.unwrap_or(0);
    if d == 0 || (n > 0 && d > n) {
        return Err(GfdmError::InvalidArgument(format!(
            "intrinsic dimension {d} invalid for {n} ambient columns"
        )));
    }
    let cloud = PointCloud {
        n,
        ambient,
        d,
        intrinsic: Vec::new(),
        spec: None,
        seed: None,
    };
    if let Some((first, second)) = cloud.find_duplicate() {
        return Err(GfdmError::DuplicatePoint { first, second });
    }
    Ok(cloud)
}

/// Write ambient rows with round-trip precision.
pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    if let Some(spec) = cloud.spec {
        writeln!(w, "# {spec}")?;
    }
    for i in 0..cloud.len() {
        let row: Vec<String> = cloud.point(i).iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    w.flush()?;
    Ok(())
}
