use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GfdmError, Result};
use crate::geometry::{FieldSpec, ManifoldSpec};
use crate::gmls::ProjectionAt;
use crate::stencil::FrameSource;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GfdmRaw,
    GfdmLp,
    RbfFd,
    Vbdm,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::GfdmRaw => "gfdm_raw",
            Method::GfdmLp => "gfdm_lp",
            Method::RbfFd => "rbf_fd",
            Method::Vbdm => "vbdm",
        }
    }

    pub fn is_gfdm(&self) -> bool {
        matches!(self, Method::GfdmRaw | Method::GfdmLp)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    /// Forward error only.
    Consistency,
    /// `(a − Δ)u = f` on a closed manifold.
    Closed,
    /// `Δu = f` with homogeneous Dirichlet data.
    Dirichlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    Detector,
    EpsSweep,
    GivenBoundary,
}

/// Sweep description, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub manifold: String,
    pub n: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub degrees: Vec<usize>,
    pub k: usize,
    /// Tangent-estimation neighbors; `0` means `2√N` rounded to odd.
    pub k_p: usize,
    pub method: Method,
    pub problem: Problem,
    pub a: f64,
    pub field: Option<String>,
    pub frames: FrameSource,
    pub boundary: BoundaryMode,
    pub eps_multipliers: Vec<f64>,
    pub projection_at: ProjectionAt,
    pub rbf_shape: f64,
    /// One entry, or one per `n`.
    pub vbdm_k1: Vec<usize>,
    pub vbdm_k2: Vec<usize>,
    pub inv_norm: bool,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            manifold: "ellipse".into(),
            n: vec![800, 1600, 3200],
            trials: 1,
            seed: 0,
            degrees: vec![2],
            k: 21,
            k_p: 0,
            method: Method::GfdmLp,
            problem: Problem::Closed,
            a: 1.0,
            field: None,
            frames: FrameSource::Analytic,
            boundary: BoundaryMode::Detector,
            eps_multipliers: vec![0.5, 1.0, 2.0, 4.0],
            projection_at: ProjectionAt::Neighbor,
            rbf_shape: 0.5,
            vbdm_k1: vec![30],
            vbdm_k2: vec![15],
            inv_norm: false,
            out: None,
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| GfdmError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn spec(&self) -> Result<ManifoldSpec> {
        self.manifold.parse()
    }

    pub fn field_spec(&self) -> Result<FieldSpec> {
        match &self.field {
            Some(f) => f.parse(),
            None => Ok(FieldSpec::default_for(self.spec()?)),
        }
    }

    /// Per-size VBDM neighbor counts `(k1, k2)`.
    pub fn vbdm_k(&self, n_index: usize) -> (usize, usize) {
        let pick = |v: &[usize]| if v.len() == 1 { v[0] } else { v[n_index] };
        (pick(&self.vbdm_k1), pick(&self.vbdm_k2))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GfdmError::Config(m));
        let spec = self.spec()?;
        self.field_spec()?.value(spec, &vec![0.0; spec.intrinsic_dim()])?;
        if self.n.is_empty() || self.n.contains(&0) {
            return bad("`n` must be a non-empty list of positive sizes".into());
        }
        if self.trials == 0 {
            return bad("`trials` must be at least 1".into());
        }
        if self.method.is_gfdm() && (self.degrees.is_empty() || self.degrees.iter().any(|&l| l < 2)) {
            return bad("`degrees` must be a non-empty list of integers ≥ 2".into());
        }
        if self.k < 2 {
            return bad("`k` must be at least 2".into());
        }
        if self.eps_multipliers.iter().any(|&m| !(m > 0.0)) {
            return bad("`eps_multipliers` must be positive".into());
        }
        if self.problem == Problem::Closed && !(self.a > 0.0) {
            return bad("closed problems need a > 0".into());
        }
        match (self.problem, spec.has_boundary()) {
            (Problem::Closed, true) => return bad(format!("`{spec}` has a boundary; use problem = \"dirichlet\"")),
            (Problem::Dirichlet, false) => return bad(format!("`{spec}` is closed; use problem = \"closed\"")),
            _ => {}
        }
        if self.boundary == BoundaryMode::GivenBoundary && !spec.has_boundary() {
            return bad("given_boundary needs a manifold with boundary".into());
        }
        if self.boundary != BoundaryMode::Detector && !self.method.is_gfdm() && self.method != Method::Vbdm {
            return bad("boundary modes other than detector need a GFDM or VBDM method".into());
        }
        if self.method == Method::RbfFd {
            if spec.has_boundary() {
                return bad("RBF-FD is only offered on closed manifolds".into());
            }
            if !(self.rbf_shape > 0.0) {
                return bad("`rbf_shape` must be positive".into());
            }
        }
        if self.method == Method::Vbdm {
            for v in [&self.vbdm_k1, &self.vbdm_k2] {
                if v.is_empty() || (v.len() != 1 && v.len() != self.n.len()) {
                    return bad("`vbdm_k1`/`vbdm_k2` need one entry or one per size".into());
                }
            }
        }
        Ok(())
    }

    /// Hash of every field that affects results.
    pub fn hash(&self) -> String {
        let canon = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            manifold = "torus:4"
            n = [1600, 3200]
            trials = 2
            degrees = [2, 3]
            k = 41
            method = "gfdm_lp"
            problem = "closed"
            frames = "estimated"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.spec().unwrap(), ManifoldSpec::GeneralTorus { q: 4 });
        assert_eq!(cfg.frames, FrameSource::Estimated);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("manifold = \"semitorus\"\nproblem = \"closed\"").is_err());
        assert!(ExperimentConfig::from_toml("trials = 0").is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out = Some("elsewhere".into());
        b.threads = 3;
        assert_eq!(a.hash(), b.hash());
        b.k = 25;
        assert_ne!(a.hash(), b.hash());
    }
}
