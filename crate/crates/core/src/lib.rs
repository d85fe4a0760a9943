//! Stabilized generalized finite differences for the Laplace–Beltrami operator
//! on sampled manifolds, with Poisson solvers and a convergence harness.

pub mod baselines;
pub mod error;
pub mod geometry;
pub mod gmls;
pub mod harness;
pub mod lp;
pub mod pde;
pub mod sparse;
pub mod stabilizer;
pub mod stencil;

pub use error::{GfdmError, Result};
pub use geometry::{FieldSpec, ManifoldSpec, PointCloud};
pub use gmls::{MultiIndexSet, ProjectionAt, RowWeights};
pub use sparse::CsrMatrix;
pub use stabilizer::StabilizedRow;
pub use stencil::{FrameSource, Frames, NeighborTable};
