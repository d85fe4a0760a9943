//! Comparison estimators: RBF-FD stencils and variable-bandwidth diffusion maps.

pub mod rbf_fd;
pub mod vbdm;

pub use rbf_fd::{rbf_fd_operator, rbf_fd_row_weights, RbfConfig};
pub use vbdm::{vbdm_autotune_eps, vbdm_laplacian, VbdmConfig, VbdmOperator};
