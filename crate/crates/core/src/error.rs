use thiserror::Error;

#[derive(Debug, Error)]
pub enum GfdmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("field `{field}` is not defined on manifold `{manifold}`")]
    IncompatibleField { field: String, manifold: String },

    #[error("manifold `{0}` has no boundary")]
    NoBoundary(String),

    #[error("line {line}: expected {expected} columns, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate points at rows {first} and {second}")]
    DuplicatePoint { first: usize, second: usize },

    #[error("requested {k} neighbors but the cloud has only {n} points")]
    TooManyNeighbors { k: usize, n: usize },

    #[error("degenerate tangent neighborhood at {} point(s), first {:?}", .indices.len(), .indices.first())]
    DegenerateNeighborhood { indices: Vec<usize> },

    #[error("rank-deficient basis matrix at {} base point(s), first {:?}; retry with a larger stencil", .indices.len(), .indices.first())]
    RankDeficient { indices: Vec<usize> },

    #[error("row {base}: stabilization needs w1 < 0, got {w1:e}")]
    NonNegativeDiagonal { base: usize, w1: f64 },

    #[error("row {base}: stabilization LP infeasible\n{dump}")]
    LpInfeasible { base: usize, dump: String },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("solve residual {residual:e} exceeds tolerance {tol:e}")]
    Residual { residual: f64, tol: f64 },

    #[error("RBF interpolation matrix ill-conditioned (cond {cond:e}); try another shape parameter")]
    IllConditioned { cond: f64 },

    #[error("bandwidth tuning failed: kernel sum is flat over the grid")]
    AutotuneFailed,

    #[error("slope fit needs at least {needed} usable sizes, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, GfdmError>;
