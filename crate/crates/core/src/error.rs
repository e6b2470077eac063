use thiserror::Error;

/// Errors raised anywhere in the pipeline, from assembly to reporting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric positive definite ({context})")]
    NotSpd { context: String },

    #[error("matrix is not symmetric: relative asymmetry {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("grid too coarse: {cells} cells per side, at least 4 required")]
    TooCoarse { cells: usize },

    #[error("grid dimension must be 1 or 2, got {0}")]
    UnsupportedDimension(usize),

    #[error("element set is empty")]
    EmptyElementSet,

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("node {0} is not on the boundary of the given region")]
    NotOnBoundary(usize),

    #[error("{blocks} blocks per side do not divide {cells} cells per side")]
    IndivisibleBlocks { blocks: usize, cells: usize },

    #[error("overlap must be at least one element layer")]
    ZeroOverlap,

    #[error("overlapped subdomain {0} covers the whole domain")]
    OverlapTooLarge(usize),

    #[error("basis is rank deficient (rank {rank} of {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("subspaces are not complementary")]
    NotComplementary,

    #[error("vector is not in the interior subspace: block {block} has a nonzero boundary value")]
    NotInG { block: usize },

    #[error("dense dimension {size} exceeds the cap {cap}")]
    DenseCapExceeded { size: usize, cap: usize },

    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),

    #[error("missing constant: {0}")]
    MissingConstant(&'static str),

    #[error("Krylov breakdown: {0}")]
    Breakdown(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
