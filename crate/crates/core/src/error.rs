use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge with child node {0} is not an edge of this tree")]
    InvalidEdge(usize),
    #[error("taxon {0} is already present in the tree")]
    DuplicateTaxon(u32),
    #[error("taxon {0} is not present in the tree")]
    UnknownTaxon(u32),
    #[error("edge types are undefined for unrooted trees with fewer than 6 leaves (got {0})")]
    ClassificationUndefined(usize),
    #[error("tree too small: {0}")]
    TooSmall(String),
    #[error("malformed newick at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("edge type {ty} is out of range for a {dim}-colour model")]
    EdgeTypeOutOfRange { ty: usize, dim: usize },
    #[error("urn is not tenable at step {step}: drawing colour {color} from {state:?} with row {row:?} leaves a negative count")]
    Tenability {
        step: usize,
        color: usize,
        state: Vec<i64>,
        row: Vec<i64>,
    },
    #[error("empty urn: cannot draw from a state with zero balls")]
    EmptyUrn,
    #[error("undefined product: ball total t_{0} is zero")]
    UndefinedProduct(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not diagonalizable over the reals: {0}")]
    ComplexSpectrum(String),
    #[error("matrix is defective: {0}")]
    RankDeficient(String),
    #[error("division by zero in {0}")]
    DivisionGuard(String),
    #[error("enumeration too large: {0}")]
    TooLarge(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("rank detection failed: {0}")]
    Rank(String),
    #[error("replicate {replicate} violated an invariant: {msg}")]
    Invariant { replicate: u64, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
