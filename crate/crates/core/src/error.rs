use thiserror::Error;

pub type Result<T> = std::result::Result<T, CqtError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CqtError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (max |M - M^dagger| = {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("operator is not a projector (max |P^2 - P| = {idempotency:.3e}, max |P - P^dagger| = {hermiticity:.3e})")]
    NotProjector { idempotency: f64, hermiticity: f64 },

    #[error("sample space members {first} and {second} are not orthogonal (max |[D_i][D_j]| = {overlap:.3e})")]
    NotOrthogonal { first: usize, second: usize, overlap: f64 },

    #[error("sample space is incomplete (max |sum [D_i] - I| = {residual:.3e})")]
    Incomplete { residual: f64 },

    #[error("sample space member {0} is the zero subspace")]
    ZeroMember(usize),

    #[error("sample space has {0} members; at most 64 are supported")]
    TooManyMembers(usize),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("{what} index {index} out of range (0..{len})")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },

    #[error("invalid times: {0}")]
    InvalidTimes(String),

    #[error("family is not a framework: compound probabilities require medium consistency (verdict: {verdict})")]
    InconsistentFamily { verdict: String },

    #[error("prehistory of length {prefix_len} has zero probability ({weight:.3e}); conditional measure undefined")]
    ZeroProbabilityPrehistory { prefix_len: usize, weight: f64 },

    #[error("family has {histories} elementary histories, cap is {cap}; use a coarser family")]
    CapExceeded { histories: usize, cap: usize },

    #[error("degenerate measure: V(A) = {value:.3e}")]
    DegenerateMeasure { value: f64 },

    #[error("joint state is not a product of the subsystem states (residual {residual:.3e})")]
    NonProductState { residual: f64 },

    #[error("histories belong to different families or have the wrong length")]
    FamilyMismatch,

    #[error("empty event")]
    EmptyEvent,

    #[error("{0}")]
    Invalid(String),
}
