use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("level {requested} exceeds the configured maximum {max}")]
    Capacity { requested: usize, max: usize },

    #[error("level 0 has no junction points")]
    NoJunctions,

    #[error("level mismatch: expected {expected}, found {found}")]
    LevelMismatch { expected: usize, found: usize },

    #[error("level {level} has {expected} vertices but the function has {found} values")]
    LengthMismatch {
        level: usize,
        expected: usize,
        found: usize,
    },

    #[error("cell address digit {0} is not in {{0, 1, 2}}")]
    InvalidAddress(u8),

    #[error("graph eigenvalue {0} lies outside the decimation domain [0, 25/4]")]
    DecimationDomain(f64),

    #[error("graph eigenvalue {0} is forbidden for eigenfunction extension")]
    ForbiddenEigenvalue(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("seed residual {residual:e} exceeds tolerance {tolerance:e}")]
    SeedResidual { residual: f64, tolerance: f64 },

    #[error("no convergence after {iterations} iterations: {context}")]
    NonConvergence { iterations: usize, context: String },

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("degenerate eigenspace at eigenvalue {lambda}: {detail}")]
    Degeneracy { lambda: f64, detail: String },

    #[error("invalid parameter `{name}`: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    #[error("coefficients belong to a different basis: {0}")]
    BasisMismatch(String),

    #[error("eigenpair is not a member of the basis")]
    NotInBasis,

    #[error("derivative order {order} is unsupported (maximum {max})")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("nonlinear phase {phase} per step exceeds pi/4 at t = {time}")]
    StepSize { phase: f64, time: f64 },

    #[error("non-finite solution values after last valid time {last_time}")]
    BlowUp { last_time: f64 },

    #[error("dyadic window ({lo}, {hi}] exceeds basis size {size}")]
    WindowExceedsBasis { lo: usize, hi: usize, size: usize },

    #[error("cache format version {found} is not supported (expected {expected})")]
    CacheVersion { found: String, expected: u32 },

    #[error("corrupted basis cache: {0}")]
    CacheCorrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            detail: detail.into(),
        }
    }
}
