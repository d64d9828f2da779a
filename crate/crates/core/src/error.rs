use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Numeric,
    CapExceeded,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix has no entries")]
    EmptyMatrix,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is singular or numerically singular")]
    Singular,

    #[error("chain is reducible: {closed_classes} closed classes, stationary distribution is not unique")]
    Reducible { closed_classes: usize },

    #[error("negative off-diagonal intensity {value} at ({row}, {col})")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },

    #[error("positive diagonal intensity {value} in row {row}")]
    PositiveDiagonal { row: usize, value: f64 },

    #[error("row {row} sums to {sum}, expected 0")]
    RowSum { row: usize, sum: f64 },

    #[error("row {row} of sub-intensity matrix sums to {sum} > 0")]
    SubsystemRowSum { row: usize, sum: f64 },

    #[error("state {state} is absorbing (zero exit rate)")]
    AbsorbingState { state: usize },

    #[error("state subset is empty")]
    EmptySubset,

    #[error("state index {index} out of range for {size} states")]
    StateOutOfRange { index: usize, size: usize },

    #[error("subsystem is closed: no exit from the retained states is reachable")]
    ClosedSubsystem,

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("value {value} out of domain for variable {var} (domain size {card})")]
    ValueOutOfDomain { var: usize, value: usize, card: usize },

    #[error("variable {0} appears more than once in a scope")]
    DuplicateVariable(usize),

    #[error("variable {var} has inconsistent domain sizes ({a} vs {b})")]
    DomainMismatch { var: usize, a: usize, b: usize },

    #[error("subject sets overlap on variable {var}")]
    OverlappingSubjects { var: usize },

    #[error("instantiation covers {found} variables, expected {expected}")]
    IncompleteInstantiation { expected: usize, found: usize },

    #[error("variable {var} is not a subject variable of the conditional intensity matrix")]
    NotInSubject { var: usize },

    #[error("reference distribution assigns zero mass to {state}; conditional is undefined")]
    ZeroMassConditioning { state: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("joint space of {size} states exceeds the cap of {cap}")]
    CapExceeded { size: u128, cap: usize },

    #[error("unknown variable '{0}'")]
    UnknownVariable(String),

    #[error("unknown value '{value}' for variable '{var}'")]
    UnknownValue { var: String, value: String },

    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),

    #[error("evidence {var}={value} at t={time} has zero probability")]
    ZeroProbabilityEvidence { time: f64, var: String, value: String },

    #[error("invalid time or duration: {0}")]
    InvalidTime(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("clique tree invariant violated: {0}")]
    CliqueTree(String),

    #[error("message {from}->{to}: {cause}")]
    Message { from: usize, to: usize, cause: Box<Error> },

    #[error("{context}: {cause}")]
    Context { context: String, cause: Box<Error> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), cause: Box::new(self) }
    }

    /// The error beneath any message or context wrappers.
    pub fn innermost(&self) -> &Error {
        match self {
            Error::Message { cause, .. } | Error::Context { cause, .. } => cause.innermost(),
            other => other,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::CapExceeded { .. } => ErrorCategory::CapExceeded,
            Error::Singular
            | Error::Reducible { .. }
            | Error::ClosedSubsystem
            | Error::ZeroMassConditioning { .. }
            | Error::ZeroProbabilityEvidence { .. }
            | Error::AbsorbingState { .. }
            | Error::NonFinite(_)
            | Error::CliqueTree(_)
            | Error::Io(_) => ErrorCategory::Numeric,
            Error::Message { cause, .. } | Error::Context { cause, .. } => cause.category(),
            _ => ErrorCategory::Validation,
        }
    }
}
