use std::fmt;

use serde::Serialize;

/// Protocol phase a round-level error originated in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Packetize,
    Uplink,
    Recombine,
    Decode,
    GlobalUpdate,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Phase::Packetize => "packetize",
            Phase::Uplink => "uplink",
            Phase::Recombine => "recombine",
            Phase::Decode => "decode",
            Phase::GlobalUpdate => "global-update",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("field mismatch: GF(2^{left}) vs GF(2^{right})")]
    FieldMismatch { left: u32, right: u32 },

    #[error("division by zero in GF(2^{degree})")]
    DivisionByZero { degree: u32 },

    #[error("extension degree {0} not supported (expected 1..=16)")]
    UnsupportedDegree(u32),

    #[error("value {value} is not an element of GF(2^{degree})")]
    ValueOutOfField { value: u32, degree: u32 },

    #[error("no supported field is large enough: need order {required}")]
    FieldTooSmall { required: u64 },

    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix is singular: elimination found no pivot at row {pivot_row}")]
    Singular { pivot_row: usize },

    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("superregularity check needs {count} sub-squares, over the limit of {limit}")]
    BudgetExceeded { count: u128, limit: u128 },

    #[error("invalid placement: {0}")]
    InvalidPlacement(String),

    #[error("worker {worker} has d_k = {d} (must be positive)")]
    Infeasible { worker: usize, d: i64 },

    #[error("all-subsets check refused for K = {k} (limit {limit})")]
    TooManyWorkers { k: usize, limit: usize },

    #[error("Hall condition violated for worker {worker}: slots of workers {deficient:?} ({slots} slots) see only {neighbours} packets")]
    HallDeficiency {
        worker: usize,
        deficient: Vec<usize>,
        slots: usize,
        neighbours: usize,
    },

    #[error("configuration not supported: {0}")]
    Unsupported(String),

    #[error("downlink matrix verification failed: {0}")]
    Construction(String),

    #[error("B_{worker} is rank deficient ({rank} < {cols})")]
    MdsViolation {
        worker: usize,
        rank: usize,
        cols: usize,
    },

    #[error("stacked encoder A is singular: block of worker {worker} is dependent on earlier blocks (rank {rank} of {expected})")]
    SingularEncoder {
        worker: usize,
        rank: usize,
        expected: usize,
    },

    #[error("structural violation: worker {worker} has a nonzero coefficient on unavailable packet {packet}")]
    Locality { worker: usize, packet: usize },

    #[error("property violated: {0}")]
    Property(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("{phase} phase failed: {source}")]
    InPhase {
        phase: Phase,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid demand: {0}")]
    InvalidDemand(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_phase(self, phase: Phase) -> Self {
        Error::InPhase {
            phase,
            source: Box::new(self),
        }
    }

    /// Input errors are malformed documents or unsupported parameters, as
    /// opposed to domain outcomes such as a failed condition or a singular
    /// encoder.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::InPhase { source, .. } => source.is_input_error(),
            Error::InvalidPlacement(_)
            | Error::InvalidDemand(_)
            | Error::UnsupportedDegree(_)
            | Error::ValueOutOfField { .. }
            | Error::Unsupported(_)
            | Error::TooManyWorkers { .. }
            | Error::BudgetExceeded { .. }
            | Error::Json(_) => true,
            _ => false,
        }
    }

    /// Short machine-readable tag for structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::FieldMismatch { .. } => "field_mismatch",
            Error::DivisionByZero { .. } => "division_by_zero",
            Error::UnsupportedDegree(_) => "unsupported_degree",
            Error::ValueOutOfField { .. } => "value_out_of_field",
            Error::FieldTooSmall { .. } => "field_too_small",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Singular { .. } => "singular",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::InvalidPlacement(_) => "invalid_placement",
            Error::Infeasible { .. } => "infeasible",
            Error::TooManyWorkers { .. } => "too_many_workers",
            Error::HallDeficiency { .. } => "hall_deficiency",
            Error::Unsupported(_) => "unsupported",
            Error::Construction(_) => "construction",
            Error::MdsViolation { .. } => "mds_violation",
            Error::SingularEncoder { .. } => "singular_encoder",
            Error::Locality { .. } => "locality",
            Error::Property(_) => "property",
            Error::Protocol(_) => "protocol",
            Error::InPhase { source, .. } => source.kind(),
            Error::InvalidDemand(_) => "invalid_demand",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
