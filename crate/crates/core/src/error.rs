use thiserror::Error;

pub type Result<T> = std::result::Result<T, QmdpError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmdpError {
    #[error("{requested} qubits exceeds the configured ceiling of {ceiling}")]
    WidthExceedsCeiling { requested: usize, ceiling: usize },

    #[error("a state needs at least one qubit")]
    EmptyRegister,

    #[error("qubit index {qubit} out of range for {num_qubits} qubits")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },

    #[error("qubit {qubit} appears more than once among controls and target")]
    OverlappingQubits { qubit: usize },

    #[error("qubit {qubit} has no measurable outcome (state is not normalized)")]
    DegenerateState { qubit: usize },

    #[error("invalid program: {0}")]
    InvalidProgram(String),

    #[error("{measures} measurements exceed the branching limit of {limit}")]
    BranchExplosion { measures: usize, limit: usize },

    #[error("instruction {index} is not unitary and cannot be inverted")]
    NonUnitarySegment { index: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("transition row (s{state}, a{action}) sums to {sum}, expected 1")]
    RowSum {
        state: usize,
        action: usize,
        sum: f64,
    },

    #[error("width overflow: {0}")]
    WidthOverflow(String),

    #[error("malformed corpus entry {id}: {reason}")]
    MalformedCorpus { id: String, reason: String },

    #[error("corpus entry {id} violates consistency at step {step}: {reason}")]
    Consistency {
        id: String,
        step: usize,
        reason: String,
    },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("row (s{state}, a{action}) cannot be loaded: {reason}")]
    UnsupportedDistribution {
        state: usize,
        action: usize,
        reason: String,
    },

    #[error("unsupported layout: {0}")]
    UnsupportedLayout(String),

    #[error("reward map is not a copy of the next-state bits")]
    NonCopyReward,

    #[error("predicate marks no basis pattern: {0}")]
    EmptyPredicate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("marked probability {0:e} is zero; the predicate is unsatisfiable")]
    ZeroMarkedMass(f64),

    #[error("no trajectory starts in state {0}")]
    NoTrajectory(u64),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for QmdpError {
    fn from(e: std::io::Error) -> Self {
        QmdpError::Io(e.to_string())
    }
}

impl QmdpError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            QmdpError::WidthExceedsCeiling { .. } | QmdpError::BranchExplosion { .. } => 2,
            QmdpError::ZeroMarkedMass(_) | QmdpError::NoTrajectory(_) => 3,
            _ => 1,
        }
    }
}
