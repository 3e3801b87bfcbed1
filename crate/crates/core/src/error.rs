use thiserror::Error;

use crate::factor::VariableId;

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage an error originated in, used for CLI diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Parse,
    Order,
    Build,
    Partition,
    Evaluate,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Parse => "parse",
            Stage::Order => "order",
            Stage::Build => "build",
            Stage::Partition => "partition",
            Stage::Evaluate => "evaluate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable {var} has cardinality {left} in one factor and {right} in another")]
    ScopeConflict {
        var: VariableId,
        left: usize,
        right: usize,
    },
    #[error("variable {0} is not in the factor scope")]
    MissingVariable(VariableId),
    #[error("value {value} is out of range for variable {var} with cardinality {cardinality}")]
    Domain {
        var: VariableId,
        value: usize,
        cardinality: usize,
    },
    #[error("invalid factor: {0}")]
    InvalidFactor(String),
    #[error("line {line}, token {token}: {message}")]
    Parse {
        line: usize,
        token: usize,
        message: String,
    },
    #[error("factor {factor}: {message}")]
    FactorShape { factor: usize, message: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("variable {0} is both observed and queried")]
    EvidenceConflict(VariableId),
    #[error("generator: {0}")]
    Generation(String),
    #[error("elimination order: {0}")]
    Order(String),
    #[error("configuration: {0}")]
    Configuration(String),
    #[error("graph structure: {0}")]
    Structural(String),
    #[error("partition merged incompatible tables: {0}")]
    CorruptedPartition(String),
    #[error("joint state space of {size} assignments exceeds the limit of {limit}")]
    TooLarge { size: u128, limit: u128 },
    #[error("query sets differ: {0}")]
    QueryMismatch(String),
    #[error("marginal of variable {0} has zero total mass")]
    ZeroMass(VariableId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn stage(&self) -> Stage {
        match self {
            Error::Parse { .. }
            | Error::FactorShape { .. }
            | Error::InvalidModel(_)
            | Error::InvalidFactor(_)
            | Error::EvidenceConflict(_)
            | Error::Generation(_)
            | Error::Io(_) => Stage::Parse,
            Error::Order(_) => Stage::Order,
            Error::Configuration(_) | Error::Structural(_) => Stage::Build,
            Error::CorruptedPartition(_) => Stage::Partition,
            Error::ScopeConflict { .. }
            | Error::MissingVariable(_)
            | Error::Domain { .. }
            | Error::TooLarge { .. }
            | Error::QueryMismatch(_)
            | Error::ZeroMass(_) => Stage::Evaluate,
        }
    }
}
