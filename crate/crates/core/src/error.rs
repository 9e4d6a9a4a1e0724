use thiserror::Error;

use ligbind_tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("tensor error: {0}")]
    Tensor(#[from] TensorError),
    #[error(
        "pair distance {distance} Å between ligand atom {ligand} and protein atom {protein} is below the floor of {floor} Å"
    )]
    DistanceBelowFloor {
        ligand: usize,
        protein: usize,
        distance: f64,
        floor: f64,
    },
    #[error("distance {distance} Å is below the floor of {floor} Å")]
    BelowFloor { distance: f64, floor: f64 },
    #[error("node {0} has no incoming edges")]
    EmptyNeighborhood(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("{0} is constant; correlation is undefined")]
    ConstantInput(&'static str),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("non-finite loss on complex `{complex_id}`")]
    NonFiniteLoss { complex_id: String },
    #[error("numerical failure on complex `{complex_id}`: {source}")]
    Numerical {
        complex_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("unsupported checkpoint schema version {found} (expected {expected})")]
    SchemaVersion { found: u64, expected: u64 },
    #[error("corrupted checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("synthetic generation failed: {0}")]
    Generation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn from_json(e: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => Error::Schema(e.to_string()),
            Category::Io => Error::Io(e.into()),
            Category::Syntax | Category::Eof => Error::Syntax(e.to_string()),
        }
    }

    /// True for errors that stem from arithmetic on the inputs rather than
    /// from malformed data or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Tensor(_)
                | Error::NonFiniteLoss { .. }
                | Error::Numerical { .. }
                | Error::DistanceBelowFloor { .. }
                | Error::BelowFloor { .. }
        )
    }
}
