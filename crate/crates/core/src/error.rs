use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("position {0:?} is outside the grid")]
    OutOfBounds([f64; 3]),
    #[error("phantom spec: {0}")]
    Spec(String),
    #[error("phantom has no WM/ROI interface voxels")]
    EmptyInterface,
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training data: {0}")]
    TrainingData(String),
    #[error("config: {0}")]
    Config(String),
    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("file format: expected {expected}, found {found}")]
    Format { expected: String, found: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Tensor(#[from] autodiff::TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end: 2 for numerical
    /// failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 2,
            _ => 1,
        }
    }
}
