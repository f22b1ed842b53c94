use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("gaussian {index} has a non-finite {field}")]
    NonFiniteParameter { index: usize, field: &'static str },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid context: {0}")]
    InvalidContext(String),

    #[error("timestep {t} out of range for schedule with {steps} steps")]
    TimestepOutOfRange { t: usize, steps: usize },

    #[error("degenerate responsibilities")]
    DegenerateResponsibilities,

    #[error("deterministic step has no density")]
    DeterministicStep,

    #[error("reward `{name}` returned a non-finite value ({value})")]
    NonFiniteReward { name: String, value: f64 },

    #[error("image cotangent contains non-finite values")]
    NonFiniteCotangent,

    #[error("non-finite gradient in term `{term}` at iteration {iter}")]
    NonFiniteGradient { term: &'static str, iter: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("scene file: {0}")]
    SceneFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
