use std::path::PathBuf;

/// Errors raised by the simulator, analysis routines and front ends.
#[derive(Debug, thiserror::Error)]
pub enum SeeError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("rotation increment of {magnitude:.4} rad exceeds the per-step limit of {limit} rad")]
    StepTooLarge { magnitude: f64, limit: f64 },

    #[error("augmented system is singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("direction is kinematically locked by the volume constraints; stiffness is unbounded")]
    LockedDirection,

    #[error("negative volume {0:.6e} m^3")]
    NegativeVolume(f64),

    #[error("pose cloud is empty")]
    EmptyCloud,

    #[error("configuration {index} has {found} samples, at least {required} required")]
    InsufficientSamples {
        index: usize,
        found: usize,
        required: usize,
    },

    #[error("simulation failed at grid point {index} (volumes {volumes_ml:?} ml): {source}")]
    GridPoint {
        index: usize,
        volumes_ml: Vec<f64>,
        #[source]
        source: Box<SeeError>,
    },

    #[error("convex hull construction failed: {0}")]
    Hull(String),

    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<SeeError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record: {0}")]
    Format(String),
}

impl SeeError {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        SeeError::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        SeeError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SeeError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        SeeError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by user input rather than by a numerical failure.
    pub fn is_input_error(&self) -> bool {
        match self {
            SeeError::InvalidParameter { .. }
            | SeeError::Config { .. }
            | SeeError::Io { .. }
            | SeeError::Format(_)
            | SeeError::NegativeVolume(_)
            | SeeError::InsufficientSamples { .. }
            | SeeError::EmptyCloud => true,
            SeeError::Context { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

pub type Result<T, E = SeeError> = std::result::Result<T, E>;
