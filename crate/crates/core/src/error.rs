use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite coordinate ({0}, {1})")]
    NonFinite(f64, f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: expected {expected}x{expected}, found {found}x{found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("density must be strictly positive, node {index} holds {value}")]
    NonPositiveDensity { index: usize, value: f64 },

    #[error("density went negative: minimum {min} against maximum {max}")]
    NegativeDensity { min: f64, max: f64 },

    #[error("mass mismatch: desired {desired}, estimated {estimated}")]
    MassMismatch { desired: f64, estimated: f64 },

    #[error("infeasible: minimal herder mass {0} is not below 1")]
    Infeasible(f64),

    #[error("time step {dt} exceeds the stability bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("cannot estimate a density without agents")]
    EmptyEnsemble,

    #[error("no targets to measure containment on")]
    NoTargets,

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, name: &'static str, reason: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: reason(),
        })
    }
}
