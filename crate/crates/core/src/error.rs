use thiserror::Error;

/// Broad failure class, used by the command line front end to select an
/// exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("grid too coarse: {0}")]
    Resolution(String),

    #[error("no guided mode of order {order}: slab below cutoff thickness {cutoff_thickness:.3} nm")]
    Cutoff { order: usize, cutoff_thickness: f64 },

    #[error("no band gap between the two lowest bands (separation {separation:.3e})")]
    NoGap { separation: f64 },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("simulation diverged at step {step} (|field| = {magnitude:.3e})")]
    Divergence { step: usize, magnitude: f64 },

    #[error("non-finite field value at step {step}")]
    NonFinite { step: usize },

    #[error("reference flux too small at {} wavelength(s): {wavelengths:?}", wavelengths.len())]
    Bandwidth { wavelengths: Vec<f64> },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config { .. } | Error::Argument(_) | Error::Geometry(_) => ErrorClass::Config,
            Error::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
