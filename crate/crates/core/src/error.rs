use thiserror::Error;

/// Errors produced by the pricing, simulation and analytics routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid position: {0}")]
    InvalidPosition(String),

    #[error("domain error: {what} = {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("optimizer did not converge ({message}); best value found {best}")]
    Optimizer { message: String, best: f64 },

    #[error(
        "no root on [{sigma_lo}, {sigma_hi}]: V({sigma_lo}) - target = {excess_lo}, V({sigma_hi}) - target = {excess_hi}"
    )]
    NoRoot {
        sigma_lo: f64,
        sigma_hi: f64,
        excess_lo: f64,
        excess_hi: f64,
    },

    #[error("model evaluation failed at {variable} = {value}: {source}")]
    Bump {
        variable: &'static str,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("no valid rows ({rejected} rejected)")]
    NoValidRows { rejected: usize },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_positive(what: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain { what, value })
    }
}

pub(crate) fn ensure_nonnegative(what: &'static str, value: f64) -> Result<f64> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain { what, value })
    }
}
