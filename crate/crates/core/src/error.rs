use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("azimuth is undefined at a pole of the Bloch sphere (mu_h * mu_v = 0)")]
    UndefinedAzimuth,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("region `{0}` carries no probability mass")]
    EmptyRegion(String),

    #[error("linear program `{basis}` is infeasible (phase-one residual {residual:.3e})")]
    Infeasible { basis: String, residual: f64 },

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("pipeline error: {0}")]
    Pipeline(String),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain { what, value, domain }
    }
}
