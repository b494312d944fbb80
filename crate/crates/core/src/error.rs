use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("link `{0}` has zero fading gain")]
    SingularLink(&'static str),

    #[error("truncated Gaussian sampler exceeded {0} consecutive rejections")]
    SamplerExhausted(u64),

    #[error("infeasible: outage {outage:e} at maximum power exceeds delta {delta:e}")]
    Infeasible { outage: f64, delta: f64 },

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParam { key: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(what: &'static str, value: f64) -> Error {
    Error::Domain { what, value }
}
