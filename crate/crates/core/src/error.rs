use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("model `{0}` has no reaction network")]
    UnsupportedModel(&'static str),

    #[error("state has {got} components, scheme expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("negative concentration {value:e} M in species {species}")]
    NegativeConcentration { species: &'static str, value: f64 },

    #[error("inconsistent equilibrium: free receptor concentration {0:e} M is negative")]
    InconsistentEquilibrium(f64),

    #[error("integration failed at t = {t:e} s: {reason}")]
    Integration { t: f64, reason: String },

    #[error("control activation is zero; relative response undefined")]
    ZeroControl,

    #[error("curve does not bracket 50% effect")]
    NotBracketing,

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("parameter file: {0}")]
    ParamFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;
