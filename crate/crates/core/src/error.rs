use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("overlap |c| = {value} exceeds 1 (field or mode shape not normalized)")]
    Normalization { value: f64 },

    #[error("singular response at omega = {omega:e} rad/s (|D| = {magnitude:e}); system at instability threshold")]
    SingularResponse { omega: f64, magnitude: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration is unstable: {0}")]
    Unstable(String),

    #[error("trajectory diverged at t = {time:e} s (state component {component})")]
    Divergence { time: f64, component: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
