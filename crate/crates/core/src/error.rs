use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SsmError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("teacher impulse response is identically zero; normalized error undefined")]
    ZeroTeacher,

    #[error("effective rank undefined for an all-zero vector")]
    UndefinedRank,

    #[error("vandermonde system ill-conditioned (cond estimate {cond:e}); pick better separated nodes")]
    IllConditioned { cond: f64 },

    #[error("singular linear system")]
    Singular,

    #[error("(d={d}, L={l}) outside the saddle regime: {reason}")]
    Regime { d: usize, l: usize, reason: String },

    #[error("integration failed at t={t:e} with step h={h:e}")]
    Integration { t: f64, h: f64, last_state: Vec<f64> },

    #[error("optimization diverged at iteration {iter}: loss={loss}")]
    Divergence { iter: usize, loss: f64 },
}

pub type Result<T> = std::result::Result<T, SsmError>;
