use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid horizon {0}")]
    InvalidHorizon(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("entry {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("entry ({i},{j}): {reason}")]
    MalformedMatrix { i: usize, j: usize, reason: String },
    #[error("guarantee violation: served {d} but {p} tasks are due")]
    GuaranteeViolation { p: u64, d: u64 },
    #[error("causality violation: served {d} but only {q} tasks queued")]
    CausalityViolation { d: u64, q: u64 },
    #[error("system not schedulable over interval [{i}, {j})")]
    NotSchedulable { i: usize, j: usize },
    #[error("total {mu} outside feasible range [{lo}, {hi}]")]
    InfeasibleTotal { mu: u64, lo: i64, hi: u64 },
    #[error("no max-slack schedule: total {mu} exceeds queued {q}")]
    NoMaxSlackSchedule { mu: u64, q: u64 },
    #[error("no schedule: class {class} asks {nu} with only {q} queued")]
    NoSchedule { class: usize, nu: u64, q: u64 },
    #[error("oracle instance too large: {0}")]
    OracleTooLarge(String),
    #[error("unsupported service kind: {0}")]
    UnsupportedServiceKind(String),
    #[error("base schedule is outside the baseline polytope")]
    InvalidBase,
    #[error("infeasible design: {0}")]
    InfeasibleDesign(String),
    #[error("policy produced an infeasible schedule at slot {slot}: {detail}")]
    PolicyError { slot: usize, detail: String },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
