use thiserror::Error;

use crate::shs::Violation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid chain specification: {}", join(.0))]
    InvalidSpec(Vec<Violation>),

    #[error("stationary balance system is singular (chain is reducible)")]
    SingularChain,

    #[error("conditional age moment system is not uniquely solvable")]
    SingularMomentSystem,

    #[error("{what} residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("chain has {0} closed classes reachable from the initial state; stationary law is not unique")]
    DegenerateChain(usize),

    #[error(
        "no service path: every task is routed to a local processor running at zero frequency"
    )]
    NoServicePath,

    #[error("UE index {index} out of range for a population of {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("descent stalled with projected gradient norm {grad_norm:e}")]
    StalledDescent { grad_norm: f64 },

    #[error("non-finite cost at outer iteration {iteration}, type {type_id}: policy {policy:?}")]
    NonFinite {
        iteration: usize,
        type_id: usize,
        policy: [f64; 4],
    },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
