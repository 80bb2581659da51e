//! Value-iteration engines, strategy synthesis and certificates.

mod certify;
mod equilibrium;
mod mdp;
mod qualitative;
mod reach;
mod reward;
mod settings;
mod strategy;

use thiserror::Error;

use crate::matrix::MatrixError;

pub use certify::{
    best_response_value, certify_zero_sum, check_epsilon_equilibrium, EquilibriumCertificate, Objective,
    ZeroSumCertificate,
};
pub use equilibrium::{equilibrium_vi, EquilibriumResult};
pub use mdp::mdp_max_reach;
pub use qualitative::{qualitative_reach, Qualitative};
pub use reach::{bounded_reach, csg_zero_sum_reach, tsg_zero_sum_reach, zero_sum_reach, ZeroSumResult};
pub use reward::zero_sum_expected_reward;
pub use settings::EngineSettings;
pub use strategy::{JointStrategy, Memory, Profile, Strategy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("{0}")]
    WrongKind(String),
    #[error("unknown reward structure '{0}'")]
    UnknownReward(String),
    #[error("reward '{name}' is negative at state {state}")]
    NegativeReward { name: String, state: usize },
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Per-state values produced by an engine run.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector {
    pub values: Vec<f64>,
    pub iterations: usize,
    /// Largest change in the final sweep.
    pub residual: f64,
    pub converged: bool,
}
