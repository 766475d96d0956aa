//! Command-line entry points and the HTTP service for the simulator.

pub mod cli;
pub mod service;

use siren_core::scenario::ScenarioError;
use siren_core::sim::SimError;
use thiserror::Error;

/// Exit status for bad input: unreadable scenario, pattern or image.
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_FAILED: u8 = 1;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Failed(String),
}

impl GatewayError {
    pub fn exit_code(&self) -> u8 {
        match self {
            GatewayError::Invalid(_) => EXIT_INVALID,
            GatewayError::Failed(_) => EXIT_FAILED,
        }
    }
}

impl From<ScenarioError> for GatewayError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => GatewayError::Failed(e.to_string()),
            _ => GatewayError::Invalid(e.to_string()),
        }
    }
}

impl From<SimError> for GatewayError {
    fn from(e: SimError) -> Self {
        GatewayError::Invalid(e.to_string())
    }
}
