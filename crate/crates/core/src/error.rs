// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised by the pulse-synthesis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("spin index {index} out of range for a {n_spins}-spin system")]
    SpinIndex { index: usize, n_spins: usize },

    #[error("unsupported system size {0}: 1 to 4 spins are supported")]
    SystemSize(usize),

    #[error("invalid spin system: {0}")]
    InvalidSystem(String),

    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid network architecture: {0}")]
    Architecture(String),

    #[error("time {t} outside control window [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("invalid pulse: {0}")]
    InvalidPulse(String),

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("degenerate transfer bound (target/initial pair has zero unitary bound)")]
    DegenerateBound,

    #[error("Lindblad step-size underflow: {0}")]
    StepUnderflow(String),

    #[error("adaptive integrator did not reach tolerance within {max_steps} steps (t = {t})")]
    ToleranceNotReached { max_steps: usize, t: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("optimization diverged at iteration {iteration}: fidelity {fidelity} stayed below initial {initial} - 0.5")]
    Diverged {
        iteration: usize,
        fidelity: f64,
        initial: f64,
    },

    #[error("no pulse supplied for gamma = {gamma}")]
    MissingParams { gamma: f64 },

    #[error("checkpoint is missing optimizer moment state")]
    MissingMoments,

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Configuration error at a dotted field path.
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
