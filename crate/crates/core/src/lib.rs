// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! Smooth control pulses for coupled spin-1/2 systems.
//!
//! A small tanh network maps normalized time to control amplitudes. Its
//! parameters are trained by differentiating fidelity through a
//! piecewise-constant propagator. A GRAPE optimizer over a piecewise-constant
//! table shares the same propagation and objective code.

pub mod analysis;
pub mod error;
pub mod grape;
pub mod linalg;
pub mod network;
pub mod objectives;
pub mod optimizer;
pub mod propagation;
pub mod pulse;
pub mod spin_system;
pub mod targets;

pub use error::{Error, Result};
pub use linalg::{OperatorMatrix, C64};
pub use network::NetworkParams;
pub use objectives::{Normalization, ObjectiveSpec};
pub use propagation::PulseSource;
pub use pulse::{PulseTable, SamplingRule};
pub use spin_system::SpinSystem;
