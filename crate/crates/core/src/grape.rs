// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! Piecewise-constant GRAPE baseline.
//!
//! The optimization variables are x = u / amp_limit, so Adam's step size is
//! in units of the amplitude limit. Fidelity and gradients come from the same
//! table code used for network pulses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{table_fidelity_and_gradient, ObjectiveSpec};
use crate::optimizer::{optimize, Observer, OptimizerConfig, Problem, RunRecord};
use crate::propagation::Dynamics;
use crate::pulse::{PulseTable, SamplingRule};
use crate::spin_system::SpinSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipRule {
    /// Hard clip to ±amp_limit after every step.
    #[default]
    Clip,
    /// Quadratic penalty on |u| beyond amp_limit.
    Penalty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrapeInit {
    #[default]
    Random,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrapeConfig {
    pub n_segments: usize,
    pub duration: f64,
    /// rad/s
    pub amp_limit: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub f_threshold: f64,
    pub seed: u64,
    pub clip_rule: ClipRule,
    pub penalty_weight: f64,
    pub init: GrapeInit,
    /// Initial amplitudes are uniform in ±init_scale·amp_limit.
    pub init_scale: f64,
}

impl Default for GrapeConfig {
    fn default() -> Self {
        Self {
            n_segments: 1 << 7,
            duration: 0.02,
            amp_limit: 2.0 * std::f64::consts::PI * 1000.0,
            learning_rate: 1e-2,
            max_iters: 5000,
            f_threshold: 0.99,
            seed: 0,
            clip_rule: ClipRule::Clip,
            penalty_weight: 1.0,
            init: GrapeInit::Random,
            init_scale: 0.2,
        }
    }
}

impl GrapeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_segments < 1 {
            return Err(Error::config("grape.n_segments", "must be at least 1"));
        }
        if !(self.amp_limit > 0.0) || !self.amp_limit.is_finite() {
            return Err(Error::config("grape.amp_limit", format!("must be positive, got {}", self.amp_limit)));
        }
        if !(self.duration > 0.0) {
            return Err(Error::config("grape.duration", format!("must be positive, got {}", self.duration)));
        }
        if !(0.0..=1.0).contains(&self.init_scale) {
            return Err(Error::config("grape.init_scale", "must lie in [0, 1]"));
        }
        self.optimizer_config().validate()
    }

    fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.learning_rate,
            f_threshold: self.f_threshold,
            max_iters: self.max_iters,
            seed: self.seed,
            n_fine: self.n_segments,
            ..OptimizerConfig::default()
        }
    }

    /// Starting table for this configuration.
    pub fn initial_table(&self, channels: usize) -> Result<PulseTable> {
        let n = self.n_segments * channels * 2;
        let samples = match self.init {
            GrapeInit::Zero => vec![0.0; n],
            GrapeInit::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let a = self.init_scale * self.amp_limit;
                (0..n).map(|_| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 }).collect()
            }
        };
        PulseTable::new(self.duration, self.n_segments, channels, samples, SamplingRule::Midpoint)
    }
}

pub struct GrapeProblem<'a> {
    dynamics: Dynamics,
    objective: &'a ObjectiveSpec,
    config: &'a GrapeConfig,
}

impl<'a> GrapeProblem<'a> {
    pub fn new(system: &SpinSystem, objective: &'a ObjectiveSpec, config: &'a GrapeConfig) -> Self {
        Self {
            dynamics: Dynamics::new(system),
            objective,
            config,
        }
    }
}

impl Problem for GrapeProblem<'_> {
    type Params = PulseTable;

    fn flatten(&self, table: &PulseTable) -> Vec<f64> {
        table.samples().iter().map(|u| u / self.config.amp_limit).collect()
    }

    fn unflatten(&self, template: &PulseTable, x: &[f64]) -> Result<PulseTable> {
        let mut t = template.clone();
        for (u, xi) in t.samples_mut().iter_mut().zip(x) {
            *u = xi * self.config.amp_limit;
        }
        Ok(t)
    }

    fn fidelity_and_gradient(&self, table: &PulseTable) -> Result<(f64, Vec<f64>)> {
        let limit = self.config.amp_limit;
        let (f, g) = table_fidelity_and_gradient(&self.dynamics, table, self.objective, limit)?;
        let mut ascent: Vec<f64> = g.iter().map(|gi| gi * limit).collect();
        if self.config.clip_rule == ClipRule::Penalty {
            for (a, u) in ascent.iter_mut().zip(table.samples()) {
                let x = u / limit;
                let excess = x.abs() - 1.0;
                if excess > 0.0 {
                    *a -= self.config.penalty_weight * 2.0 * excess * x.signum();
                }
            }
        }
        Ok((f, ascent))
    }

    fn project(&self, x: &mut [f64]) {
        if self.config.clip_rule == ClipRule::Clip {
            x.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        }
    }
}

/// Optimizes an `n_segments × 2M` table with Adam and exact gradients.
pub fn grape_train(
    system: &SpinSystem,
    objective: &ObjectiveSpec,
    config: &GrapeConfig,
) -> Result<(PulseTable, RunRecord<PulseTable>)> {
    grape_train_observed(system, objective, config, None)
}

pub fn grape_train_observed(
    system: &SpinSystem,
    objective: &ObjectiveSpec,
    config: &GrapeConfig,
    observer: Option<Observer<'_>>,
) -> Result<(PulseTable, RunRecord<PulseTable>)> {
    config.validate()?;
    objective.validate()?;
    let problem = GrapeProblem::new(system, objective, config);
    let table0 = config.initial_table(system.n_channels())?;
    let record = optimize(&problem, table0, system, objective, &config.optimizer_config(), observer)?;
    Ok((record.final_params.clone(), record))
}
