// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! Adam training loop with threshold stopping, checkpoints and multi-start.

use std::time::Instant;

use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkParams;
use crate::objectives::{loss_and_gradient, ObjectiveSpec};
use crate::spin_system::SpinSystem;

/// Consecutive iterations below `F0 − 0.5` that count as divergence.
pub const DIVERGENCE_WINDOW: usize = 100;
pub const DIVERGENCE_DROP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub f_threshold: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub n_fine: usize,
    pub log_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            f_threshold: 0.99,
            max_iters: 20_000,
            seed: 0,
            n_fine: crate::propagation::DEFAULT_N_FINE,
            log_every: 100,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("optimizer.{field}"), msg));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate", format!("must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return bad("adam_beta1", format!("must lie in [0, 1), got {}", self.adam_beta1));
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam_beta2", format!("must lie in [0, 1), got {}", self.adam_beta2));
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps", format!("must be positive, got {}", self.adam_eps));
        }
        if !(self.f_threshold > 0.0 && self.f_threshold <= 1.0) {
            return bad("f_threshold", format!("must lie in (0, 1], got {}", self.f_threshold));
        }
        if self.max_iters < 1 {
            return bad("max_iters", "must be at least 1".into());
        }
        if self.n_fine < 1 {
            return bad("n_fine", "must be at least 1".into());
        }
        Ok(())
    }
}

/// First and second moment estimates; `t` counts applied updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One descent step on a loss whose gradient is `grad`.
    pub fn step(&mut self, config: &OptimizerConfig, x: &mut [f64], grad: &[f64]) {
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..x.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            x[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iter: usize,
    pub fidelity: f64,
    pub grad_norm: f64,
    /// Seconds since the run started; kept out of serialized records so reruns are byte-identical.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
}

/// Everything needed to inspect a run or continue it bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "P: Serialize", deserialize = "P: DeserializeOwned"))]
pub struct RunRecord<P> {
    pub iterations: Vec<IterationRow>,
    pub final_params: P,
    pub best_params: P,
    pub best_fidelity: f64,
    pub best_iter: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub config: OptimizerConfig,
    pub system: SpinSystem,
    pub objective: ObjectiveSpec,
    /// Adam moments at `final_params`.
    pub adam: Option<AdamState>,
    /// Ascent gradient evaluated at `final_params` but not yet applied.
    pub pending_gradient: Option<Vec<f64>>,
    pub below_initial_streak: usize,
}

impl<P> RunRecord<P> {
    pub fn final_fidelity(&self) -> f64 {
        self.iterations.last().map_or(f64::NAN, |r| r.fidelity)
    }

    pub fn n_iterations(&self) -> usize {
        self.iterations.last().map_or(0, |r| r.iter)
    }

    pub fn initial_fidelity(&self) -> f64 {
        self.iterations.first().map_or(f64::NAN, |r| r.fidelity)
    }
}

impl<P: Serialize> RunRecord<P> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl<P: DeserializeOwned> RunRecord<P> {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// A differentiable fidelity over a flat parameter vector.
pub trait Problem: Sync {
    type Params: Clone;

    fn flatten(&self, params: &Self::Params) -> Vec<f64>;
    fn unflatten(&self, template: &Self::Params, x: &[f64]) -> Result<Self::Params>;
    /// Fidelity and the ascent direction ∂(objective)/∂x.
    fn fidelity_and_gradient(&self, params: &Self::Params) -> Result<(f64, Vec<f64>)>;
    /// Applied after every update (e.g. amplitude clipping).
    fn project(&self, _x: &mut [f64]) {}
}

/// Network training against a fixed objective.
pub struct NetworkProblem<'a> {
    pub system: &'a SpinSystem,
    pub objective: &'a ObjectiveSpec,
    pub n_fine: usize,
}

impl Problem for NetworkProblem<'_> {
    type Params = NetworkParams;

    fn flatten(&self, params: &NetworkParams) -> Vec<f64> {
        params.to_flat()
    }

    fn unflatten(&self, template: &NetworkParams, x: &[f64]) -> Result<NetworkParams> {
        let mut p = template.clone();
        p.set_flat(x)?;
        Ok(p)
    }

    fn fidelity_and_gradient(&self, params: &NetworkParams) -> Result<(f64, Vec<f64>)> {
        let (f, g) = loss_and_gradient(params, self.system, self.objective, self.n_fine)?;
        Ok((f, g.to_flat()))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Observer hook called after every evaluated iteration.
pub type Observer<'o> = &'o (dyn Fn(&IterationRow) + Sync);

/// Starts a fresh record at `params0` and runs up to `config.max_iters` updates.
pub fn optimize<Q: Problem>(
    problem: &Q,
    params0: Q::Params,
    system: &SpinSystem,
    objective: &ObjectiveSpec,
    config: &OptimizerConfig,
    observer: Option<Observer<'_>>,
) -> Result<RunRecord<Q::Params>> {
    config.validate()?;
    let mut record = RunRecord {
        iterations: Vec::new(),
        final_params: params0.clone(),
        best_params: params0,
        best_fidelity: f64::NEG_INFINITY,
        best_iter: 0,
        converged: false,
        stop_reason: StopReason::MaxIters,
        config: config.clone(),
        system: system.clone(),
        objective: objective.clone(),
        adam: None,
        pending_gradient: None,
        below_initial_streak: 0,
    };
    run_loop(problem, &mut record, 0, observer)?;
    Ok(record)
}

/// Continues a record for `extra_iters` more updates.
pub fn optimize_resume<Q: Problem>(
    problem: &Q,
    mut record: RunRecord<Q::Params>,
    extra_iters: usize,
    observer: Option<Observer<'_>>,
) -> Result<RunRecord<Q::Params>> {
    if extra_iters == 0 || record.converged {
        return Ok(record);
    }
    if record.adam.is_none() || record.pending_gradient.is_none() || record.iterations.is_empty() {
        return Err(Error::MissingMoments);
    }
    let start = record.n_iterations() + 1;
    record.config.max_iters += extra_iters;
    run_loop(problem, &mut record, start, observer)?;
    Ok(record)
}

fn run_loop<Q: Problem>(
    problem: &Q,
    record: &mut RunRecord<Q::Params>,
    start: usize,
    observer: Option<Observer<'_>>,
) -> Result<()> {
    let config = record.config.clone();
    let clock = Instant::now();
    let mut x = problem.flatten(&record.final_params);
    let mut adam = record.adam.take().unwrap_or_else(|| AdamState::new(x.len()));
    if let Some(g) = record.pending_gradient.take() {
        apply_update(problem, &config, &mut adam, &mut x, &g);
        record.final_params = problem.unflatten(&record.final_params, &x)?;
    }
    for iter in start..=config.max_iters {
        let (f, g) = problem.fidelity_and_gradient(&record.final_params)?;
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("fidelity at iteration {iter}")));
        }
        let row = IterationRow {
            iter,
            fidelity: f,
            grad_norm: norm(&g),
            wall_time_s: clock.elapsed().as_secs_f64(),
        };
        if let Some(obs) = observer {
            obs(&row);
        }
        record.iterations.push(row);
        if f > record.best_fidelity {
            record.best_fidelity = f;
            record.best_iter = iter;
            record.best_params = record.final_params.clone();
        }
        let f0 = record.initial_fidelity();
        if f < f0 - DIVERGENCE_DROP {
            record.below_initial_streak += 1;
            if record.below_initial_streak >= DIVERGENCE_WINDOW {
                return Err(Error::Diverged {
                    iteration: iter,
                    fidelity: f,
                    initial: f0,
                });
            }
        } else {
            record.below_initial_streak = 0;
        }
        if f >= config.f_threshold {
            record.converged = true;
            record.stop_reason = StopReason::Converged;
            record.adam = Some(adam);
            record.pending_gradient = Some(g);
            return Ok(());
        }
        if iter == config.max_iters {
            record.pending_gradient = Some(g);
            break;
        }
        apply_update(problem, &config, &mut adam, &mut x, &g);
        record.final_params = problem.unflatten(&record.final_params, &x)?;
    }
    record.stop_reason = StopReason::MaxIters;
    record.adam = Some(adam);
    Ok(())
}

fn apply_update<Q: Problem>(problem: &Q, config: &OptimizerConfig, adam: &mut AdamState, x: &mut [f64], ascent: &[f64]) {
    let descent: Vec<f64> = ascent.iter().map(|g| -g).collect();
    adam.step(config, x, &descent);
    problem.project(x);
}

/// Trains a network on 1 − F with Adam.
pub fn train(
    params0: NetworkParams,
    system: &SpinSystem,
    objective: &ObjectiveSpec,
    config: &OptimizerConfig,
) -> Result<RunRecord<NetworkParams>> {
    train_observed(params0, system, objective, config, None)
}

pub fn train_observed(
    params0: NetworkParams,
    system: &SpinSystem,
    objective: &ObjectiveSpec,
    config: &OptimizerConfig,
    observer: Option<Observer<'_>>,
) -> Result<RunRecord<NetworkParams>> {
    params0.check_channels(system.n_channels())?;
    objective.validate()?;
    let problem = NetworkProblem {
        system,
        objective,
        n_fine: config.n_fine,
    };
    optimize(&problem, params0, system, objective, config, observer)
}

/// Continues a network run; equivalent to an uninterrupted run with the larger budget.
pub fn resume(record: RunRecord<NetworkParams>, extra_iters: usize) -> Result<RunRecord<NetworkParams>> {
    resume_observed(record, extra_iters, None)
}

pub fn resume_observed(
    record: RunRecord<NetworkParams>,
    extra_iters: usize,
    observer: Option<Observer<'_>>,
) -> Result<RunRecord<NetworkParams>> {
    let system = record.system.clone();
    let objective = record.objective.clone();
    let problem = NetworkProblem {
        system: &system,
        objective: &objective,
        n_fine: record.config.n_fine,
    };
    optimize_resume(&problem, record, extra_iters, observer)
}

/// Runs seeds `base.seed + i` in parallel and keeps the highest final fidelity (ties go to the lower seed).
pub fn multi_start<F>(
    n_starts: usize,
    base: &OptimizerConfig,
    init: F,
    system: &SpinSystem,
    objective: &ObjectiveSpec,
) -> Result<RunRecord<NetworkParams>>
where
    F: Fn(u64) -> Result<NetworkParams> + Sync,
{
    if n_starts == 0 {
        return Err(Error::config("multi_start", "need at least one start"));
    }
    let runs: Vec<Result<RunRecord<NetworkParams>>> = (0..n_starts as u64)
        .into_par_iter()
        .map(|i| {
            let config = OptimizerConfig {
                seed: base.seed + i,
                ..base.clone()
            };
            train(init(config.seed)?, system, objective, &config)
        })
        .collect();
    let mut best: Option<RunRecord<NetworkParams>> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.final_fidelity() > b.final_fidelity()) {
            best = Some(run);
        }
    }
    Ok(best.expect("n_starts >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::OperatorMatrix;
    use crate::objectives::Normalization;
    use crate::spin_system::ChannelGroup;
    use crate::targets::cnot;

    fn small_problem() -> (SpinSystem, ObjectiveSpec, NetworkParams) {
        let system = SpinSystem::defm();
        let obj = cnot(0, 1, 2).unwrap().objective(Normalization::Normalized).unwrap();
        let p = NetworkParams::init(&[1, 8, 8, 4], 2.0 * std::f64::consts::PI * 400.0, 0.02, 3).unwrap();
        (system, obj, p)
    }

    fn quick_config(max_iters: usize) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: 2e-2,
            max_iters,
            n_fine: 32,
            f_threshold: 0.999,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn adam_matches_hand_trace() {
        // f(x) = x², x0 = 1, lr 0.1; reference values from an independent scalar evaluation.
        let config = OptimizerConfig {
            learning_rate: 0.1,
            ..OptimizerConfig::default()
        };
        let mut adam = AdamState::new(1);
        let mut x = [1.0];
        for expected in [0.9000000005, 0.8004122286917927, 0.70158627294603] {
            let g = [2.0 * x[0]];
            adam.step(&config, &mut x, &g);
            assert!((x[0] - expected).abs() < 1e-15, "{} vs {expected}", x[0]);
        }
        assert_eq!(adam.t, 3);
    }

    #[test]
    fn config_validation_names_fields() {
        let bad = OptimizerConfig {
            f_threshold: 1.5,
            ..OptimizerConfig::default()
        };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("optimizer.f_threshold"), "{msg}");
        let bad = OptimizerConfig {
            max_iters: 0,
            ..OptimizerConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn already_satisfied_converges_at_zero() {
        let system = SpinSystem::new(1, vec![ChannelGroup(vec![0])], vec![], vec![0.0]).unwrap();
        let mut p = NetworkParams::init(&[1, 3, 2], 10.0, 0.01, 0).unwrap();
        p.set_flat(&vec![0.0; p.n_parameters()]).unwrap();
        let obj = ObjectiveSpec::gate(OperatorMatrix::identity(2), Normalization::Normalized).unwrap();
        let r = train(p, &system, &obj, &quick_config(50)).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations.len(), 1);
        assert_eq!(r.n_iterations(), 0);
    }

    #[test]
    fn training_improves_and_records_best() {
        let (system, obj, p) = small_problem();
        let r = train(p, &system, &obj, &quick_config(60)).unwrap();
        assert!(r.best_fidelity >= r.initial_fidelity());
        assert!(r.best_fidelity > r.initial_fidelity() + 0.05);
        assert_eq!(r.final_fidelity(), r.iterations.last().unwrap().fidelity);
        assert!(r.iterations.iter().all(|row| row.fidelity.is_finite()));
        let running_max: Vec<f64> = r
            .iterations
            .iter()
            .scan(f64::NEG_INFINITY, |m, row| {
                *m = m.max(row.fidelity);
                Some(*m)
            })
            .collect();
        assert_eq!(*running_max.last().unwrap(), r.best_fidelity);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let (system, obj, p) = small_problem();
        let a = train(p.clone(), &system, &obj, &quick_config(15)).unwrap();
        let b = train(p, &system, &obj, &quick_config(15)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (system, obj, p) = small_problem();
        let full = train(p.clone(), &system, &obj, &quick_config(20)).unwrap();
        let half = train(p, &system, &obj, &quick_config(10)).unwrap();
        let text = half.to_json().unwrap();
        let reloaded: RunRecord<NetworkParams> = RunRecord::from_json(&text).unwrap();
        assert_eq!(resume(reloaded.clone(), 0).unwrap().to_json().unwrap(), text);
        let resumed = resume(reloaded, 10).unwrap();
        assert_eq!(resumed.to_json().unwrap(), full.to_json().unwrap());
    }

    #[test]
    fn resume_without_moments_fails() {
        let (system, obj, p) = small_problem();
        let mut r = train(p, &system, &obj, &quick_config(3)).unwrap();
        r.adam = None;
        assert!(matches!(resume(r, 5), Err(Error::MissingMoments)));
    }

    #[test]
    fn resume_after_convergence_is_noop() {
        let system = SpinSystem::new(1, vec![ChannelGroup(vec![0])], vec![], vec![0.0]).unwrap();
        let mut p = NetworkParams::init(&[1, 3, 2], 10.0, 0.01, 0).unwrap();
        p.set_flat(&vec![0.0; p.n_parameters()]).unwrap();
        let obj = ObjectiveSpec::gate(OperatorMatrix::identity(2), Normalization::Normalized).unwrap();
        let r = train(p, &system, &obj, &quick_config(50)).unwrap();
        let again = resume(r.clone(), 100).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn divergence_is_detected() {
        struct Falling;
        impl Problem for Falling {
            type Params = Vec<f64>;
            fn flatten(&self, p: &Vec<f64>) -> Vec<f64> {
                p.clone()
            }
            fn unflatten(&self, _: &Vec<f64>, x: &[f64]) -> Result<Vec<f64>> {
                Ok(x.to_vec())
            }
            fn fidelity_and_gradient(&self, p: &Vec<f64>) -> Result<(f64, Vec<f64>)> {
                // the reported ascent direction moves x away from the peak at 1
                Ok((0.9 - (1.0 - p[0]).abs().min(1.0), vec![-1.0]))
            }
        }
        let system = SpinSystem::defm();
        let obj = cnot(0, 1, 2).unwrap().objective(Normalization::Normalized).unwrap();
        let config = OptimizerConfig {
            learning_rate: 0.05,
            max_iters: 1000,
            ..OptimizerConfig::default()
        };
        let err = optimize(&Falling, vec![1.0], &system, &obj, &config, None).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn multi_start_single_equals_train() {
        let (system, obj, _) = small_problem();
        let config = quick_config(5);
        let init = |seed| NetworkParams::init(&[1, 8, 8, 4], 2.0 * std::f64::consts::PI * 400.0, 0.02, seed);
        let one = multi_start(1, &config, init, &system, &obj).unwrap();
        let direct = train(init(config.seed).unwrap(), &system, &obj, &config).unwrap();
        assert_eq!(one.to_json().unwrap(), direct.to_json().unwrap());
        let three = multi_start(3, &config, init, &system, &obj).unwrap();
        let again = multi_start(3, &config, init, &system, &obj).unwrap();
        assert_eq!(three.to_json().unwrap(), again.to_json().unwrap());
        assert!(three.final_fidelity() >= one.final_fidelity());
    }
}
