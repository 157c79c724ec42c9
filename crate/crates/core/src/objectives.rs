// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! Gate and state fidelities and their exact gradients.
//!
//! Gradients are taken of the discretized fidelity: an adjoint sweep over the
//! segment propagators, each differentiated with its Fréchet derivative, gives
//! ∂F/∂u per segment and channel. For networks those sensitivities are pulled
//! back through every segment's sample with [`NetworkParams::backprop_into`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{OperatorMatrix, C64};
use crate::network::{NetworkGradient, NetworkParams};
use crate::propagation::{rk4ip_step, Dissipator, Dynamics, PulseSource, Rk4Scratch};
use crate::pulse::{PulseTable, SamplingRule};
use crate::spin_system::{NoiseModel, SpinSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Gate,
    State,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    #[default]
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// U_t for gates, ρ_t for states.
    pub target: OperatorMatrix,
    pub initial: Option<OperatorMatrix>,
    pub normalization: Normalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
}

impl ObjectiveSpec {
    pub fn gate(target: OperatorMatrix, normalization: Normalization) -> Result<Self> {
        let spec = Self {
            kind: ObjectiveKind::Gate,
            target,
            initial: None,
            normalization,
            noise: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn state(target: OperatorMatrix, initial: OperatorMatrix, normalization: Normalization) -> Result<Self> {
        let spec = Self {
            kind: ObjectiveKind::State,
            target,
            initial: Some(initial),
            normalization,
            noise: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same objective evaluated under Lindblad evolution.
    pub fn with_noise(mut self, noise: Option<NoiseModel>) -> Self {
        self.noise = noise;
        self
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ObjectiveKind::Gate => {
                let r = self.target.unitarity_residual();
                if r > 1e-10 {
                    return Err(Error::InvalidObjective(format!(
                        "gate target is not unitary (residual {r:e})"
                    )));
                }
                if self.initial.is_some() {
                    return Err(Error::InvalidObjective("gate objectives take no initial state".into()));
                }
                if self.noise.as_ref().is_some_and(|n| !n.is_noiseless()) {
                    return Err(Error::InvalidObjective(
                        "noisy evolution is only defined for state objectives".into(),
                    ));
                }
            }
            ObjectiveKind::State => {
                let initial = self
                    .initial
                    .as_ref()
                    .ok_or_else(|| Error::InvalidObjective("state objective needs an initial state".into()))?;
                if initial.dim() != self.target.dim() {
                    return Err(Error::Dimension {
                        expected: self.target.dim(),
                        got: initial.dim(),
                    });
                }
                for m in [&self.target, initial] {
                    let residual = m.hermiticity_residual();
                    if residual > 1e-10 {
                        return Err(Error::NotHermitian { residual });
                    }
                }
                if self.normalization == Normalization::Normalized {
                    transfer_bound(&self.target, initial)?;
                }
            }
        }
        Ok(())
    }

    /// Factor turning raw fidelity into the reported value.
    pub fn scale(&self) -> Result<f64> {
        Ok(match (self.kind, self.normalization) {
            (_, Normalization::Raw) => 1.0,
            (ObjectiveKind::Gate, Normalization::Normalized) => {
                let d = self.dim() as f64;
                1.0 / (d * d)
            }
            (ObjectiveKind::State, Normalization::Normalized) => {
                1.0 / transfer_bound(&self.target, self.initial.as_ref().expect("validated"))?
            }
        })
    }

    fn active_noise(&self) -> Option<&NoiseModel> {
        self.noise.as_ref().filter(|n| !n.is_noiseless())
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// |Tr(U_t† U)|², divided by d² when normalized.
pub fn gate_fidelity(u: &OperatorMatrix, target: &OperatorMatrix, normalization: Normalization) -> Result<f64> {
    if u.dim() != target.dim() {
        return Err(Error::Dimension {
            expected: target.dim(),
            got: u.dim(),
        });
    }
    let raw = target.adjoint().trace_product(u).norm_sqr();
    let d = u.dim() as f64;
    Ok(match normalization {
        Normalization::Raw => raw,
        Normalization::Normalized => raw / (d * d),
    })
}

/// Tr(ρ_t ρ), divided by the transfer bound when normalized.
pub fn state_fidelity(
    rho: &OperatorMatrix,
    target: &OperatorMatrix,
    initial: &OperatorMatrix,
    normalization: Normalization,
) -> Result<f64> {
    if rho.dim() != target.dim() {
        return Err(Error::Dimension {
            expected: target.dim(),
            got: rho.dim(),
        });
    }
    let raw = target.trace_product(rho).re;
    Ok(match normalization {
        Normalization::Raw => raw,
        Normalization::Normalized => raw / transfer_bound(target, initial)?,
    })
}

/// max_V Tr(ρ_t V ρ_i V†): dot product of both spectra sorted in descending order.
pub fn transfer_bound(target: &OperatorMatrix, initial: &OperatorMatrix) -> Result<f64> {
    if target.dim() != initial.dim() {
        return Err(Error::Dimension {
            expected: target.dim(),
            got: initial.dim(),
        });
    }
    let a = target.eigenvalues_desc()?;
    let b = initial.eigenvalues_desc()?;
    let bound: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    if bound.abs() < 1e-12 {
        return Err(Error::DegenerateBound);
    }
    Ok(bound)
}

/// Fidelity of a pulse under the objective; Lindblad evolution when the objective carries noise.
pub fn evaluate(system: &SpinSystem, pulse: PulseSource<'_>, objective: &ObjectiveSpec) -> Result<f64> {
    let table = pulse.to_table()?;
    table_fidelity(&Dynamics::new(system), &table, objective, pulse.amp_bound())
}

/// Fidelity of a table; `amp_bound` sizes Lindblad substeps.
pub fn table_fidelity(
    dynamics: &Dynamics,
    table: &PulseTable,
    objective: &ObjectiveSpec,
    amp_bound: f64,
) -> Result<f64> {
    objective.check_dim(dynamics.dim())?;
    let scale = objective.scale()?;
    let f = match (objective.kind, objective.active_noise()) {
        (ObjectiveKind::Gate, _) => {
            let u = dynamics.evolve_unitary(table, None)?.final_state;
            objective.target.adjoint().trace_product(&u).norm_sqr() * scale
        }
        (ObjectiveKind::State, None) => {
            let rho = dynamics
                .evolve_density(table, objective.initial.as_ref().expect("validated"), None)?
                .final_state;
            objective.target.trace_product(&rho).re * scale
        }
        (ObjectiveKind::State, Some(noise)) => {
            let rho = dynamics
                .evolve_lindblad(table, objective.initial.as_ref().expect("validated"), noise, amp_bound, None)?
                .final_state;
            objective.target.trace_product(&rho).re * scale
        }
    };
    if !f.is_finite() {
        return Err(Error::NonFinite("fidelity".into()));
    }
    Ok(f)
}

/// Fidelity and ∂F/∂u for every table entry (same layout as the samples).
pub fn table_fidelity_and_gradient(
    dynamics: &Dynamics,
    table: &PulseTable,
    objective: &ObjectiveSpec,
    amp_bound: f64,
) -> Result<(f64, Vec<f64>)> {
    objective.check_dim(dynamics.dim())?;
    let scale = objective.scale()?;
    let (f, mut grad) = match (objective.kind, objective.active_noise()) {
        (ObjectiveKind::Gate, _) => gate_gradient(dynamics, table, &objective.target)?,
        (ObjectiveKind::State, None) => {
            closed_state_gradient(dynamics, table, &objective.target, objective.initial.as_ref().expect("validated"))?
        }
        (ObjectiveKind::State, Some(noise)) => lindblad_gradient(
            dynamics,
            table,
            &objective.target,
            objective.initial.as_ref().expect("validated"),
            noise,
            amp_bound,
        )?,
    };
    grad.iter_mut().for_each(|g| *g *= scale);
    let f = f * scale;
    if !f.is_finite() {
        return Err(Error::NonFinite("fidelity".into()));
    }
    if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
        let w = 2 * table.channels();
        return Err(Error::NonFinite(format!(
            "gradient at segment {} control {}",
            k / w,
            k % w
        )));
    }
    Ok((f, grad))
}

fn write_segment_gradient(dynamics: &Dynamics, z: &OperatorMatrix, factor: C64, out: &mut [f64]) {
    for (g, c) in out.iter_mut().zip(dynamics.controls()) {
        *g = (factor * z.trace_product(c)).re;
    }
}

/// Raw |g|² with g = Tr(U_t† U).
fn gate_gradient(dynamics: &Dynamics, table: &PulseTable, target: &OperatorMatrix) -> Result<(f64, Vec<f64>)> {
    let segments = dynamics.segments(table, None)?;
    let w = dynamics.controls().len();
    let mut before = Vec::with_capacity(segments.len());
    let mut acc = OperatorMatrix::identity(dynamics.dim());
    for seg in &segments {
        let next = seg.propagator() * &acc;
        before.push(std::mem::replace(&mut acc, next));
    }
    let target_dag = target.adjoint();
    let g = target_dag.trace_product(&acc);
    let mut grad = vec![0.0; segments.len() * w];
    // left = U_t† U_N ... U_{s+1}
    let mut left = target_dag;
    let mut m = OperatorMatrix::zeros(dynamics.dim());
    for (s, seg) in segments.iter().enumerate().rev() {
        OperatorMatrix::mul_into(&before[s], &left, &mut m);
        let z = seg.frechet_pullback(&m);
        write_segment_gradient(dynamics, &z, 2.0 * g.conj(), &mut grad[s * w..(s + 1) * w]);
        left = &left * seg.propagator();
    }
    Ok((g.norm_sqr(), grad))
}

/// Raw Tr(ρ_t U ρ_i U†).
fn closed_state_gradient(
    dynamics: &Dynamics,
    table: &PulseTable,
    target: &OperatorMatrix,
    initial: &OperatorMatrix,
) -> Result<(f64, Vec<f64>)> {
    let segments = dynamics.segments(table, None)?;
    let w = dynamics.controls().len();
    let mut before = Vec::with_capacity(segments.len());
    let mut rho = initial.clone();
    for seg in &segments {
        let u = seg.propagator();
        let next = &(u * &rho) * &u.adjoint();
        before.push(std::mem::replace(&mut rho, next));
    }
    let f = target.trace_product(&rho).re;
    let mut grad = vec![0.0; segments.len() * w];
    // λ_s = B_s† ρ_t B_s with B_s = U_N ... U_{s+1}
    let mut lambda = target.clone();
    for (s, seg) in segments.iter().enumerate().rev() {
        let u_dag = seg.propagator().adjoint();
        let m = &(&before[s] * &u_dag) * &lambda;
        let z = seg.frechet_pullback(&m);
        write_segment_gradient(dynamics, &z, C64::new(2.0, 0.0), &mut grad[s * w..(s + 1) * w]);
        lambda = &(&u_dag * &lambda) * seg.propagator();
    }
    Ok((f, grad))
}

struct Conjugation<'a> {
    u: &'a OperatorMatrix,
    u_dag: &'a OperatorMatrix,
}

impl Conjugation<'_> {
    /// U† ȳ U
    fn pull(&self, y_bar: &OperatorMatrix) -> OperatorMatrix {
        &(self.u_dag * y_bar) * self.u
    }

    /// Adds the dU-coefficient of Re Tr(ȳ† d(U x U†)) to `m`.
    fn accumulate(&self, x: &OperatorMatrix, y_bar: &OperatorMatrix, m: &mut OperatorMatrix) {
        let a = &(x * self.u_dag) * &y_bar.adjoint();
        let b = &(&x.adjoint() * self.u_dag) * y_bar;
        m.axpy_real(1.0, &a);
        m.axpy_real(1.0, &b);
    }
}

/// Raw Tr(ρ_t ρ(T)) under the interaction-picture RK4 scheme, differentiated exactly.
fn lindblad_gradient(
    dynamics: &Dynamics,
    table: &PulseTable,
    target: &OperatorMatrix,
    initial: &OperatorMatrix,
    noise: &NoiseModel,
    amp_bound: f64,
) -> Result<(f64, Vec<f64>)> {
    dynamics.check_table(table)?;
    let dim = dynamics.dim();
    let d = Dissipator::new(noise, dim)?;
    let dt = table.segment_width();
    let m_sub = dynamics.lindblad_substeps(dt, noise.rate(), amp_bound)?;
    let h = dt / m_sub as f64;
    let half = dynamics.segments(table, Some(0.5 * h))?;
    let adjoints: Vec<OperatorMatrix> = half.iter().map(|s| s.propagator().adjoint()).collect();
    let w = dynamics.controls().len();

    let mut scratch = Rk4Scratch::new(dim);
    let mut states = Vec::with_capacity(half.len() * m_sub);
    let mut rho = initial.clone();
    for (seg, u_dag) in half.iter().zip(&adjoints) {
        for _ in 0..m_sub {
            states.push(rho.clone());
            rk4ip_step(seg.propagator(), u_dag, &d, h, &mut rho, &mut scratch);
        }
    }
    let f = target.trace_product(&rho).re;

    let mut grad = vec![0.0; half.len() * w];
    let mut o_bar = target.clone();
    let mut m = OperatorMatrix::zeros(dim);
    let mut work = OperatorMatrix::zeros(dim);
    let mut tmp = OperatorMatrix::zeros(dim);
    for s in (0..half.len()).rev() {
        let conj = Conjugation {
            u: half[s].propagator(),
            u_dag: &adjoints[s],
        };
        m.fill_zero();
        for k in (0..m_sub).rev() {
            let a = &states[s * m_sub + k];
            work.clone_from(a);
            rk4ip_step(conj.u, conj.u_dag, &d, h, &mut work, &mut scratch);
            let sc = &scratch;

            let z_bar = conj.pull(&o_bar);
            conj.accumulate(&sc.z, &o_bar, &mut m);
            let k4_bar = o_bar.scale_real(1.0 / 6.0);
            let mut y4_bar = OperatorMatrix::zeros(dim);
            d.apply_adjoint(h, &k4_bar, &mut y4_bar);
            let w_bar = conj.pull(&y4_bar);
            conj.accumulate(&sc.w, &y4_bar, &mut m);

            let mut rho_i_bar = &z_bar + &w_bar;
            let mut k3_bar = z_bar.scale_real(1.0 / 3.0);
            k3_bar.axpy_real(1.0, &w_bar);
            let mut y3_bar = OperatorMatrix::zeros(dim);
            d.apply_adjoint(h, &k3_bar, &mut y3_bar);
            rho_i_bar.axpy_real(1.0, &y3_bar);
            let mut k2_bar = z_bar.scale_real(1.0 / 3.0);
            k2_bar.axpy_real(0.5, &y3_bar);
            let mut y2_bar = OperatorMatrix::zeros(dim);
            d.apply_adjoint(h, &k2_bar, &mut y2_bar);
            rho_i_bar.axpy_real(1.0, &y2_bar);
            let mut k1_bar = z_bar.scale_real(1.0 / 6.0);
            k1_bar.axpy_real(0.5, &y2_bar);

            let n1_bar = conj.pull(&k1_bar);
            conj.accumulate(&sc.n1, &k1_bar, &mut m);
            d.apply_adjoint(h, &n1_bar, &mut tmp);
            conj.accumulate(a, &rho_i_bar, &mut m);
            o_bar = conj.pull(&rho_i_bar);
            o_bar.axpy_real(1.0, &tmp);
        }
        let z = half[s].frechet_pullback(&m);
        write_segment_gradient(dynamics, &z, C64::new(1.0, 0.0), &mut grad[s * w..(s + 1) * w]);
    }
    Ok((f, grad))
}

/// Fidelity of a network pulse on an `n_fine` midpoint grid and its exact gradient.
pub fn loss_and_gradient(
    params: &NetworkParams,
    system: &SpinSystem,
    objective: &ObjectiveSpec,
    n_fine: usize,
) -> Result<(f64, NetworkGradient)> {
    params.check_channels(system.n_channels())?;
    if n_fine == 0 {
        return Err(Error::InvalidPulse("fine grid must have at least 1 segment".into()));
    }
    let dynamics = Dynamics::new(system);
    let width = params.duration() / n_fine as f64;
    let mut samples = Vec::with_capacity(n_fine * params.output_width());
    let mut tapes = Vec::with_capacity(n_fine);
    for s in 0..n_fine {
        let (u, tape) = params.forward_with_tape(SamplingRule::Midpoint.sample_time(s, width))?;
        samples.extend(u);
        tapes.push(tape);
    }
    let table = PulseTable::new(params.duration(), n_fine, params.n_channels(), samples, SamplingRule::Midpoint)?;
    let (f, amp_grad) = table_fidelity_and_gradient(&dynamics, &table, objective, params.amp_scale())?;
    let mut grad = NetworkGradient::zeros_like(params);
    let w = params.output_width();
    for (s, tape) in tapes.iter().enumerate() {
        params.backprop_into(tape, &amp_grad[s * w..(s + 1) * w], &mut grad)?;
    }
    Ok((f, grad))
}
