// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! Time evolution under H(t) = H0 + Σ u_c(t) C_c.
//!
//! The production path is piecewise-constant: every segment contributes an
//! exact exponential exp(−i H_s Δt). Networks are first sampled onto a fine
//! grid, so GRAPE tables and network pulses share [`Dynamics::segments`].
//!
//! Open-system evolution uses a fourth-order Runge–Kutta scheme in the
//! interaction picture of each segment Hamiltonian: the coherent part is
//! applied exactly, RK4 only integrates the dissipator. With zero noise the
//! scheme reduces to the unitary product up to round-off.
//!
//! [`propagate_oracle`] is an independent adaptive Dormand–Prince 5(4)
//! integrator that evaluates network pulses in continuous time. It exists to
//! cross-check the piecewise-constant path.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{OperatorMatrix, SegmentExp, C64};
use crate::network::NetworkParams;
use crate::pulse::{PulseTable, SamplingRule};
use crate::spin_system::{NoiseModel, SpinSystem};

/// Default fine grid used when a network pulse is propagated.
pub const DEFAULT_N_FINE: usize = 1 << 12;

/// Upper bound on (γ‖H0‖ + ‖H_s‖)·h for Lindblad substeps.
pub const LINDBLAD_STEP_BOUND: f64 = 0.1;

const MAX_SUBSTEPS_PER_SEGMENT: usize = 10_000_000;

/// Drift plus control operators of a spin system, flattened to `[X1, Y1, X2, Y2, ...]`.
#[derive(Debug, Clone)]
pub struct Dynamics {
    drift: OperatorMatrix,
    controls: Vec<OperatorMatrix>,
    control_norms: Vec<f64>,
    drift_norm: f64,
}

impl Dynamics {
    pub fn new(system: &SpinSystem) -> Self {
        let drift = system.drift_hamiltonian();
        let controls: Vec<OperatorMatrix> = system
            .control_operators()
            .into_iter()
            .flat_map(|(x, y)| [x, y])
            .collect();
        let control_norms = controls
            .iter()
            .map(|c| c.spectral_norm_hermitian().expect("control operators are Hermitian"))
            .collect();
        let drift_norm = drift.spectral_norm_hermitian().expect("drift is Hermitian");
        Self {
            drift,
            controls,
            control_norms,
            drift_norm,
        }
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn n_channels(&self) -> usize {
        self.controls.len() / 2
    }

    pub fn drift(&self) -> &OperatorMatrix {
        &self.drift
    }

    pub fn controls(&self) -> &[OperatorMatrix] {
        &self.controls
    }

    pub fn drift_norm(&self) -> f64 {
        self.drift_norm
    }

    /// H0 + Σ_c amps[c] · C_c
    pub fn hamiltonian(&self, amps: &[f64]) -> OperatorMatrix {
        let mut h = self.drift.clone();
        for (a, c) in amps.iter().zip(&self.controls) {
            if *a != 0.0 {
                h.axpy_real(*a, c);
            }
        }
        h
    }

    /// Bound on ‖H_s‖ when every |u| ≤ `amp_bound`.
    pub fn hamiltonian_norm_bound(&self, amp_bound: f64) -> f64 {
        self.drift_norm + amp_bound * self.control_norms.iter().sum::<f64>()
    }

    pub fn check_table(&self, table: &PulseTable) -> Result<()> {
        if table.channels() != self.n_channels() {
            return Err(Error::InvalidPulse(format!(
                "pulse has {} channels, system has {}",
                table.channels(),
                self.n_channels()
            )));
        }
        Ok(())
    }

    /// Per-segment exponentials with segment width `dt_override` (defaults to the table's width).
    /// Every piecewise-constant propagation in the crate goes through here.
    pub fn segments(&self, table: &PulseTable, dt_override: Option<f64>) -> Result<Vec<SegmentExp>> {
        self.check_table(table)?;
        let dt = dt_override.unwrap_or_else(|| table.segment_width());
        (0..table.n_segments())
            .map(|s| SegmentExp::new(&self.hamiltonian(table.segment(s)), dt))
            .collect()
    }

    /// Substeps per segment satisfying (γ‖H0‖ + ‖H_s‖)·h < [`LINDBLAD_STEP_BOUND`].
    pub fn lindblad_substeps(&self, dt: f64, noise_rate: f64, amp_bound: f64) -> Result<usize> {
        let bound = noise_rate + self.hamiltonian_norm_bound(amp_bound);
        let m = (dt * bound / LINDBLAD_STEP_BOUND).floor();
        if !m.is_finite() || m >= MAX_SUBSTEPS_PER_SEGMENT as f64 {
            return Err(Error::StepUnderflow(format!(
                "segment of {dt:e} s at rate bound {bound:e}/s needs more than {MAX_SUBSTEPS_PER_SEGMENT} substeps"
            )));
        }
        Ok(m as usize + 1)
    }
}

/// A pulse to propagate: a fixed table, or a network sampled at segment midpoints.
#[derive(Debug, Clone, Copy)]
pub enum PulseSource<'a> {
    Table(&'a PulseTable),
    Network {
        params: &'a NetworkParams,
        n_fine: usize,
    },
}

impl<'a> PulseSource<'a> {
    pub fn network(params: &'a NetworkParams) -> Self {
        PulseSource::Network {
            params,
            n_fine: DEFAULT_N_FINE,
        }
    }

    pub fn to_table(&self) -> Result<Cow<'a, PulseTable>> {
        match *self {
            PulseSource::Table(t) => Ok(Cow::Borrowed(t)),
            PulseSource::Network { params, n_fine } => {
                if n_fine == 0 {
                    return Err(Error::InvalidPulse("fine grid must have at least 1 segment".into()));
                }
                Ok(Cow::Owned(params.sample(n_fine, SamplingRule::Midpoint)?))
            }
        }
    }

    /// Bound on |u| used to size Lindblad substeps.
    pub fn amp_bound(&self) -> f64 {
        match *self {
            PulseSource::Table(t) => t.max_abs(),
            PulseSource::Network { params, .. } => params.amp_scale(),
        }
    }

    pub fn duration(&self) -> f64 {
        match *self {
            PulseSource::Table(t) => t.duration(),
            PulseSource::Network { params, .. } => params.duration(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PwcExpm,
    RkAdaptive,
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    /// U(T) or ρ(T).
    pub final_state: OperatorMatrix,
    /// `(t, state)` snapshots when requested, starting at t = 0.
    pub trajectory: Option<Vec<(f64, OperatorMatrix)>>,
    pub method: Method,
    pub n_steps: usize,
}

fn conjugate(u: &OperatorMatrix, u_dag: &OperatorMatrix, x: &OperatorMatrix, tmp: &mut OperatorMatrix, out: &mut OperatorMatrix) {
    OperatorMatrix::mul_into(u, x, tmp);
    OperatorMatrix::mul_into(tmp, u_dag, out);
}

impl Dynamics {
    /// U(T) = ∏ exp(−i H_s Δt), optionally snapshotting every `record_every` segments.
    pub fn evolve_unitary(&self, table: &PulseTable, record_every: Option<usize>) -> Result<EvolutionResult> {
        let segments = self.segments(table, None)?;
        let dt = table.segment_width();
        let mut u = OperatorMatrix::identity(self.dim());
        let mut next = u.clone();
        let mut trajectory = record_every.map(|_| vec![(0.0, u.clone())]);
        for (s, seg) in segments.iter().enumerate() {
            OperatorMatrix::mul_into(seg.propagator(), &u, &mut next);
            std::mem::swap(&mut u, &mut next);
            if let (Some(every), Some(traj)) = (record_every, trajectory.as_mut()) {
                if (s + 1) % every == 0 || s + 1 == segments.len() {
                    traj.push(((s + 1) as f64 * dt, u.clone()));
                }
            }
        }
        Ok(EvolutionResult {
            final_state: u,
            trajectory,
            method: Method::PwcExpm,
            n_steps: segments.len(),
        })
    }

    /// ρ(T) = U ρ0 U† on the same grid, segment by segment.
    pub fn evolve_density(
        &self,
        table: &PulseTable,
        rho0: &OperatorMatrix,
        record_every: Option<usize>,
    ) -> Result<EvolutionResult> {
        self.check_state(rho0)?;
        let segments = self.segments(table, None)?;
        let dt = table.segment_width();
        let mut rho = rho0.clone();
        let mut tmp = OperatorMatrix::zeros(self.dim());
        let mut next = OperatorMatrix::zeros(self.dim());
        let mut trajectory = record_every.map(|_| vec![(0.0, rho.clone())]);
        for (s, seg) in segments.iter().enumerate() {
            let u = seg.propagator();
            conjugate(u, &u.adjoint(), &rho, &mut tmp, &mut next);
            std::mem::swap(&mut rho, &mut next);
            if let (Some(every), Some(traj)) = (record_every, trajectory.as_mut()) {
                if (s + 1) % every == 0 || s + 1 == segments.len() {
                    traj.push(((s + 1) as f64 * dt, rho.clone()));
                }
            }
        }
        Ok(EvolutionResult {
            final_state: rho,
            trajectory,
            method: Method::PwcExpm,
            n_steps: segments.len(),
        })
    }

    /// Lindblad evolution with `amp_bound` sizing the substeps.
    pub fn evolve_lindblad(
        &self,
        table: &PulseTable,
        rho0: &OperatorMatrix,
        noise: &NoiseModel,
        amp_bound: f64,
        record_every: Option<usize>,
    ) -> Result<EvolutionResult> {
        self.check_state(rho0)?;
        self.check_table(table)?;
        let dissipator = Dissipator::new(noise, self.dim())?;
        let dt = table.segment_width();
        let m = self.lindblad_substeps(dt, noise.rate(), amp_bound)?;
        let h = dt / m as f64;
        let half = self.segments(table, Some(0.5 * h))?;
        let mut rho = rho0.clone();
        let mut scratch = Rk4Scratch::new(self.dim());
        let mut trajectory = record_every.map(|_| vec![(0.0, rho.clone())]);
        for (s, seg) in half.iter().enumerate() {
            let u = seg.propagator();
            let u_dag = u.adjoint();
            for _ in 0..m {
                rk4ip_step(u, &u_dag, &dissipator, h, &mut rho, &mut scratch);
            }
            if let (Some(every), Some(traj)) = (record_every, trajectory.as_mut()) {
                if (s + 1) % every == 0 || s + 1 == half.len() {
                    traj.push(((s + 1) as f64 * dt, rho.clone()));
                }
            }
        }
        if rho.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("Lindblad state".into()));
        }
        Ok(EvolutionResult {
            final_state: rho,
            trajectory,
            method: Method::PwcExpm,
            n_steps: half.len() * m,
        })
    }

    fn check_state(&self, rho: &OperatorMatrix) -> Result<()> {
        if rho.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: rho.dim(),
            });
        }
        let residual = rho.hermiticity_residual();
        if residual > 1e-9 * rho.frobenius_norm().max(1.0) {
            return Err(Error::NotHermitian { residual });
        }
        Ok(())
    }
}

/// γ‖H0‖ Σ_n (V ρ V† − ½{V†V, ρ}) as a dense superoperator on row-major vec(ρ).
#[derive(Debug, Clone)]
pub(crate) struct Dissipator {
    dim: usize,
    forward: Vec<C64>,
}

impl Dissipator {
    pub(crate) fn new(noise: &NoiseModel, dim: usize) -> Result<Self> {
        for v in &noise.collapse_ops {
            if v.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: v.dim(),
                });
            }
        }
        let rate = noise.rate();
        let mut vdv = OperatorMatrix::zeros(dim);
        for v in &noise.collapse_ops {
            vdv = &vdv + &(&v.adjoint() * v);
        }
        let apply = |x: &OperatorMatrix| -> OperatorMatrix {
            let mut acc = vdv.anticommutator(x).scale_real(-0.5);
            for v in &noise.collapse_ops {
                acc = &acc + &(&(v * x) * &v.adjoint());
            }
            acc.scale_real(rate)
        };
        let n = dim * dim;
        let mut forward = vec![C64::new(0.0, 0.0); n * n];
        for k in 0..n {
            let mut basis = OperatorMatrix::zeros(dim);
            basis.as_mut_slice()[k] = C64::new(1.0, 0.0);
            let f = apply(&basis);
            for r in 0..n {
                forward[r * n + k] = f.as_slice()[r];
            }
        }
        Ok(Self { dim, forward })
    }

    /// out = scale · D(x)
    pub(crate) fn apply(&self, scale: f64, x: &OperatorMatrix, out: &mut OperatorMatrix) {
        let n = self.dim * self.dim;
        let xs = x.as_slice();
        for (r, o) in out.as_mut_slice().iter_mut().enumerate() {
            let row = &self.forward[r * n..(r + 1) * n];
            let mut acc = C64::new(0.0, 0.0);
            for (m, v) in row.iter().zip(xs) {
                acc += m * v;
            }
            *o = acc * scale;
        }
    }

    /// out = scale · D*(x) under Re Tr(A†B)
    pub(crate) fn apply_adjoint(&self, scale: f64, x: &OperatorMatrix, out: &mut OperatorMatrix) {
        let n = self.dim * self.dim;
        // D* is the conjugate transpose of the vec(ρ) superoperator.
        let xs = x.as_slice();
        for (r, o) in out.as_mut_slice().iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (k, v) in xs.iter().enumerate() {
                acc += self.forward[k * n + r].conj() * v;
            }
            *o = acc * scale;
        }
    }
}

pub(crate) struct Rk4Scratch {
    pub(crate) rho_i: OperatorMatrix,
    pub(crate) n1: OperatorMatrix,
    pub(crate) k1: OperatorMatrix,
    pub(crate) k2: OperatorMatrix,
    pub(crate) k3: OperatorMatrix,
    pub(crate) k4: OperatorMatrix,
    pub(crate) y: OperatorMatrix,
    pub(crate) w: OperatorMatrix,
    pub(crate) z: OperatorMatrix,
    pub(crate) tmp: OperatorMatrix,
    pub(crate) out: OperatorMatrix,
}

impl Rk4Scratch {
    pub(crate) fn new(dim: usize) -> Self {
        let z = OperatorMatrix::zeros(dim);
        Self {
            rho_i: z.clone(),
            n1: z.clone(),
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            y: z.clone(),
            w: z.clone(),
            z: z.clone(),
            tmp: z.clone(),
            out: z,
        }
    }
}

/// One interaction-picture RK4 step of length h; `u` is exp(−i H h/2).
///
/// ρI = C(ρ), k1 = C(hD ρ), k2 = hD(ρI + k1/2), k3 = hD(ρI + k2/2),
/// k4 = hD(C(ρI + k3)), ρ' = C(ρI + k1/6 + k2/3 + k3/3) + k4/6,
/// where C(x) = u x u†.
pub(crate) fn rk4ip_step(
    u: &OperatorMatrix,
    u_dag: &OperatorMatrix,
    d: &Dissipator,
    h: f64,
    rho: &mut OperatorMatrix,
    s: &mut Rk4Scratch,
) {
    conjugate(u, u_dag, rho, &mut s.tmp, &mut s.rho_i);
    d.apply(h, rho, &mut s.n1);
    conjugate(u, u_dag, &s.n1, &mut s.tmp, &mut s.k1);

    s.y.clone_from(&s.rho_i);
    s.y.axpy_real(0.5, &s.k1);
    d.apply(h, &s.y, &mut s.k2);

    s.y.clone_from(&s.rho_i);
    s.y.axpy_real(0.5, &s.k2);
    d.apply(h, &s.y, &mut s.k3);

    s.w.clone_from(&s.rho_i);
    s.w.axpy_real(1.0, &s.k3);
    conjugate(u, u_dag, &s.w, &mut s.tmp, &mut s.y);
    d.apply(h, &s.y, &mut s.k4);

    s.z.clone_from(&s.rho_i);
    s.z.axpy_real(1.0 / 6.0, &s.k1);
    s.z.axpy_real(1.0 / 3.0, &s.k2);
    s.z.axpy_real(1.0 / 3.0, &s.k3);
    conjugate(u, u_dag, &s.z, &mut s.tmp, &mut s.out);
    s.out.axpy_real(1.0 / 6.0, &s.k4);
    std::mem::swap(rho, &mut s.out);
}

/// Piecewise-constant U(T) for a table or sampled network.
pub fn propagate_unitary(system: &SpinSystem, pulse: PulseSource<'_>) -> Result<EvolutionResult> {
    let table = pulse.to_table()?;
    Dynamics::new(system).evolve_unitary(&table, None)
}

/// Piecewise-constant von Neumann evolution of `rho0`.
pub fn propagate_density(
    system: &SpinSystem,
    pulse: PulseSource<'_>,
    rho0: &OperatorMatrix,
) -> Result<EvolutionResult> {
    let table = pulse.to_table()?;
    Dynamics::new(system).evolve_density(&table, rho0, None)
}

/// Lindblad evolution with the uniform noise coefficient γ‖H0‖.
pub fn propagate_lindblad(
    system: &SpinSystem,
    pulse: PulseSource<'_>,
    rho0: &OperatorMatrix,
    noise: &NoiseModel,
) -> Result<EvolutionResult> {
    let table = pulse.to_table()?;
    Dynamics::new(system).evolve_lindblad(&table, rho0, noise, pulse.amp_bound(), None)
}

#[derive(Debug, Clone)]
pub enum OracleMode {
    Unitary,
    Density,
    Lindblad(NoiseModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-11,
            max_steps: 5_000_000,
        }
    }
}

struct OracleRhs<'a> {
    mode: &'a OracleMode,
    dissipator: Option<Dissipator>,
}

impl OracleRhs<'_> {
    fn eval(&self, h: &OperatorMatrix, y: &OperatorMatrix, out: &mut OperatorMatrix) {
        let minus_i = C64::new(0.0, -1.0);
        match self.mode {
            OracleMode::Unitary => {
                OperatorMatrix::mul_into(h, y, out);
                out.as_mut_slice().iter_mut().for_each(|z| *z *= minus_i);
            }
            OracleMode::Density | OracleMode::Lindblad(_) => {
                let comm = h.commutator(y).scale(minus_i);
                match &self.dissipator {
                    Some(d) => {
                        d.apply(1.0, y, out);
                        out.axpy_real(1.0, &comm);
                    }
                    None => *out = comm,
                }
            }
        }
    }
}

const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B_LOW: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand–Prince 5(4) integration of the chosen equation of motion.
///
/// Network pulses are evaluated in continuous time (no discretization);
/// tables are integrated segment by segment with constant H.
pub fn propagate_oracle(
    system: &SpinSystem,
    pulse: PulseSource<'_>,
    initial: Option<&OperatorMatrix>,
    mode: OracleMode,
    options: OracleOptions,
) -> Result<EvolutionResult> {
    let dynamics = Dynamics::new(system);
    let dim = dynamics.dim();
    let y0 = match (&mode, initial) {
        (OracleMode::Unitary, None) => OperatorMatrix::identity(dim),
        (_, Some(init)) => init.clone(),
        (_, None) => {
            return Err(Error::InvalidObjective(
                "density and Lindblad modes need an initial state".into(),
            ))
        }
    };
    if y0.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: y0.dim(),
        });
    }
    let dissipator = match &mode {
        OracleMode::Lindblad(noise) => Some(Dissipator::new(noise, dim)?),
        _ => None,
    };
    let rhs = OracleRhs {
        mode: &mode,
        dissipator,
    };
    let mut state = Dp5State {
        y: y0,
        h: 0.0,
        steps: 0,
    };
    match pulse {
        PulseSource::Table(table) => {
            dynamics.check_table(table)?;
            let dt = table.segment_width();
            for s in 0..table.n_segments() {
                let hs = dynamics.hamiltonian(table.segment(s));
                let (t0, t1) = (s as f64 * dt, (s + 1) as f64 * dt);
                integrate_dp5(&rhs, &mut state, t0, t1, &options, |_| Ok(hs.clone()))?;
            }
        }
        PulseSource::Network { params, .. } => {
            if params.n_channels() != dynamics.n_channels() {
                return Err(Error::InvalidPulse(format!(
                    "network drives {} channels, system has {}",
                    params.n_channels(),
                    dynamics.n_channels()
                )));
            }
            let duration = params.duration();
            integrate_dp5(&rhs, &mut state, 0.0, duration, &options, |t| {
                Ok(dynamics.hamiltonian(&params.forward(t.clamp(0.0, duration))?))
            })?;
        }
    }
    Ok(EvolutionResult {
        final_state: state.y,
        trajectory: None,
        method: Method::RkAdaptive,
        n_steps: state.steps,
    })
}

struct Dp5State {
    y: OperatorMatrix,
    h: f64,
    steps: usize,
}

fn integrate_dp5(
    rhs: &OracleRhs<'_>,
    state: &mut Dp5State,
    t0: f64,
    t1: f64,
    options: &OracleOptions,
    hamiltonian: impl Fn(f64) -> Result<OperatorMatrix>,
) -> Result<()> {
    let dim = state.y.dim();
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(());
    }
    let mut t = t0;
    let mut h = if state.h > 0.0 { state.h.min(span) } else { span / 100.0 };
    let mut k: Vec<OperatorMatrix> = vec![OperatorMatrix::zeros(dim); 7];
    let mut stage = OperatorMatrix::zeros(dim);
    while t < t1 {
        if state.steps >= options.max_steps {
            return Err(Error::ToleranceNotReached {
                max_steps: options.max_steps,
                t,
            });
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        for i in 0..7 {
            stage.clone_from(&state.y);
            for (j, kj) in k.iter().enumerate().take(i) {
                let a = DP_A[i][j];
                if a != 0.0 {
                    stage.axpy_real(h * a, kj);
                }
            }
            let hi = hamiltonian(t + DP_C[i] * h)?;
            rhs.eval(&hi, &stage, &mut k[i]);
        }
        let mut y_new = state.y.clone();
        let mut err = OperatorMatrix::zeros(dim);
        for i in 0..7 {
            y_new.axpy_real(h * DP_B[i], &k[i]);
            err.axpy_real(h * (DP_B[i] - DP_B_LOW[i]), &k[i]);
        }
        let mut acc = 0.0;
        for ((e, a), b) in err.as_slice().iter().zip(state.y.as_slice()).zip(y_new.as_slice()) {
            let sc = options.atol + options.rtol * a.norm().max(b.norm());
            acc += (e.norm() / sc).powi(2);
        }
        let err_norm = (acc / (dim * dim) as f64).sqrt();
        state.steps += 1;
        if !err_norm.is_finite() {
            return Err(Error::NonFinite("adaptive integrator error estimate".into()));
        }
        if err_norm <= 1.0 {
            t = if last { t1 } else { t + h };
            state.y = y_new;
        }
        let factor = if err_norm == 0.0 {
            5.0
        } else {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= if err_norm <= 1.0 { factor } else { factor.min(1.0) };
        if h < 1e-14 * span.max(1e-300) {
            return Err(Error::ToleranceNotReached {
                max_steps: state.steps,
                t,
            });
        }
    }
    state.h = h;
    Ok(())
}
