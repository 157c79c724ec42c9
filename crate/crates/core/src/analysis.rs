// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! Spectra, discretization sweeps, trajectories and robustness sweeps.

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{OperatorMatrix, C64};
use crate::network::NetworkParams;
use crate::objectives::{table_fidelity, Normalization, ObjectiveKind, ObjectiveSpec};
use crate::optimizer::{train, OptimizerConfig, RunRecord};
use crate::propagation::{Dynamics, DEFAULT_N_FINE};
use crate::pulse::{PulseTable, SamplingRule};
use crate::spin_system::{noise_operators, NoiseKind, NoiseModel, SpinSystem};
use crate::targets::{lls_readout, singlet_triplet_basis, SINGLET_TRIPLET_LABELS};

/// Fraction of spectral energy inside the reported band.
pub const BANDWIDTH_FRACTION: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Hz, ascending (zero frequency in the middle).
    pub freqs: Vec<f64>,
    /// |S(f)| of u_x + i·u_y per channel, aligned with `freqs`.
    pub magnitude: Vec<Vec<f64>>,
    /// Half-width in Hz of the smallest band [−B, B] holding 99% of the energy, per channel.
    pub energy_bandwidth_99: Vec<f64>,
    pub df: f64,
    /// Σ|u|²·Δt per channel.
    pub signal_energy: Vec<f64>,
}

impl SpectrumResult {
    /// Σ|S|²·Δf for one channel.
    pub fn spectral_energy(&self, channel: usize) -> f64 {
        self.magnitude[channel].iter().map(|m| m * m).sum::<f64>() * self.df
    }

    /// Largest relative Parseval mismatch over channels.
    pub fn parseval_residual(&self) -> f64 {
        (0..self.magnitude.len())
            .map(|c| {
                let e = self.signal_energy[c];
                let s = self.spectral_energy(c);
                if e == 0.0 {
                    s
                } else {
                    (s - e).abs() / e
                }
            })
            .fold(0.0, f64::max)
    }
}

/// DFT of the complex control per channel, scaled by Δt so that Σ|S|²Δf = Σ|u|²Δt.
pub fn pulse_spectrum(pulse: &PulseTable) -> Result<SpectrumResult> {
    let n = pulse.n_segments();
    if n < 2 {
        return Err(Error::InvalidPulse("spectrum needs at least 2 segments".into()));
    }
    let dt = pulse.segment_width();
    let df = 1.0 / (n as f64 * dt);
    let fft = FftPlanner::new().plan_fft_forward(n);
    // index k of the shifted output holds DFT bin (k + n - n/2) mod n
    let shift = n - n / 2;
    let freqs: Vec<f64> = (0..n)
        .map(|k| {
            let bin = (k + shift) % n;
            let signed = if bin >= n.div_ceil(2) { bin as f64 - n as f64 } else { bin as f64 };
            signed * df
        })
        .collect();
    let mut magnitude = Vec::with_capacity(pulse.channels());
    let mut bandwidth = Vec::with_capacity(pulse.channels());
    let mut signal_energy = Vec::with_capacity(pulse.channels());
    for c in 0..pulse.channels() {
        let mut z: Vec<C64> = (0..n)
            .map(|s| C64::new(pulse.amplitude(s, c, 0), pulse.amplitude(s, c, 1)))
            .collect();
        signal_energy.push(z.iter().map(|v| v.norm_sqr()).sum::<f64>() * dt);
        fft.process(&mut z);
        let mag: Vec<f64> = (0..n).map(|k| z[(k + shift) % n].norm() * dt).collect();
        bandwidth.push(symmetric_band(&freqs, &mag, BANDWIDTH_FRACTION));
        magnitude.push(mag);
    }
    Ok(SpectrumResult {
        freqs,
        magnitude,
        energy_bandwidth_99: bandwidth,
        df,
        signal_energy,
    })
}

fn symmetric_band(freqs: &[f64], mag: &[f64], fraction: f64) -> f64 {
    let total: f64 = mag.iter().map(|m| m * m).sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..freqs.len()).collect();
    order.sort_by(|&a, &b| freqs[a].abs().total_cmp(&freqs[b].abs()));
    let mut acc = 0.0;
    let mut i = 0;
    while i < order.len() {
        // bins at ±f enter the band together
        let f = freqs[order[i]].abs();
        while i < order.len() && freqs[order[i]].abs() == f {
            acc += mag[order[i]].powi(2);
            i += 1;
        }
        if acc >= fraction * total {
            return f;
        }
    }
    freqs[order[order.len() - 1]].abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub system: SpinSystem,
    pub objective_kind: ObjectiveKind,
    pub normalization: Normalization,
    pub pulse_source: String,
    pub noise_kind: Option<NoiseKind>,
    pub gamma: Option<f64>,
    pub n_fine: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: String,
    pub values: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub infidelity: Vec<f64>,
    /// Fidelity without the normalization factor.
    pub raw_fidelity: Vec<f64>,
    pub metadata: SweepMetadata,
}

impl SweepResult {
    fn build(
        axis: &str,
        values: Vec<f64>,
        fidelity: Vec<f64>,
        objective: &ObjectiveSpec,
        metadata: SweepMetadata,
    ) -> Result<Self> {
        let raw_factor = raw_over_normalized(objective)?;
        Ok(Self {
            axis: axis.into(),
            infidelity: fidelity.iter().map(|f| 1.0 - f).collect(),
            raw_fidelity: fidelity.iter().map(|f| f * raw_factor).collect(),
            values,
            fidelity,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn raw_over_normalized(objective: &ObjectiveSpec) -> Result<f64> {
    let raw = ObjectiveSpec {
        normalization: Normalization::Raw,
        ..objective.clone()
    };
    Ok(raw.scale()? / objective.scale()?)
}

fn metadata(
    system: &SpinSystem,
    objective: &ObjectiveSpec,
    source: &str,
    n_fine: Option<usize>,
) -> SweepMetadata {
    let noise = objective.noise.as_ref();
    SweepMetadata {
        system: system.clone(),
        objective_kind: objective.kind,
        normalization: objective.normalization,
        pulse_source: source.into(),
        noise_kind: noise.map(|n| n.kind),
        gamma: noise.map(|n| n.gamma),
        n_fine,
    }
}

/// 2^0 … 2^15.
pub fn default_segment_counts() -> Vec<usize> {
    (0..16).map(|k| 1usize << k).collect()
}

/// Samples the network at each segment count and reports the resulting fidelity.
pub fn discretization_sweep(
    params: &NetworkParams,
    system: &SpinSystem,
    objective: &ObjectiveSpec,
    segment_counts: &[usize],
) -> Result<SweepResult> {
    params.check_channels(system.n_channels())?;
    objective.validate()?;
    if let Some(pos) = segment_counts.iter().position(|&n| n == 0) {
        return Err(Error::config(format!("segments[{pos}]"), "segment count must be at least 1"));
    }
    let dynamics = Dynamics::new(system);
    let fidelity = segment_counts
        .par_iter()
        .map(|&n| {
            let table = params.sample(n, SamplingRule::Midpoint)?;
            table_fidelity(&dynamics, &table, objective, params.amp_scale())
        })
        .collect::<Result<Vec<f64>>>()?;
    let values = segment_counts.iter().map(|&n| n as f64).collect();
    SweepResult::build("n_segments", values, fidelity, objective, metadata(system, objective, "network", None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTable {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    /// One row per time, one column per label.
    pub values: Vec<Vec<f64>>,
    /// Largest |Im⟨ψ|ρ|ψ⟩| seen.
    pub max_imaginary: f64,
}

impl TrajectoryTable {
    pub fn column(&self, label: &str) -> Option<Vec<f64>> {
        let j = self.labels.iter().position(|l| l == label)?;
        Some(self.values.iter().map(|row| row[j]).collect())
    }
}

/// ρ(t) at `n_samples` uniformly spaced times 0, T/(n−1), …, T.
///
/// The fine grid is the smallest multiple of n−1 that is at least 4096 segments.
pub fn density_trajectory(
    params: &NetworkParams,
    system: &SpinSystem,
    rho0: &OperatorMatrix,
    n_samples: usize,
    noise: Option<&NoiseModel>,
) -> Result<Vec<(f64, OperatorMatrix)>> {
    if n_samples < 2 {
        return Err(Error::config("n_samples", "need at least 2 samples"));
    }
    params.check_channels(system.n_channels())?;
    let intervals = n_samples - 1;
    let n_fine = DEFAULT_N_FINE.div_ceil(intervals) * intervals;
    let every = n_fine / intervals;
    let table = params.sample(n_fine, SamplingRule::Midpoint)?;
    let dynamics = Dynamics::new(system);
    let result = match noise {
        Some(model) if !model.is_noiseless() => {
            dynamics.evolve_lindblad(&table, rho0, model, params.amp_scale(), Some(every))?
        }
        _ => dynamics.evolve_density(&table, rho0, Some(every))?,
    };
    let dt = table.segment_width();
    let mut trajectory = result.trajectory.expect("recording requested");
    // exact sample times instead of accumulated s·dt
    for (i, (t, _)) in trajectory.iter_mut().enumerate() {
        debug_assert!((*t - (i * every) as f64 * dt).abs() <= 1e-12 * params.duration());
        *t = i as f64 * params.duration() / intervals as f64;
    }
    Ok(trajectory)
}

/// ⟨ψ_b|ρ(t)|ψ_b⟩ for each basis vector along a trajectory.
pub fn expectation_table(
    trajectory: &[(f64, OperatorMatrix)],
    basis: &[Vec<C64>],
    labels: &[String],
) -> Result<TrajectoryTable> {
    if basis.len() != labels.len() {
        return Err(Error::Dimension {
            expected: basis.len(),
            got: labels.len(),
        });
    }
    for (b, psi) in basis.iter().enumerate() {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidObjective(format!(
                "basis vector {} has norm {norm}",
                labels[b]
            )));
        }
    }
    let mut max_imaginary = 0.0f64;
    let mut values = Vec::with_capacity(trajectory.len());
    let mut times = Vec::with_capacity(trajectory.len());
    for (t, rho) in trajectory {
        let mut row = Vec::with_capacity(basis.len());
        for psi in basis {
            if psi.len() != rho.dim() {
                return Err(Error::Dimension {
                    expected: rho.dim(),
                    got: psi.len(),
                });
            }
            let e = rho.expectation(psi);
            max_imaginary = max_imaginary.max(e.im.abs());
            row.push(e.re);
        }
        times.push(*t);
        values.push(row);
    }
    Ok(TrajectoryTable {
        labels: labels.to_vec(),
        times,
        values,
        max_imaginary,
    })
}

/// Basis populations of ρ(t) under the network pulse.
pub fn basis_trajectory(
    params: &NetworkParams,
    system: &SpinSystem,
    rho0: &OperatorMatrix,
    basis: &[Vec<C64>],
    labels: &[String],
    n_samples: usize,
    noise: Option<&NoiseModel>,
) -> Result<TrajectoryTable> {
    let trajectory = density_trajectory(params, system, rho0, n_samples, noise)?;
    expectation_table(&trajectory, basis, labels)
}

/// The T+, T0, S0, T− basis with its labels.
pub fn singlet_triplet_columns() -> (Vec<Vec<C64>>, Vec<String>) {
    (
        singlet_triplet_basis().to_vec(),
        SINGLET_TRIPLET_LABELS.iter().map(|s| s.to_string()).collect(),
    )
}

/// Applies the singlet-order readout (delay 1/(4Δ), collective π/2 about x) to every state.
pub fn readout_transform(
    trajectory: &[(f64, OperatorMatrix)],
    system: &SpinSystem,
    delta_hz: f64,
) -> Result<Vec<(f64, OperatorMatrix)>> {
    trajectory
        .iter()
        .map(|(t, rho)| Ok((*t, lls_readout(system, rho, delta_hz)?)))
        .collect()
}

/// Fidelity of each γ's pulse under Lindblad noise of that strength.
///
/// `params_by_gamma` may hold one pulse per γ (retrained mode) or a single
/// pulse reused for every γ via [`fixed_pulse`].
pub fn noise_sweep(
    params_by_gamma: &[(f64, NetworkParams)],
    system: &SpinSystem,
    objective: &ObjectiveSpec,
    gammas: &[f64],
    kind: NoiseKind,
    n_fine: usize,
) -> Result<SweepResult> {
    objective.validate()?;
    let mut pulses = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let params = params_by_gamma
            .iter()
            .find(|(g, _)| *g == gamma)
            .map(|(_, p)| p)
            .ok_or(Error::MissingParams { gamma })?;
        params.check_channels(system.n_channels())?;
        pulses.push(params);
    }
    let dynamics = Dynamics::new(system);
    let fidelity = gammas
        .par_iter()
        .zip(pulses.par_iter())
        .map(|(&gamma, params)| {
            let noisy = objective.clone().with_noise(Some(noise_operators(system, kind, gamma)?));
            let table = params.sample(n_fine, SamplingRule::Midpoint)?;
            table_fidelity(&dynamics, &table, &noisy, params.amp_scale())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut meta = metadata(system, objective, "network", Some(n_fine));
    meta.noise_kind = Some(kind);
    meta.gamma = None;
    SweepResult::build("gamma", gammas.to_vec(), fidelity, objective, meta)
}

/// Pairs one pulse with every γ for evaluate-fixed-pulse sweeps.
pub fn fixed_pulse(params: &NetworkParams, gammas: &[f64]) -> Vec<(f64, NetworkParams)> {
    gammas.iter().map(|&g| (g, params.clone())).collect()
}

/// Retrains a copy of `warm_start` under noise at each γ, in parallel.
pub fn retrain_per_gamma(
    warm_start: &NetworkParams,
    system: &SpinSystem,
    objective: &ObjectiveSpec,
    gammas: &[f64],
    kind: NoiseKind,
    config: &OptimizerConfig,
) -> Result<Vec<(f64, RunRecord<NetworkParams>)>> {
    gammas
        .par_iter()
        .map(|&gamma| {
            let noisy = objective.clone().with_noise(Some(noise_operators(system, kind, gamma)?));
            let record = train(warm_start.clone(), system, &noisy, config)?;
            Ok((gamma, record))
        })
        .collect()
}

/// Fidelity with every amplitude scaled by (1 + Δu/u); noise comes from the objective.
pub fn amplitude_error_sweep(
    params: &NetworkParams,
    system: &SpinSystem,
    objective: &ObjectiveSpec,
    deviations: &[f64],
    n_fine: usize,
) -> Result<SweepResult> {
    params.check_channels(system.n_channels())?;
    objective.validate()?;
    if let Some(pos) = deviations.iter().position(|d| !(d.abs() <= 0.5)) {
        return Err(Error::config(
            format!("deviations[{pos}]"),
            format!("must lie in [-0.5, 0.5], got {}", deviations[pos]),
        ));
    }
    let dynamics = Dynamics::new(system);
    let table = params.sample(n_fine, SamplingRule::Midpoint)?;
    let fidelity = deviations
        .par_iter()
        .map(|&d| {
            let factor = 1.0 + d;
            let scaled = table.scaled(factor);
            table_fidelity(&dynamics, &scaled, objective, params.amp_scale() * factor.max(1.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    SweepResult::build(
        "delta_u_over_u",
        deviations.to_vec(),
        fidelity,
        objective,
        metadata(system, objective, "network", Some(n_fine)),
    )
}

/// Interval around the peak where fidelity stays at or above `fraction`·peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustInterval {
    pub peak: f64,
    pub peak_at: f64,
    pub lower: f64,
    pub upper: f64,
}

impl RobustInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Edges are linearly interpolated between grid points and clamp to the grid ends.
/// Axis values must be sorted ascending.
pub fn robust_interval(sweep: &SweepResult, fraction: f64) -> Result<RobustInterval> {
    let x = &sweep.values;
    let f = &sweep.fidelity;
    if x.is_empty() {
        return Err(Error::config("sweep", "empty sweep"));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("sweep.values", "axis must be strictly ascending"));
    }
    let (ipk, &peak) = f
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let level = fraction * peak;
    let crossing = |i: usize, j: usize| {
        // f[i] >= level > f[j]
        let s = (f[i] - level) / (f[i] - f[j]);
        x[i] + s * (x[j] - x[i])
    };
    let mut lower = x[0];
    for i in (0..ipk).rev() {
        if f[i] < level {
            lower = crossing(i + 1, i);
            break;
        }
    }
    let mut upper = x[x.len() - 1];
    for i in ipk + 1..x.len() {
        if f[i] < level {
            upper = crossing(i - 1, i);
            break;
        }
    }
    Ok(RobustInterval {
        peak,
        peak_at: x[ipk],
        lower,
        upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_system::ChannelGroup;
    use crate::targets::{cnot, lls_objective, thermal_deviation};
    use std::f64::consts::PI;

    fn table_from(n: usize, f: impl Fn(f64) -> [f64; 2]) -> PulseTable {
        PulseTable::from_fn(1.0, n, 1, SamplingRule::LeftEdge, |t| f(t).to_vec()).unwrap()
    }

    #[test]
    fn constant_pulse_is_dc() {
        let s = pulse_spectrum(&table_from(64, |_| [3.0, -1.0])).unwrap();
        let dc = s.freqs.iter().position(|&f| f == 0.0).unwrap();
        let total: f64 = s.magnitude[0].iter().map(|m| m * m).sum();
        assert!(s.magnitude[0][dc].powi(2) >= 0.99 * total);
        assert_eq!(s.energy_bandwidth_99[0], 0.0);
        assert!(s.parseval_residual() < 1e-12);
    }

    #[test]
    fn single_tone_lands_in_one_bin() {
        let f0 = 5.0;
        let s = pulse_spectrum(&table_from(64, |t| [(2.0 * PI * f0 * t).cos(), (2.0 * PI * f0 * t).sin()])).unwrap();
        let (k, _) = s.magnitude[0]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!((s.freqs[k] - f0).abs() < 1e-9);
        let total: f64 = s.magnitude[0].iter().map(|m| m * m).sum();
        assert!(s.magnitude[0][k].powi(2) > (1.0 - 1e-12) * total, "{} {}", s.magnitude[0][k].powi(2), total);
        assert!((s.energy_bandwidth_99[0] - f0).abs() < 1e-9);
    }

    #[test]
    fn frequency_grid_is_shifted_and_ascending() {
        for n in [2, 7, 8] {
            let s = pulse_spectrum(&table_from(n, |t| [t, 0.0])).unwrap();
            assert!(s.freqs.windows(2).all(|w| w[1] > w[0]));
            assert!(s.freqs.contains(&0.0));
            assert!((s.df - 1.0).abs() < 1e-12);
        }
        assert!(pulse_spectrum(&table_from(1, |_| [1.0, 0.0])).is_err());
    }

    #[test]
    fn symmetric_band_includes_both_signs() {
        let freqs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let mag = [0.0, 1.0, 0.0, 1.0, 0.3];
        assert_eq!(symmetric_band(&freqs, &mag, 0.99), 2.0);
        assert_eq!(symmetric_band(&freqs, &mag, 0.9), 1.0);
        assert_eq!(symmetric_band(&freqs, &[0.0; 5], 0.99), 0.0);
    }

    fn trivial_system() -> SpinSystem {
        SpinSystem::new(2, vec![ChannelGroup(vec![0]), ChannelGroup(vec![1])], vec![], vec![0.0, 0.0]).unwrap()
    }

    fn zero_network(channels: usize, duration: f64) -> NetworkParams {
        let mut p = NetworkParams::init(&[1, 4, 2 * channels], 100.0, duration, 0).unwrap();
        let zeros = vec![0.0; p.n_parameters()];
        p.set_flat(&zeros).unwrap();
        p
    }

    #[test]
    fn zero_pulse_identity_sweeps_are_perfect() {
        let system = trivial_system();
        let obj = ObjectiveSpec::gate(OperatorMatrix::identity(4), Normalization::Normalized).unwrap();
        let p = zero_network(2, 0.02);
        let d = discretization_sweep(&p, &system, &obj, &[1, 2, 4, 64]).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.infidelity.iter().all(|&x| x.abs() < 1e-15));
        let a = amplitude_error_sweep(&p, &system, &obj, &[-0.5, -0.1, 0.0, 0.3, 0.5], 16).unwrap();
        assert!(a.fidelity.iter().all(|&f| (f - 1.0).abs() < 1e-15));
    }

    #[test]
    fn amplitude_sweep_at_zero_matches_direct_evaluation() {
        let system = SpinSystem::defm();
        let obj = cnot(0, 1, 2).unwrap().objective(Normalization::Normalized).unwrap();
        let p = NetworkParams::init(&[1, 6, 4], 400.0, 0.02, 7).unwrap();
        let a = amplitude_error_sweep(&p, &system, &obj, &[-0.1, 0.0, 0.1], 64).unwrap();
        let table = p.sample(64, SamplingRule::Midpoint).unwrap();
        let direct = table_fidelity(&Dynamics::new(&system), &table, &obj, p.amp_scale()).unwrap();
        assert_eq!(a.fidelity[1], direct);
        assert!(amplitude_error_sweep(&p, &system, &obj, &[0.6], 64).is_err());
    }

    #[test]
    fn thermal_start_populations() {
        let system = SpinSystem::tcp();
        let p = zero_network(1, 0.08);
        let (basis, labels) = singlet_triplet_columns();
        let rho0 = thermal_deviation(2).unwrap();
        let traj = basis_trajectory(&p, &system, &rho0, &basis, &labels, 9, None).unwrap();
        assert_eq!(traj.times.len(), 9);
        assert_eq!(traj.times[8], 0.08);
        let first = &traj.values[0];
        let expected = [1.0, 0.0, 0.0, -1.0];
        for (v, e) in first.iter().zip(expected) {
            assert!((v - e).abs() < 1e-14);
        }
        assert!(traj.max_imaginary < 1e-10);
        // drift only: T± are drift eigenstates
        for row in &traj.values {
            assert!((row[0] - 1.0).abs() < 1e-12);
            assert!((row[3] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_rejects_unnormalized_basis() {
        let system = SpinSystem::tcp();
        let p = zero_network(1, 0.08);
        let rho0 = thermal_deviation(2).unwrap();
        let bad = vec![vec![C64::new(2.0, 0.0), C64::default(), C64::default(), C64::default()]];
        assert!(basis_trajectory(&p, &system, &rho0, &bad, &["x".into()], 3, None).is_err());
        assert!(basis_trajectory(&p, &system, &rho0, &bad, &["x".into()], 1, None).is_err());
    }

    #[test]
    fn noise_sweep_zero_gamma_matches_noiseless() {
        let system = SpinSystem::tcp();
        let obj = lls_objective();
        let p = NetworkParams::init(&[1, 5, 2], 150.0, 0.08, 3).unwrap();
        let table = p.sample(256, SamplingRule::Midpoint).unwrap();
        let closed = table_fidelity(&Dynamics::new(&system), &table, &obj, p.amp_scale()).unwrap();
        let gammas = [0.0, 0.02];
        let sweep = noise_sweep(&fixed_pulse(&p, &gammas), &system, &obj, &gammas, NoiseKind::Local, 256).unwrap();
        assert_eq!(sweep.fidelity[0], closed);
        assert!(sweep.fidelity[1] < closed.abs());
        assert!((sweep.raw_fidelity[0] - 2.0 * closed).abs() < 1e-15);
        let missing = noise_sweep(&fixed_pulse(&p, &[0.0]), &system, &obj, &gammas, NoiseKind::Local, 256);
        assert!(matches!(missing, Err(Error::MissingParams { gamma }) if gamma == 0.02));
    }

    #[test]
    fn robust_interval_interpolates() {
        let sweep = SweepResult {
            axis: "d".into(),
            values: vec![-0.2, -0.1, 0.0, 0.1, 0.2],
            fidelity: vec![0.5, 0.9, 1.0, 0.96, 0.94],
            infidelity: vec![],
            raw_fidelity: vec![],
            metadata: metadata(&trivial_system(), &lls_objective(), "t", None),
        };
        let r = robust_interval(&sweep, 0.95).unwrap();
        assert_eq!(r.peak, 1.0);
        assert!((r.lower - (-0.05)).abs() < 1e-12);
        assert!((r.upper - 0.15).abs() < 1e-12);
        let all = robust_interval(&sweep, 0.4).unwrap();
        assert_eq!((all.lower, all.upper), (-0.2, 0.2));
    }
}
