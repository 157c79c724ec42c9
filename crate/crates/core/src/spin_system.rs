// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! Spin-1/2 registers: single-spin and collective operators, drift and control
//! Hamiltonians, and the collapse-operator sets used for noisy transfers.
//!
//! All Hamiltonians are returned in rad/s. Couplings and offsets are stored in
//! Hz and converted exactly once, in [`SpinSystem::drift_hamiltonian`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{OperatorMatrix, C64};

pub const MAX_SPINS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

fn single_spin(axis: Axis) -> OperatorMatrix {
    let h = 0.5;
    let entries = match axis {
        Axis::X => [0.0, h, h, 0.0].map(|v| C64::new(v, 0.0)),
        Axis::Y => [
            C64::new(0.0, 0.0),
            C64::new(0.0, -h),
            C64::new(0.0, h),
            C64::new(0.0, 0.0),
        ],
        Axis::Z => [h, 0.0, 0.0, -h].map(|v| C64::new(v, 0.0)),
    };
    OperatorMatrix::from_row_major(2, entries.to_vec()).expect("2x2")
}

/// I_{k,axis} embedded in an `n_spins` register. Spin 0 is the most
/// significant tensor factor, so |01⟩ means spin 0 up, spin 1 down.
pub fn spin_half_operator(n_spins: usize, target: usize, axis: Axis) -> Result<OperatorMatrix> {
    if n_spins == 0 || n_spins > MAX_SPINS {
        return Err(Error::SystemSize(n_spins));
    }
    if target >= n_spins {
        return Err(Error::SpinIndex {
            index: target,
            n_spins,
        });
    }
    let mut op = OperatorMatrix::identity(1);
    for k in 0..n_spins {
        let factor = if k == target {
            single_spin(axis)
        } else {
            OperatorMatrix::identity(2)
        };
        op = op.kron(&factor);
    }
    Ok(op)
}

/// Sum of I_{k,axis} over the given spins.
pub fn collective_operator(n_spins: usize, spins: &[usize], axis: Axis) -> Result<OperatorMatrix> {
    let mut acc = OperatorMatrix::zeros(1 << n_spins.min(MAX_SPINS));
    for &k in spins {
        acc = &acc + &spin_half_operator(n_spins, k, axis)?;
    }
    Ok(acc)
}

/// Spins driven by one shared (x, y) control pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelGroup(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub i: usize,
    pub j: usize,
    #[serde(rename = "J_hz")]
    pub j_hz: f64,
}

/// A register of spin-1/2 nuclei with weak scalar couplings and per-spin offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemRepr", into = "SystemRepr")]
pub struct SpinSystem {
    n_spins: usize,
    channels: Vec<ChannelGroup>,
    couplings: Vec<Coupling>,
    offsets_hz: Vec<f64>,
}

/// On-disk form: `{"spins": n, "channels": [[0],[1]], "couplings": [...], "offsets_hz": [...]}`.
#[derive(Serialize, Deserialize)]
struct SystemRepr {
    spins: usize,
    channels: Vec<ChannelGroup>,
    #[serde(default)]
    couplings: Vec<Coupling>,
    #[serde(default)]
    offsets_hz: Vec<f64>,
}

impl TryFrom<SystemRepr> for SpinSystem {
    type Error = Error;

    fn try_from(r: SystemRepr) -> Result<Self> {
        let offsets = if r.offsets_hz.is_empty() {
            vec![0.0; r.spins]
        } else {
            r.offsets_hz
        };
        SpinSystem::new(r.spins, r.channels, r.couplings, offsets)
    }
}

impl From<SpinSystem> for SystemRepr {
    fn from(s: SpinSystem) -> Self {
        SystemRepr {
            spins: s.n_spins,
            channels: s.channels,
            couplings: s.couplings,
            offsets_hz: s.offsets_hz,
        }
    }
}

impl SpinSystem {
    pub fn new(
        n_spins: usize,
        channels: Vec<ChannelGroup>,
        couplings: Vec<Coupling>,
        offsets_hz: Vec<f64>,
    ) -> Result<Self> {
        if n_spins == 0 || n_spins > MAX_SPINS {
            return Err(Error::SystemSize(n_spins));
        }
        let mut seen = vec![false; n_spins];
        for group in &channels {
            if group.0.is_empty() {
                return Err(Error::InvalidSystem("empty channel group".into()));
            }
            for &k in &group.0 {
                if k >= n_spins {
                    return Err(Error::SpinIndex { index: k, n_spins });
                }
                if seen[k] {
                    return Err(Error::InvalidSystem(format!(
                        "spin {k} appears in more than one channel group"
                    )));
                }
                seen[k] = true;
            }
        }
        for c in &couplings {
            for idx in [c.i, c.j] {
                if idx >= n_spins {
                    return Err(Error::SpinIndex { index: idx, n_spins });
                }
            }
            if c.i == c.j {
                return Err(Error::InvalidSystem(format!(
                    "coupling of spin {} with itself",
                    c.i
                )));
            }
            if !c.j_hz.is_finite() {
                return Err(Error::InvalidSystem("non-finite coupling".into()));
            }
        }
        if offsets_hz.len() != n_spins {
            return Err(Error::InvalidSystem(format!(
                "expected {n_spins} offsets, got {}",
                offsets_hz.len()
            )));
        }
        if offsets_hz.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidSystem("non-finite offset".into()));
        }
        Ok(Self {
            n_spins,
            channels,
            couplings,
            offsets_hz,
        })
    }

    /// Heteronuclear ¹⁹F–¹H pair, J = 48.2 Hz, on-resonance doubly rotating frame.
    pub fn defm() -> Self {
        Self::new(
            2,
            vec![ChannelGroup(vec![0]), ChannelGroup(vec![1])],
            vec![Coupling {
                i: 0,
                j: 1,
                j_hz: 48.2,
            }],
            vec![0.0, 0.0],
        )
        .expect("valid preset")
    }

    /// Homonuclear proton pair, J = 8.75 Hz, shift difference 127.5 Hz,
    /// one collective channel.
    pub fn tcp() -> Self {
        let delta = 127.5;
        Self::new(
            2,
            vec![ChannelGroup(vec![0, 1])],
            vec![Coupling {
                i: 0,
                j: 1,
                j_hz: 8.75,
            }],
            vec![-delta / 2.0, delta / 2.0],
        )
        .expect("valid preset")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "defm" => Some(Self::defm()),
            "tcp" => Some(Self::tcp()),
            _ => None,
        }
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dimension(&self) -> usize {
        1 << self.n_spins
    }

    pub fn channels(&self) -> &[ChannelGroup] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn offsets_hz(&self) -> &[f64] {
        &self.offsets_hz
    }

    fn op(&self, k: usize, axis: Axis) -> OperatorMatrix {
        spin_half_operator(self.n_spins, k, axis).expect("validated index")
    }

    /// H0 = Σ 2πJ_ij I_iz I_jz + Σ 2πδ_k I_kz, in rad/s.
    pub fn drift_hamiltonian(&self) -> OperatorMatrix {
        let mut h = OperatorMatrix::zeros(self.dimension());
        for c in &self.couplings {
            let zz = &self.op(c.i, Axis::Z) * &self.op(c.j, Axis::Z);
            h.axpy_real(2.0 * PI * c.j_hz, &zz);
        }
        for (k, &delta) in self.offsets_hz.iter().enumerate() {
            if delta != 0.0 {
                h.axpy_real(2.0 * PI * delta, &self.op(k, Axis::Z));
            }
        }
        h
    }

    /// One (X_k, Y_k) pair per channel group, summed over the group's spins.
    pub fn control_operators(&self) -> Vec<(OperatorMatrix, OperatorMatrix)> {
        self.channels
            .iter()
            .map(|g| {
                (
                    collective_operator(self.n_spins, &g.0, Axis::X).expect("validated"),
                    collective_operator(self.n_spins, &g.0, Axis::Y).expect("validated"),
                )
            })
            .collect()
    }

    /// Σ_k I_{k,axis} over every spin.
    pub fn total_operator(&self, axis: Axis) -> OperatorMatrix {
        let all: Vec<usize> = (0..self.n_spins).collect();
        collective_operator(self.n_spins, &all, axis).expect("validated")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Local,
    Global,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(NoiseKind::Local),
            "global" => Ok(NoiseKind::Global),
            other => Err(Error::Parse(format!("unknown noise kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::Local => "local",
            NoiseKind::Global => "global",
        })
    }
}

/// Uniform-coefficient Lindblad noise: rate γ‖H0‖ on every collapse operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub gamma: f64,
    pub kind: NoiseKind,
    pub collapse_ops: Vec<OperatorMatrix>,
    /// Spectral norm of the drift Hamiltonian, rad/s.
    pub drift_norm: f64,
}

impl NoiseModel {
    /// Dissipation rate γ‖H0‖ in 1/s.
    pub fn rate(&self) -> f64 {
        self.gamma * self.drift_norm
    }

    /// Replaces the drift-norm scale (e.g. to use a Frobenius norm instead).
    pub fn with_drift_norm(mut self, drift_norm: f64) -> Self {
        self.drift_norm = drift_norm;
        self
    }

    pub fn is_noiseless(&self) -> bool {
        self.rate() == 0.0
    }
}

/// Collapse operators for a two-spin register.
///
/// Local: I1x, I1y, I2x, I2y. Global: I1x + I2x, I1y + I2y.
pub fn noise_operators(system: &SpinSystem, kind: NoiseKind, gamma: f64) -> Result<NoiseModel> {
    if system.n_spins() != 2 {
        return Err(Error::InvalidSystem(format!(
            "noise sets are defined for 2-spin registers, got {}",
            system.n_spins()
        )));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidSystem(format!("invalid gamma {gamma}")));
    }
    let collapse_ops = match kind {
        NoiseKind::Local => vec![
            system.op(0, Axis::X),
            system.op(0, Axis::Y),
            system.op(1, Axis::X),
            system.op(1, Axis::Y),
        ],
        NoiseKind::Global => vec![
            system.total_operator(Axis::X),
            system.total_operator(Axis::Y),
        ],
    };
    let drift_norm = system.drift_hamiltonian().spectral_norm_hermitian()?;
    if gamma > 0.0 && !(drift_norm > 0.0) {
        return Err(Error::InvalidSystem(
            "noise strength is scaled by the drift norm, which is zero".into(),
        ));
    }
    Ok(NoiseModel {
        gamma,
        kind,
        collapse_ops,
        drift_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn commutator_residual(a: &OperatorMatrix, b: &OperatorMatrix, c: &OperatorMatrix) -> f64 {
        // ‖[a, b] − i c‖_F, by explicit products
        (&a.commutator(b) - &c.scale(C64::new(0.0, 1.0))).frobenius_norm()
    }

    #[test]
    fn single_spin_z() {
        let z = spin_half_operator(1, 0, Axis::Z).unwrap();
        assert_eq!(z, OperatorMatrix::from_real_diagonal(&[0.5, -0.5]));
        let z0 = spin_half_operator(2, 0, Axis::Z).unwrap();
        assert_eq!(z0, OperatorMatrix::from_real_diagonal(&[0.5, 0.5, -0.5, -0.5]));
    }

    #[test]
    fn angular_momentum_algebra() {
        for n in 1..=MAX_SPINS {
            for k in 0..n {
                let x = spin_half_operator(n, k, Axis::X).unwrap();
                let y = spin_half_operator(n, k, Axis::Y).unwrap();
                let z = spin_half_operator(n, k, Axis::Z).unwrap();
                assert!(commutator_residual(&x, &y, &z) < 1e-14);
                assert!(commutator_residual(&y, &z, &x) < 1e-14);
                for op in [&x, &y, &z] {
                    assert!(op.hermiticity_residual() < 1e-12);
                }
                for other in 0..n {
                    if other == k {
                        continue;
                    }
                    for axis in [Axis::X, Axis::Y, Axis::Z] {
                        let o = spin_half_operator(n, other, axis).unwrap();
                        assert_eq!(x.commutator(&o).max_abs(), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn operator_index_errors() {
        assert!(matches!(
            spin_half_operator(2, 2, Axis::X),
            Err(Error::SpinIndex { .. })
        ));
        assert!(matches!(
            spin_half_operator(5, 0, Axis::X),
            Err(Error::SystemSize(5))
        ));
        assert!(matches!(
            spin_half_operator(0, 0, Axis::X),
            Err(Error::SystemSize(0))
        ));
    }

    #[test]
    fn system_validation() {
        let dup = SpinSystem::new(
            2,
            vec![ChannelGroup(vec![0]), ChannelGroup(vec![0, 1])],
            vec![],
            vec![0.0, 0.0],
        );
        assert!(dup.is_err());
        let self_coupled = SpinSystem::new(
            2,
            vec![],
            vec![Coupling {
                i: 1,
                j: 1,
                j_hz: 1.0,
            }],
            vec![0.0, 0.0],
        );
        assert!(self_coupled.is_err());
        assert_eq!(SpinSystem::defm().dimension(), 4);
    }

    #[test]
    fn defm_drift_values() {
        let h = SpinSystem::defm().drift_hamiltonian();
        let q = 2.0 * PI * 48.2 / 4.0;
        assert_eq!(h, OperatorMatrix::from_real_diagonal(&[q, -q, -q, q]));
    }

    #[test]
    fn zero_drift() {
        let s = SpinSystem::new(2, vec![], vec![], vec![0.0, 0.0]).unwrap();
        assert_eq!(s.drift_hamiltonian().max_abs(), 0.0);
    }

    #[test]
    fn drift_is_linear_in_parameters() {
        let s = SpinSystem::new(
            3,
            vec![],
            vec![
                Coupling { i: 0, j: 1, j_hz: 7.0 },
                Coupling { i: 1, j: 2, j_hz: -3.5 },
            ],
            vec![10.0, -4.0, 2.5],
        )
        .unwrap();
        let doubled = SpinSystem::new(
            3,
            vec![],
            s.couplings()
                .iter()
                .map(|c| Coupling {
                    j_hz: 2.0 * c.j_hz,
                    ..c.clone()
                })
                .collect(),
            s.offsets_hz().iter().map(|o| 2.0 * o).collect(),
        )
        .unwrap();
        let diff = &doubled.drift_hamiltonian() - &s.drift_hamiltonian().scale_real(2.0);
        assert!(diff.frobenius_norm() < 1e-12);
    }

    #[test]
    fn preset_drifts_are_diagonal() {
        for s in [SpinSystem::defm(), SpinSystem::tcp()] {
            let h = s.drift_hamiltonian();
            assert!(h.max_abs_off_diagonal() < 1e-14);
            assert!(h.hermiticity_residual() < 1e-12);
        }
    }

    #[test]
    fn tcp_drift_matches_printed_form() {
        let s = SpinSystem::tcp();
        let z1 = spin_half_operator(2, 0, Axis::Z).unwrap();
        let z2 = spin_half_operator(2, 1, Axis::Z).unwrap();
        let mut expected = (&z1 * &z2).scale_real(2.0 * PI * 8.75);
        expected.axpy_real(-PI * 127.5, &z1);
        expected.axpy_real(PI * 127.5, &z2);
        assert!((&s.drift_hamiltonian() - &expected).frobenius_norm() < 1e-12);
    }

    #[test]
    fn control_operator_sets() {
        let defm = SpinSystem::defm().control_operators();
        assert_eq!(defm.len(), 2);
        assert_eq!(defm[0].0, spin_half_operator(2, 0, Axis::X).unwrap());
        assert_eq!(defm[1].1, spin_half_operator(2, 1, Axis::Y).unwrap());

        let tcp = SpinSystem::tcp().control_operators();
        assert_eq!(tcp.len(), 1);
        let fx = &spin_half_operator(2, 0, Axis::X).unwrap() + &spin_half_operator(2, 1, Axis::X).unwrap();
        assert_eq!(tcp[0].0, fx);

        let single = SpinSystem::new(1, vec![ChannelGroup(vec![0])], vec![], vec![0.0]).unwrap();
        let ops = single.control_operators();
        assert_eq!(ops[0].0, single_spin(Axis::X));
        assert_eq!(ops[0].1, single_spin(Axis::Y));
        for (x, y) in defm.iter().chain(&tcp) {
            assert!(x.is_hermitian(1e-12) && y.is_hermitian(1e-12));
        }
    }

    #[test]
    fn noise_sets() {
        let tcp = SpinSystem::tcp();
        let local = noise_operators(&tcp, NoiseKind::Local, 0.07).unwrap();
        assert_eq!(local.collapse_ops.len(), 4);
        assert_eq!(local.gamma, 0.07);
        assert!(local.drift_norm > 0.0);
        let global = noise_operators(&tcp, NoiseKind::Global, 0.0).unwrap();
        assert_eq!(global.collapse_ops.len(), 2);
        assert!(global.is_noiseless());
        assert_eq!(noise_operators(&tcp, NoiseKind::Global, 0.04).unwrap().collapse_ops.len(), 2);

        let three = SpinSystem::new(3, vec![], vec![], vec![0.0; 3]).unwrap();
        assert!(noise_operators(&three, NoiseKind::Local, 0.1).is_err());
        assert!(noise_operators(&tcp, NoiseKind::Local, -0.1).is_err());
    }

    #[test]
    fn tcp_drift_norm_by_eigensolve() {
        // Oracle: brute-force characteristic values of the 4x4 diagonal via nalgebra on the
        // dense matrix, independent of the stored-diagonal shortcut.
        let h = SpinSystem::tcp().drift_hamiltonian();
        let dense = nalgebra::DMatrix::from_fn(4, 4, |i, j| h.get(i, j));
        let eig = dense.symmetric_eigen();
        let expected = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let noise = noise_operators(&SpinSystem::tcp(), NoiseKind::Local, 0.02).unwrap();
        assert!((noise.drift_norm - expected).abs() < 1e-10);
        // |01⟩ carries −πΔ − πJ/2.
        assert!((expected - (PI * 127.5 + PI * 8.75 / 2.0)).abs() < 1e-9);
    }

    #[test]
    fn system_json_round_trip() {
        let json = r#"{"spins": 2, "channels": [[0],[1]], "couplings": [{"i":0,"j":1,"J_hz":48.2}], "offsets_hz": [0,0]}"#;
        let s: SpinSystem = serde_json::from_str(json).unwrap();
        assert_eq!(s, SpinSystem::defm());
        let back: SpinSystem = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"spins": 2, "channels": [[0],[0]]}"#;
        assert!(serde_json::from_str::<SpinSystem>(bad).is_err());
    }
}
