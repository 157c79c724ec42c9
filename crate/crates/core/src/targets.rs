// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! Named gate and state targets.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{OperatorMatrix, C64};
use crate::objectives::{Normalization, ObjectiveSpec};
use crate::spin_system::{spin_half_operator, Axis, SpinSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Gate,
    State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTarget {
    pub name: String,
    pub kind: TargetKind,
    pub matrix: OperatorMatrix,
    pub companion_initial: Option<OperatorMatrix>,
}

impl NamedTarget {
    /// Objective built from this target; state targets need a companion initial state.
    pub fn objective(&self, normalization: Normalization) -> Result<ObjectiveSpec> {
        match self.kind {
            TargetKind::Gate => ObjectiveSpec::gate(self.matrix.clone(), normalization),
            TargetKind::State => {
                let initial = self.companion_initial.clone().ok_or_else(|| {
                    Error::InvalidObjective(format!("state target {} has no initial state", self.name))
                })?;
                ObjectiveSpec::state(self.matrix.clone(), initial, normalization)
            }
        }
    }
}

/// CNOT flipping `target` when `control` is |1⟩. Spin 0 is the most significant bit.
pub fn cnot(control: usize, target: usize, n_spins: usize) -> Result<NamedTarget> {
    if !(1..=4).contains(&n_spins) {
        return Err(Error::SystemSize(n_spins));
    }
    for index in [control, target] {
        if index >= n_spins {
            return Err(Error::SpinIndex { index, n_spins });
        }
    }
    if control == target {
        return Err(Error::InvalidObjective(format!(
            "CNOT control and target are both spin {control}"
        )));
    }
    let dim = 1usize << n_spins;
    let bit = |spin: usize| 1usize << (n_spins - 1 - spin);
    let mut u = OperatorMatrix::zeros(dim);
    for k in 0..dim {
        let image = if k & bit(control) != 0 { k ^ bit(target) } else { k };
        u.set(image, k, C64::new(1.0, 0.0));
    }
    Ok(NamedTarget {
        name: format!("cnot:{control},{target}"),
        kind: TargetKind::Gate,
        matrix: u,
        companion_initial: None,
    })
}

pub fn identity_gate(n_spins: usize) -> Result<NamedTarget> {
    if !(1..=4).contains(&n_spins) {
        return Err(Error::SystemSize(n_spins));
    }
    Ok(NamedTarget {
        name: "identity".into(),
        kind: TargetKind::Gate,
        matrix: OperatorMatrix::identity(1 << n_spins),
        companion_initial: None,
    })
}

pub const SINGLET_TRIPLET_LABELS: [&str; 4] = ["T+", "T0", "S0", "T-"];

/// Two-spin singlet-triplet basis in the order T+, T0, S0, T−.
pub fn singlet_triplet_basis() -> [Vec<C64>; 4] {
    let r = |v: f64| C64::new(v, 0.0);
    let s = FRAC_1_SQRT_2;
    [
        vec![r(1.0), r(0.0), r(0.0), r(0.0)],
        vec![r(0.0), r(s), r(s), r(0.0)],
        vec![r(0.0), r(s), r(-s), r(0.0)],
        vec![r(0.0), r(0.0), r(0.0), r(1.0)],
    ]
}

/// Q = |S0⟩⟨S0| − |T0⟩⟨T0|.
pub fn singlet_order() -> OperatorMatrix {
    let [_, t0, s0, _] = singlet_triplet_basis();
    &OperatorMatrix::outer(&s0, &s0) - &OperatorMatrix::outer(&t0, &t0)
}

/// Traceless high-temperature deviation Σ_k I_kz for equal gyromagnetic ratios.
pub fn thermal_deviation(n_spins: usize) -> Result<OperatorMatrix> {
    let mut rho = OperatorMatrix::zeros(1 << n_spins.min(4));
    for k in 0..n_spins {
        rho = &rho + &spin_half_operator(n_spins, k, Axis::Z)?;
    }
    Ok(rho)
}

/// I1·I2 = I1xI2x + I1yI2y + I1zI2z.
pub fn isotropic_exchange() -> OperatorMatrix {
    let mut acc = OperatorMatrix::zeros(4);
    for axis in [Axis::X, Axis::Y, Axis::Z] {
        let a = spin_half_operator(2, 0, axis).expect("2-spin operator");
        let b = spin_half_operator(2, 1, axis).expect("2-spin operator");
        acc = &acc + &(&a * &b);
    }
    acc
}

/// Long-lived singlet order from thermal magnetization, normalized by the transfer bound.
pub fn lls_target() -> NamedTarget {
    NamedTarget {
        name: "lls".into(),
        kind: TargetKind::State,
        matrix: singlet_order(),
        companion_initial: Some(thermal_deviation(2).expect("2-spin deviation")),
    }
}

pub fn lls_objective() -> ObjectiveSpec {
    lls_target()
        .objective(Normalization::Normalized)
        .expect("singlet order target is well formed")
}

/// Resolves `cnot:<c>,<t>`, `identity`, or `lls` against a system.
pub fn parse_target(spec: &str, system: &SpinSystem) -> Result<NamedTarget> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix("cnot") {
        let (c, t) = match rest.strip_prefix(':') {
            None if rest.is_empty() => (0, 1),
            Some(pair) => {
                let mut it = pair.split(',').map(|p| p.trim().parse::<usize>());
                match (it.next(), it.next(), it.next()) {
                    (Some(Ok(c)), Some(Ok(t)), None) => (c, t),
                    _ => return Err(Error::Parse(format!("bad CNOT target '{spec}', expected cnot:<control>,<target>"))),
                }
            }
            None => return Err(Error::Parse(format!("unknown target '{spec}'"))),
        };
        return cnot(c, t, system.n_spins());
    }
    match spec {
        "identity" => identity_gate(system.n_spins()),
        "lls" => {
            if system.n_spins() != 2 {
                return Err(Error::InvalidObjective("singlet order needs a 2-spin system".into()));
            }
            Ok(lls_target())
        }
        other => Err(Error::Parse(format!("unknown target '{other}'"))),
    }
}

/// Readout of singlet order: free evolution for 1/(4Δ) under the drift, then a
/// hard collective π/2 pulse about x. Converts Q into observable antiphase
/// magnetization without simulating acquisition.
pub fn lls_readout(system: &SpinSystem, rho: &OperatorMatrix, delta_hz: f64) -> Result<OperatorMatrix> {
    if delta_hz <= 0.0 {
        return Err(Error::InvalidSystem(format!("shift difference must be positive, got {delta_hz}")));
    }
    let delay = crate::linalg::expm_hermitian(&system.drift_hamiltonian(), 1.0 / (4.0 * delta_hz))?;
    let pulse = crate::linalg::expm_hermitian(&system.total_operator(Axis::X), std::f64::consts::FRAC_PI_2)?;
    let u = &pulse * &delay;
    Ok(&(&u * rho) * &u.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cnot_matrix_and_properties() {
        let u = cnot(0, 1, 2).unwrap().matrix;
        let one = C64::new(1.0, 0.0);
        let mut expected = OperatorMatrix::zeros(4);
        expected.set(0, 0, one);
        expected.set(1, 1, one);
        expected.set(2, 3, one);
        expected.set(3, 2, one);
        assert_eq!(u, expected);
        assert_eq!(&u * &u, OperatorMatrix::identity(4));
        // diagonal entries 1, 1, 0, 0
        assert_eq!(u.trace(), C64::new(2.0, 0.0));
        let reversed = cnot(1, 0, 2).unwrap().matrix;
        assert_eq!(reversed.get(3, 1), one);
    }

    #[test]
    fn cnot_rejects_bad_indices() {
        assert!(cnot(0, 0, 2).is_err());
        assert!(cnot(0, 2, 2).is_err());
        assert!(cnot(0, 1, 5).is_err());
    }

    #[test]
    fn basis_is_orthonormal() {
        let b = singlet_triplet_basis();
        for (i, u) in b.iter().enumerate() {
            for (j, v) in b.iter().enumerate() {
                let ip: C64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((ip - C64::new(expected, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn singlet_exchange_expectation() {
        let [tp, t0, s0, tm] = singlet_triplet_basis();
        let x = isotropic_exchange();
        assert!((x.expectation(&s0) - C64::new(-0.75, 0.0)).norm() < 1e-15);
        for t in [tp, t0, tm] {
            assert!((x.expectation(&t) - C64::new(0.25, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn singlet_order_properties() {
        let q = singlet_order();
        assert!(q.trace().norm() < 1e-15);
        let [_, t0, s0, _] = singlet_triplet_basis();
        let p = &OperatorMatrix::outer(&s0, &s0) + &OperatorMatrix::outer(&t0, &t0);
        assert!((&(&q * &q) - &p).frobenius_norm() < 1e-15);
        let x = isotropic_exchange();
        assert!(q.commutator(&x).frobenius_norm() < 1e-15);
        // Q = −2(I1xI2x + I1yI2y)
        let xx = &spin_half_operator(2, 0, Axis::X).unwrap() * &spin_half_operator(2, 1, Axis::X).unwrap();
        let yy = &spin_half_operator(2, 0, Axis::Y).unwrap() * &spin_half_operator(2, 1, Axis::Y).unwrap();
        assert!((&q - &(&xx + &yy).scale_real(-2.0)).frobenius_norm() < 1e-15);
        let rho = thermal_deviation(2).unwrap();
        assert_eq!(q.trace_product(&rho).norm(), 0.0);
    }

    #[test]
    fn constructors_are_pure() {
        assert_eq!(lls_target(), lls_target());
        assert_eq!(singlet_triplet_basis(), singlet_triplet_basis());
    }

    #[test]
    fn parse_names() {
        let s = SpinSystem::defm();
        assert_eq!(parse_target("cnot:0,1", &s).unwrap().name, "cnot:0,1");
        assert_eq!(parse_target("cnot", &s).unwrap().name, "cnot:0,1");
        assert_eq!(parse_target("lls", &s).unwrap().kind, TargetKind::State);
        assert!(parse_target("cnot:0", &s).is_err());
        assert!(parse_target("toffoli", &s).is_err());
    }

    #[test]
    fn readout_turns_singlet_order_into_antiphase() {
        let s = SpinSystem::tcp();
        let out = lls_readout(&s, &singlet_order(), 127.5).unwrap();
        assert!(out.hermiticity_residual() < 1e-12);
        assert!((out.frobenius_norm() - singlet_order().frobenius_norm()).abs() < 1e-12);
        assert!(out.trace().norm() < 1e-12);
        assert!(lls_readout(&s, &singlet_order(), 0.0).is_err());
    }
}
