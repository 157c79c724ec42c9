// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

use pinnctl_core::analysis::pulse_spectrum;
use pinnctl_core::objectives::table_fidelity;
use pinnctl_core::optimizer::{train, OptimizerConfig};
use pinnctl_core::propagation::Dynamics;
use pinnctl_core::spin_system::{noise_operators, NoiseKind};
use pinnctl_core::targets::{cnot, lls_objective, thermal_deviation};
use pinnctl_core::{NetworkParams, Normalization, PulseTable, SamplingRule, SpinSystem};
use proptest::prelude::*;

fn table(system: &SpinSystem, duration: f64, amps: Vec<f64>) -> PulseTable {
    let w = 2 * system.n_channels();
    let n = amps.len() / w;
    PulseTable::new(duration, n, system.n_channels(), amps[..n * w].to_vec(), SamplingRule::Midpoint).unwrap()
}

fn amps(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1500.0f64..1500.0, 4..max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pwc_propagator_is_unitary(a in amps(400), tcp in any::<bool>()) {
        let system = if tcp { SpinSystem::tcp() } else { SpinSystem::defm() };
        let t = table(&system, 0.02, a);
        let u = Dynamics::new(&system).evolve_unitary(&t, None).unwrap().final_state;
        prop_assert!(u.unitarity_residual() < 1e-12);
    }

    #[test]
    fn lindblad_keeps_trace_and_hermiticity(a in amps(80), gamma in 0.0f64..0.1, global in any::<bool>()) {
        let system = SpinSystem::tcp();
        let kind = if global { NoiseKind::Global } else { NoiseKind::Local };
        let noise = noise_operators(&system, kind, gamma).unwrap();
        let t = table(&system, 0.04, a);
        let rho0 = thermal_deviation(2).unwrap();
        let rho = Dynamics::new(&system).evolve_lindblad(&t, &rho0, &noise, t.max_abs(), None).unwrap().final_state;
        prop_assert!(rho.trace().norm() < 1e-10);
        prop_assert!(rho.hermiticity_residual() < 1e-12);
        // dephasing never increases the Hilbert-Schmidt norm
        prop_assert!(rho.frobenius_norm() <= rho0.frobenius_norm() * (1.0 + 1e-10));
    }

    #[test]
    fn zero_gamma_matches_closed_evolution(a in amps(60)) {
        let system = SpinSystem::tcp();
        let t = table(&system, 0.08, a);
        let dynamics = Dynamics::new(&system);
        let closed = table_fidelity(&dynamics, &t, &lls_objective(), t.max_abs()).unwrap();
        for kind in [NoiseKind::Local, NoiseKind::Global] {
            let noisy = lls_objective().with_noise(Some(noise_operators(&system, kind, 0.0).unwrap()));
            prop_assert_eq!(table_fidelity(&dynamics, &t, &noisy, t.max_abs()).unwrap(), closed);
        }
    }

    #[test]
    fn fidelities_lie_in_unit_interval(a in amps(200)) {
        let system = SpinSystem::defm();
        let t = table(&system, 0.02, a);
        let obj = cnot(0, 1, 2).unwrap().objective(Normalization::Normalized).unwrap();
        let f = table_fidelity(&Dynamics::new(&system), &t, &obj, t.max_abs()).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
        let tcp = SpinSystem::tcp();
        let t2 = table(&tcp, 0.08, t.samples().to_vec());
        let g = table_fidelity(&Dynamics::new(&tcp), &t2, &lls_objective(), t2.max_abs()).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&g));
    }

    #[test]
    fn spectrum_obeys_parseval(a in prop::collection::vec(-1e3f64..1e3, 4..600), duration in 1e-3f64..1.0) {
        let t = PulseTable::new(duration, a.len() / 2, 1, a[..a.len() / 2 * 2].to_vec(), SamplingRule::Midpoint);
        let t = t.unwrap();
        prop_assume!(t.n_segments() >= 2);
        let s = pulse_spectrum(&t).unwrap();
        prop_assert!(s.parseval_residual() < 1e-6);
        prop_assert!(s.energy_bandwidth_99[0] <= s.freqs.iter().fold(0.0f64, |m, f| m.max(f.abs())));
    }

    #[test]
    fn network_parameters_round_trip(seed in any::<u64>(), hidden in 1usize..20) {
        let p = NetworkParams::init(&[1, hidden, hidden, 4], 600.0, 0.02, seed).unwrap();
        let flat = p.to_flat();
        let mut q = NetworkParams::init(&[1, hidden, hidden, 4], 600.0, 0.02, seed.wrapping_add(1)).unwrap();
        q.set_flat(&flat).unwrap();
        prop_assert_eq!(q.to_flat(), flat);
        let back = NetworkParams::from_json(&p.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn network_output_is_bounded(seed in any::<u64>(), t in 0.0f64..=0.02) {
        let p = NetworkParams::init(&[1, 12, 12, 4], 700.0, 0.02, seed).unwrap();
        let u = p.forward(t).unwrap();
        prop_assert!(u.iter().all(|x| x.abs() <= 700.0));
    }
}

#[test]
fn training_reruns_are_bit_identical() {
    let system = SpinSystem::defm();
    let obj = cnot(0, 1, 2).unwrap().objective(Normalization::Normalized).unwrap();
    let config = OptimizerConfig {
        max_iters: 15,
        n_fine: 64,
        seed: 3,
        ..OptimizerConfig::default()
    };
    let run = || {
        let p0 = NetworkParams::init(&[1, 10, 10, 4], 600.0, 0.02, 3).unwrap();
        train(p0, &system, &obj, &config).unwrap().to_json().unwrap()
    };
    assert_eq!(run(), run());
}
