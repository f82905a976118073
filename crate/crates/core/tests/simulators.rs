use std::f64::consts::PI;

use proptest::prelude::*;
use sbl_lagrangian::systems::*;

fn max_rel_drift(e: &[f64]) -> f64 {
    e.iter().map(|v| (v - e[0]).abs()).fold(0.0, f64::max) / e[0].abs()
}

#[test]
fn sampling_convention() {
    let spec = SystemSpec::paper(SystemName::DuffingCq);
    let d = simulate_duffing(&spec).unwrap();
    assert_eq!(d.len(), 1000);
    assert_eq!(d.t0, 0.0);
    assert_eq!(d.states[(0, 0)], 0.35);
    assert_eq!(d.velocities[(0, 0)], 0.0);
}

#[test]
fn single_mass_is_a_harmonic_oscillator() {
    let mut spec = SystemSpec::paper(SystemName::Chain3Dof);
    spec.params.insert("n".into(), 1.0);
    spec.ic = vec![0.5, 0.0];
    let d = simulate_chain(&spec, 1).unwrap();
    let w = 5000f64.sqrt();
    for (r, t) in d.times().iter().enumerate() {
        assert!((d.states[(r, 0)] - 0.5 * (w * t).cos()).abs() < 1e-6);
        assert!((d.velocities[(r, 0)] + 0.5 * w * (w * t).sin()).abs() < 1e-4);
    }
}

#[test]
fn duffing_energy_is_conserved() {
    let spec = SystemSpec::paper(SystemName::DuffingCq);
    let d = simulate_duffing(&spec).unwrap();
    let e: Vec<f64> = (0..d.len())
        .map(|r| {
            let (x, v) = (d.states[(r, 0)], d.velocities[(r, 0)]);
            0.5 * v * v + 500.0 * x * x + 1250.0 * x.powi(4) + 15000.0 * x.powi(6)
        })
        .collect();
    assert!(max_rel_drift(&e) < 1e-6, "{}", max_rel_drift(&e));
}

#[test]
fn penning_axial_motion_and_energy() {
    let spec = SystemSpec::paper(SystemName::PenningTrap);
    let d = simulate_penning(&spec).unwrap();
    let z0 = spec.ic[4];
    let mut e = Vec::new();
    for (r, t) in d.times().iter().enumerate() {
        // z decouples: z'' = -omega_a^2 z
        assert!((d.states[(r, 2)] - z0 * (10.0 * t).cos()).abs() < 1e-9);
        let (x, y, z) = (d.states[(r, 0)], d.states[(r, 1)], d.states[(r, 2)]);
        let v2: f64 = (0..3).map(|i| d.velocities[(r, i)].powi(2)).sum();
        e.push(0.5 * v2 - 25.0 * (x * x + y * y) + 50.0 * z * z);
    }
    assert!(max_rel_drift(&e) < 1e-6);
}

#[test]
fn string_single_mode_matches_discrete_dispersion() {
    // sin(pi x) is an eigenvector of the 3-point Laplacian with eigenvalue
    // -(2/dx sin(pi dx/2))^2, so each node oscillates at that frequency
    let mut spec = SystemSpec::paper(SystemName::StringWave);
    let dx = 0.1;
    spec.ic = (1..=9).map(|j| (PI * j as f64 * dx).sin()).collect();
    let d = simulate_string(&spec).unwrap();
    let w = 10.0 * 2.0 / dx * (PI * dx / 2.0).sin();
    for (r, t) in d.times().iter().enumerate().step_by(37) {
        for j in 0..9 {
            let exact = spec.ic[j] * (w * t).cos();
            assert!((d.field[(r, j)] - exact).abs() < 1e-6, "t={t} node {j}");
        }
    }
}

#[test]
fn beam_starts_from_the_cantilever_shape_at_rest() {
    let spec = SystemSpec::paper(SystemName::EulerBernoulliBeam);
    let d = simulate_beam(&spec).unwrap();
    assert_eq!(d.nodes(), 10);
    let phi = spec.params["phi"];
    for j in 0..10 {
        let x = (j + 1) as f64 * 0.1;
        assert!((d.field[(0, j)] - cantilever_mode(phi, 1.0, x)).abs() < 1e-12);
    }
    let ut = d.velocity.as_ref().unwrap();
    assert!(ut.row(0).iter().all(|v| *v == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn chain_energy_is_conserved(ic in proptest::collection::vec(-1.0f64..1.0, 8)) {
        let mut spec = SystemSpec::paper(SystemName::Chain3Dof);
        spec.params.insert("n".into(), 4.0);
        spec.ic = ic;
        spec.t_final = 0.5;
        let d = simulate_chain(&spec, 4).unwrap();
        let e: Vec<f64> = (0..d.len())
            .map(|r| {
                let x = |i: usize| d.states[(r, i)];
                let kin: f64 = (0..4).map(|i| d.velocities[(r, i)].powi(2)).sum::<f64>() / 2.0;
                let pot = x(0).powi(2) + (1..4).map(|i| (x(i) - x(i - 1)).powi(2)).sum::<f64>();
                kin + 2500.0 * pot
            })
            .collect();
        prop_assume!(e[0] > 1e-3);
        prop_assert!(max_rel_drift(&e) < 1e-6);
    }
}
