mod common;

use std::collections::BTreeMap;

use common::*;
use nalgebra::DMatrix;
use sbl_lagrangian::data::{Dataset, TrajectoryDataset};
use sbl_lagrangian::discovery::*;
use sbl_lagrangian::exec;
use sbl_lagrangian::expr::{Atom, Monomial};
use sbl_lagrangian::sbl::Hyperparameters;
use sbl_lagrangian::systems::*;

fn hp(seed: u64) -> Hyperparameters {
    Hyperparameters { seed, ..Default::default() }
}

fn run(name: SystemName, seed: u64) -> (SystemSpec, Dataset, DiscoveredLagrangian) {
    let spec = SystemSpec::paper(name);
    let d = simulate(&spec).unwrap();
    let dl = discover(&d, &preset_dictionary(name), &hp(seed)).unwrap();
    (spec, d, dl)
}

#[test]
fn clean_data_recovers_every_system() {
    for name in [
        SystemName::DuffingCq,
        SystemName::PenningTrap,
        SystemName::Chain3Dof,
        SystemName::StringWave,
        SystemName::EulerBernoulliBeam,
    ] {
        let (spec, _, dl) = run(name, 1);
        let truth = true_lagrangian(&spec).unwrap();
        assert_eq!(ids(&dl), truth_ids(&truth), "{name}");
        let e = relative_l2_error(&dl, &truth).unwrap();
        assert!(e < 1.0, "{name}: {e}%");
        assert!(!dl.any_degenerate());
        for r in &dl.per_dof {
            let kinetic: Vec<_> = r.terms.iter().filter(|t| t.function_id.starts_with('v') || t.function_id.starts_with("ut_")).collect();
            assert_eq!(kinetic.len(), 1, "{name} dof {}", r.dof);
            assert_eq!(kinetic[0].coefficient_mean, 0.5);
            assert!(r.terms.iter().all(|t| t.coefficient_std >= 0.0));
        }
        if let Some(c) = &dl.consensus {
            assert!(c.pooled && c.dissenting.is_empty(), "{name}");
        }
    }
}

#[test]
fn assembled_lagrangians_satisfy_the_residual_bound() {
    for name in [SystemName::DuffingCq, SystemName::PenningTrap, SystemName::Chain3Dof] {
        let (spec, d, dl) = run(name, 2);
        let t = d.as_trajectory().unwrap();
        let acc = accelerations(&spec, t);
        let src = WithAcceleration { data: t, acc: &acc };
        for i in 0..t.dofs() {
            let li = dl.dof_expr(i).unwrap();
            let res = symbolic_el(&li, i, &src);
            let kinetic = symbolic_el(&sbl_lagrangian::expr::Expr::monomial(Monomial::power(Atom::V(i), 2), 0.5), i, &src);
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let ratio = norm(&res) / norm(&kinetic);
            assert!(ratio < 5e-2, "{name} dof {}: {ratio}", i + 1);
        }
    }
}

#[test]
fn identical_seeds_give_identical_results() {
    let (_, d, a) = run(SystemName::PenningTrap, 5);
    let b = discover(&d, &preset_dictionary(SystemName::PenningTrap), &hp(5)).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn parallel_and_sequential_paths_agree() {
    let spec = SystemSpec::paper(SystemName::Chain3Dof);
    let d = simulate(&spec).unwrap();
    let cfg = preset_dictionary(spec.name);
    exec::set_parallel(false);
    let seq = discover(&d, &cfg, &hp(9)).unwrap();
    exec::set_parallel(true);
    let par = discover(&d, &cfg, &hp(9)).unwrap();
    assert_eq!(seq.to_json().unwrap(), par.to_json().unwrap());
}

/// Rewrites an id under the DOF relabeling `q`, keeping differences in the
/// canonical hi > lo orientation. Returns the sign picked up by odd powers.
fn relabel(id: &str, q: &[usize]) -> (String, f64) {
    let m = Monomial::parse(id).unwrap();
    let mut sign = 1.0;
    let mut out = Monomial::one();
    for &(a, p) in m.factors() {
        let mut b = a.shifted(|i| q[i]);
        if let Atom::Diff { hi, lo } = b {
            if hi < lo {
                b = Atom::Diff { hi: lo, lo: hi };
                if p % 2 == 1 {
                    sign = -sign;
                }
            }
        }
        out = out.mul(&Monomial::power(b, p));
    }
    (out.to_string(), sign)
}

#[test]
fn relabeling_dofs_permutes_the_result() {
    let spec = SystemSpec::paper(SystemName::PenningTrap);
    let d = simulate(&spec).unwrap();
    let t = d.as_trajectory().unwrap();
    // new column j holds old column p[j]; old DOF i becomes q[i]
    let p = [2usize, 0, 1];
    let mut q = [0usize; 3];
    for (j, &i) in p.iter().enumerate() {
        q[i] = j;
    }
    let perm = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), 3, |r, j| m[(r, p[j])]);
    let permuted = TrajectoryDataset::new(
        t.t0,
        t.dt,
        perm(&t.states),
        perm(&t.velocities),
        TrajectoryDataset::default_labels(3),
        t.meta.clone(),
    )
    .unwrap();
    let cfg = preset_dictionary(spec.name);
    let a = discover(&d, &cfg, &hp(4)).unwrap();
    let b = discover(&permuted.into(), &cfg, &hp(4)).unwrap();

    let expected: BTreeMap<String, f64> = a
        .total
        .iter()
        .map(|t| {
            let (id, s) = relabel(&t.function_id, &q);
            (id, s * t.coefficient_mean)
        })
        .collect();
    let got: BTreeMap<String, f64> = b.total.iter().map(|t| (t.function_id.clone(), t.coefficient_mean)).collect();
    assert_eq!(expected.keys().collect::<Vec<_>>(), got.keys().collect::<Vec<_>>());
    let scale = got.values().fold(0.0f64, |m, v| m.max(v.abs()));
    for (id, c) in &expected {
        assert!((got[id] - c).abs() < 1e-3 * scale, "{id}: {} vs {c}", got[id]);
    }
    // per-DOF supports outside the gauge-aliased cross pairs map one to one
    let plain = |r: &DofResult, map: Option<&[usize]>| {
        let mut v: Vec<String> = r
            .terms
            .iter()
            .filter(|t| !t.function_id.contains('*'))
            .map(|t| map.map_or(t.function_id.clone(), |q| relabel(&t.function_id, q).0))
            .collect();
        v.sort();
        v
    };
    for i in 0..3 {
        assert_eq!(plain(&a.per_dof[i], Some(&q)), plain(&b.per_dof[q[i]], None), "old dof {}", i + 1);
    }
}

#[test]
fn free_particle_keeps_only_the_kinetic_term() {
    let n = 400;
    let dt = 0.01;
    let x = DMatrix::from_fn(n, 1, |r, _| 1.0 + 0.5 * r as f64 * dt);
    let v = DMatrix::from_element(n, 1, 0.5);
    let d: Dataset = TrajectoryDataset::new(0.0, dt, x, v, TrajectoryDataset::default_labels(1), Default::default())
        .unwrap()
        .into();
    let dl = discover(&d, &preset_dictionary(SystemName::DuffingCq), &hp(1)).unwrap();
    assert_eq!(dl.total_ids(), vec!["v1^2".to_string()]);
    assert!(dl.per_dof[0].warning.is_some());
}

#[test]
fn chain_difference_terms_pool_to_the_spring_constant() {
    let (_, _, dl) = run(SystemName::Chain3Dof, 3);
    let (mean, std) = aggregate_shared_terms(&dl, "(x*-x*)^2").unwrap();
    assert!(rel(mean, -2500.0) < 1e-2, "{mean}");
    assert!(std < 25.0);
    let (one, zero) = aggregate_shared_terms(&dl, "x1^2").unwrap();
    assert!(rel(one, -2500.0) < 1e-2);
    assert_eq!(zero, 0.0);
    assert!(aggregate_shared_terms(&dl, "x*^3").is_err());
}

#[test]
fn string_nodes_pool_to_the_wave_speed() {
    let (spec, _, dl) = run(SystemName::StringWave, 1);
    let (mean, std) = aggregate_shared_terms(&dl, "ux_*^2").unwrap();
    let c2 = spec.params["c"].powi(2);
    // the EL of -c^2/2 ux^2 against 1/2 ut^2 gives u_tt = c^2 u_xx
    assert!(rel(-2.0 * mean, c2) < 1e-2, "{mean}");
    assert!(std / mean.abs() < 2e-2);
}
