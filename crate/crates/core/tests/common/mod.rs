//! Oracles shared by the integration and acceptance tests. Nothing here calls
//! into the code under test for the quantity being checked.

#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use sbl_lagrangian::data::{Dataset, TrajectoryDataset};
use sbl_lagrangian::discovery::DiscoveredLagrangian;
use sbl_lagrangian::dictionary::{
    build_dictionary, euler_lagrange_apply, evaluate_partials, prune_null_columns, DictionaryConfig, TrajectorySource,
};
use sbl_lagrangian::error::Result;
use sbl_lagrangian::expr::{Atom, AtomSource, Expr};
use sbl_lagrangian::sbl::{log_marginal, standardize, Hyperparameters, Problem};
use sbl_lagrangian::systems::{preset_dictionary, simulate, SystemName, SystemSpec};

/// Accelerations written out from the equations of motion of each preset.
pub fn accelerations(spec: &SystemSpec, d: &TrajectoryDataset) -> DMatrix<f64> {
    let p = |k: &str| spec.params[k];
    let (x, v) = (&d.states, &d.velocities);
    let m = d.dofs();
    DMatrix::from_fn(d.len(), m, |r, i| match spec.name {
        SystemName::DuffingCq => {
            let x1 = x[(r, 0)];
            -p("alpha") * x1 - p("beta") * x1.powi(3) - p("gamma") * x1.powi(5)
        }
        SystemName::PenningTrap => {
            let (wc, wa) = (p("omega_c"), p("omega_a"));
            match i {
                0 => wc * v[(r, 1)] + 0.5 * wa * wa * x[(r, 0)],
                1 => -wc * v[(r, 0)] + 0.5 * wa * wa * x[(r, 1)],
                _ => -wa * wa * x[(r, 2)],
            }
        }
        SystemName::Chain3Dof => {
            let w = p("k") / p("m");
            let left = if i == 0 { x[(r, 0)] } else { x[(r, i)] - x[(r, i - 1)] };
            let right = if i + 1 < m { x[(r, i + 1)] - x[(r, i)] } else { 0.0 };
            w * (right - left)
        }
        _ => unreachable!("trajectory systems only"),
    })
}

/// Trajectory atoms plus known accelerations.
pub struct WithAcceleration<'a> {
    pub data: &'a TrajectoryDataset,
    pub acc: &'a DMatrix<f64>,
}

impl AtomSource for WithAcceleration<'_> {
    fn rows(&self) -> usize {
        self.data.len()
    }

    fn column(&self, atom: Atom) -> Result<Vec<f64>> {
        match atom {
            Atom::A(i) => Ok(self.acc.column(i).iter().copied().collect()),
            other => TrajectorySource { data: self.data }.column(other),
        }
    }
}

/// d/dt(df/dv_i) - df/dx_i with the time derivative taken by the chain rule.
pub fn symbolic_el(f: &Expr, i: usize, src: &WithAcceleration) -> Vec<f64> {
    let e = f.partial(Atom::V(i)).time_derivative().unwrap().sub(&f.partial(Atom::X(i)));
    if e.is_zero() {
        return vec![0.0; src.rows()];
    }
    e.evaluate(src).unwrap()
}

pub fn ids(dl: &DiscoveredLagrangian) -> BTreeSet<String> {
    dl.total.iter().map(|t| t.function_id.clone()).collect()
}

pub fn truth_ids(truth: &[(String, f64)]) -> BTreeSet<String> {
    truth.iter().map(|(id, _)| id.clone()).collect()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Gaussian columns, sparse truth, Gaussian noise.
pub fn synthetic(n: usize, k: usize, coefs: &[(usize, f64)], noise: f64, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
    let mut y = DVector::zeros(n);
    for &(j, c) in coefs {
        y += d.column(j) * c;
    }
    if noise > 0.0 {
        let nd = Normal::new(0.0, noise).unwrap();
        for v in y.iter_mut() {
            *v += nd.sample(&mut rng);
        }
    }
    (d, y)
}

pub fn bits(mask: usize, k: usize) -> Vec<bool> {
    (0..k).map(|j| mask >> j & 1 == 1).collect()
}

/// Exact posterior over the 2^K inclusion patterns: q integrated in closed
/// form (Beta function), theta by quadrature in log(theta) against its
/// inverse-gamma prior, beta and sigma2 already collapsed in `log_marginal`.
pub fn enumerate_model_posterior(design: &DMatrix<f64>, target: &DVector<f64>, hp: &Hyperparameters) -> Vec<f64> {
    use statrs::function::beta::ln_beta;
    let (sd, st, _, _) = standardize(design, target);
    let p = Problem::from_data(&sd, &st);
    let k = design.ncols();
    let grid: Vec<f64> = (0..=6000).map(|i| -30.0 + 60.0 * i as f64 / 6000.0).collect();
    let du = grid[1] - grid[0];
    let mut logs = Vec::with_capacity(1 << k);
    for mask in 0..1usize << k {
        let z = bits(mask, k);
        let h = z.iter().filter(|b| **b).count() as f64;
        let prior_z = ln_beta(hp.a_q + h, hp.b_q + k as f64 - h);
        // log of integrand in u = ln(theta): p(y|z,theta) IG(theta) theta
        let vals: Vec<f64> = grid
            .iter()
            .map(|&u| {
                let theta = u.exp();
                log_marginal(&p, &z, theta, hp).unwrap() - hp.a_theta * u - hp.b_theta / theta
            })
            .collect();
        logs.push(prior_z + log_sum_exp(&vals) + du.ln());
    }
    let norm = log_sum_exp(&logs);
    logs.iter().map(|l| (l - norm).exp()).collect()
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Index of the pattern `z` in the enumeration order.
pub fn mask_of(z: &[bool]) -> usize {
    z.iter().enumerate().filter(|(_, b)| **b).map(|(j, _)| 1 << j).sum()
}

/// Exhaustive BIC minimizer on the standardized problem.
pub fn exhaustive_bic(design: &DMatrix<f64>, target: &DVector<f64>) -> Vec<bool> {
    let (sd, st, _, _) = standardize(design, target);
    let p = Problem::from_data(&sd, &st);
    let k = design.ncols();
    let best = (0..1usize << k)
        .map(|mask| {
            let idx: Vec<usize> = (0..k).filter(|j| mask >> j & 1 == 1).collect();
            (mask, sbl_lagrangian::sbl::bic(&p, &idx))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    bits(best, k)
}

/// Random sparse problem: K in 3..=10, one to three distinct active columns
/// with |coefficient| in [1, 3].
pub fn random_sparse_problem(seed: u64, noise: f64) -> (DMatrix<f64>, DVector<f64>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let k = r.random_range(3..=10);
    let active = r.random_range(1..=3);
    let mut cols: Vec<usize> = (0..k).collect();
    cols.shuffle(&mut r);
    let coefs: Vec<(usize, f64)> = cols[..active]
        .iter()
        .map(|&j| (j, r.random_range(1.0..3.0) * if r.random::<bool>() { 1.0 } else { -1.0 }))
        .collect();
    synthetic(200, k, &coefs, noise, seed.wrapping_add(1 << 32))
}

/// Fraction of `count` random problems on which forward-backward returns the
/// exhaustive BIC optimum.
pub fn fb_match_rate(count: u64, noise: f64) -> f64 {
    let hits = (0..count)
        .filter(|&s| {
            let (d, y) = random_sparse_problem(s, noise);
            sbl_lagrangian::sbl::fb_initialize(&d, &y).unwrap() == exhaustive_bic(&d, &y)
        })
        .count();
    hits as f64 / count as f64
}

/// Largest relative disagreement between the numeric EL columns and the
/// chain-rule EL over all candidates and DOFs. Columns whose symbolic image
/// vanishes are measured against their larger ingredient instead.
pub fn el_disagreement(spec: &SystemSpec) -> f64 {
    let d = simulate(spec).unwrap();
    let t = d.as_trajectory().unwrap();
    let acc = accelerations(spec, t);
    let src = WithAcceleration { data: t, acc: &acc };
    let dict = build_dictionary(&d, &preset_dictionary(spec.name)).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..t.dofs() {
        let el = euler_lagrange_apply(&dict, i, &d).unwrap();
        let rows = el.columns.nrows();
        for (k, f) in dict.functions.iter().enumerate() {
            let sym = symbolic_el(&f.expr(), i, &src);
            let sym = &sym[el.trim..el.trim + rows];
            let num = el.columns.column(k);
            let diff = num.iter().zip(sym).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm = sym.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = if norm > 1e-8 * el.scales[k] { norm } else { el.scales[k].max(1e-300) };
            worst = worst.max(diff / scale);
        }
    }
    worst
}

/// Every DOF's prune log contains the constant and x_i*v_i, and at most one
/// member of each symmetric pair x_a*v_b, x_b*v_a survives.
pub fn gauge_terms_pruned(d: &Dataset, cfg: &DictionaryConfig) -> std::result::Result<(), String> {
    let dict = build_dictionary(d, cfg).unwrap();
    let m = d.dofs();
    for i in 0..m {
        let el = euler_lagrange_apply(&dict, i, d).unwrap();
        let (kept, _) = prune_null_columns(&el, None);
        let has = |id: &str| kept.parent_ids.iter().any(|k| k == id);
        if has("1") {
            return Err(format!("dof {}: constant kept", i + 1));
        }
        for a in 1..=m {
            if has(&format!("x{a}*v{a}")) {
                return Err(format!("dof {}: x{a}*v{a} kept", i + 1));
            }
            for b in a + 1..=m {
                if has(&format!("x{a}*v{b}")) && has(&format!("x{b}*v{a}")) {
                    return Err(format!("dof {}: both orderings of x{a}, v{b} kept", i + 1));
                }
            }
        }
    }
    Ok(())
}

/// Analytic partials of every degree-3 chain candidate against central
/// differences (h = 1e-5) on an 8x3 sample of states `xs` and velocities `vs`.
pub fn partials_fd_check(xs: &[f64], vs: &[f64]) -> std::result::Result<(), String> {
    let x = DMatrix::from_row_slice(8, 3, xs);
    let v = DMatrix::from_row_slice(8, 3, vs);
    let base = TrajectoryDataset::new(0.0, 0.01, x.clone(), v.clone(), TrajectoryDataset::default_labels(3), Default::default()).unwrap();
    let mut cfg = preset_dictionary(SystemName::Chain3Dof);
    cfg.max_degree = 3;
    let dict = build_dictionary(&base.clone().into(), &cfg).unwrap();
    for f in &dict.functions {
        for i in 0..3 {
            for velocity in [false, true] {
                let wrt = if velocity { Atom::V(i) } else { Atom::X(i) };
                let analytic = evaluate_partials(f, &base.clone().into(), wrt).unwrap();
                let h = 1e-5;
                let shifted = |s: f64| {
                    let mut t = base.clone();
                    let m = if velocity { &mut t.velocities } else { &mut t.states };
                    m.column_mut(i).add_scalar_mut(s);
                    f.expr().evaluate(&TrajectorySource { data: &t }).unwrap()
                };
                let (p, q) = (shifted(h), shifted(-h));
                for r in 0..8 {
                    let fd = (p[r] - q[r]) / (2.0 * h);
                    let tol = 1e-5 * analytic[r].abs().max(1e-3 * (1.0 + p[r].abs()));
                    if (fd - analytic[r]).abs() > tol {
                        return Err(format!("{} d/d{}: {} vs {}", f.id, wrt, fd, analytic[r]));
                    }
                }
            }
        }
    }
    Ok(())
}
