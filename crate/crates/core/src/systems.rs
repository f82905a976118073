//! Ground-truth simulators for the example systems.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{spatial_derivative_row, Boundary, Dataset, FieldDataset, Meta, TrajectoryDataset};
use crate::dictionary::{DictionaryConfig, Family, Formulation};
use crate::error::{Error, Result};
use crate::integrate::rk4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemName {
    DuffingCq,
    PenningTrap,
    #[serde(rename = "chain_3dof")]
    Chain3Dof,
    StringWave,
    EulerBernoulliBeam,
}

impl SystemName {
    pub const ALL: [SystemName; 5] = [
        SystemName::DuffingCq,
        SystemName::PenningTrap,
        SystemName::Chain3Dof,
        SystemName::StringWave,
        SystemName::EulerBernoulliBeam,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SystemName::DuffingCq => "duffing_cq",
            SystemName::PenningTrap => "penning_trap",
            SystemName::Chain3Dof => "chain_3dof",
            SystemName::StringWave => "string_wave",
            SystemName::EulerBernoulliBeam => "euler_bernoulli_beam",
        }
    }

    pub fn is_field(&self) -> bool {
        matches!(self, SystemName::StringWave | SystemName::EulerBernoulliBeam)
    }

    pub fn valid_names() -> String {
        "duffing_cq (duffing), penning_trap (penning), chain_3dof (chain), string_wave (string), euler_bernoulli_beam (beam)"
            .to_string()
    }
}

impl fmt::Display for SystemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "duffing_cq" | "duffing" => SystemName::DuffingCq,
            "penning_trap" | "penning" => SystemName::PenningTrap,
            "chain_3dof" | "chain" | "3dof" | "mdof" => SystemName::Chain3Dof,
            "string_wave" | "string" => SystemName::StringWave,
            "euler_bernoulli_beam" | "beam" => SystemName::EulerBernoulliBeam,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown system `{other}`; valid systems: {}",
                    SystemName::valid_names()
                )))
            }
        })
    }
}

/// Complete simulation setup. `ic` is interleaved `(x1, v1, x2, v2, ...)` for
/// discrete systems; for fields it is either S nodal displacements or S
/// displacements followed by S velocities, and defaults to the system's
/// profile when empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: SystemName,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub ic: Vec<f64>,
    #[serde(rename = "T", alias = "t_final")]
    pub t_final: f64,
    pub dt: f64,
    #[serde(default)]
    pub dx: Option<f64>,
    #[serde(default)]
    pub nodes: Option<usize>,
    /// RK4 steps per output sample (minimum; stability may raise it).
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_substeps() -> usize {
    10
}

/// Flexural stiffness over linear mass for the steel strip used by the beam preset.
pub fn beam_coefficient(e: f64, rho: f64, b: f64, d: f64) -> f64 {
    let inertia = b * d.powi(3) / 12.0;
    e * inertia / (rho * b * d)
}

impl SystemSpec {
    /// Settings of the published examples.
    pub fn paper(name: SystemName) -> SystemSpec {
        let p = |pairs: &[(&str, f64)]| pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>();
        let base = |params, ic: Vec<f64>, t_final, dt| SystemSpec {
            name,
            params,
            ic,
            t_final,
            dt,
            dx: None,
            nodes: None,
            substeps: default_substeps(),
        };
        match name {
            SystemName::DuffingCq => base(p(&[("alpha", 1000.0), ("beta", 5000.0), ("gamma", 90000.0)]), vec![0.35, 0.0], 0.5, 5e-4),
            SystemName::PenningTrap => base(
                p(&[("omega_c", 100.0), ("omega_a", 10.0)]),
                vec![1e-3, 0.0, 1e-3, 0.0, 1e-2, 0.0],
                0.3,
                1e-4,
            ),
            SystemName::Chain3Dof => base(p(&[("m", 1.0), ("k", 5000.0), ("n", 3.0)]), vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0], 1.0, 1e-3),
            SystemName::StringWave => SystemSpec {
                dx: Some(0.1),
                ..base(p(&[("c", 10.0), ("L", 1.0)]), vec![], 1.0, 1e-3)
            },
            SystemName::EulerBernoulliBeam => {
                let c = beam_coefficient(2e11, 7850.0, 0.02, 0.001);
                SystemSpec {
                    dx: Some(0.1),
                    ..base(p(&[("c", c), ("L", 1.0), ("phi", 3.5 * PI)]), vec![], 0.1, 1e-4)
                }
            }
        }
    }

    pub fn samples(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn param(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("{} needs parameter `{key}`", self.name)))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidParameter(format!("T must be positive, got {}", self.t_final)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.samples() < crate::data::MIN_SAMPLES {
            return Err(Error::InvalidParameter(format!(
                "T/dt gives {} samples, need at least {}",
                self.samples(),
                crate::data::MIN_SAMPLES
            )));
        }
        if let Some(dx) = self.dx {
            if !(dx > 0.0) {
                return Err(Error::InvalidParameter(format!("dx must be positive, got {dx}")));
            }
        }
        if let Some((k, v)) = self.params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("parameter `{k}` = {v} is not finite")));
        }
        Ok(())
    }

    fn meta(&self, extra: &[(&str, serde_json::Value)]) -> Meta {
        let mut meta = Meta::new();
        meta.insert("system".into(), self.name.as_str().into());
        for (k, v) in &self.params {
            meta.insert(k.clone(), (*v).into());
        }
        meta.insert("T".into(), self.t_final.into());
        meta.insert("dt".into(), self.dt.into());
        for (k, v) in extra {
            meta.insert(k.to_string(), v.clone());
        }
        meta
    }
}

/// Dictionary used by the published experiment for each system.
pub fn preset_dictionary(name: SystemName) -> DictionaryConfig {
    use Family::*;
    match name {
        SystemName::DuffingCq => DictionaryConfig {
            families: vec![Constant, VelocitySquare, DisplacementPower, StateVelocity],
            max_degree: 6,
            adjacent_differences: false,
            cross_terms: false,
            even_powers_only: false,
            formulation: Formulation::Strong,
        },
        SystemName::PenningTrap => DictionaryConfig {
            families: vec![Constant, VelocitySquare, DisplacementPower, DifferencePower, StateVelocity],
            max_degree: 2,
            adjacent_differences: false,
            cross_terms: true,
            even_powers_only: false,
            formulation: Formulation::Strong,
        },
        SystemName::Chain3Dof => DictionaryConfig {
            families: vec![Constant, VelocitySquare, DisplacementPower, DifferencePower, StateVelocity],
            max_degree: 4,
            adjacent_differences: true,
            cross_terms: true,
            even_powers_only: false,
            formulation: Formulation::Strong,
        },
        SystemName::StringWave | SystemName::EulerBernoulliBeam => DictionaryConfig {
            families: vec![VelocitySquare, DisplacementPower, StateVelocity, GradientPower, CurvaturePower],
            max_degree: 2,
            adjacent_differences: false,
            cross_terms: true,
            even_powers_only: true,
            formulation: Formulation::Strong,
        },
    }
}

/// Ground-truth Lagrangian as `(id, coefficient)` pairs, normalized so each
/// kinetic term reads `0.5*v^2`.
pub fn true_lagrangian(spec: &SystemSpec) -> Result<Vec<(String, f64)>> {
    let mut t: Vec<(String, f64)> = Vec::new();
    match spec.name {
        SystemName::DuffingCq => {
            t.push(("v1^2".into(), 0.5));
            t.push(("x1^2".into(), -spec.param("alpha")? / 2.0));
            t.push(("x1^4".into(), -spec.param("beta")? / 4.0));
            t.push(("x1^6".into(), -spec.param("gamma")? / 6.0));
        }
        SystemName::PenningTrap => {
            let (wc, wa) = (spec.param("omega_c")?, spec.param("omega_a")?);
            for i in 1..=3 {
                t.push((format!("v{i}^2"), 0.5));
            }
            t.push(("x1^2".into(), wa * wa / 4.0));
            t.push(("x2^2".into(), wa * wa / 4.0));
            t.push(("x3^2".into(), -wa * wa / 2.0));
            t.push(("x1*v2".into(), wc / 2.0));
            t.push(("x2*v1".into(), -wc / 2.0));
        }
        SystemName::Chain3Dof => {
            let n = chain_len(spec)?;
            let k_over_m = spec.param("k")? / spec.param("m")?;
            for i in 1..=n {
                t.push((format!("v{i}^2"), 0.5));
            }
            t.push(("x1^2".into(), -k_over_m / 2.0));
            for i in 1..n {
                t.push((format!("(x{}-x{})^2", i + 1, i), -k_over_m / 2.0));
            }
        }
        SystemName::StringWave => {
            let c = spec.param("c")?;
            for j in 1..=field_nodes(spec)? {
                t.push((format!("ut_{j}^2"), 0.5));
                t.push((format!("ux_{j}^2"), -c * c / 2.0));
            }
        }
        SystemName::EulerBernoulliBeam => {
            let c = spec.param("c")?;
            for j in 1..=field_nodes(spec)? {
                t.push((format!("ut_{j}^2"), 0.5));
                t.push((format!("uxx_{j}^2"), -c / 2.0));
            }
        }
    }
    Ok(t)
}

fn chain_len(spec: &SystemSpec) -> Result<usize> {
    let n = spec.params.get("n").copied().unwrap_or(3.0);
    if n < 1.0 || n.fract() != 0.0 {
        return Err(Error::InvalidParameter(format!("chain length must be a positive integer, got {n}")));
    }
    Ok(n as usize)
}

/// Node count of a field grid: interior nodes for fixed ends, all non-clamped
/// nodes for the cantilever.
pub fn field_nodes(spec: &SystemSpec) -> Result<usize> {
    if let Some(s) = spec.nodes {
        return Ok(s);
    }
    let dx = spec.dx.ok_or_else(|| Error::InvalidParameter(format!("{} needs dx", spec.name)))?;
    let l = spec.params.get("L").copied().unwrap_or(1.0);
    let segments = (l / dx).round() as usize;
    Ok(match spec.name {
        SystemName::StringWave => segments.saturating_sub(1),
        _ => segments,
    })
}

/// Dispatches on the system name.
pub fn simulate(spec: &SystemSpec) -> Result<Dataset> {
    Ok(match spec.name {
        SystemName::DuffingCq => simulate_duffing(spec)?.into(),
        SystemName::PenningTrap => simulate_penning(spec)?.into(),
        SystemName::Chain3Dof => simulate_chain(spec, chain_len(spec)?)?.into(),
        SystemName::StringWave => simulate_string(spec)?.into(),
        SystemName::EulerBernoulliBeam => simulate_beam(spec)?.into(),
    })
}

fn expect(spec: &SystemSpec, name: SystemName) -> Result<()> {
    if spec.name != name {
        return Err(Error::InvalidParameter(format!("expected a {name} spec, got {}", spec.name)));
    }
    spec.validate()
}

fn interleaved_ic(spec: &SystemSpec, m: usize) -> Result<Vec<f64>> {
    if spec.ic.len() != 2 * m {
        return Err(Error::InvalidParameter(format!(
            "{} expects {} initial values (x1, v1, ...), got {}",
            spec.name,
            2 * m,
            spec.ic.len()
        )));
    }
    Ok(spec.ic.clone())
}

/// Integrates a second-order system given as `acc(x, a)` with the
/// interleaved state `(x1, v1, ...)`.
fn integrate_second_order(
    spec: &SystemSpec,
    m: usize,
    y0: &[f64],
    substeps: usize,
    acc: impl Fn(&[f64], &[f64], &mut [f64]),
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = spec.samples();
    let rhs = |y: &[f64], dy: &mut [f64]| {
        let mut x = vec![0.0; m];
        let mut v = vec![0.0; m];
        for i in 0..m {
            x[i] = y[2 * i];
            v[i] = y[2 * i + 1];
        }
        let mut a = vec![0.0; m];
        acc(&x, &v, &mut a);
        for i in 0..m {
            dy[2 * i] = v[i];
            dy[2 * i + 1] = a[i];
        }
    };
    let r = rk4(rhs, y0, 0.0, spec.dt, n, substeps);
    if let Some(t) = r.blow_up {
        return Err(Error::Simulation(format!("{} state became non-finite at t = {t}", spec.name)));
    }
    let x = DMatrix::from_fn(n, m, |i, j| r.samples[i][2 * j]);
    let v = DMatrix::from_fn(n, m, |i, j| r.samples[i][2 * j + 1]);
    Ok((x, v))
}

fn trajectory(spec: &SystemSpec, x: DMatrix<f64>, v: DMatrix<f64>, labels: Vec<String>, substeps: usize) -> Result<TrajectoryDataset> {
    let meta = spec.meta(&[("substeps", substeps.into())]);
    TrajectoryDataset::new(0.0, spec.dt, x, v, labels, meta)
}

/// x'' + alpha x + beta x^3 + gamma x^5 = 0.
pub fn simulate_duffing(spec: &SystemSpec) -> Result<TrajectoryDataset> {
    expect(spec, SystemName::DuffingCq)?;
    let (a, b, g) = (spec.param("alpha")?, spec.param("beta")?, spec.param("gamma")?);
    let y0 = interleaved_ic(spec, 1)?;
    let sub = spec.substeps.max(1);
    let (x, v) = integrate_second_order(spec, 1, &y0, sub, |x, _, acc| {
        let x1 = x[0];
        let x2 = x1 * x1;
        acc[0] = -x1 * (a + x2 * (b + g * x2));
    })?;
    trajectory(spec, x, v, vec!["x".into()], sub)
}

/// Normalized Penning trap: x'' = wc y' + wa^2/2 x, y'' = -wc x' + wa^2/2 y, z'' = -wa^2 z.
pub fn simulate_penning(spec: &SystemSpec) -> Result<TrajectoryDataset> {
    expect(spec, SystemName::PenningTrap)?;
    let (wc, wa) = (spec.param("omega_c")?, spec.param("omega_a")?);
    let y0 = interleaved_ic(spec, 3)?;
    let sub = spec.substeps.max(1);
    let half = wa * wa / 2.0;
    let (x, v) = integrate_second_order(spec, 3, &y0, sub, |x, v, acc| {
        acc[0] = wc * v[1] + half * x[0];
        acc[1] = -wc * v[0] + half * x[1];
        acc[2] = -wa * wa * x[2];
    })?;
    trajectory(spec, x, v, vec!["x".into(), "y".into(), "z".into()], sub)
}

/// Initial condition with displacements rising linearly from `first` to
/// `last` and zero velocities, interleaved.
pub fn linear_profile_ic(n: usize, first: f64, last: f64) -> Vec<f64> {
    let mut ic = Vec::with_capacity(2 * n);
    for i in 0..n {
        let s = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        ic.push(first + s * (last - first));
        ic.push(0.0);
    }
    ic
}

/// Grounded spring-mass chain with a free last mass: M x'' + K x = 0.
pub fn simulate_chain(spec: &SystemSpec, n: usize) -> Result<TrajectoryDataset> {
    expect(spec, SystemName::Chain3Dof)?;
    if n == 0 {
        return Err(Error::InvalidParameter("chain needs at least one mass".into()));
    }
    let (m, k) = (spec.param("m")?, spec.param("k")?);
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("mass must be positive, got {m}")));
    }
    let y0 = interleaved_ic(spec, n)?;
    let w = k / m;
    let sub = spec.substeps.max(1);
    let (x, v) = integrate_second_order(spec, n, &y0, sub, |x, _, acc| {
        for i in 0..n {
            let left = if i == 0 { x[0] } else { x[i] - x[i - 1] };
            let right = if i + 1 < n { x[i + 1] - x[i] } else { 0.0 };
            acc[i] = w * (right - left);
        }
    })?;
    trajectory(spec, x, v, TrajectoryDataset::default_labels(n), sub)
}

fn field_ic(spec: &SystemSpec, s: usize, profile: impl Fn(f64) -> f64, dx: f64) -> Result<Vec<f64>> {
    let mut y0 = vec![0.0; 2 * s];
    match spec.ic.len() {
        0 => {
            for j in 0..s {
                y0[2 * j] = profile((j + 1) as f64 * dx);
            }
        }
        l if l == s => {
            for j in 0..s {
                y0[2 * j] = spec.ic[j];
            }
        }
        l if l == 2 * s => {
            for j in 0..s {
                y0[2 * j] = spec.ic[j];
                y0[2 * j + 1] = spec.ic[s + j];
            }
        }
        l => {
            return Err(Error::InvalidParameter(format!(
                "{} expects {s} or {} initial values, got {l}",
                spec.name,
                2 * s
            )))
        }
    }
    Ok(y0)
}

fn simulate_field(
    spec: &SystemSpec,
    boundary: Boundary,
    order: usize,
    coefficient: f64,
    profile: impl Fn(f64) -> f64,
    omega_max: f64,
) -> Result<FieldDataset> {
    let dx = spec.dx.ok_or_else(|| Error::InvalidParameter(format!("{} needs dx", spec.name)))?;
    let s = field_nodes(spec)?;
    if s < crate::data::MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!("grid has {s} nodes, need at least 5")));
    }
    let y0 = field_ic(spec, s, profile, dx)?;
    // keep omega_max * h well inside the RK4 stability region
    let stable = (omega_max * spec.dt / 0.5).ceil() as usize;
    let sub = spec.substeps.max(stable).max(1);
    if sub > spec.substeps {
        log::info!("{}: raising substeps to {sub} for stability", spec.name);
    }
    let (u, ut) = integrate_second_order(spec, s, &y0, sub, |u, _, acc| {
        let d = spatial_derivative_row(u, dx, boundary, order).expect("grid validated");
        for j in 0..u.len() {
            acc[j] = coefficient * d[j];
        }
    })?;
    let meta = spec.meta(&[("substeps", sub.into()), ("dx", dx.into()), ("nodes", s.into())]);
    FieldDataset::new(0.0, spec.dt, dx, u, Some(ut), boundary, meta)
}

/// u_tt = c^2 u_xx on (0, L) with pinned ends. Default profile 1 - cos(2 pi x / L).
pub fn simulate_string(spec: &SystemSpec) -> Result<FieldDataset> {
    expect(spec, SystemName::StringWave)?;
    let c = spec.param("c")?;
    let l = spec.params.get("L").copied().unwrap_or(1.0);
    let dx = spec.dx.unwrap_or(0.1);
    let omega_max = 2.0 * c.abs() / dx;
    simulate_field(spec, Boundary::FixedFixed, 2, c * c, |x| 1.0 - (2.0 * PI * x / l).cos(), omega_max)
}

/// Cantilever mode shape with wavenumber `phi`.
pub fn cantilever_mode(phi: f64, l: f64, x: f64) -> f64 {
    let r = ((phi * l).cos() + (phi * l).cosh()) / ((phi * l).sin() + (phi * l).sinh());
    ((phi * x).cosh() - (phi * x).cos()) + r * ((phi * x).sin() - (phi * x).sinh())
}

/// u_tt = -c u_xxxx, clamped at x = 0 and free at x = L. Default profile is
/// the cantilever mode with wavenumber `phi`.
pub fn simulate_beam(spec: &SystemSpec) -> Result<FieldDataset> {
    expect(spec, SystemName::EulerBernoulliBeam)?;
    let c = spec.param("c")?;
    let l = spec.params.get("L").copied().unwrap_or(1.0);
    let phi = spec.params.get("phi").copied().unwrap_or(3.5 * PI);
    let dx = spec.dx.unwrap_or(0.1);
    let omega_max = (c.abs() * 16.0).sqrt() / (dx * dx);
    simulate_field(spec, Boundary::ClampedFree, 4, -c, |x| cantilever_mode(phi, l, x), omega_max)
}
