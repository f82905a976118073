use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::json;
use sbl_lagrangian::data::{load_dataset, save_dataset, save_trajectory, Dataset};
use sbl_lagrangian::dictionary::Formulation;
use sbl_lagrangian::discovery::{discover as run_discovery, relative_l2_error, DiscoveredLagrangian};
use sbl_lagrangian::sweep::{corrupt, noise_sweep as run_sweep, DEFAULT_SYSTEMS, DEFAULT_ZETAS, SWEEP_FORMULATION};
use sbl_lagrangian::systems::{linear_profile_ic, simulate as run_simulation, simulate_chain, true_lagrangian, SystemName, SystemSpec};
use sbl_lagrangian::transforms::{
    equations_of_motion, generalize_chain, hamiltonian_drift, legendre_transform, posterior_predict_band, predict_with,
};

use crate::config::{Resolved, SystemOverrides};
use crate::error::{CliResult, Failure};
use crate::output;
use crate::{DiscoverArgs, FormulationArg, InferenceArgs, PredictArgs, SimulateArgs, SourceArgs, SweepArgs, TransformArgs};

fn out_dir(r: &Resolved) -> CliResult<&Path> {
    std::fs::create_dir_all(&r.out).map_err(|e| Failure::config(format!("cannot create {}: {e}", r.out.display())))?;
    Ok(&r.out)
}

fn overrides(s: &SourceArgs) -> SystemOverrides {
    SystemOverrides { t_final: s.t_final, dt: s.dt }
}

fn formulation(a: &InferenceArgs) -> Option<Formulation> {
    a.formulation.map(|f| match f {
        FormulationArg::Strong => Formulation::Strong,
        FormulationArg::Weak => SWEEP_FORMULATION,
    })
}

fn system_from_meta(d: &Dataset) -> Option<SystemName> {
    d.meta().get("system").and_then(|v| v.as_str()).and_then(|s| s.parse().ok())
}

/// Training data and, when known, the system that produced it.
struct Source {
    spec: Option<SystemSpec>,
    name: Option<SystemName>,
    data: Dataset,
}

fn load_source(r: &Resolved, s: &SourceArgs) -> CliResult<Source> {
    let named = r.system_name(s.system.as_deref())?;
    let (spec, name, data) = match &s.data {
        Some(path) => {
            let d = load_dataset(path)?;
            let name = named.or_else(|| system_from_meta(&d));
            (None, name, d)
        }
        None => {
            let name = named.ok_or_else(|| Failure::config("give --system or --data (or a [system] block in --config)"))?;
            let spec = r.system(name, &overrides(s))?;
            let d = run_simulation(&spec)?;
            (Some(spec), Some(name), d)
        }
    };
    let zeta = r.noise(s.noise);
    let data = if zeta > 0.0 { corrupt(&data, zeta, r.seed)? } else { data };
    Ok(Source { spec, name, data })
}

pub fn simulate(r: &Resolved, a: &SimulateArgs) -> CliResult<()> {
    if a.source.data.is_some() {
        return Err(Failure::config("simulate takes --system, not --data"));
    }
    let src = load_source(r, &a.source)?;
    let name = src.name.expect("simulated data has a system");
    let path = out_dir(r)?.join(format!("{name}.csv"));
    save_dataset(&src.data, &path)?;
    println!(
        "{name}: N = {}, m = {}, dt = {} -> {}",
        src.data.len(),
        src.data.dofs(),
        src.data.dt(),
        path.display()
    );
    Ok(())
}

fn discover_source(r: &Resolved, src: &Source, inf: &InferenceArgs) -> CliResult<DiscoveredLagrangian> {
    let name = src.name.ok_or_else(|| {
        Failure::config("cannot pick a dictionary: the data names no system; pass --system or a [dictionary] block with --config")
    })?;
    let dict = r.dictionary(name, formulation(inf))?;
    let hp = r.hyperparameters(inf.samples, inf.burnin)?;
    Ok(run_discovery(&src.data, &dict, &hp)?)
}

fn truth_spec(r: &Resolved, name: SystemName, src_spec: Option<&SystemSpec>) -> CliResult<SystemSpec> {
    match src_spec {
        Some(s) if s.name == name => Ok(s.clone()),
        _ => r.system(name, &SystemOverrides::default()),
    }
}

pub fn discover(r: &Resolved, a: &DiscoverArgs) -> CliResult<()> {
    let src = load_source(r, &a.source)?;
    let dl = discover_source(r, &src, &a.inference)?;
    let dir = out_dir(r)?;
    output::write_text(&dir.join("lagrangian.json"), &dl.to_json()?)?;
    output::write_pip(&dl, &dir.join("pip.csv"))?;
    if a.chain {
        output::write_chain(&dl, &dir.join("chain.jsonl"))?;
    }
    let truth_error = match a.truth.as_deref() {
        None => None,
        Some(t) => {
            let name = if t.is_empty() {
                src.name.ok_or_else(|| Failure::config("--truth needs a system name for file data"))?
            } else {
                t.parse()?
            };
            let spec = truth_spec(r, name, src.spec.as_ref())?;
            Some(relative_l2_error(&dl, &true_lagrangian(&spec)?)?)
        }
    };
    let table = output::summary_table(&dl, truth_error);
    output::write_text(&dir.join("summary.txt"), &table)?;
    print!("{table}");
    if dl.any_degenerate() {
        return Err(Failure::degenerate("at least one DOF chain was degenerate; outputs were written with the kinetic-only fallback"));
    }
    Ok(())
}

fn load_or_discover(r: &Resolved, lagrangian: Option<&PathBuf>, src: &Source, inf: &InferenceArgs) -> CliResult<DiscoveredLagrangian> {
    match lagrangian {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::config(format!("cannot read {}: {e}", p.display())))?;
            Ok(DiscoveredLagrangian::from_json(&text)?)
        }
        None => discover_source(r, src, inf),
    }
}

/// Source for commands that may start from a saved Lagrangian: with no
/// system or data given, the system recorded in the Lagrangian is simulated.
fn source_for(r: &Resolved, s: &SourceArgs, lagrangian: Option<&PathBuf>) -> CliResult<Source> {
    if s.system.is_some() || s.data.is_some() || r.file.system.is_some() {
        return load_source(r, s);
    }
    let Some(path) = lagrangian else {
        return load_source(r, s);
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let dl = DiscoveredLagrangian::from_json(&text)?;
    let name = dl
        .provenance
        .dataset_meta
        .get("system")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Failure::config("the Lagrangian records no system; pass --system or --data"))?;
    let mut with_name = s.clone();
    with_name.system = Some(name.to_string());
    load_source(r, &with_name)
}

pub fn transform(r: &Resolved, a: &TransformArgs) -> CliResult<()> {
    let src = source_for(r, &a.source, a.lagrangian.as_ref())?;
    let dl = load_or_discover(r, a.lagrangian.as_ref(), &src, &a.inference)?;
    let h = legendre_transform(&dl)?;
    let eom = equations_of_motion(&dl)?;
    let dir = out_dir(r)?;
    output::write_text(&dir.join("hamiltonian.txt"), &format!("{h}\n"))?;
    output::write_text(&dir.join("hamiltonian.json"), &h.to_json()?)?;
    let mut eom_text = eom.to_string();
    if eom.is_field() {
        eom_text.push_str("\npooled over nodes (mean, std):\n");
        for (id, mean, std) in eom.pooled() {
            eom_text.push_str(&format!("{id}: {mean} ± {std}\n"));
        }
    }
    output::write_text(&dir.join("eom.txt"), &eom_text)?;
    output::write_text(&dir.join("eom.json"), &eom.to_json()?)?;
    let drift = hamiltonian_drift(&h, &src.data)?;
    let t0 = match &src.data {
        Dataset::Trajectory(t) => t.t0,
        Dataset::Field(f) => f.t0,
    };
    output::write_energy(t0, src.data.dt(), &drift.series, &dir.join("energy_drift.csv"))?;
    println!("{h}");
    print!("{eom_text}");
    println!(
        "max {} energy drift: {:.3e}",
        if drift.relative { "relative" } else { "absolute" },
        drift.max_drift
    );
    Ok(())
}

fn first_row(m: &DMatrix<f64>) -> Vec<f64> {
    m.row(0).iter().copied().collect()
}

/// States and velocities of any dataset as matrices.
fn state_matrices(d: &Dataset) -> CliResult<(DMatrix<f64>, DMatrix<f64>)> {
    Ok(match d {
        Dataset::Trajectory(t) => (t.states.clone(), t.velocities.clone()),
        Dataset::Field(f) => (f.field.clone(), f.velocity_or_derivative()?.0),
    })
}

fn substeps_of(d: &Dataset) -> Option<usize> {
    d.meta().get("substeps").and_then(|v| v.as_u64()).map(|v| v as usize)
}

pub fn predict(r: &Resolved, a: &PredictArgs) -> CliResult<()> {
    if a.draws == 0 {
        return Err(Failure::config("--draws must be at least 1"));
    }
    // training data comes from the preset horizon; --T and --dt set the prediction grid
    let training = SourceArgs { t_final: None, dt: None, ..a.source.clone() };
    let src = source_for(r, &training, a.lagrangian.as_ref())?;
    let mut dl = load_or_discover(r, a.lagrangian.as_ref(), &src, &a.inference)?;

    // truth on the prediction grid, when the generating system is known
    let truth: Option<Dataset> = match (a.generalize, src.name) {
        (Some(n), _) => {
            dl = generalize_chain(&dl, n)?;
            let mut spec = r.system(SystemName::Chain3Dof, &overrides(&a.source))?;
            spec.params.insert("n".into(), n as f64);
            spec.ic = linear_profile_ic(n, 0.1, 1.0);
            Some(simulate_chain(&spec, n)?.into())
        }
        (None, Some(name)) if a.source.data.is_none() => {
            let mut spec = r.system(name, &overrides(&a.source))?;
            if let Some(s) = &src.spec {
                spec.ic = s.ic.clone();
            }
            Some(run_simulation(&spec)?)
        }
        _ => None,
    };
    let (x0, v0, t_final, dt) = match &truth {
        Some(t) => {
            let (x, v) = state_matrices(t)?;
            (first_row(&x), first_row(&v), t.len() as f64 * t.dt(), t.dt())
        }
        None => {
            let (x, v) = state_matrices(&src.data)?;
            let dt = a.source.dt.unwrap_or(src.data.dt());
            (first_row(&x), first_row(&v), a.source.t_final.unwrap_or(src.data.len() as f64 * src.data.dt()), dt)
        }
    };
    let substeps = a.substeps.or_else(|| truth.as_ref().and_then(substeps_of)).unwrap_or(10);
    let eom = equations_of_motion(&dl)?;
    let mean_run = predict_with(&eom, &x0, &v0, t_final, dt, substeps)?;
    let band = posterior_predict_band(&dl, &x0, &v0, t_final, dt, substeps, a.draws, r.seed)?;

    let dir = out_dir(r)?;
    save_trajectory(&mean_run.data, &dir.join("prediction.csv"))?;
    save_trajectory(&band.mean, &dir.join("mean.csv"))?;
    save_trajectory(&band.lower, &dir.join("lower.csv"))?;
    save_trajectory(&band.upper, &dir.join("upper.csv"))?;
    let mut report = json!({
        "T": t_final,
        "dt": dt,
        "substeps": substeps,
        "draws_requested": a.draws,
        "draws_used": band.used,
        "draws_diverged": band.diverged,
        "blow_up_at": mean_run.blow_up,
    });
    if let Some(t) = &truth {
        save_dataset(t, &dir.join("truth.csv"))?;
        let (xt, _) = state_matrices(t)?;
        let rel = |m: &DMatrix<f64>| (m - &xt).norm() / xt.norm();
        let inside = (0..xt.nrows())
            .filter(|&k| (0..xt.ncols()).all(|i| band.lower.states[(k, i)] <= xt[(k, i)] && xt[(k, i)] <= band.upper.states[(k, i)]))
            .count();
        let coverage = inside as f64 / xt.nrows() as f64;
        report["relative_l2_error"] = json!(rel(&mean_run.data.states));
        report["band_mean_relative_l2_error"] = json!(rel(&band.mean.states));
        report["band_coverage"] = json!(coverage);
        println!(
            "relative L2 error vs truth: {:.4}% (band mean {:.4}%), truth inside the 95% band at {:.1}% of time points",
            100.0 * rel(&mean_run.data.states),
            100.0 * rel(&band.mean.states),
            100.0 * coverage
        );
    }
    output::write_text(&dir.join("comparison.json"), &serde_json::to_string_pretty(&report)?)?;
    if band.used == 0 {
        return Err(Failure::degenerate("every posterior draw diverged"));
    }
    Ok(())
}

pub fn noise_sweep(r: &Resolved, a: &SweepArgs) -> CliResult<()> {
    let sweep = r.file.sweep.as_ref();
    let systems: Vec<SystemName> = match a.systems.clone().or_else(|| sweep.and_then(|s| s.systems.clone())) {
        Some(list) => list.iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
        None => DEFAULT_SYSTEMS.to_vec(),
    };
    let zetas = a.zetas.clone().or_else(|| sweep.and_then(|s| s.zetas.clone())).unwrap_or_else(|| DEFAULT_ZETAS.to_vec());
    if zetas.iter().any(|z| !(*z >= 0.0)) {
        return Err(Failure::config("noise levels must be non-negative"));
    }
    let seeds: Vec<u64> = match (a.seeds, sweep.and_then(|s| s.seeds.clone())) {
        (Some(n), _) => (r.seed..r.seed + n).collect(),
        (None, Some(list)) => list,
        (None, None) => (r.seed..r.seed + 5).collect(),
    };
    if seeds.is_empty() {
        return Err(Failure::config("the sweep needs at least one seed"));
    }
    let specs = systems
        .iter()
        .map(|&s| r.system(s, &SystemOverrides::default()))
        .collect::<CliResult<Vec<_>>>()?;
    let hp = r.hyperparameters(a.inference.samples, a.inference.burnin)?;
    let form = formulation(&a.inference).unwrap_or(SWEEP_FORMULATION);
    let cells = run_sweep(&specs, &zetas, &seeds, form, &hp)?;
    let table = output::write_sweep(&cells, &systems, &zetas, out_dir(r)?)?;
    print!("{table}");
    Ok(())
}
