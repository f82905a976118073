//! Report files and the console summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::json;
use sbl_lagrangian::discovery::{node_template, DiscoveredLagrangian};
use sbl_lagrangian::sweep::{summarize, SweepCell};
use sbl_lagrangian::systems::SystemName;

use crate::error::{CliResult, Failure};

fn csv_writer(path: &Path) -> CliResult<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Failure + '_ {
    move |e| Failure::config(format!("cannot write {}: {e}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))
}

/// `dof,function_id,pip,status`: the kinetic term is fixed, candidates that
/// reached the sampler are `sampled`, removed ones `pruned` with pip 0.
pub fn write_pip(dl: &DiscoveredLagrangian, path: &Path) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["dof", "function_id", "pip", "status"]).map_err(&err)?;
    for r in &dl.per_dof {
        let dof = (r.dof + 1).to_string();
        let kinetic = &r.terms[0];
        w.write_record([dof.as_str(), &kinetic.function_id, "1", "fixed"]).map_err(&err)?;
        for (id, pip) in &r.pip {
            w.write_record([dof.as_str(), id, &pip.to_string(), "sampled"]).map_err(&err)?;
        }
        for p in &r.pruned {
            w.write_record([dof.as_str(), &p.id, "0", "pruned"]).map_err(&err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One JSON object per retained Gibbs sample and DOF.
pub fn write_chain(dl: &DiscoveredLagrangian, path: &Path) -> CliResult<()> {
    let f = File::create(path).map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(f);
    for r in &dl.per_dof {
        for (k, s) in r.samples.iter().enumerate() {
            let active: Vec<&str> = s.active().into_iter().map(|j| r.sample_ids[j].as_str()).collect();
            let line = json!({
                "dof": r.dof + 1,
                "sample": k,
                "active": active,
                "beta": s.beta_r,
                "sigma2": s.sigma2,
                "theta_slab": s.theta_slab,
                "q": s.q,
            });
            writeln!(w, "{line}")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fmt_coef(c: f64) -> String {
    if c != 0.0 && (c.abs() >= 1e5 || c.abs() < 1e-3) {
        format!("{c:.4e}")
    } else {
        format!("{c:.4}")
    }
}

/// Term table of the total Lagrangian. Field terms are pooled over nodes.
pub fn summary_table(dl: &DiscoveredLagrangian, truth_error: Option<f64>) -> String {
    let mut s = String::new();
    let meta = &dl.provenance.dataset_meta;
    let system = meta.get("system").and_then(|v| v.as_str()).unwrap_or("data");
    let _ = writeln!(s, "system {system}, {} samples, seed {}", dl.provenance.samples, dl.provenance.seed);
    if dl.is_field() {
        let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for t in &dl.total {
            groups.entry(node_template(&t.function_id)).or_default().push((t.coefficient_mean, t.pip));
        }
        let _ = writeln!(s, "{:<16} {:>26} {:>8} {:>6}", "term (per node)", "mean ± std over nodes", "min pip", "nodes");
        for (id, v) in groups {
            let n = v.len() as f64;
            let mean = v.iter().map(|x| x.0).sum::<f64>() / n;
            let std = (v.iter().map(|x| (x.0 - mean).powi(2)).sum::<f64>() / n).sqrt();
            let pip = v.iter().map(|x| x.1).fold(1.0, f64::min);
            let _ = writeln!(s, "{id:<16} {:>26} {pip:>8.3} {:>6}", format!("{} ± {}", fmt_coef(mean), fmt_coef(std)), v.len());
        }
        if let Some(c) = &dl.consensus {
            let _ = writeln!(
                s,
                "node agreement {:.0}%{}",
                100.0 * c.fraction,
                if c.dissenting.is_empty() { String::new() } else { format!(", dissenting nodes {:?}", c.dissenting.iter().map(|d| d + 1).collect::<Vec<_>>()) }
            );
        }
    } else {
        let _ = writeln!(s, "{:<16} {:>26} {:>8}", "term", "mean ± std", "pip");
        for t in &dl.total {
            let coef = if t.coefficient_std == 0.0 && t.coefficient_mean == 0.5 {
                "0.5 (fixed)".to_string()
            } else {
                format!("{} ± {}", fmt_coef(t.coefficient_mean), fmt_coef(t.coefficient_std))
            };
            let _ = writeln!(s, "{:<16} {coef:>26} {:>8.3}", t.function_id, t.pip);
        }
    }
    for r in dl.per_dof.iter().filter(|r| r.is_degenerate()) {
        let _ = writeln!(s, "warning: dof {} fell back to the kinetic term: {}", r.dof + 1, r.warning.as_deref().unwrap_or(""));
    }
    if let Some(e) = truth_error {
        let _ = writeln!(s, "relative L2 error vs truth: {e:.4}%");
    }
    s
}

fn cell_error(c: &SweepCell) -> String {
    c.reported_error().map_or("--".into(), |e| format!("{e:.4}"))
}

/// Every cell, then the table of per-cell medians in the published layout.
pub fn write_sweep(cells: &[SweepCell], systems: &[SystemName], zetas: &[f64], dir: &Path) -> CliResult<String> {
    let path = dir.join("sweep.csv");
    let mut w = csv_writer(&path)?;
    let err = csv_err(&path);
    w.write_record(["system", "zeta", "seed", "support_correct", "relative_error", "degenerate"]).map_err(&err)?;
    for c in cells {
        w.write_record([
            c.system.as_str(),
            &c.zeta.to_string(),
            &c.seed.to_string(),
            &c.support_correct.to_string(),
            &cell_error(c),
            &c.degenerate.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush()?;

    let path = dir.join("sweep_table.csv");
    let mut w = csv_writer(&path)?;
    let err = csv_err(&path);
    let mut header = vec!["system".to_string()];
    header.extend(zetas.iter().map(|z| format!("zeta={z}")));
    w.write_record(&header).map_err(&err)?;
    let mut text = format!("{:<22}", "system \\ zeta");
    for z in zetas {
        let _ = write!(text, "{:>10}", format!("{:.0}%", 100.0 * z));
    }
    text.push('\n');
    for &s in systems {
        let row: Vec<String> = zetas.iter().map(|&z| summarize(cells, s, z).map_or("--".into(), |e| format!("{e:.2}"))).collect();
        let mut rec = vec![s.as_str().to_string()];
        rec.extend(row.iter().cloned());
        w.write_record(&rec).map_err(&err)?;
        let _ = write!(text, "{:<22}", s.as_str());
        for v in row {
            let _ = write!(text, "{v:>10}");
        }
        text.push('\n');
    }
    w.flush()?;
    Ok(text)
}

/// `t,H` along a dataset.
pub fn write_energy(t0: f64, dt: f64, series: &[f64], path: &Path) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["t", "H"]).map_err(&err)?;
    for (k, h) in series.iter().enumerate() {
        w.write_record([(t0 + k as f64 * dt).to_string(), h.to_string()]).map_err(&err)?;
    }
    w.flush()?;
    Ok(())
}
