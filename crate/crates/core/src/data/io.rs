//! CSV interchange with a JSON sidecar holding grid spacing and provenance.
//!
//! Trajectory: `t,x1..xm,v1..vm`. Field: `t,u1..uS[,ut1..utS]`.
//! The sidecar lives next to the CSV with a `.json` extension.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Boundary, Dataset, FieldDataset, Meta, TrajectoryDataset};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Sidecar {
    Trajectory {
        t0: f64,
        dt: f64,
        dof_labels: Vec<String>,
        #[serde(default)]
        meta: Meta,
    },
    Field {
        t0: f64,
        dt: f64,
        dx: f64,
        boundary: Boundary,
        #[serde(default)]
        meta: Meta,
    },
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<()> {
    match d {
        Dataset::Trajectory(t) => save_trajectory(t, path),
        Dataset::Field(f) => save_field(f, path),
    }
}

pub fn save_trajectory(d: &TrajectoryDataset, path: &Path) -> Result<()> {
    let m = d.dofs();
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("v{i}")));
    let times = d.times();
    write_csv(path, &header, d.len(), |i, row| {
        row.push(times[i]);
        row.extend(d.states.row(i).iter());
        row.extend(d.velocities.row(i).iter());
    })?;
    write_sidecar(
        path,
        &Sidecar::Trajectory {
            t0: d.t0,
            dt: d.dt,
            dof_labels: d.dof_labels.clone(),
            meta: d.meta.clone(),
        },
    )
}

pub fn save_field(d: &FieldDataset, path: &Path) -> Result<()> {
    let s = d.nodes();
    let mut header = vec!["t".to_string()];
    header.extend((1..=s).map(|i| format!("u{i}")));
    if d.velocity.is_some() {
        header.extend((1..=s).map(|i| format!("ut{i}")));
    }
    let times = d.times();
    write_csv(path, &header, d.len(), |i, row| {
        row.push(times[i]);
        row.extend(d.field.row(i).iter());
        if let Some(v) = &d.velocity {
            row.extend(v.row(i).iter());
        }
    })?;
    write_sidecar(
        path,
        &Sidecar::Field {
            t0: d.t0,
            dt: d.dt,
            dx: d.dx,
            boundary: d.boundary,
            meta: d.meta.clone(),
        },
    )
}

fn write_csv(path: &Path, header: &[String], n: usize, mut fill: impl FnMut(usize, &mut Vec<f64>)) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    let mut row = Vec::with_capacity(header.len());
    let mut line = String::new();
    for i in 0..n {
        row.clear();
        fill(i, &mut row);
        line.clear();
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            // Display prints the shortest representation that parses back exactly
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_sidecar(path: &Path, s: &Sidecar) -> Result<()> {
    let p = sidecar_path(path);
    let text = serde_json::to_string_pretty(s)?;
    std::fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))
}

enum Layout {
    Trajectory(usize),
    Field { nodes: usize, with_velocity: bool },
}

fn indexed(name: &str, prefix: &str) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

fn classify(path: &Path, header: &[String]) -> Result<Layout> {
    let bad = |column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row: 0,
        column,
        message,
    };
    if header.first().map(String::as_str) != Some("t") {
        return Err(bad(1, "first column must be `t`".into()));
    }
    let cols = &header[1..];
    let count = |prefix: &str| cols.iter().filter(|c| indexed(c, prefix).is_some()).count();
    let (nx, nv, nu, nut) = (count("x"), count("v"), count("u"), count("ut"));
    if nx + nv > 0 {
        if nx != nv {
            return Err(Error::Shape(format!("{nx} state columns but {nv} velocity columns")));
        }
        if nx + nv != cols.len() {
            return Err(bad(0, "trajectory header must be t,x1..xm,v1..vm".into()));
        }
        for (k, c) in cols.iter().enumerate() {
            let want = if k < nx { format!("x{}", k + 1) } else { format!("v{}", k - nx + 1) };
            if *c != want {
                return Err(bad(k + 2, format!("expected `{want}`, found `{c}`")));
            }
        }
        return Ok(Layout::Trajectory(nx));
    }
    if nu > 0 {
        if nut > 0 && nut != nu {
            return Err(Error::Shape(format!("{nu} field columns but {nut} velocity columns")));
        }
        if nu + nut != cols.len() {
            return Err(bad(0, "field header must be t,u1..uS[,ut1..utS]".into()));
        }
        for (k, c) in cols.iter().enumerate() {
            let want = if k < nu { format!("u{}", k + 1) } else { format!("ut{}", k - nu + 1) };
            if *c != want {
                return Err(bad(k + 2, format!("expected `{want}`, found `{c}`")));
            }
        }
        return Ok(Layout::Field {
            nodes: nu,
            with_velocity: nut > 0,
        });
    }
    Err(bad(0, "header names neither trajectory (x/v) nor field (u) columns".into()))
}

/// Reads a trajectory or field CSV (plus sidecar when present) and validates it.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let csv_err = |row: usize, e: csv::Error| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: 0,
        message: e.to_string(),
    };
    let header: Vec<String> = rdr.headers().map_err(|e| csv_err(0, e))?.iter().map(str::to_string).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 0,
            column: 0,
            message: "empty file".into(),
        });
    }
    let layout = classify(path, &header)?;
    let width = header.len();

    let mut data: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| csv_err(row, e))?;
        if rec.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row,
                column: c + 1,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: header[c].clone(),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::SeriesTooShort { len: 0, min: super::MIN_SAMPLES });
    }
    let table = DMatrix::from_row_slice(rows, width, &data);
    let times: Vec<f64> = table.column(0).iter().copied().collect();

    let side = sidecar_path(path);
    let sidecar: Option<Sidecar> = if side.exists() {
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };

    match layout {
        Layout::Trajectory(m) => {
            let states = table.columns(1, m).into_owned();
            let velocities = table.columns(1 + m, m).into_owned();
            let (t0, dt, labels, meta) = match sidecar {
                Some(Sidecar::Trajectory { t0, dt, dof_labels, meta }) => (t0, dt, dof_labels, meta),
                Some(Sidecar::Field { .. }) => {
                    return Err(Error::InvalidParameter(format!(
                        "{} describes a field but the CSV holds a trajectory",
                        side.display()
                    )))
                }
                None => {
                    let (t0, dt) = infer_step(&times)?;
                    (t0, dt, TrajectoryDataset::default_labels(m), Meta::new())
                }
            };
            Ok(Dataset::Trajectory(TrajectoryDataset::new(t0, dt, states, velocities, labels, meta)?))
        }
        Layout::Field { nodes, with_velocity } => {
            let field = table.columns(1, nodes).into_owned();
            let velocity = with_velocity.then(|| table.columns(1 + nodes, nodes).into_owned());
            match sidecar {
                Some(Sidecar::Field { t0, dt, dx, boundary, meta }) => Ok(Dataset::Field(FieldDataset::new(
                    t0, dt, dx, field, velocity, boundary, meta,
                )?)),
                _ => Err(Error::InvalidParameter(format!(
                    "field CSV needs a sidecar {} with dx and boundary",
                    side.display()
                ))),
            }
        }
    }
}

fn infer_step(times: &[f64]) -> Result<(f64, f64)> {
    if times.len() < 2 {
        return Err(Error::SeriesTooShort { len: times.len(), min: super::MIN_SAMPLES });
    }
    let t0 = times[0];
    let dt = (times[times.len() - 1] - t0) / (times.len() - 1) as f64;
    for (k, t) in times.iter().enumerate() {
        let expected = t0 + k as f64 * dt;
        if (t - expected).abs() > 1e-6 * dt.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidParameter(format!("time column is not uniform at row {}", k + 1)));
        }
    }
    Ok((t0, dt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrajectoryDataset {
        let n = 12;
        let x = DMatrix::from_fn(n, 2, |i, j| (0.1 * i as f64 + j as f64).sin() / 3.0);
        let v = DMatrix::from_fn(n, 2, |i, j| (0.7 * i as f64 - j as f64).cos() * 1e-7);
        let mut meta = Meta::new();
        meta.insert("system".into(), "toy".into());
        TrajectoryDataset::new(0.25, 1e-3 / 3.0, x, v, vec!["a".into(), "b".into()], meta).unwrap()
    }

    #[test]
    fn trajectory_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traj.csv");
        let d = sample();
        save_trajectory(&d, &p).unwrap();
        let back = load_dataset(&p).unwrap();
        assert_eq!(back, Dataset::Trajectory(d));
    }

    #[test]
    fn field_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("field.csv");
        let u = DMatrix::from_fn(6, 5, |i, j| ((i * 5 + j) as f64 * 0.123).sin());
        let ut = DMatrix::from_fn(6, 5, |i, j| ((i * 5 + j) as f64 * 0.321).cos());
        let d = FieldDataset::new(0.0, 0.001, 0.1, u, Some(ut), Boundary::ClampedFree, Meta::new()).unwrap();
        save_field(&d, &p).unwrap();
        assert_eq!(load_dataset(&p).unwrap(), Dataset::Field(d));
    }

    #[test]
    fn nan_row_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "t,x1,v1\n0,1,0\n0.1,1,0\n0.2,NaN,0\n0.3,1,0\n0.4,1,0\n").unwrap();
        match load_dataset(&p).unwrap_err() {
            Error::NonFinite { row, column } => {
                assert_eq!(row, 3);
                assert_eq!(column, "x1");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn mismatched_columns_is_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "t,x1,x2,v1\n0,1,0,0\n").unwrap();
        assert!(matches!(load_dataset(&p).unwrap_err(), Error::Shape(_)));
    }

    #[test]
    fn garbage_cell_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "t,x1,v1\n0,1,0\n0.1,abc,0\n").unwrap();
        match load_dataset(&p).unwrap_err() {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        std::fs::write(&p, "").unwrap();
        assert!(load_dataset(&p).is_err());
    }

    #[test]
    fn missing_sidecar_infers_step() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("plain.csv");
        std::fs::write(&p, "t,x1,v1\n0,1,0\n0.5,1,0\n1,1,0\n1.5,1,0\n2,1,0\n").unwrap();
        let d = load_dataset(&p).unwrap();
        assert_eq!(d.dt(), 0.5);
    }
}
