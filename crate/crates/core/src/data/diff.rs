use nalgebra::DMatrix;

use super::{Boundary, FieldDataset, MIN_SAMPLES};
use crate::error::{Error, Result};

/// Samples contaminated by the lower-order one-sided stencils at each end.
pub const TIME_TRIM: usize = 2;

/// Output of [`time_derivative`]: derivative values plus the number of
/// samples at each end that regression should discard.
#[derive(Clone, Debug, PartialEq)]
pub struct Differentiated {
    pub values: DMatrix<f64>,
    pub trim: usize,
}

/// Column-wise d/dt: fourth-order central stencil in the interior,
/// second-order one-sided stencils on the two samples nearest each end.
pub fn time_derivative(series: &DMatrix<f64>, dt: f64) -> Result<Differentiated> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let n = series.nrows();
    if n < MIN_SAMPLES {
        return Err(Error::SeriesTooShort { len: n, min: MIN_SAMPLES });
    }
    let mut out = DMatrix::zeros(n, series.ncols());
    for j in 0..series.ncols() {
        let col: Vec<f64> = series.column(j).iter().copied().collect();
        if let Some(i) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: i + 1,
                column: format!("column {}", j + 1),
            });
        }
        let d = differentiate(&col, dt);
        out.column_mut(j).copy_from_slice(&d);
    }
    Ok(Differentiated { values: out, trim: TIME_TRIM })
}

/// Single-series version of [`time_derivative`]. `f.len()` must be at least 5.
pub fn differentiate(f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= MIN_SAMPLES, "series too short for the time stencil");
    let mut d = vec![0.0; n];
    let c4 = 1.0 / (12.0 * dt);
    for i in 2..n - 2 {
        d[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) * c4;
    }
    let c2 = 1.0 / (2.0 * dt);
    for i in 0..2 {
        d[i] = (-3.0 * f[i] + 4.0 * f[i + 1] - f[i + 2]) * c2;
    }
    for i in n - 2..n {
        d[i] = (3.0 * f[i] - 4.0 * f[i - 1] + f[i - 2]) * c2;
    }
    d
}

/// Spatial derivative of every snapshot of a field. Orders 1 to 4 are
/// supported; 3 is used internally by higher-order candidate families.
pub fn spatial_derivatives(field: &FieldDataset, order: usize) -> Result<DMatrix<f64>> {
    check_order(order, field.nodes())?;
    let (n, s) = field.field.shape();
    let mut out = DMatrix::zeros(n, s);
    let mut row = vec![0.0; s];
    for i in 0..n {
        for j in 0..s {
            row[j] = field.field[(i, j)];
        }
        let d = spatial_derivative_row(&row, field.dx, field.boundary, order)?;
        for j in 0..s {
            out[(i, j)] = d[j];
        }
    }
    Ok(out)
}

fn check_order(order: usize, nodes: usize) -> Result<()> {
    if !(1..=4).contains(&order) {
        return Err(Error::Unsupported(format!("spatial derivative of order {order}")));
    }
    if nodes < order + 1 {
        return Err(Error::Shape(format!(
            "stencil of order {order} needs at least {} nodes, grid has {nodes}",
            order + 1
        )));
    }
    Ok(())
}

/// Two ghost nodes on each side, derived from the boundary conditions.
/// Layout: `[u_{-1}, u_0, u_1 .. u_S, u_{S+1}, u_{S+2}]`.
fn extend(u: &[f64], boundary: Boundary) -> Vec<f64> {
    let s = u.len();
    let mut e = vec![0.0; s + 4];
    e[2..s + 2].copy_from_slice(u);
    match boundary {
        Boundary::FixedFixed => {
            // pinned ends, odd reflection beyond them
            e[1] = 0.0;
            e[0] = -u[0];
            e[s + 2] = 0.0;
            e[s + 3] = -u[s - 1];
        }
        Boundary::ClampedFree => {
            e[1] = 0.0;
            e[0] = u[0];
            let us = u[s - 1];
            let um1 = u[s - 2];
            let um2 = u[s - 3];
            let g1 = 2.0 * us - um1;
            e[s + 2] = g1;
            e[s + 3] = 2.0 * g1 - 2.0 * um1 + um2;
        }
    }
    e
}

/// Derivative of one snapshot `u` (nodes 1..=S) under the given boundary.
pub fn spatial_derivative_row(u: &[f64], dx: f64, boundary: Boundary, order: usize) -> Result<Vec<f64>> {
    check_order(order, u.len())?;
    if boundary == Boundary::ClampedFree && u.len() < 3 {
        return Err(Error::Shape("clamped-free grid needs at least 3 nodes".into()));
    }
    let e = extend(u, boundary);
    let s = u.len();
    let mut d = vec![0.0; s];
    match order {
        1 => {
            let c = 1.0 / (2.0 * dx);
            for j in 0..s {
                let k = j + 2;
                d[j] = (e[k + 1] - e[k - 1]) * c;
            }
        }
        2 => {
            let c = 1.0 / (dx * dx);
            for j in 0..s {
                let k = j + 2;
                d[j] = (e[k + 1] - 2.0 * e[k] + e[k - 1]) * c;
            }
        }
        3 => {
            let c = 1.0 / (2.0 * dx * dx * dx);
            for j in 0..s {
                let k = j + 2;
                d[j] = (e[k + 2] - 2.0 * e[k + 1] + 2.0 * e[k - 1] - e[k - 2]) * c;
            }
        }
        _ => {
            let c = 1.0 / (dx * dx * dx * dx);
            for j in 0..s {
                let k = j + 2;
                d[j] = (e[k + 2] - 4.0 * e[k + 1] + 6.0 * e[k] - 4.0 * e[k - 1] + e[k - 2]) * c;
            }
        }
    }
    Ok(d)
}
