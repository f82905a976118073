//! Trajectory and field containers, CSV/JSON interchange, numerical
//! differentiation and measurement-noise injection.

mod diff;
mod io;
mod noise;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use diff::{
    differentiate, spatial_derivative_row, spatial_derivatives, time_derivative, Differentiated,
    TIME_TRIM,
};
pub use io::{load_dataset, save_dataset, save_field, save_trajectory, sidecar_path};
pub use noise::{add_noise, add_noise_field, add_noise_to, NoiseSpec};

/// Minimum series length supported by the five-point time stencil.
pub const MIN_SAMPLES: usize = 5;

/// Flat provenance record (system name, parameters, seed, noise level, ...).
pub type Meta = BTreeMap<String, serde_json::Value>;

/// Uniformly sampled displacements and velocities of an m-DOF system.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub t0: f64,
    pub dt: f64,
    /// N×m generalized displacements.
    pub states: DMatrix<f64>,
    /// N×m generalized velocities.
    pub velocities: DMatrix<f64>,
    pub dof_labels: Vec<String>,
    pub meta: Meta,
}

impl TrajectoryDataset {
    pub fn new(
        t0: f64,
        dt: f64,
        states: DMatrix<f64>,
        velocities: DMatrix<f64>,
        dof_labels: Vec<String>,
        meta: Meta,
    ) -> Result<Self> {
        let d = TrajectoryDataset {
            t0,
            dt,
            states,
            velocities,
            dof_labels,
            meta,
        };
        d.validate()?;
        Ok(d)
    }

    /// Default labels `x1..xm`.
    pub fn default_labels(m: usize) -> Vec<String> {
        (1..=m).map(|i| format!("x{i}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !self.t0.is_finite() {
            return Err(Error::InvalidParameter("t0 must be finite".into()));
        }
        if self.states.shape() != self.velocities.shape() {
            return Err(Error::Shape(format!(
                "states are {:?} but velocities are {:?}",
                self.states.shape(),
                self.velocities.shape()
            )));
        }
        if self.states.nrows() < MIN_SAMPLES {
            return Err(Error::SeriesTooShort {
                len: self.states.nrows(),
                min: MIN_SAMPLES,
            });
        }
        if self.states.ncols() == 0 {
            return Err(Error::Shape("dataset has no degrees of freedom".into()));
        }
        if self.dof_labels.len() != self.states.ncols() {
            return Err(Error::Shape(format!(
                "{} dof labels for {} columns",
                self.dof_labels.len(),
                self.states.ncols()
            )));
        }
        check_finite(&self.states, "x")?;
        check_finite(&self.velocities, "v")?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn dofs(&self) -> usize {
        self.states.ncols()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.t0 + k as f64 * self.dt).collect()
    }

    /// Restricts every series to its first `n` samples.
    pub fn truncated(&self, n: usize) -> TrajectoryDataset {
        let n = n.min(self.len());
        TrajectoryDataset {
            t0: self.t0,
            dt: self.dt,
            states: self.states.rows(0, n).into_owned(),
            velocities: self.velocities.rows(0, n).into_owned(),
            dof_labels: self.dof_labels.clone(),
            meta: self.meta.clone(),
        }
    }
}

/// Boundary description of a 1-D spatial grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Both ends pinned (u = 0); the grid holds interior nodes only.
    FixedFixed,
    /// Clamped at x = 0 (u = u_x = 0), free at the far end
    /// (u_xx = u_xxx = 0); the grid holds nodes 1..=S including the free end.
    ClampedFree,
}

/// Field u(x, t) sampled at S nodes of a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldDataset {
    pub t0: f64,
    pub dt: f64,
    pub dx: f64,
    /// N×S displacements.
    pub field: DMatrix<f64>,
    /// Optional N×S nodal velocities. When absent they are obtained by
    /// differentiating `field` in time.
    pub velocity: Option<DMatrix<f64>>,
    pub boundary: Boundary,
    pub meta: Meta,
}

impl FieldDataset {
    pub fn new(
        t0: f64,
        dt: f64,
        dx: f64,
        field: DMatrix<f64>,
        velocity: Option<DMatrix<f64>>,
        boundary: Boundary,
        meta: Meta,
    ) -> Result<Self> {
        let d = FieldDataset {
            t0,
            dt,
            dx,
            field,
            velocity,
            boundary,
            meta,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.dx > 0.0) || !self.dx.is_finite() {
            return Err(Error::InvalidParameter(format!("dx must be positive, got {}", self.dx)));
        }
        if self.field.ncols() < MIN_SAMPLES {
            return Err(Error::Shape(format!(
                "field has {} nodes, need at least {MIN_SAMPLES}",
                self.field.ncols()
            )));
        }
        if self.field.nrows() < MIN_SAMPLES {
            return Err(Error::SeriesTooShort {
                len: self.field.nrows(),
                min: MIN_SAMPLES,
            });
        }
        check_finite(&self.field, "u")?;
        if let Some(v) = &self.velocity {
            if v.shape() != self.field.shape() {
                return Err(Error::Shape(format!(
                    "field is {:?} but velocity is {:?}",
                    self.field.shape(),
                    v.shape()
                )));
            }
            check_finite(v, "ut")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.field.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.field.nrows() == 0
    }

    pub fn nodes(&self) -> usize {
        self.field.ncols()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.t0 + k as f64 * self.dt).collect()
    }

    /// Nodal velocities and the number of boundary samples they contaminate.
    pub fn velocity_or_derivative(&self) -> Result<(DMatrix<f64>, usize)> {
        match &self.velocity {
            Some(v) => Ok((v.clone(), 0)),
            None => {
                let d = time_derivative(&self.field, self.dt)?;
                Ok((d.values, d.trim))
            }
        }
    }
}

/// Either kind of dataset accepted by the discovery pipeline.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Trajectory(TrajectoryDataset),
    Field(FieldDataset),
}

impl Dataset {
    pub fn meta(&self) -> &Meta {
        match self {
            Dataset::Trajectory(d) => &d.meta,
            Dataset::Field(d) => &d.meta,
        }
    }

    /// Number of degrees of freedom (nodes for field data).
    pub fn dofs(&self) -> usize {
        match self {
            Dataset::Trajectory(d) => d.dofs(),
            Dataset::Field(d) => d.nodes(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Trajectory(d) => d.len(),
            Dataset::Field(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dt(&self) -> f64 {
        match self {
            Dataset::Trajectory(d) => d.dt,
            Dataset::Field(d) => d.dt,
        }
    }

    pub fn as_trajectory(&self) -> Option<&TrajectoryDataset> {
        match self {
            Dataset::Trajectory(d) => Some(d),
            Dataset::Field(_) => None,
        }
    }

    pub fn as_field(&self) -> Option<&FieldDataset> {
        match self {
            Dataset::Field(d) => Some(d),
            Dataset::Trajectory(_) => None,
        }
    }
}

impl From<TrajectoryDataset> for Dataset {
    fn from(d: TrajectoryDataset) -> Self {
        Dataset::Trajectory(d)
    }
}

impl From<FieldDataset> for Dataset {
    fn from(d: FieldDataset) -> Self {
        Dataset::Field(d)
    }
}

fn check_finite(m: &DMatrix<f64>, prefix: &str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite {
                    row: i + 1,
                    column: format!("{prefix}{}", j + 1),
                });
            }
        }
    }
    Ok(())
}
