//! Candidate library, its evaluation on data, and the Euler-Lagrange operator.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{spatial_derivatives, Dataset, FieldDataset, TrajectoryDataset, TIME_TRIM};
use crate::error::{Error, Result};
use crate::expr::{Atom, AtomSource, Expr, Monomial};

/// Candidate families that can be switched on in a [`DictionaryConfig`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Constant,
    VelocitySquare,
    DisplacementPower,
    DifferencePower,
    StateVelocity,
    Harmonic,
    GradientPower,
    CurvaturePower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryConfig {
    pub families: Vec<Family>,
    pub max_degree: u32,
    /// Restrict difference powers to neighbouring DOFs.
    #[serde(default)]
    pub adjacent_differences: bool,
    /// Add x_i*v_j for i != j (and u*ux for fields).
    #[serde(default)]
    pub cross_terms: bool,
    /// Keep only even exponents in the power families.
    #[serde(default)]
    pub even_powers_only: bool,
    /// How the EL operator is realized on the samples.
    #[serde(default)]
    pub formulation: Formulation,
}

/// Realization of the time derivative in the EL operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Formulation {
    /// Pointwise: numerical d/dt of the momentum, one row per sample.
    #[default]
    Strong,
    /// Integrated against bump test functions `(1 - s^2)^4` of `half_width`
    /// samples either side, one row per window, windows `stride` apart. The
    /// time derivative moves onto the test function, so no data is
    /// differentiated in time.
    Weak { half_width: usize, stride: usize },
}

impl Formulation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Formulation::Strong => Ok(()),
            Formulation::Weak { half_width, stride } => {
                if half_width < 2 || stride == 0 {
                    return Err(Error::InvalidParameter(format!(
                        "weak form needs half_width >= 2 and stride >= 1, got {half_width} and {stride}"
                    )));
                }
                Ok(())
            }
        }
    }
}

const BUMP_POWER: i32 = 4;

/// Test function and its derivative in `s` on `[-1, 1]`.
fn bump(s: f64) -> (f64, f64) {
    let b = 1.0 - s * s;
    (b.powi(BUMP_POWER), -2.0 * BUMP_POWER as f64 * s * b.powi(BUMP_POWER - 1))
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            families: vec![Family::Constant, Family::VelocitySquare, Family::DisplacementPower, Family::StateVelocity],
            max_degree: 4,
            adjacent_differences: false,
            cross_terms: false,
            even_powers_only: false,
            formulation: Formulation::Strong,
        }
    }
}

impl DictionaryConfig {
    fn exponents(&self) -> Vec<u32> {
        (1..=self.max_degree).filter(|p| !self.even_powers_only || p % 2 == 0).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    VelocityPower,
    DisplacementPower,
    DifferencePower,
    CrossStateVelocity,
    Harmonic,
    SpatialGradientPower,
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateFunction {
    pub id: String,
    pub kind: Kind,
    pub degree: u32,
    /// Zero-based DOF (or node) indices; empty only for the constant.
    pub involved_dofs: Vec<usize>,
    pub monomial: Monomial,
}

impl CandidateFunction {
    pub fn new(kind: Kind, monomial: Monomial) -> Self {
        CandidateFunction {
            id: monomial.to_string(),
            kind,
            degree: monomial.degree(),
            involved_dofs: monomial.dofs(),
            monomial,
        }
    }

    pub fn expr(&self) -> Expr {
        Expr::monomial(self.monomial.clone(), 1.0)
    }

    /// Classifies an arbitrary monomial into a candidate kind.
    pub fn classify(monomial: &Monomial) -> Kind {
        let f = monomial.factors();
        if f.is_empty() {
            return Kind::Constant;
        }
        let has = |p: fn(&Atom) -> bool| f.iter().any(|(a, _)| p(a));
        let velocity = has(|a| matches!(a, Atom::V(_) | Atom::Ut(_)));
        let state = has(|a| matches!(a, Atom::X(_) | Atom::U(_) | Atom::Diff { .. } | Atom::Sin(_) | Atom::Cos(_)));
        if has(|a| matches!(a, Atom::Ux { .. })) {
            Kind::SpatialGradientPower
        } else if velocity && state {
            Kind::CrossStateVelocity
        } else if velocity {
            Kind::VelocityPower
        } else if has(|a| matches!(a, Atom::Sin(_) | Atom::Cos(_))) {
            Kind::Harmonic
        } else if has(|a| matches!(a, Atom::Diff { .. })) {
            Kind::DifferencePower
        } else {
            Kind::DisplacementPower
        }
    }
}

/// Candidates evaluated row-wise on a dataset.
#[derive(Clone, Debug)]
pub struct Dictionary {
    pub functions: Vec<CandidateFunction>,
    pub values: DMatrix<f64>,
    pub source_trim: usize,
    pub formulation: Formulation,
}

impl Dictionary {
    pub fn ids(&self) -> Vec<String> {
        self.functions.iter().map(|f| f.id.clone()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.id == id)
    }
}

/// Candidate list (without values) for `m` DOFs or nodes.
pub fn candidates(config: &DictionaryConfig, m: usize, field: bool) -> Result<Vec<CandidateFunction>> {
    if config.families.is_empty() {
        return Err(Error::Dictionary("no candidate families selected".into()));
    }
    let exps = config.exponents();
    let needs_degree = [Family::DisplacementPower, Family::DifferencePower, Family::GradientPower, Family::CurvaturePower];
    if exps.is_empty() && config.families.iter().any(|f| needs_degree.contains(f)) {
        return Err(Error::Dictionary(format!("max_degree {} leaves no exponents", config.max_degree)));
    }
    let mut out: Vec<CandidateFunction> = Vec::new();
    let push = |out: &mut Vec<CandidateFunction>, kind: Kind, factors: &[(Atom, u32)]| {
        out.push(CandidateFunction::new(kind, Monomial::from_atoms(factors)));
    };
    let mut families = config.families.clone();
    families.sort();
    families.dedup();
    for fam in families {
        match (fam, field) {
            (Family::Constant, _) => push(&mut out, Kind::Constant, &[]),
            (Family::VelocitySquare, false) => {
                for i in 0..m {
                    push(&mut out, Kind::VelocityPower, &[(Atom::V(i), 2)]);
                }
            }
            (Family::VelocitySquare, true) => {
                for i in 0..m {
                    push(&mut out, Kind::VelocityPower, &[(Atom::Ut(i), 2)]);
                }
            }
            (Family::DisplacementPower, _) => {
                for i in 0..m {
                    for &p in &exps {
                        let a = if field { Atom::U(i) } else { Atom::X(i) };
                        push(&mut out, Kind::DisplacementPower, &[(a, p)]);
                    }
                }
            }
            (Family::DifferencePower, false) => {
                for lo in 0..m {
                    for hi in lo + 1..m {
                        if config.adjacent_differences && hi != lo + 1 {
                            continue;
                        }
                        for &p in &exps {
                            push(&mut out, Kind::DifferencePower, &[(Atom::Diff { hi, lo }, p)]);
                        }
                    }
                }
            }
            (Family::StateVelocity, false) => {
                for i in 0..m {
                    for j in 0..m {
                        if i == j || config.cross_terms {
                            push(&mut out, Kind::CrossStateVelocity, &[(Atom::X(i), 1), (Atom::V(j), 1)]);
                        }
                    }
                }
            }
            (Family::StateVelocity, true) => {
                for i in 0..m {
                    push(&mut out, Kind::CrossStateVelocity, &[(Atom::U(i), 1), (Atom::Ut(i), 1)]);
                    if config.cross_terms {
                        push(&mut out, Kind::SpatialGradientPower, &[(Atom::U(i), 1), (Atom::Ux { order: 1, node: i }, 1)]);
                    }
                }
            }
            (Family::Harmonic, false) => {
                for i in 0..m {
                    push(&mut out, Kind::Harmonic, &[(Atom::Sin(i), 1)]);
                    push(&mut out, Kind::Harmonic, &[(Atom::Cos(i), 1)]);
                }
            }
            (Family::GradientPower | Family::CurvaturePower, true) => {
                let order = if fam == Family::GradientPower { 1 } else { 2 };
                for i in 0..m {
                    for &p in &exps {
                        push(&mut out, Kind::SpatialGradientPower, &[(Atom::Ux { order, node: i }, p)]);
                    }
                }
            }
            (fam, field) => {
                return Err(Error::Dictionary(format!(
                    "family {fam:?} is not available for {} data",
                    if field { "field" } else { "trajectory" }
                )))
            }
        }
    }
    out.sort_by(|a, b| {
        (a.kind, &a.involved_dofs, a.degree, &a.id).cmp(&(b.kind, &b.involved_dofs, b.degree, &b.id))
    });
    for w in out.windows(2) {
        if w[0].id == w[1].id {
            return Err(Error::Dictionary(format!("duplicate candidate `{}`", w[0].id)));
        }
    }
    if out.len() < 2 {
        return Err(Error::Dictionary(format!("dictionary has {} candidate(s), need at least 2", out.len())));
    }
    Ok(out)
}

/// Atom columns of a trajectory (accelerations are not observed).
pub struct TrajectorySource<'a> {
    pub data: &'a TrajectoryDataset,
}

impl AtomSource for TrajectorySource<'_> {
    fn rows(&self) -> usize {
        self.data.len()
    }

    fn column(&self, atom: Atom) -> Result<Vec<f64>> {
        let d = self.data;
        let m = d.dofs();
        let check = |i: usize| {
            if i < m {
                Ok(())
            } else {
                Err(Error::Shape(format!("atom {atom} refers to dof {} of {m}", i + 1)))
            }
        };
        let col = |mat: &DMatrix<f64>, i: usize| mat.column(i).iter().copied().collect::<Vec<f64>>();
        match atom {
            Atom::X(i) => check(i).map(|_| col(&d.states, i)),
            Atom::V(i) => check(i).map(|_| col(&d.velocities, i)),
            Atom::Diff { hi, lo } => {
                check(hi)?;
                check(lo)?;
                Ok(d.states.column(hi).iter().zip(d.states.column(lo).iter()).map(|(a, b)| a - b).collect())
            }
            Atom::Sin(i) => check(i).map(|_| d.states.column(i).iter().map(|x| x.sin()).collect()),
            Atom::Cos(i) => check(i).map(|_| d.states.column(i).iter().map(|x| x.cos()).collect()),
            other => Err(Error::Unsupported(format!("atom {other} on trajectory data"))),
        }
    }
}

/// Atom columns of a field: nodal values, velocities and spatial derivatives.
pub struct FieldSource {
    rows: usize,
    nodes: usize,
    u: DMatrix<f64>,
    ut: DMatrix<f64>,
    ux: Vec<DMatrix<f64>>,
}

impl FieldSource {
    pub fn new(d: &FieldDataset) -> Result<Self> {
        let (ut, _) = d.velocity_or_derivative()?;
        let ux = (1..=4).map(|k| spatial_derivatives(d, k)).collect::<Result<Vec<_>>>()?;
        Ok(FieldSource {
            rows: d.len(),
            nodes: d.nodes(),
            u: d.field.clone(),
            ut,
            ux,
        })
    }
}

impl AtomSource for FieldSource {
    fn rows(&self) -> usize {
        self.rows
    }

    fn column(&self, atom: Atom) -> Result<Vec<f64>> {
        let node = atom.dofs()[0];
        if node >= self.nodes {
            return Err(Error::Shape(format!("atom {atom} refers to node {} of {}", node + 1, self.nodes)));
        }
        let col = |mat: &DMatrix<f64>| mat.column(node).iter().copied().collect::<Vec<f64>>();
        match atom {
            Atom::U(_) => Ok(col(&self.u)),
            Atom::Ut(_) => Ok(col(&self.ut)),
            Atom::Ux { order, .. } => Ok(col(&self.ux[order as usize - 1])),
            other => Err(Error::Unsupported(format!("atom {other} on field data"))),
        }
    }
}

fn evaluate_columns(functions: &[CandidateFunction], src: &dyn AtomSource) -> Result<DMatrix<f64>> {
    let n = src.rows();
    let mut values = DMatrix::zeros(n, functions.len());
    for (k, f) in functions.iter().enumerate() {
        let col = f.expr().evaluate(src)?;
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteColumn(f.id.clone()));
        }
        values.column_mut(k).copy_from_slice(&col);
    }
    Ok(values)
}

/// Builds and evaluates the candidate library on a dataset.
pub fn build_dictionary(d: &Dataset, config: &DictionaryConfig) -> Result<Dictionary> {
    config.formulation.validate()?;
    match d {
        Dataset::Trajectory(t) => {
            let functions = candidates(config, t.dofs(), false)?;
            let values = evaluate_columns(&functions, &TrajectorySource { data: t })?;
            Ok(Dictionary {
                functions,
                values,
                source_trim: 0,
                formulation: config.formulation,
            })
        }
        Dataset::Field(f) => {
            let functions = candidates(config, f.nodes(), true)?;
            let src = FieldSource::new(f)?;
            let values = evaluate_columns(&functions, &src)?;
            let trim = if f.velocity.is_some() { 0 } else { TIME_TRIM };
            Ok(Dictionary {
                functions,
                values,
                source_trim: trim,
                formulation: config.formulation,
            })
        }
    }
}

/// Analytic partial of a candidate with respect to a state or velocity, row-wise.
pub fn evaluate_partials(f: &CandidateFunction, d: &Dataset, wrt: Atom) -> Result<Vec<f64>> {
    let p = f.expr().partial(wrt);
    match d {
        Dataset::Trajectory(t) => {
            if !matches!(wrt, Atom::X(_) | Atom::V(_)) {
                return Err(Error::Unsupported(format!("partial with respect to {wrt} on trajectory data")));
            }
            if wrt.dofs()[0] >= t.dofs() {
                return Err(Error::Shape(format!("dof {} out of range", wrt.dofs()[0] + 1)));
            }
            if p.is_zero() {
                return Ok(vec![0.0; t.len()]);
            }
            p.evaluate(&TrajectorySource { data: t })
        }
        Dataset::Field(fd) => {
            if !matches!(wrt, Atom::U(_) | Atom::Ut(_) | Atom::Ux { .. }) {
                return Err(Error::Unsupported(format!("partial with respect to {wrt} on field data")));
            }
            if p.is_zero() {
                return Ok(vec![0.0; fd.len()]);
            }
            p.evaluate(&FieldSource::new(fd)?)
        }
    }
}

/// Symbolic Euler-Lagrange image of a candidate for one DOF, split into the
/// part that needs a numerical time derivative and the part that does not.
#[derive(Clone, Debug, PartialEq)]
pub struct ElParts {
    /// Differentiated in time numerically: d/dt of this expression.
    pub momentum: Expr,
    /// Added as-is (spatial flux terms minus the static partial).
    pub static_part: Expr,
}

/// EL decomposition of `f` for DOF/node `i`:
/// trajectory `d/dt(df/dv) - df/dx`; field
/// `d/dt(df/dut) + Dx(df/dux) - Dxx(df/duxx) - df/du` (higher gradient
/// orders continue the alternating pattern).
pub fn el_parts(f: &Expr, i: usize, field: bool) -> Result<ElParts> {
    if !field {
        return Ok(ElParts {
            momentum: f.partial(Atom::V(i)),
            static_part: f.partial(Atom::X(i)).scaled(-1.0),
        });
    }
    let mut static_part = f.partial(Atom::U(i)).scaled(-1.0);
    for order in 1..=2u8 {
        let mut g = f.partial(Atom::Ux { order, node: i });
        if g.is_zero() {
            continue;
        }
        for _ in 0..order {
            g = g.space_derivative()?;
        }
        // (-1)^(order+1)
        let sign = if order % 2 == 1 { 1.0 } else { -1.0 };
        static_part.add_assign(&g.scaled(sign));
    }
    if f.atoms().iter().any(|a| matches!(a, Atom::Ux { order: 3..=4, .. })) {
        return Err(Error::Unsupported("candidates in third or fourth spatial derivatives".into()));
    }
    Ok(ElParts {
        momentum: f.partial(Atom::Ut(i)),
        static_part,
    })
}

/// Euler-Lagrange library for one DOF: column k is EL_i(f_k) on the trimmed rows.
#[derive(Clone, Debug)]
pub struct EulerLagrangeLibrary {
    pub columns: DMatrix<f64>,
    pub target_index: usize,
    pub dof: usize,
    pub parent_ids: Vec<String>,
    pub trim: usize,
    /// Norm of the larger EL ingredient per column (for cancellation checks).
    pub scales: Vec<f64>,
}

/// Maps sampled momentum and static series to EL rows.
enum ElOperator {
    Strong { n: usize, trim: usize, dt: f64 },
    Weak { centers: Vec<usize>, half_width: usize, phi: Vec<f64>, dphi: Vec<f64> },
}

impl ElOperator {
    fn new(formulation: Formulation, n: usize, source_trim: usize, dt: f64) -> Result<Self> {
        formulation.validate()?;
        match formulation {
            Formulation::Strong => {
                let trim = source_trim + TIME_TRIM;
                if n < 2 * trim + 1 {
                    return Err(Error::SeriesTooShort { len: n, min: 2 * trim + 1 });
                }
                Ok(ElOperator::Strong { n, trim, dt })
            }
            Formulation::Weak { half_width, stride } => {
                let first = source_trim + half_width;
                let min = 2 * first + 1;
                if n < min {
                    return Err(Error::SeriesTooShort { len: n, min });
                }
                let centers: Vec<usize> = (first..n - first).step_by(stride).collect();
                let h = half_width as f64;
                let (mut phi, mut dphi) = (Vec::new(), Vec::new());
                for j in 0..=2 * half_width {
                    let (b, db) = bump((j as f64 - h) / h);
                    phi.push(b);
                    // d/dt = d/ds / (h dt)
                    dphi.push(db / (h * dt));
                }
                // normalize to unit mass so rows read as local averages of the EL residual
                let mass: f64 = phi.iter().sum();
                phi.iter_mut().for_each(|v| *v /= mass);
                dphi.iter_mut().for_each(|v| *v /= mass);
                Ok(ElOperator::Weak { centers, half_width, phi, dphi })
            }
        }
    }

    fn rows(&self) -> usize {
        match self {
            ElOperator::Strong { n, trim, .. } => n - 2 * trim,
            ElOperator::Weak { centers, .. } => centers.len(),
        }
    }

    fn trim(&self) -> usize {
        match self {
            ElOperator::Strong { trim, .. } => *trim,
            ElOperator::Weak { centers, half_width, .. } => centers[0] - half_width,
        }
    }

    fn window(centers: &[usize], half_width: usize, w: &[f64], x: &[f64]) -> Vec<f64> {
        centers
            .iter()
            .map(|&c| w.iter().zip(&x[c - half_width..=c + half_width]).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Rows of d/dt(momentum).
    fn time_part(&self, momentum: &[f64]) -> Vec<f64> {
        match self {
            ElOperator::Strong { n, trim, dt } => crate::data::differentiate(momentum, *dt)[*trim..n - trim].to_vec(),
            // integration by parts: <phi, p'> = -<phi', p>
            ElOperator::Weak { centers, half_width, dphi, .. } => {
                Self::window(centers, *half_width, dphi, momentum).into_iter().map(|v| -v).collect()
            }
        }
    }

    fn static_part(&self, s: &[f64]) -> Vec<f64> {
        match self {
            ElOperator::Strong { n, trim, .. } => s[*trim..n - trim].to_vec(),
            ElOperator::Weak { centers, half_width, phi, .. } => Self::window(centers, *half_width, phi, s),
        }
    }
}

/// Applies the Euler-Lagrange operator for DOF (or node) `dof` to every candidate.
pub fn euler_lagrange_apply(dict: &Dictionary, dof: usize, d: &Dataset) -> Result<EulerLagrangeLibrary> {
    let field = matches!(d, Dataset::Field(_));
    if dof >= d.dofs() {
        return Err(Error::Shape(format!("dof {} out of range for {} dofs", dof + 1, d.dofs())));
    }
    let kinetic = if field { Atom::Ut(dof) } else { Atom::V(dof) };
    let target_id = Monomial::power(kinetic, 2).to_string();
    let target_index = dict
        .index_of(&target_id)
        .ok_or_else(|| Error::Dictionary(format!("kinetic candidate `{target_id}` missing from dictionary")))?;

    let field_src;
    let traj_src;
    let src: &dyn AtomSource = match d {
        Dataset::Trajectory(t) => {
            traj_src = TrajectorySource { data: t };
            &traj_src
        }
        Dataset::Field(f) => {
            field_src = FieldSource::new(f)?;
            &field_src
        }
    };
    let n = d.len();
    let dt = d.dt();
    let op = ElOperator::new(dict.formulation, n, dict.source_trim, dt)?;
    let rows = op.rows();
    let k = dict.functions.len();
    let mut columns = DMatrix::zeros(rows, k);
    let mut scales = vec![0.0; k];
    let mut cache: HashMap<String, Vec<f64>> = HashMap::new();
    for (c, f) in dict.functions.iter().enumerate() {
        if !f.involved_dofs.contains(&dof) {
            continue;
        }
        let parts = el_parts(&f.expr(), dof, field)?;
        let mut col = vec![0.0; rows];
        let mut norm_t = 0.0;
        let mut norm_s = 0.0;
        if !parts.momentum.is_zero() {
            let key = parts.momentum.to_string();
            let p = match cache.get(&key) {
                Some(p) => p.clone(),
                None => {
                    let p = op.time_part(&parts.momentum.evaluate(src)?);
                    cache.insert(key, p.clone());
                    p
                }
            };
            norm_t = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            col.copy_from_slice(&p);
        }
        if !parts.static_part.is_zero() {
            let s = op.static_part(&parts.static_part.evaluate(src)?);
            norm_s = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (a, b) in col.iter_mut().zip(&s) {
                *a += b;
            }
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteColumn(f.id.clone()));
        }
        columns.column_mut(c).copy_from_slice(&col);
        scales[c] = norm_t.max(norm_s);
    }
    let trim = op.trim();
    Ok(EulerLagrangeLibrary {
        columns,
        target_index,
        dof,
        parent_ids: dict.ids(),
        trim,
        scales,
    })
}

/// Reason a column was removed by [`prune_null_columns`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum PruneReason {
    /// Column norm below the absolute tolerance.
    Null,
    /// Time and static EL parts cancel (total time derivative).
    Cancellation { ratio: f64 },
    /// Parallel to an earlier kept column.
    Alias { of: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pruned {
    pub id: String,
    #[serde(flatten)]
    pub reason: PruneReason,
}

/// Relative size below which EL ingredients are considered to cancel.
pub const CANCELLATION_RATIO: f64 = 1e-3;
/// Columns with |cos| above `1 - ALIAS_TOL` to a kept column are aliases.
pub const ALIAS_TOL: f64 = 1e-9;

/// Removes EL columns that carry no identifiable information: zero columns,
/// total time derivatives, and exact aliases of earlier columns. The target is
/// never removed. `tol` defaults to `1e-8 * max column norm`.
pub fn prune_null_columns(el: &EulerLagrangeLibrary, tol: Option<f64>) -> (EulerLagrangeLibrary, Vec<Pruned>) {
    let k = el.columns.ncols();
    let norms: Vec<f64> = (0..k).map(|c| el.columns.column(c).norm()).collect();
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    let tol = tol.unwrap_or(1e-8 * max_norm);
    let mut keep: Vec<usize> = Vec::new();
    let mut pruned = Vec::new();
    // the target never aliases: on clean data a single-term equation of motion is exactly parallel to it
    for c in (0..k).filter(|&c| c != el.target_index) {
        let id = el.parent_ids[c].clone();
        if norms[c] < tol || norms[c] == 0.0 {
            pruned.push(Pruned { id, reason: PruneReason::Null });
            continue;
        }
        let ratio = norms[c] / el.scales[c].max(f64::MIN_POSITIVE);
        if ratio < CANCELLATION_RATIO {
            pruned.push(Pruned { id, reason: PruneReason::Cancellation { ratio } });
            continue;
        }
        let alias = keep.iter().find(|&&j| {
            let cos = el.columns.column(c).dot(&el.columns.column(j)) / (norms[c] * norms[j]);
            cos.abs() > 1.0 - ALIAS_TOL
        });
        if let Some(&j) = alias {
            pruned.push(Pruned { id, reason: PruneReason::Alias { of: el.parent_ids[j].clone() } });
            continue;
        }
        keep.push(c);
    }
    keep.push(el.target_index);
    keep.sort_unstable();
    let columns = el.columns.select_columns(keep.iter());
    let target_index = keep.iter().position(|&c| c == el.target_index).unwrap_or(0);
    (
        EulerLagrangeLibrary {
            columns,
            target_index,
            dof: el.dof,
            parent_ids: keep.iter().map(|&c| el.parent_ids[c].clone()).collect(),
            trim: el.trim,
            scales: keep.iter().map(|&c| el.scales[c]).collect(),
        },
        pruned,
    )
}

/// Target (EL of the kinetic square) and the negated remaining columns.
#[derive(Clone, Debug)]
pub struct Regression {
    pub target: DVector<f64>,
    pub design: DMatrix<f64>,
    pub ids: Vec<String>,
    pub target_id: String,
}

pub fn extract_regression(el: &EulerLagrangeLibrary) -> Regression {
    let target = el.columns.column(el.target_index).into_owned();
    let others: Vec<usize> = (0..el.columns.ncols()).filter(|&c| c != el.target_index).collect();
    let design = -el.columns.select_columns(others.iter());
    Regression {
        target,
        design,
        ids: others.iter().map(|&c| el.parent_ids[c].clone()).collect(),
        target_id: el.parent_ids[el.target_index].clone(),
    }
}
