//! Hamiltonians, equations of motion and forward prediction from a
//! discovered Lagrangian.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{spatial_derivative_row, Boundary, Dataset, Meta, TrajectoryDataset};
use crate::dictionary::{el_parts, FieldSource, TrajectorySource};
use crate::discovery::{
    aggregate_shared_terms, node_template, DataKind, DiscoveredLagrangian, DofResult, LagrangianTerm, Posterior,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::expr::{Atom, AtomSource, Expr, Monomial};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub function_id: String,
    pub coefficient: f64,
}

fn expr_terms(e: &Expr) -> Vec<Term> {
    e.ordered_terms()
        .into_iter()
        .map(|(m, c)| Term {
            function_id: m.to_string(),
            coefficient: c,
        })
        .collect()
}

fn terms_to_expr(terms: &[Term]) -> Result<Expr> {
    let mut e = Expr::zero();
    for t in terms {
        e.add_term(Monomial::parse(&t.function_id)?, t.coefficient);
    }
    Ok(e)
}

/// Builds an expression from `(id, coefficient)` pairs, e.g. a ground-truth Lagrangian.
pub fn expr_from_pairs(pairs: &[(String, f64)]) -> Result<Expr> {
    let mut e = Expr::zero();
    for (id, c) in pairs {
        e.add_term(Monomial::parse(id)?, *c);
    }
    Ok(e)
}

/// Where a derived expression came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub lagrangian: String,
    pub data: DataKind,
    pub seed: u64,
    pub samples: usize,
}

impl Source {
    fn of(dl: &DiscoveredLagrangian) -> Result<Source> {
        Ok(Source {
            lagrangian: dl.total_expr()?.to_string(),
            data: dl.provenance.data.clone(),
            seed: dl.provenance.seed,
            samples: dl.provenance.samples,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianExpression {
    pub terms: Vec<Term>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Source>,
}

impl HamiltonianExpression {
    pub fn from_expr(e: &Expr) -> Self {
        HamiltonianExpression {
            terms: expr_terms(e),
            source: None,
        }
    }

    pub fn expr(&self) -> Result<Expr> {
        terms_to_expr(&self.terms)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for HamiltonianExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expr() {
            Ok(e) => write!(f, "H = {e}"),
            Err(_) => write!(f, "H = <invalid>"),
        }
    }
}

fn is_velocity(a: &Atom) -> bool {
    matches!(a, Atom::V(_) | Atom::Ut(_))
}

/// `H = sum_i v_i dL/dv_i - L` applied term by term.
pub fn legendre_expr(l: &Expr) -> Result<Expr> {
    let atoms = l.atoms();
    if let Some(a) = atoms.iter().find(|a| matches!(a, Atom::A(_) | Atom::Utt(_))) {
        return Err(Error::Unsupported(format!("Legendre transform of a Lagrangian containing {a}")));
    }
    let mut h = l.scaled(-1.0);
    for v in atoms.iter().filter(|a| is_velocity(a)) {
        h.add_assign(&Expr::atom(*v).mul(&l.partial(*v)));
    }
    Ok(h)
}

pub fn legendre_transform(dl: &DiscoveredLagrangian) -> Result<HamiltonianExpression> {
    let h = legendre_expr(&dl.total_expr()?)?;
    Ok(HamiltonianExpression {
        terms: expr_terms(&h),
        source: Some(Source::of(dl)?),
    })
}

/// Energy along a trajectory and its largest excursion from the initial value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub series: Vec<f64>,
    pub initial: f64,
    /// `max |H(t) - H(0)| / |H(0)|`, or the absolute excursion when `relative` is false.
    pub max_drift: f64,
    /// False when H(0) is too close to zero for a relative measure.
    pub relative: bool,
}

fn check_atoms(e: &Expr, d: &Dataset) -> Result<()> {
    let m = d.dofs();
    for a in e.atoms() {
        if a.is_field() != matches!(d, Dataset::Field(_)) {
            return Err(Error::Shape(format!("{a} does not belong to this kind of data")));
        }
        if let Some(&i) = a.dofs().iter().max().filter(|&&i| i >= m) {
            return Err(Error::Shape(format!("{a} refers to dof {} but the data has {m}", i + 1)));
        }
    }
    Ok(())
}

/// Evaluates an expression on every sample of a dataset.
pub fn evaluate_on(e: &Expr, d: &Dataset) -> Result<Vec<f64>> {
    check_atoms(e, d)?;
    match d {
        Dataset::Trajectory(t) => e.evaluate(&TrajectorySource { data: t }),
        Dataset::Field(f) => {
            let src = FieldSource::new(f)?;
            if e.is_empty() {
                return Ok(vec![0.0; src.rows()]);
            }
            e.evaluate(&src)
        }
    }
}

/// Rewrites squared gradients by parts, `ux^2 -> -u*uxx` and
/// `uxx^2 -> u*uxxxx`. The boundary terms vanish for both supported
/// boundary conditions, and on the grid the result is the energy the
/// finite-difference dynamics actually conserves.
pub fn summation_by_parts(e: &Expr) -> Expr {
    let mut out = Expr::zero();
    for (m, c) in e.terms() {
        match m.factors() {
            [(Atom::Ux { order: order @ 1..=2, node }, 2)] => {
                let sign = if *order == 1 { -1.0 } else { 1.0 };
                let rewritten = Monomial::from_atoms(&[
                    (Atom::U(*node), 1),
                    (Atom::Ux { order: 2 * order, node: *node }, 1),
                ]);
                out.add_term(rewritten, sign * c);
            }
            _ => out.add_term(m.clone(), c),
        }
    }
    out
}

/// Trapezoid weight of each node: 1/2 for a node on the domain boundary
/// (the free end of a clamped-free grid), 1 elsewhere.
pub fn quadrature_weights(boundary: Boundary, nodes: usize) -> Vec<f64> {
    let mut w = vec![1.0; nodes];
    if boundary == Boundary::ClampedFree && nodes > 0 {
        w[nodes - 1] = 0.5;
    }
    w
}

/// Field energy as the grid quadrature of the density: gradient squares by
/// parts, then every node-local term scaled by its trapezoid weight.
pub fn field_energy_expr(h: &Expr, boundary: Boundary, nodes: usize) -> Expr {
    let w = quadrature_weights(boundary, nodes);
    let mut out = Expr::zero();
    for (m, c) in summation_by_parts(h).terms() {
        let dofs = m.dofs();
        let scale = match dofs.as_slice() {
            [j] if *j < nodes => w[*j],
            _ => 1.0,
        };
        out.add_term(m.clone(), c * scale);
    }
    out
}

/// Evaluates H along the data. Field Hamiltonians are evaluated through
/// [`field_energy_expr`].
pub fn hamiltonian_drift(h: &HamiltonianExpression, d: &Dataset) -> Result<Drift> {
    let mut e = h.expr()?;
    if let Dataset::Field(f) = d {
        e = field_energy_expr(&e, f.boundary, f.nodes());
    }
    let series = evaluate_on(&e, d)?;
    let initial = series[0];
    let excursion = series.iter().map(|v| (v - initial).abs()).fold(0.0, f64::max);
    let scale = series.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let relative = initial.abs() > 1e-10 * scale && initial != 0.0;
    let max_drift = if relative { excursion / initial.abs() } else { excursion };
    if !relative {
        log::warn!("H(0) = {initial:e} is too close to zero; reporting the absolute drift");
    }
    Ok(Drift {
        series,
        initial,
        max_drift,
        relative,
    })
}

/// Grid of a field equation, needed to evaluate spatial derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dx: f64,
    pub boundary: Boundary,
}

/// Residual `a_i + sum_k c_k g_k(x, v) = 0` of one DOF.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DofEquation {
    pub dof: usize,
    pub terms: Vec<Term>,
}

impl DofEquation {
    pub fn residual(&self) -> Result<Expr> {
        terms_to_expr(&self.terms)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquationOfMotion {
    pub order: u8,
    pub per_dof: Vec<DofEquation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
}

impl EquationOfMotion {
    pub fn dofs(&self) -> usize {
        self.per_dof.len()
    }

    pub fn is_field(&self) -> bool {
        self.grid.is_some()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Mean and population std of each residual coefficient across nodes,
    /// keyed by the id with the node index replaced by `*`.
    pub fn pooled(&self) -> Vec<(String, f64, f64)> {
        let mut groups: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
        for eq in &self.per_dof {
            for t in &eq.terms {
                groups.entry(node_template(&t.function_id)).or_default().push(t.coefficient);
            }
        }
        groups
            .into_iter()
            .map(|(k, v)| {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                (k, mean, var.sqrt())
            })
            .collect()
    }
}

impl fmt::Display for EquationOfMotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for eq in &self.per_dof {
            match eq.residual() {
                Ok(r) => writeln!(f, "{r} = 0")?,
                Err(_) => writeln!(f, "<invalid> = 0")?,
            }
        }
        Ok(())
    }
}

/// Symbolic EL residual of `l` for DOF/node `i`, scaled so the acceleration
/// enters with coefficient 1.
pub fn residual_for(l: &Expr, i: usize, field: bool) -> Result<Expr> {
    let parts = el_parts(l, i, field)?;
    let mut r = parts.momentum.time_derivative()?;
    r.add_assign(&parts.static_part);
    let acc = if field { Atom::Utt(i) } else { Atom::A(i) };
    let lead_m = Monomial::power(acc, 1);
    let lead = r.coefficient(&lead_m);
    for (m, _) in r.terms() {
        if *m != lead_m && m.factors().iter().any(|(a, _)| matches!(a, Atom::A(_) | Atom::Utt(_))) {
            return Err(Error::Unsupported(format!("equation of dof {} contains the term {m}", i + 1)));
        }
    }
    if lead == 0.0 || !lead.is_finite() {
        return Err(Error::Degenerate(format!("no acceleration term for dof {}", i + 1)));
    }
    Ok(r.scaled(1.0 / lead))
}

fn grid_of(data: &DataKind) -> Option<Grid> {
    match *data {
        DataKind::Field { dx, boundary, .. } => Some(Grid { dx, boundary }),
        DataKind::Trajectory { .. } => None,
    }
}

fn equations_from(lagrangians: &[Expr], grid: Option<Grid>) -> Result<EquationOfMotion> {
    let per_dof = lagrangians
        .iter()
        .enumerate()
        .map(|(i, l)| {
            Ok(DofEquation {
                dof: i,
                terms: expr_terms(&residual_for(l, i, grid.is_some())?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquationOfMotion { order: 2, per_dof, grid })
}

/// Equations of motion of a closed-form Lagrangian over `dofs` DOFs or nodes.
pub fn equations_from_lagrangian(l: &Expr, dofs: usize, grid: Option<Grid>) -> Result<EquationOfMotion> {
    equations_from(&vec![l.clone(); dofs], grid)
}

/// Applies the EL operator symbolically to the assembled Lagrangian.
pub fn equations_of_motion(dl: &DiscoveredLagrangian) -> Result<EquationOfMotion> {
    let l = dl.total_expr()?;
    let ls = vec![l; dl.dofs()];
    equations_from(&ls, grid_of(&dl.provenance.data))
}

/// Equations built from each DOF's own regression Lagrangian.
pub fn dof_equations(dl: &DiscoveredLagrangian) -> Result<EquationOfMotion> {
    let ls = (0..dl.dofs()).map(|i| dl.dof_expr(i)).collect::<Result<Vec<_>>>()?;
    equations_from(&ls, grid_of(&dl.provenance.data))
}

/// Residual terms without the acceleration, flattened for fast evaluation.
struct Compiled {
    m: usize,
    grid: Option<Grid>,
    orders: Vec<u8>,
    rhs: Vec<Vec<(f64, Vec<(Atom, u32)>)>>,
}

impl Compiled {
    fn new(eom: &EquationOfMotion) -> Result<Self> {
        let m = eom.dofs();
        let field = eom.is_field();
        let mut orders: Vec<u8> = Vec::new();
        let mut rhs = Vec::with_capacity(m);
        for (i, eq) in eom.per_dof.iter().enumerate() {
            if eq.dof != i {
                return Err(Error::Shape(format!("equation {} is labelled dof {}", i + 1, eq.dof + 1)));
            }
            let r = eq.residual()?;
            let lead = Monomial::power(if field { Atom::Utt(i) } else { Atom::A(i) }, 1);
            if (r.coefficient(&lead) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("dof {} residual is not acceleration-normalized", i + 1)));
            }
            let mut terms = Vec::new();
            for (mono, c) in r.terms() {
                if *mono == lead {
                    continue;
                }
                for &(a, _) in mono.factors() {
                    let ok = match a {
                        Atom::X(_) | Atom::V(_) | Atom::Diff { .. } | Atom::Sin(_) | Atom::Cos(_) => !field,
                        Atom::U(_) | Atom::Ut(_) => field,
                        Atom::Ux { order, .. } => {
                            if field && !orders.contains(&order) {
                                orders.push(order);
                            }
                            field
                        }
                        Atom::A(_) | Atom::Utt(_) => false,
                    };
                    if !ok || a.dofs().iter().any(|&j| j >= m) {
                        return Err(Error::Unsupported(format!("cannot integrate the term {mono} of dof {}", i + 1)));
                    }
                }
                terms.push((c, mono.factors().to_vec()));
            }
            rhs.push(terms);
        }
        Ok(Compiled {
            m,
            grid: eom.grid,
            orders,
            rhs,
        })
    }

    fn accel(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let mut ux: [Vec<f64>; 4] = Default::default();
        if let Some(g) = self.grid {
            for &o in &self.orders {
                ux[o as usize - 1] = spatial_derivative_row(x, g.dx, g.boundary, o as usize)
                    .unwrap_or_else(|_| vec![f64::NAN; x.len()]);
            }
        }
        let value = |a: Atom| match a {
            Atom::X(i) | Atom::U(i) => x[i],
            Atom::V(i) | Atom::Ut(i) => v[i],
            Atom::Diff { hi, lo } => x[hi] - x[lo],
            Atom::Sin(i) => x[i].sin(),
            Atom::Cos(i) => x[i].cos(),
            Atom::Ux { order, node } => ux[order as usize - 1][node],
            Atom::A(_) | Atom::Utt(_) => f64::NAN,
        };
        for (i, terms) in self.rhs.iter().enumerate() {
            let mut s = 0.0;
            for (c, factors) in terms {
                let mut p = *c;
                for &(a, e) in factors {
                    p *= crate::expr::powu(value(a), e);
                }
                s += p;
            }
            out[i] = -s;
        }
    }
}

/// Output of [`predict`]. On blow-up the trajectory stops at the last finite sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub data: TrajectoryDataset,
    pub blow_up: Option<f64>,
}

/// Integrates the equations from `(x0, v0)` with classical RK4, producing
/// `round(t_final / dt)` samples starting at t = 0.
pub fn predict(eom: &EquationOfMotion, x0: &[f64], v0: &[f64], t_final: f64, dt: f64) -> Result<Prediction> {
    predict_with(eom, x0, v0, t_final, dt, 1)
}

/// [`predict`] with `substeps` RK4 steps per output interval.
pub fn predict_with(
    eom: &EquationOfMotion,
    x0: &[f64],
    v0: &[f64],
    t_final: f64,
    dt: f64,
    substeps: usize,
) -> Result<Prediction> {
    let c = Compiled::new(eom)?;
    predict_compiled(&c, x0, v0, t_final, dt, substeps)
}

fn predict_compiled(c: &Compiled, x0: &[f64], v0: &[f64], t_final: f64, dt: f64, substeps: usize) -> Result<Prediction> {
    let m = c.m;
    if x0.len() != m || v0.len() != m {
        return Err(Error::Shape(format!(
            "initial state has {} positions and {} velocities, the equations have {m} dofs",
            x0.len(),
            v0.len()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) || !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidParameter(format!("need dt > 0 and T > 0, got dt = {dt}, T = {t_final}")));
    }
    let n = (t_final / dt).round() as usize;
    if n < 1 {
        return Err(Error::InvalidParameter(format!("T = {t_final} is shorter than one step of {dt}")));
    }
    let mut y0 = Vec::with_capacity(2 * m);
    y0.extend_from_slice(x0);
    y0.extend_from_slice(v0);
    let rhs = |y: &[f64], dy: &mut [f64]| {
        let (x, v) = y.split_at(m);
        dy[..m].copy_from_slice(v);
        c.accel(x, v, &mut dy[m..]);
    };
    let r = crate::integrate::rk4(rhs, &y0, 0.0, dt, n, substeps);
    let rows = r.samples.len();
    let labels = if c.grid.is_some() {
        (1..=m).map(|j| format!("u{j}")).collect()
    } else {
        TrajectoryDataset::default_labels(m)
    };
    let mut meta = Meta::new();
    meta.insert("predicted".into(), true.into());
    if let Some(t) = r.blow_up {
        meta.insert("blow_up_time".into(), t.into());
    }
    Ok(Prediction {
        data: TrajectoryDataset {
            t0: 0.0,
            dt,
            states: DMatrix::from_fn(rows, m, |i, j| r.samples[i][j]),
            velocities: DMatrix::from_fn(rows, m, |i, j| r.samples[i][m + j]),
            dof_labels: labels,
            meta,
        },
        blow_up: r.blow_up,
    })
}

/// Pointwise summary of trajectories integrated from posterior draws.
#[derive(Clone, Debug)]
pub struct Band {
    pub mean: TrajectoryDataset,
    pub lower: TrajectoryDataset,
    pub upper: TrajectoryDataset,
    /// Draws that stayed finite over the whole horizon.
    pub used: usize,
    pub diverged: usize,
    /// The finite draws themselves, in draw order.
    pub draws: Vec<TrajectoryDataset>,
}

/// Matrix `S` with `S S^T = cov`, tolerant of singular covariances.
fn covariance_root(cov: &[Vec<f64>]) -> DMatrix<f64> {
    let h = cov.len();
    let c = DMatrix::from_fn(h, h, |i, j| 0.5 * (cov[i][j] + cov[j][i]));
    let eig = SymmetricEigen::new(c);
    let mut s = eig.eigenvectors.clone();
    for (k, l) in eig.eigenvalues.iter().enumerate() {
        let r = l.max(0.0).sqrt();
        s.column_mut(k).scale_mut(r);
    }
    s
}

/// Linear-interpolated percentile of a sorted slice, `p` in [0, 1].
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Integrates `n_draws` Lagrangians drawn from each DOF's coefficient
/// posterior and returns the pointwise mean and the 2.5 / 97.5 percentiles.
#[allow(clippy::too_many_arguments)]
pub fn posterior_predict_band(
    dl: &DiscoveredLagrangian,
    x0: &[f64],
    v0: &[f64],
    t_final: f64,
    dt: f64,
    substeps: usize,
    n_draws: usize,
    seed: u64,
) -> Result<Band> {
    if n_draws == 0 {
        return Err(Error::InvalidParameter("n_draws must be at least 1".into()));
    }
    let grid = grid_of(&dl.provenance.data);
    let field = grid.is_some();
    let roots: Vec<DMatrix<f64>> = dl.per_dof.iter().map(|r| covariance_root(&r.posterior.cov)).collect();
    let posteriors: Vec<(Vec<Monomial>, DVector<f64>)> = dl
        .per_dof
        .iter()
        .map(|r| {
            let ids = r.posterior.ids.iter().map(|id| Monomial::parse(id)).collect::<Result<Vec<_>>>()?;
            Ok((ids, DVector::from_vec(r.posterior.mean.clone())))
        })
        .collect::<Result<_>>()?;
    let kinetic = |i: usize| Monomial::power(if field { Atom::Ut(i) } else { Atom::V(i) }, 2);

    let runs = exec::map_indexed(n_draws, |k| -> Result<Option<TrajectoryDataset>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut ls = Vec::with_capacity(posteriors.len());
        for (i, (ids, mean)) in posteriors.iter().enumerate() {
            let z = DVector::from_fn(mean.len(), |_, _| StandardNormal.sample(&mut rng));
            let beta = mean + &roots[i] * z;
            let mut l = Expr::monomial(kinetic(i), 0.5);
            for (m, b) in ids.iter().zip(beta.iter()) {
                l.add_term(m.clone(), *b);
            }
            ls.push(l);
        }
        let eom = equations_from(&ls, grid)?;
        let p = predict_with(&eom, x0, v0, t_final, dt, substeps)?;
        Ok(p.blow_up.is_none().then_some(p.data))
    });
    let mut draws = Vec::new();
    let mut diverged = 0;
    for r in runs {
        match r? {
            Some(d) => draws.push(d),
            None => diverged += 1,
        }
    }
    if draws.is_empty() {
        return Err(Error::Simulation(format!("all {n_draws} posterior draws diverged")));
    }
    if diverged > 0 {
        log::warn!("{diverged} of {n_draws} posterior draws diverged and were excluded");
    }
    let (n, m) = draws[0].states.shape();
    let summarize = |pick: &dyn Fn(&TrajectoryDataset) -> &DMatrix<f64>| {
        let mut mean = DMatrix::zeros(n, m);
        let mut lo = DMatrix::zeros(n, m);
        let mut hi = DMatrix::zeros(n, m);
        let mut buf = vec![0.0; draws.len()];
        for i in 0..n {
            for j in 0..m {
                for (b, d) in buf.iter_mut().zip(&draws) {
                    *b = pick(d)[(i, j)];
                }
                mean[(i, j)] = buf.iter().sum::<f64>() / buf.len() as f64;
                buf.sort_by(f64::total_cmp);
                lo[(i, j)] = percentile(&buf, 0.025);
                hi[(i, j)] = percentile(&buf, 0.975);
            }
        }
        (mean, lo, hi)
    };
    let (xm, xl, xu) = summarize(&|d| &d.states);
    let (vm, vl, vu) = summarize(&|d| &d.velocities);
    let make = |x: DMatrix<f64>, v: DMatrix<f64>, what: &str| {
        let mut meta = draws[0].meta.clone();
        meta.insert("band".into(), what.into());
        meta.insert("draws".into(), draws.len().into());
        TrajectoryDataset {
            t0: 0.0,
            dt,
            states: x,
            velocities: v,
            dof_labels: draws[0].dof_labels.clone(),
            meta,
        }
    };
    Ok(Band {
        mean: make(xm, vm, "mean"),
        lower: make(xl, vl, "lower95"),
        upper: make(xu, vu, "upper95"),
        used: draws.len(),
        diverged,
        draws,
    })
}

fn diff_id(hi: usize, lo: usize) -> String {
    Monomial::power(Atom::Diff { hi, lo }, 2).to_string()
}

/// Replicates a discovered grounded chain to `n` masses: the grounded
/// coefficient is kept and the spring coefficients are averaged.
pub fn generalize_chain(dl: &DiscoveredLagrangian, n: usize) -> Result<DiscoveredLagrangian> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("a generalized chain needs n >= 2, got {n}")));
    }
    if dl.is_field() {
        return Err(Error::InvalidParameter("field Lagrangians cannot be generalized as a chain".into()));
    }
    let grounded_id = Monomial::power(Atom::X(0), 2).to_string();
    let mut grounded = None;
    let mut springs = 0;
    for t in &dl.total {
        let m = Monomial::parse(&t.function_id)?;
        match m.factors() {
            [(Atom::V(_), 2)] => {}
            [(Atom::X(0), 2)] => grounded = Some(t.clone()),
            [(Atom::Diff { hi, lo }, 2)] if *hi == lo + 1 => springs += 1,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "not a chain Lagrangian: unexpected term {}",
                    t.function_id
                )))
            }
        }
    }
    let grounded = grounded.ok_or_else(|| Error::InvalidParameter(format!("not a chain Lagrangian: no {grounded_id} term")))?;
    if springs == 0 {
        return Err(Error::InvalidParameter("not a chain Lagrangian: no spring terms".into()));
    }
    let (k, k_std) = aggregate_shared_terms(dl, "(x*-x*)^2")?;
    let term = |id: String, c: f64, s: f64, dof: usize| LagrangianTerm {
        function_id: id,
        coefficient_mean: c,
        coefficient_std: s,
        pip: 1.0,
        dof,
    };
    let mut per_dof = Vec::with_capacity(n);
    let mut total = Vec::new();
    for j in 0..n {
        let mut terms = vec![term(Monomial::power(Atom::V(j), 2).to_string(), 0.5, 0.0, j)];
        if j == 0 {
            terms.push(term(grounded_id.clone(), grounded.coefficient_mean, grounded.coefficient_std, 0));
        } else {
            terms.push(term(diff_id(j, j - 1), k, k_std, j));
        }
        if j + 1 < n {
            terms.push(term(diff_id(j + 1, j), k, k_std, j));
        }
        total.extend(terms.iter().take(2).cloned());
        let sel = &terms[1..];
        per_dof.push(DofResult {
            dof: j,
            posterior: Posterior {
                ids: sel.iter().map(|t| t.function_id.clone()).collect(),
                mean: sel.iter().map(|t| t.coefficient_mean).collect(),
                cov: (0..sel.len())
                    .map(|a| (0..sel.len()).map(|b| if a == b { sel[a].coefficient_std.powi(2) } else { 0.0 }).collect())
                    .collect(),
            },
            pip: sel.iter().map(|t| (t.function_id.clone(), 1.0)).collect(),
            terms,
            pruned: Vec::new(),
            warning: None,
            samples: Vec::new(),
            sample_ids: Vec::new(),
        });
    }
    // kinetic terms first, then grounded, then springs in chain order
    total.sort_by_key(|t| {
        let kinetic = t.function_id.starts_with('v');
        (!kinetic, t.function_id != grounded_id, t.dof)
    });
    let mut provenance = dl.provenance.clone();
    provenance.data = DataKind::Trajectory {
        dof_labels: TrajectoryDataset::default_labels(n),
    };
    provenance.dataset_meta.insert("generalized_from_dofs".into(), dl.dofs().into());
    Ok(DiscoveredLagrangian {
        per_dof,
        total,
        consensus: None,
        provenance,
    })
}
