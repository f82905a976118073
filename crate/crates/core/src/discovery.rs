//! Per-DOF Lagrangian discovery and assembly of the system Lagrangian.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Boundary, Dataset, Meta};
use crate::dictionary::{
    build_dictionary, euler_lagrange_apply, extract_regression, prune_null_columns, DictionaryConfig, Pruned,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::expr::{Atom, Expr, Monomial};
use crate::sbl::{run_gibbs_stream, GibbsState, Hyperparameters};

/// Fraction of field nodes that must share a support before coefficients are pooled.
pub const CONSENSUS_FRACTION: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianTerm {
    pub function_id: String,
    pub coefficient_mean: f64,
    pub coefficient_std: f64,
    pub pip: f64,
    /// Zero-based DOF whose regression produced the estimate.
    pub dof: usize,
}

/// Posterior of the selected coefficients of one DOF, in the normalized
/// units of the reported Lagrangian.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub ids: Vec<String>,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DofResult {
    pub dof: usize,
    /// Kinetic term first (coefficient 0.5), then selected terms.
    pub terms: Vec<LagrangianTerm>,
    pub posterior: Posterior,
    /// PIP of every candidate that reached the sampler.
    pub pip: Vec<(String, f64)>,
    pub pruned: Vec<Pruned>,
    /// Set when the chain was degenerate and the kinetic-only model was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    #[serde(skip)]
    pub samples: Vec<GibbsState>,
    #[serde(skip)]
    pub sample_ids: Vec<String>,
}

impl DofResult {
    pub fn is_degenerate(&self) -> bool {
        self.warning.is_some()
    }

    /// Selected ids excluding the kinetic term.
    pub fn support(&self) -> Vec<String> {
        self.terms.iter().skip(1).map(|t| t.function_id.clone()).collect()
    }
}

/// Agreement of per-node supports for field data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConsensus {
    /// Support written with `*` in place of the node index.
    pub support: Vec<String>,
    pub agreeing: Vec<usize>,
    pub dissenting: Vec<usize>,
    pub fraction: f64,
    pub pooled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataKind {
    Trajectory { dof_labels: Vec<String> },
    Field { nodes: usize, dx: f64, boundary: Boundary },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub data: DataKind,
    pub dataset_meta: Meta,
    pub hyperparameters: Hyperparameters,
    pub dictionary: DictionaryConfig,
    pub seed: u64,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscoveredLagrangian {
    pub per_dof: Vec<DofResult>,
    pub total: Vec<LagrangianTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus: Option<FieldConsensus>,
    pub provenance: Provenance,
}

impl DiscoveredLagrangian {
    pub fn dofs(&self) -> usize {
        self.per_dof.len()
    }

    pub fn is_field(&self) -> bool {
        matches!(self.provenance.data, DataKind::Field { .. })
    }

    pub fn coefficient(&self, id: &str) -> Option<f64> {
        self.total.iter().find(|t| t.function_id == id).map(|t| t.coefficient_mean)
    }

    pub fn total_ids(&self) -> Vec<String> {
        self.total.iter().map(|t| t.function_id.clone()).collect()
    }

    /// Assembled Lagrangian as an expression.
    pub fn total_expr(&self) -> Result<Expr> {
        terms_expr(&self.total)
    }

    /// Lagrangian of one DOF (kinetic term plus its own regression terms).
    pub fn dof_expr(&self, dof: usize) -> Result<Expr> {
        terms_expr(&self.per_dof[dof].terms)
    }

    pub fn any_degenerate(&self) -> bool {
        self.per_dof.iter().any(DofResult::is_degenerate)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn terms_expr(terms: &[LagrangianTerm]) -> Result<Expr> {
    let mut e = Expr::zero();
    for t in terms {
        e.add_term(Monomial::parse(&t.function_id)?, t.coefficient_mean);
    }
    Ok(e)
}

fn kinetic_id(dof: usize, field: bool) -> String {
    let a = if field { Atom::Ut(dof) } else { Atom::V(dof) };
    Monomial::power(a, 2).to_string()
}

fn kinetic_term(dof: usize, field: bool) -> LagrangianTerm {
    LagrangianTerm {
        function_id: kinetic_id(dof, field),
        coefficient_mean: 0.5,
        coefficient_std: 0.0,
        pip: 1.0,
        dof,
    }
}

fn discover_dof(
    d: &Dataset,
    dict: &crate::dictionary::Dictionary,
    hp: &Hyperparameters,
    dof: usize,
) -> Result<DofResult> {
    let field = matches!(d, Dataset::Field(_));
    let el = euler_lagrange_apply(dict, dof, d)?;
    let (el, pruned) = prune_null_columns(&el, None);
    let reg = extract_regression(&el);
    let mut result = DofResult {
        dof,
        terms: vec![kinetic_term(dof, field)],
        posterior: Posterior::default(),
        pip: Vec::new(),
        pruned,
        warning: None,
        samples: Vec::new(),
        sample_ids: reg.ids.clone(),
    };
    let chain = match run_gibbs_stream(&reg.design, &reg.target, hp, dof as u64) {
        Ok(c) => c,
        Err(Error::Degenerate(msg)) => {
            log::warn!("dof {}: {msg}; using the kinetic term only", dof + 1);
            result.warning = Some(msg);
            result.pip = reg.ids.iter().map(|id| (id.clone(), 0.0)).collect();
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    result.pip = reg.ids.iter().cloned().zip(chain.pip.iter().copied()).collect();
    // L_i = v_i^2 + sum beta_k f_k, reported with the kinetic coefficient halved to 0.5
    for &k in &chain.selected_indices {
        result.terms.push(LagrangianTerm {
            function_id: reg.ids[k].clone(),
            coefficient_mean: chain.mu_beta[k] / 2.0,
            coefficient_std: chain.std_of(k) / 2.0,
            pip: chain.pip[k],
            dof,
        });
    }
    result.posterior = Posterior {
        ids: chain.selected_indices.iter().map(|&k| reg.ids[k].clone()).collect(),
        mean: chain.selected_indices.iter().map(|&k| chain.mu_beta[k] / 2.0).collect(),
        cov: chain.sigma_beta.iter().map(|row| row.iter().map(|v| v / 4.0).collect()).collect(),
    };
    result.samples = chain.samples;
    Ok(result)
}

/// Runs the full pipeline on every DOF (or grid node) and assembles the result.
pub fn discover(d: &Dataset, dict_cfg: &DictionaryConfig, hp: &Hyperparameters) -> Result<DiscoveredLagrangian> {
    hp.validate()?;
    let dict = build_dictionary(d, dict_cfg)?;
    let m = d.dofs();
    let results = exec::map_indexed(m, |i| discover_dof(d, &dict, hp, i).map_err(|e| e.at_dof(i)));
    let per_dof = results.into_iter().collect::<Result<Vec<_>>>()?;
    let field = matches!(d, Dataset::Field(_));
    let total = if field { merge_field(&per_dof) } else { merge_trajectory(&per_dof) };
    let consensus = field.then(|| field_consensus(&per_dof));
    if let Some(c) = &consensus {
        if !c.pooled {
            log::warn!(
                "only {:.0}% of nodes share the support {:?}; dissenting nodes {:?}",
                100.0 * c.fraction,
                c.support,
                c.dissenting
            );
        }
    }
    let data = match d {
        Dataset::Trajectory(t) => DataKind::Trajectory { dof_labels: t.dof_labels.clone() },
        Dataset::Field(f) => DataKind::Field { nodes: f.nodes(), dx: f.dx, boundary: f.boundary },
    };
    Ok(DiscoveredLagrangian {
        per_dof,
        total,
        consensus,
        provenance: Provenance {
            data,
            dataset_meta: d.meta().clone(),
            hyperparameters: hp.clone(),
            dictionary: dict_cfg.clone(),
            seed: hp.seed,
            samples: d.len(),
        },
    })
}

fn cross_pair(id: &str) -> Option<(usize, usize)> {
    let m = Monomial::parse(id).ok()?;
    match m.factors() {
        [(Atom::X(a), 1), (Atom::V(b), 1)] if a != b => Some((*a, *b)),
        _ => None,
    }
}

/// Deduplicates shared ids (smaller posterior std wins) and rewrites every
/// x_a*v_b pair in antisymmetric form, the only part that reaches the dynamics.
/// Cross pairs are resolved per regression first: DOF a may select x_a*v_b
/// while DOF b selects the gauge-equivalent x_b*v_a, and both carry the same
/// antisymmetric coefficient.
fn merge_trajectory(per_dof: &[DofResult]) -> Vec<LagrangianTerm> {
    let mut best: BTreeMap<String, LagrangianTerm> = BTreeMap::new();
    // (lo, hi) -> per regression: (d, var(d), pip, dof)
    let mut pairs: BTreeMap<(usize, usize), BTreeMap<usize, (f64, f64, f64)>> = BTreeMap::new();
    for r in per_dof {
        for t in &r.terms {
            if let Some((a, b)) = cross_pair(&t.function_id) {
                let (key, sign) = if a < b { ((a, b), 1.0) } else { ((b, a), -1.0) };
                let e = pairs.entry(key).or_default().entry(r.dof).or_insert((0.0, 0.0, 0.0));
                e.0 += sign * t.coefficient_mean;
                e.1 += t.coefficient_std.powi(2);
                e.2 = e.2.max(t.pip);
                continue;
            }
            match best.get(&t.function_id) {
                Some(prev) if prev.coefficient_std <= t.coefficient_std => {}
                _ => {
                    best.insert(t.function_id.clone(), t.clone());
                }
            }
        }
    }
    let mut out: Vec<LagrangianTerm> = best.into_values().collect();
    for ((lo, hi), estimates) in pairs {
        let (&dof, &(d, var, pip)) = estimates
            .iter()
            .min_by(|x, y| x.1 .1.total_cmp(&y.1 .1).then(x.0.cmp(y.0)))
            .expect("pair entries are never empty");
        let std = var.sqrt() / 2.0;
        for (id, coef) in [
            (Monomial::from_atoms(&[(Atom::X(lo), 1), (Atom::V(hi), 1)]), d / 2.0),
            (Monomial::from_atoms(&[(Atom::X(hi), 1), (Atom::V(lo), 1)]), -d / 2.0),
        ] {
            out.push(LagrangianTerm {
                function_id: id.to_string(),
                coefficient_mean: coef,
                coefficient_std: std,
                pip,
                dof,
            });
        }
    }
    sort_terms(&mut out);
    out
}

fn merge_field(per_dof: &[DofResult]) -> Vec<LagrangianTerm> {
    let mut out: Vec<LagrangianTerm> = per_dof.iter().flat_map(|r| r.terms.iter().cloned()).collect();
    sort_terms(&mut out);
    out
}

fn sort_terms(terms: &mut [LagrangianTerm]) {
    use crate::dictionary::CandidateFunction;
    terms.sort_by_cached_key(|t| {
        let m = Monomial::parse(&t.function_id).unwrap_or_default();
        (CandidateFunction::classify(&m), m.dofs(), m.degree(), t.function_id.clone())
    });
}

/// Replaces the node index in an id by `*`.
pub fn node_template(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    let mut chars = id.chars().peekable();
    while let Some(c) = chars.next() {
        out.push(c);
        if c == '_' {
            while chars.peek().is_some_and(|d| d.is_ascii_digit()) {
                chars.next();
            }
            out.push('*');
        }
    }
    out
}

fn field_consensus(per_dof: &[DofResult]) -> FieldConsensus {
    let patterns: Vec<Vec<String>> = per_dof
        .iter()
        .map(|r| {
            let mut p: Vec<String> = r.support().iter().map(|id| node_template(id)).collect();
            p.sort();
            p
        })
        .collect();
    let mut counts: BTreeMap<&Vec<String>, usize> = BTreeMap::new();
    for p in &patterns {
        *counts.entry(p).or_default() += 1;
    }
    // most common pattern; ties go to the first in sorted order
    let top = counts.values().copied().max().unwrap_or(0);
    let support = counts.iter().find(|(_, c)| **c == top).map(|(p, _)| (*p).clone()).unwrap_or_default();
    let agreeing: Vec<usize> = (0..patterns.len()).filter(|&i| patterns[i] == support).collect();
    let dissenting: Vec<usize> = (0..patterns.len()).filter(|&i| patterns[i] != support).collect();
    let fraction = agreeing.len() as f64 / patterns.len() as f64;
    FieldConsensus {
        support,
        agreeing,
        dissenting,
        fraction,
        pooled: fraction >= CONSENSUS_FRACTION,
    }
}

/// Glob match where `*` stands for one or more digits.
fn matches_template(pattern: &str, id: &str) -> bool {
    let (p, s) = (pattern.as_bytes(), id.as_bytes());
    fn go(p: &[u8], s: &[u8]) -> bool {
        match p.first() {
            None => s.is_empty(),
            Some(b'*') => {
                let digits = s.iter().take_while(|c| c.is_ascii_digit()).count();
                (1..=digits).any(|k| go(&p[1..], &s[k..]))
            }
            Some(c) => s.first() == Some(c) && go(&p[1..], &s[1..]),
        }
    }
    go(p, s)
}

/// Mean and population standard deviation of the total coefficients whose ids
/// match `pattern` (`*` matches a DOF/node index).
pub fn aggregate_shared_terms(dl: &DiscoveredLagrangian, pattern: &str) -> Result<(f64, f64)> {
    let vals: Vec<f64> = dl
        .total
        .iter()
        .filter(|t| matches_template(pattern, &t.function_id))
        .map(|t| t.coefficient_mean)
        .collect();
    if vals.is_empty() {
        return Err(Error::InvalidParameter(format!("no term matches `{pattern}`")));
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// `100 * |beta - beta_true| / |beta_true|` over the union of ids; missing
/// terms count with their full magnitude.
pub fn relative_l2_error(dl: &DiscoveredLagrangian, truth: &[(String, f64)]) -> Result<f64> {
    relative_l2_error_terms(&dl.total, truth)
}

pub fn relative_l2_error_terms(terms: &[LagrangianTerm], truth: &[(String, f64)]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidParameter("truth is empty".into()));
    }
    let mut diff: BTreeMap<&str, f64> = BTreeMap::new();
    for t in terms {
        *diff.entry(&t.function_id).or_default() += t.coefficient_mean;
    }
    for (id, c) in truth {
        *diff.entry(id).or_default() -= c;
    }
    let num = diff.values().map(|v| v * v).sum::<f64>().sqrt();
    let den = truth.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::InvalidParameter("truth has zero norm".into()));
    }
    Ok(100.0 * num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(id: &str, c: f64, s: f64, dof: usize) -> LagrangianTerm {
        LagrangianTerm {
            function_id: id.into(),
            coefficient_mean: c,
            coefficient_std: s,
            pip: 1.0,
            dof,
        }
    }

    fn result(dof: usize, terms: Vec<LagrangianTerm>) -> DofResult {
        DofResult {
            dof,
            terms,
            posterior: Posterior::default(),
            pip: vec![],
            pruned: vec![],
            warning: None,
            samples: vec![],
            sample_ids: vec![],
        }
    }

    fn dl(total: Vec<LagrangianTerm>) -> DiscoveredLagrangian {
        DiscoveredLagrangian {
            per_dof: vec![],
            total,
            consensus: None,
            provenance: Provenance {
                data: DataKind::Trajectory { dof_labels: vec![] },
                dataset_meta: Meta::new(),
                hyperparameters: Hyperparameters::default(),
                dictionary: DictionaryConfig::default(),
                seed: 0,
                samples: 0,
            },
        }
    }

    #[test]
    fn shared_terms_keep_the_sharper_estimate() {
        let a = result(0, vec![term("v1^2", 0.5, 0.0, 0), term("(x2-x1)^2", -2490.0, 5.0, 0)]);
        let b = result(1, vec![term("v2^2", 0.5, 0.0, 1), term("(x2-x1)^2", -2501.0, 1.0, 1)]);
        let total = merge_trajectory(&[a, b]);
        let t = total.iter().find(|t| t.function_id == "(x2-x1)^2").unwrap();
        assert_eq!(t.coefficient_mean, -2501.0);
        assert_eq!(total.len(), 3);
    }

    #[test]
    fn cross_terms_become_antisymmetric() {
        let a = result(0, vec![term("v1^2", 0.5, 0.0, 0), term("x1*v2", 100.0, 2.0, 0)]);
        let total = merge_trajectory(&[a]);
        let get = |id: &str| total.iter().find(|t| t.function_id == id).unwrap().coefficient_mean;
        assert_eq!(get("x1*v2"), 50.0);
        assert_eq!(get("x2*v1"), -50.0);
    }

    #[test]
    fn gauge_equivalent_picks_are_not_added() {
        let a = result(0, vec![term("v1^2", 0.5, 0.0, 0), term("x1*v2", 100.0, 2.0, 0)]);
        let b = result(1, vec![term("v2^2", 0.5, 0.0, 1), term("x2*v1", -99.0, 1.0, 1)]);
        let total = merge_trajectory(&[a, b]);
        let get = |id: &str| total.iter().find(|t| t.function_id == id).unwrap().coefficient_mean;
        assert_eq!(get("x1*v2"), 49.5);
        assert_eq!(get("x2*v1"), -49.5);
    }

    #[test]
    fn relative_error_examples() {
        let d = dl(vec![term("x1^2", 0.9, 0.0, 0)]);
        let e = relative_l2_error(&d, &[("x1^2".into(), 1.0)]).unwrap();
        assert!((e - 10.0).abs() < 1e-12);
        let d = dl(vec![term("x1^2", 1.0, 0.0, 0)]);
        assert_eq!(relative_l2_error(&d, &[("x1^2".into(), 1.0)]).unwrap(), 0.0);
        assert!(relative_l2_error(&d, &[]).is_err());
        // missing and spurious terms count in full
        let d = dl(vec![term("x1^4", 1.0, 0.0, 0)]);
        let e = relative_l2_error(&d, &[("x1^2".into(), 1.0)]).unwrap();
        assert!((e - 100.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn aggregation_over_templates() {
        let d = dl(vec![term("ux_1^2", -49.0, 0.0, 0), term("ux_2^2", -51.0, 0.0, 1), term("ut_1^2", 0.5, 0.0, 0)]);
        let (m, s) = aggregate_shared_terms(&d, "ux_*^2").unwrap();
        assert_eq!((m, s), (-50.0, 1.0));
        let (m, s) = aggregate_shared_terms(&d, "ut_*^2").unwrap();
        assert_eq!((m, s), (0.5, 0.0));
        assert!(aggregate_shared_terms(&d, "uxx_*^2").is_err());
        assert!(matches_template("(x*-x*)^2", "(x12-x11)^2"));
        assert!(!matches_template("x*^2", "x1^4"));
    }

    #[test]
    fn templates_and_consensus() {
        assert_eq!(node_template("uxx_12^2"), "uxx_*^2");
        let mk = |dof: usize, id: &str| result(dof, vec![term(&format!("ut_{}^2", dof + 1), 0.5, 0.0, dof), term(id, -1.0, 0.0, dof)]);
        let rs: Vec<DofResult> = (0..5)
            .map(|i| if i == 3 { mk(i, &format!("u_{}^2", i + 1)) } else { mk(i, &format!("ux_{}^2", i + 1)) })
            .collect();
        let c = field_consensus(&rs);
        assert_eq!(c.support, vec!["ux_*^2".to_string()]);
        assert_eq!(c.dissenting, vec![3]);
        assert!(c.pooled);
    }
}
