//! Polynomial expressions over state atoms with exact partial, time and
//! space derivatives. Candidate functions, Lagrangians, Hamiltonians and
//! equations of motion are all built from these.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::error::{Error, Result};

/// Elementary quantity. Indices are zero-based; identifiers print one-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    X(usize),
    V(usize),
    A(usize),
    /// `x_hi - x_lo`
    Diff { hi: usize, lo: usize },
    Sin(usize),
    Cos(usize),
    U(usize),
    Ut(usize),
    Utt(usize),
    /// k-th spatial derivative of u at a node, k in 1..=4.
    Ux { order: u8, node: usize },
}

impl Atom {
    /// DOF or node index the atom refers to (both for differences).
    pub fn dofs(&self) -> Vec<usize> {
        match *self {
            Atom::X(i) | Atom::V(i) | Atom::A(i) | Atom::Sin(i) | Atom::Cos(i) => vec![i],
            Atom::U(i) | Atom::Ut(i) | Atom::Utt(i) | Atom::Ux { node: i, .. } => vec![i],
            Atom::Diff { hi, lo } => vec![lo, hi],
        }
    }

    pub fn is_field(&self) -> bool {
        matches!(self, Atom::U(_) | Atom::Ut(_) | Atom::Utt(_) | Atom::Ux { .. })
    }

    /// Same atom at another DOF/node (differences shift both ends).
    pub fn shifted(&self, f: impl Fn(usize) -> usize) -> Atom {
        match *self {
            Atom::X(i) => Atom::X(f(i)),
            Atom::V(i) => Atom::V(f(i)),
            Atom::A(i) => Atom::A(f(i)),
            Atom::Sin(i) => Atom::Sin(f(i)),
            Atom::Cos(i) => Atom::Cos(f(i)),
            Atom::U(i) => Atom::U(f(i)),
            Atom::Ut(i) => Atom::Ut(f(i)),
            Atom::Utt(i) => Atom::Utt(f(i)),
            Atom::Ux { order, node } => Atom::Ux { order, node: f(node) },
            Atom::Diff { hi, lo } => Atom::Diff { hi: f(hi), lo: f(lo) },
        }
    }

    /// d(self)/d(var) for an independent variable `var`.
    fn partial(&self, var: Atom) -> Expr {
        if *self == var {
            return Expr::constant(1.0);
        }
        match (*self, var) {
            (Atom::Diff { hi, .. }, Atom::X(j)) if hi == j => Expr::constant(1.0),
            (Atom::Diff { lo, .. }, Atom::X(j)) if lo == j => Expr::constant(-1.0),
            (Atom::Sin(i), Atom::X(j)) if i == j => Expr::atom(Atom::Cos(i)),
            (Atom::Cos(i), Atom::X(j)) if i == j => Expr::atom(Atom::Sin(i)).scaled(-1.0),
            _ => Expr::zero(),
        }
    }

    fn time_derivative(&self) -> Result<Expr> {
        Ok(match *self {
            Atom::X(i) => Expr::atom(Atom::V(i)),
            Atom::V(i) => Expr::atom(Atom::A(i)),
            Atom::Diff { hi, lo } => Expr::atom(Atom::V(hi)).sub(&Expr::atom(Atom::V(lo))),
            Atom::Sin(i) => Expr::monomial(Monomial::from_atoms(&[(Atom::Cos(i), 1), (Atom::V(i), 1)]), 1.0),
            Atom::Cos(i) => Expr::monomial(Monomial::from_atoms(&[(Atom::Sin(i), 1), (Atom::V(i), 1)]), -1.0),
            Atom::U(i) => Expr::atom(Atom::Ut(i)),
            Atom::Ut(i) => Expr::atom(Atom::Utt(i)),
            other => return Err(Error::Unsupported(format!("time derivative of {other}"))),
        })
    }

    fn space_derivative(&self) -> Result<Expr> {
        Ok(match *self {
            Atom::U(i) => Expr::atom(Atom::Ux { order: 1, node: i }),
            Atom::Ux { order, node } if order < 4 => Expr::atom(Atom::Ux { order: order + 1, node }),
            other => return Err(Error::Unsupported(format!("space derivative of {other}"))),
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Atom::X(i) => write!(f, "x{}", i + 1),
            Atom::V(i) => write!(f, "v{}", i + 1),
            Atom::A(i) => write!(f, "a{}", i + 1),
            Atom::Diff { hi, lo } => write!(f, "(x{}-x{})", hi + 1, lo + 1),
            Atom::Sin(i) => write!(f, "sin(x{})", i + 1),
            Atom::Cos(i) => write!(f, "cos(x{})", i + 1),
            Atom::U(i) => write!(f, "u_{}", i + 1),
            Atom::Ut(i) => write!(f, "ut_{}", i + 1),
            Atom::Utt(i) => write!(f, "utt_{}", i + 1),
            Atom::Ux { order, node } => write!(f, "u{}_{}", "x".repeat(order as usize), node + 1),
        }
    }
}

fn parse_index(s: &str) -> Option<usize> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let i: usize = s.parse().ok()?;
    i.checked_sub(1)
}

fn parse_atom(s: &str) -> Option<Atom> {
    if let Some(inner) = s.strip_prefix("(x").and_then(|r| r.strip_suffix(')')) {
        let (a, b) = inner.split_once("-x")?;
        return Some(Atom::Diff { hi: parse_index(a)?, lo: parse_index(b)? });
    }
    if let Some(inner) = s.strip_prefix("sin(x").and_then(|r| r.strip_suffix(')')) {
        return Some(Atom::Sin(parse_index(inner)?));
    }
    if let Some(inner) = s.strip_prefix("cos(x").and_then(|r| r.strip_suffix(')')) {
        return Some(Atom::Cos(parse_index(inner)?));
    }
    if let Some((name, idx)) = s.split_once('_') {
        let i = parse_index(idx)?;
        return match name {
            "u" => Some(Atom::U(i)),
            "ut" => Some(Atom::Ut(i)),
            "utt" => Some(Atom::Utt(i)),
            _ => {
                let xs = name.strip_prefix('u')?;
                if !(1..=4).contains(&xs.len()) || !xs.bytes().all(|b| b == b'x') {
                    return None;
                }
                Some(Atom::Ux { order: xs.len() as u8, node: i })
            }
        };
    }
    let (head, rest) = s.split_at(1);
    let i = parse_index(rest)?;
    match head {
        "x" => Some(Atom::X(i)),
        "v" => Some(Atom::V(i)),
        "a" => Some(Atom::A(i)),
        _ => None,
    }
}

/// Product of atom powers, kept sorted by atom with positive exponents.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial(Vec<(Atom, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn from_atoms(factors: &[(Atom, u32)]) -> Self {
        let mut m = Monomial::one();
        for &(a, p) in factors {
            m.mul_atom(a, p);
        }
        m
    }

    pub fn power(atom: Atom, p: u32) -> Self {
        Monomial::from_atoms(&[(atom, p)])
    }

    pub fn factors(&self) -> &[(Atom, u32)] {
        &self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, p)| p).sum()
    }

    fn mul_atom(&mut self, a: Atom, p: u32) {
        if p == 0 {
            return;
        }
        match self.0.binary_search_by(|(b, _)| b.cmp(&a)) {
            Ok(k) => self.0[k].1 += p,
            Err(k) => self.0.insert(k, (a, p)),
        }
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut m = self.clone();
        for &(a, p) in &other.0 {
            m.mul_atom(a, p);
        }
        m
    }

    pub fn contains(&self, atom: Atom) -> bool {
        self.0.iter().any(|(a, _)| *a == atom)
    }

    pub fn map_atoms(&self, f: impl Fn(Atom) -> Atom) -> Monomial {
        let mut m = Monomial::one();
        for &(a, p) in &self.0 {
            m.mul_atom(f(a), p);
        }
        m
    }

    /// All DOF/node indices the monomial touches, sorted and unique.
    pub fn dofs(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.0.iter().flat_map(|(a, _)| a.dofs()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Parses the canonical identifier produced by `Display`.
    pub fn parse(id: &str) -> Result<Monomial> {
        let id = id.trim();
        let bad = || Error::Dictionary(format!("cannot parse term id `{id}`"));
        if id == "1" {
            return Ok(Monomial::one());
        }
        let mut m = Monomial::one();
        for factor in id.split('*') {
            let (base, p) = match factor.rsplit_once('^') {
                Some((b, e)) => (b, e.parse::<u32>().map_err(|_| bad())?),
                None => (factor, 1),
            };
            if p == 0 {
                return Err(bad());
            }
            m.mul_atom(parse_atom(base).ok_or_else(bad)?, p);
        }
        Ok(m)
    }

    fn partial(&self, var: Atom) -> Expr {
        let mut out = Expr::zero();
        for (k, &(a, p)) in self.0.iter().enumerate() {
            let da = a.partial(var);
            if da.is_zero() {
                continue;
            }
            let mut rest = Monomial(self.0.clone());
            if p == 1 {
                rest.0.remove(k);
            } else {
                rest.0[k].1 = p - 1;
            }
            out.add_assign(&da.mul_monomial(&rest, p as f64));
        }
        out
    }

    fn chain(&self, d: impl Fn(&Atom) -> Result<Expr>) -> Result<Expr> {
        let mut out = Expr::zero();
        for (k, &(a, p)) in self.0.iter().enumerate() {
            let da = d(&a)?;
            if da.is_zero() {
                continue;
            }
            let mut rest = Monomial(self.0.clone());
            if p == 1 {
                rest.0.remove(k);
            } else {
                rest.0[k].1 = p - 1;
            }
            out.add_assign(&da.mul_monomial(&rest, p as f64));
        }
        Ok(out)
    }

    pub fn eval_point(&self, value: &impl Fn(Atom) -> f64) -> f64 {
        self.0.iter().fold(1.0, |acc, &(a, p)| acc * powu(value(a), p))
    }
}

#[inline]
pub(crate) fn powu(x: f64, p: u32) -> f64 {
    match p {
        0 => 1.0,
        1 => x,
        2 => x * x,
        _ => x.powi(p as i32),
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (k, (a, p)) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, "*")?;
            }
            if *p == 1 {
                write!(f, "{a}")?;
            } else {
                write!(f, "{a}^{p}")?;
            }
        }
        Ok(())
    }
}

/// Provides whole columns of atom values (one entry per sample).
pub trait AtomSource {
    fn rows(&self) -> usize;
    fn column(&self, atom: Atom) -> Result<Vec<f64>>;
}

/// Linear combination of monomials.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Expr {
    terms: BTreeMap<Monomial, f64>,
}

impl Expr {
    pub fn zero() -> Self {
        Expr::default()
    }

    pub fn constant(c: f64) -> Self {
        Expr::monomial(Monomial::one(), c)
    }

    pub fn atom(a: Atom) -> Self {
        Expr::monomial(Monomial::power(a, 1), 1.0)
    }

    pub fn monomial(m: Monomial, c: f64) -> Self {
        let mut e = Expr::zero();
        e.add_term(m, c);
        e
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in display order: accelerations, then kinetic terms, then the
    /// rest in canonical order.
    pub fn ordered_terms(&self) -> Vec<(&Monomial, f64)> {
        let rank = |m: &Monomial| {
            let has = |p: fn(&Atom) -> bool| m.0.iter().any(|(a, _)| p(a));
            if has(|a| matches!(a, Atom::A(_) | Atom::Utt(_))) {
                0
            } else if has(|a| matches!(a, Atom::V(_) | Atom::Ut(_))) {
                1
            } else {
                2
            }
        };
        let mut terms: Vec<(&Monomial, f64)> = self.terms.iter().map(|(m, c)| (m, *c)).collect();
        terms.sort_by_key(|(m, _)| rank(m));
        terms
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    pub fn add_assign(&mut self, other: &Expr) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), *c);
        }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        let mut e = self.clone();
        e.add_assign(other);
        e
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        self.add(&other.scaled(-1.0))
    }

    pub fn scaled(&self, s: f64) -> Expr {
        let mut e = Expr::zero();
        for (m, c) in &self.terms {
            e.add_term(m.clone(), c * s);
        }
        e
    }

    fn mul_monomial(&self, m: &Monomial, s: f64) -> Expr {
        let mut e = Expr::zero();
        for (k, c) in &self.terms {
            e.add_term(k.mul(m), c * s);
        }
        e
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        let mut e = Expr::zero();
        for (m, c) in &other.terms {
            e.add_assign(&self.mul_monomial(m, *c));
        }
        e
    }

    /// Partial derivative treating `var` as an independent variable.
    pub fn partial(&self, var: Atom) -> Expr {
        let mut out = Expr::zero();
        for (m, c) in &self.terms {
            out.add_assign(&m.partial(var).scaled(*c));
        }
        out
    }

    /// Total time derivative along trajectories.
    pub fn time_derivative(&self) -> Result<Expr> {
        let mut out = Expr::zero();
        for (m, c) in &self.terms {
            out.add_assign(&m.chain(Atom::time_derivative)?.scaled(*c));
        }
        Ok(out)
    }

    /// Total derivative in the spatial coordinate (field atoms only).
    pub fn space_derivative(&self) -> Result<Expr> {
        let mut out = Expr::zero();
        for (m, c) in &self.terms {
            out.add_assign(&m.chain(Atom::space_derivative)?.scaled(*c));
        }
        Ok(out)
    }

    pub fn map_atoms(&self, f: impl Fn(Atom) -> Atom + Copy) -> Expr {
        let mut e = Expr::zero();
        for (m, c) in &self.terms {
            e.add_term(m.map_atoms(f), *c);
        }
        e
    }

    pub fn atoms(&self) -> Vec<Atom> {
        let mut v: Vec<Atom> = self.terms.keys().flat_map(|m| m.0.iter().map(|(a, _)| *a)).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn eval_point(&self, value: &impl Fn(Atom) -> f64) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval_point(value)).sum()
    }

    /// Evaluates row-wise on every sample provided by `src`.
    pub fn evaluate(&self, src: &dyn AtomSource) -> Result<Vec<f64>> {
        let n = src.rows();
        let mut cache: HashMap<Atom, Vec<f64>> = HashMap::new();
        for a in self.atoms() {
            cache.insert(a, src.column(a)?);
        }
        let mut out = vec![0.0; n];
        for (m, c) in &self.terms {
            let mut col = vec![*c; n];
            for &(a, p) in &m.0 {
                let v = &cache[&a];
                for (o, x) in col.iter_mut().zip(v) {
                    *o *= powu(*x, p);
                }
            }
            for (o, x) in out.iter_mut().zip(&col) {
                *o += x;
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Expr {
    /// Canonical text such as `0.5*v1^2 - 500*x1^2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.ordered_terms().into_iter().enumerate() {
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            match (k, sign) {
                (0, "-") => write!(f, "-")?,
                (0, _) => {}
                _ => write!(f, " {sign} ")?,
            }
            if m.is_one() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{m}")?;
            } else {
                write!(f, "{mag}*{m}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(id: &str) -> Monomial {
        Monomial::parse(id).unwrap()
    }

    #[test]
    fn ids_round_trip() {
        for id in [
            "1", "v1^2", "x1^4", "(x2-x1)^2", "x1*v2", "sin(x1)", "cos(x3)", "u_3^2", "ut_3^2", "ux_3^2",
            "uxx_3^2", "u_2*ux_2", "uxxxx_10",
        ] {
            assert_eq!(m(id).to_string(), id);
        }
        assert!(Monomial::parse("q1").is_err());
        assert!(Monomial::parse("x0").is_err());
        assert!(Monomial::parse("x1^0").is_err());
    }

    #[test]
    fn partials_follow_product_and_chain_rules() {
        let e = Expr::monomial(m("x1^4"), 1.0);
        assert_eq!(e.partial(Atom::X(0)), Expr::monomial(m("x1^3"), 4.0));
        let e = Expr::monomial(m("x1*v2"), 1.0);
        assert_eq!(e.partial(Atom::V(1)), Expr::atom(Atom::X(0)));
        assert!(e.partial(Atom::V(0)).is_zero());
        let e = Expr::monomial(m("(x2-x1)^2"), 1.0);
        assert_eq!(e.partial(Atom::X(0)), Expr::monomial(m("(x2-x1)"), -2.0));
        let e = Expr::atom(Atom::Cos(0));
        assert_eq!(e.partial(Atom::X(0)), Expr::atom(Atom::Sin(0)).scaled(-1.0));
    }

    #[test]
    fn time_derivative_of_gauge_pair_cancels_in_el() {
        // EL(x1 v2 + x2 v1) for dof 1: d/dt(x2) - v2 = 0
        let f = Expr::monomial(m("x1*v2"), 1.0).add(&Expr::monomial(m("x2*v1"), 1.0));
        let el = f.partial(Atom::V(0)).time_derivative().unwrap().sub(&f.partial(Atom::X(0)));
        assert!(el.is_zero());
    }

    #[test]
    fn space_derivative_chain() {
        let f = Expr::monomial(m("ux_2^3"), 1.0);
        let d = f.space_derivative().unwrap();
        assert_eq!(d, Expr::monomial(m("ux_2^2*uxx_2"), 3.0));
        assert!(Expr::atom(Atom::Ut(0)).space_derivative().is_err());
        assert!(Expr::atom(Atom::Ux { order: 4, node: 0 }).space_derivative().is_err());
    }

    #[test]
    fn display_is_canonical() {
        let e = Expr::monomial(m("v1^2"), 0.5).add(&Expr::monomial(m("x1^2"), -500.0));
        assert_eq!(e.to_string(), "0.5*v1^2 - 500*x1^2");
        assert_eq!(Expr::constant(-2.0).to_string(), "-2");
    }

    fn value(a: Atom, x: &[f64], v: &[f64]) -> f64 {
        match a {
            Atom::X(i) => x[i],
            Atom::V(i) => v[i],
            Atom::Diff { hi, lo } => x[hi] - x[lo],
            Atom::Sin(i) => x[i].sin(),
            Atom::Cos(i) => x[i].cos(),
            _ => unreachable!(),
        }
    }

    proptest! {
        // analytic partials against central differences under a single-entry perturbation
        #[test]
        fn partials_match_finite_differences(
            x in proptest::collection::vec(-1.5..1.5f64, 3),
            v in proptest::collection::vec(-1.5..1.5f64, 3),
            which in 0usize..6,
            term in 0usize..7,
        ) {
            let ids = ["x1^4", "x2*v3", "(x3-x2)^3", "sin(x1)*v1^2", "cos(x2)", "x1^2*x3*v2", "v2^2"];
            let f = Expr::monomial(m(ids[term]), 1.7);
            let var = if which < 3 { Atom::X(which) } else { Atom::V(which - 3) };
            let analytic = f.partial(var).eval_point(&|a| value(a, &x, &v));
            let h = 1e-5;
            let shifted = |s: f64| {
                let (mut xs, mut vs) = (x.clone(), v.clone());
                if which < 3 { xs[which] += s } else { vs[which - 3] += s }
                f.eval_point(&|a| value(a, &xs, &vs))
            };
            let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
            prop_assert!((analytic - numeric).abs() <= 1e-5 * (1.0 + analytic.abs()));
        }
    }
}
