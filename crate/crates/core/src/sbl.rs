//! Spike-and-slab Bayesian linear regression by Gibbs sampling.
//!
//! Model: y | beta, sigma2 ~ N(L beta, sigma2 I); active coefficients
//! ~ N(0, sigma2 * theta I); inactive ones are exactly zero; z_k ~ Bern(q);
//! sigma2 ~ IG(a_sigma, b_sigma); theta ~ IG(a_theta, b_theta); q ~ Beta(a_q, b_q).
//!
//! Columns and target are scaled to unit norm before sampling and
//! coefficients are mapped back afterwards. All quantities are computed from
//! the Gram matrix, so a sweep costs nothing in N.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_theta: f64,
    pub b_theta: f64,
    pub a_q: f64,
    pub b_q: f64,
    pub q0: f64,
    pub theta0: f64,
    pub n_samples: usize,
    pub n_burnin: usize,
    pub pip_threshold: f64,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            a_sigma: 1e-4,
            b_sigma: 1e-4,
            a_theta: 0.5,
            b_theta: 0.5,
            a_q: 0.1,
            b_q: 1.0,
            q0: 0.1,
            theta0: 10.0,
            n_samples: 5000,
            n_burnin: 1000,
            pip_threshold: 0.5,
            seed: 0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_theta", self.a_theta),
            ("b_theta", self.b_theta),
            ("a_q", self.a_q),
            ("b_q", self.b_q),
            ("theta0", self.theta0),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.q0 > 0.0 && self.q0 < 1.0) {
            return Err(Error::InvalidParameter(format!("q0 must lie in (0,1), got {}", self.q0)));
        }
        if !(self.pip_threshold > 0.0 && self.pip_threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "pip_threshold must lie in (0,1), got {}",
                self.pip_threshold
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidParameter("n_samples must be positive".into()));
        }
        Ok(())
    }
}

/// One state of the chain. `beta_r` holds the active coefficients in
/// original (unscaled) units, ordered by column index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsState {
    pub z: Vec<bool>,
    pub beta_r: Vec<f64>,
    pub sigma2: f64,
    pub theta_slab: f64,
    pub q: f64,
}

impl GibbsState {
    pub fn active(&self) -> Vec<usize> {
        active(&self.z)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GibbsChain {
    pub samples: Vec<GibbsState>,
    pub pip: Vec<f64>,
    /// Posterior mean of the selected model, length K (zeros elsewhere).
    pub mu_beta: Vec<f64>,
    /// Posterior covariance of the selected coefficients (h x h, row-major
    /// over `selected_indices`).
    pub sigma_beta: Vec<Vec<f64>>,
    pub selected: Vec<bool>,
    pub selected_indices: Vec<usize>,
    pub initial_z: Vec<bool>,
    pub mean_sigma2: f64,
    pub mean_theta: f64,
}

impl GibbsChain {
    /// Posterior standard deviation of coefficient `k` (0 when not selected).
    pub fn std_of(&self, k: usize) -> f64 {
        match self.selected_indices.iter().position(|&j| j == k) {
            Some(p) => self.sigma_beta[p][p].max(0.0).sqrt(),
            None => 0.0,
        }
    }

    pub fn cov_of(&self, a: usize, b: usize) -> f64 {
        let pa = self.selected_indices.iter().position(|&j| j == a);
        let pb = self.selected_indices.iter().position(|&j| j == b);
        match (pa, pb) {
            (Some(i), Some(j)) => self.sigma_beta[i][j],
            _ => 0.0,
        }
    }
}

pub fn active(z: &[bool]) -> Vec<usize> {
    z.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k).collect()
}

/// Sufficient statistics of a (standardized) regression problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub n: usize,
}

impl Problem {
    pub fn from_data(design: &DMatrix<f64>, target: &DVector<f64>) -> Self {
        Problem {
            gram: design.transpose() * design,
            xty: design.transpose() * target,
            yty: target.dot(target),
            n: design.nrows(),
        }
    }

    pub fn k(&self) -> usize {
        self.gram.ncols()
    }

    fn sub(&self, idx: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let h = idx.len();
        let g = DMatrix::from_fn(h, h, |i, j| self.gram[(idx[i], idx[j])]);
        let r = DVector::from_fn(h, |i, _| self.xty[idx[i]]);
        (g, r)
    }
}

/// Cholesky factorization with a geometric jitter ladder on the diagonal.
pub fn cholesky_jitter(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let k = m.nrows().max(1) as f64;
    let mut jitter = (1e-12 * m.trace().abs() / k).max(f64::MIN_POSITIVE);
    const ATTEMPTS: usize = 8;
    for _ in 0..ATTEMPTS {
        let mut j = m.clone();
        for i in 0..j.nrows() {
            j[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(j) {
            log::debug!("cholesky needed jitter {jitter:e}");
            return Ok(c);
        }
        jitter *= 2.0;
    }
    Err(Error::NotPositiveDefinite { attempts: ATTEMPTS, jitter: jitter / 2.0 })
}

fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    let l = c.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

/// Quantities of the collapsed model (beta and sigma2 integrated out).
struct Collapsed {
    /// Log marginal likelihood up to a z-independent constant.
    log_ml: f64,
    /// Residual quadratic form y'y - r' M^-1 r (clamped at 0).
    rss: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    mean: DVector<f64>,
}

fn collapsed(p: &Problem, idx: &[usize], theta: f64, hp: &Hyperparameters) -> Result<Collapsed> {
    let shape = hp.a_sigma + 0.5 * p.n as f64;
    if idx.is_empty() {
        let rss = p.yty;
        return Ok(Collapsed {
            log_ml: -shape * (hp.b_sigma + 0.5 * rss).ln(),
            rss,
            chol: None,
            mean: DVector::zeros(0),
        });
    }
    let (mut g, r) = p.sub(idx);
    for i in 0..idx.len() {
        g[(i, i)] += 1.0 / theta;
    }
    let chol = cholesky_jitter(&g)?;
    let mean = chol.solve(&r);
    let mut rss = p.yty - r.dot(&mean);
    if rss < 0.0 {
        log::trace!("clamping negative residual form {rss:e}");
        rss = 0.0;
    }
    let h = idx.len() as f64;
    let log_ml = -0.5 * log_det(&chol) - 0.5 * h * theta.ln() - shape * (hp.b_sigma + 0.5 * rss).ln();
    Ok(Collapsed { log_ml, rss, chol: Some(chol), mean })
}

/// Log marginal likelihood log p(y | z, theta) up to a z-independent constant.
pub fn log_marginal(p: &Problem, z: &[bool], theta: f64, hp: &Hyperparameters) -> Result<f64> {
    Ok(collapsed(p, &active(z), theta, hp)?.log_ml)
}

fn inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("valid gamma parameters");
    1.0 / g.sample(rng)
}

/// Draws the active coefficients from N(mu, sigma2 M^-1), M = G_AA + I/theta.
pub fn sample_beta<R: Rng + ?Sized>(
    p: &Problem,
    z: &[bool],
    sigma2: f64,
    theta: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let idx = active(z);
    if idx.is_empty() {
        return Ok(DVector::zeros(0));
    }
    let (mut g, r) = p.sub(&idx);
    for i in 0..idx.len() {
        g[(i, i)] += 1.0 / theta;
    }
    let chol = cholesky_jitter(&g)?;
    let mean = chol.solve(&r);
    let eps = DVector::from_fn(idx.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    // L^T w = eps gives w ~ N(0, M^-1)
    let w = chol
        .l()
        .transpose()
        .solve_upper_triangular(&eps)
        .ok_or(Error::NotPositiveDefinite { attempts: 0, jitter: 0.0 })?;
    Ok(mean + w * sigma2.sqrt())
}

/// One systematic scan over the indicators with beta and sigma2 integrated out.
pub fn sample_z<R: Rng + ?Sized>(
    p: &Problem,
    z: &mut [bool],
    theta: f64,
    q: f64,
    hp: &Hyperparameters,
    rng: &mut R,
) -> Result<()> {
    let log_q = q.ln();
    let log_1q = (1.0 - q).ln();
    let mut current = collapsed(p, &active(z), theta, hp)?.log_ml;
    for k in 0..z.len() {
        let was = z[k];
        z[k] = !was;
        let flipped = collapsed(p, &active(z), theta, hp)?.log_ml;
        z[k] = was;
        let (l1, l0) = if was { (current, flipped) } else { (flipped, current) };
        let a = log_q + l1;
        let b = log_1q + l0;
        let m = a.max(b);
        let p1 = (a - m).exp() / ((a - m).exp() + (b - m).exp());
        let new = rng.random::<f64>() < p1;
        if new != was {
            z[k] = new;
            current = flipped;
        }
    }
    Ok(())
}

/// Draws sigma2 ~ IG(a + N/2, b + (y'y - r' M^-1 r)/2).
pub fn sample_sigma2<R: Rng + ?Sized>(
    p: &Problem,
    z: &[bool],
    theta: f64,
    hp: &Hyperparameters,
    rng: &mut R,
) -> Result<f64> {
    let c = collapsed(p, &active(z), theta, hp)?;
    Ok(inverse_gamma(hp.a_sigma + 0.5 * p.n as f64, hp.b_sigma + 0.5 * c.rss, rng))
}

/// Draws theta ~ IG(a + h/2, b + beta'beta / (2 sigma2)).
pub fn sample_theta_slab<R: Rng + ?Sized>(beta_r: &DVector<f64>, sigma2: f64, hp: &Hyperparameters, rng: &mut R) -> f64 {
    let h = beta_r.len() as f64;
    inverse_gamma(hp.a_theta + 0.5 * h, hp.b_theta + beta_r.dot(beta_r) / (2.0 * sigma2), rng)
}

/// Draws q ~ Beta(a_q + h, b_q + K - h).
pub fn sample_q<R: Rng + ?Sized>(z: &[bool], hp: &Hyperparameters, rng: &mut R) -> f64 {
    let h = z.iter().filter(|b| **b).count() as f64;
    let k = z.len() as f64;
    Beta::new(hp.a_q + h, hp.b_q + k - h).expect("valid beta parameters").sample(rng)
}

fn check_inputs(design: &DMatrix<f64>, target: &DVector<f64>) -> Result<()> {
    if design.nrows() != target.len() {
        return Err(Error::Shape(format!(
            "design has {} rows, target has {}",
            design.nrows(),
            target.len()
        )));
    }
    if design.iter().chain(target.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: 0, column: "regression input".into() });
    }
    Ok(())
}

/// Ridge-regularized residual sum of squares for an active set.
fn subset_rss(p: &Problem, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return p.yty;
    }
    let (mut g, r) = p.sub(idx);
    let lambda = 1e-10 * g.trace().abs() / idx.len() as f64;
    for i in 0..idx.len() {
        g[(i, i)] += lambda.max(f64::MIN_POSITIVE);
    }
    let beta = match cholesky_jitter(&g) {
        Ok(c) => c.solve(&r),
        Err(_) => return p.yty,
    };
    let rss = p.yty - 2.0 * beta.dot(&r) + (g * &beta).dot(&beta);
    rss.max(0.0)
}

/// BIC score used by the forward-backward search.
pub fn bic(p: &Problem, idx: &[usize]) -> f64 {
    let n = p.n as f64;
    let floor = 1e-12 * p.yty / n;
    n * (subset_rss(p, idx) / n + floor.max(f64::MIN_POSITIVE)).ln() + idx.len() as f64 * n.ln()
}

/// Forward pass adds columns left to right when they lower the BIC; the
/// backward pass then drops active columns whose removal does not raise it.
/// Passes repeat until the active set is stable, so a column that only pays
/// off next to one further right is still found.
pub fn fb_initialize(design: &DMatrix<f64>, target: &DVector<f64>) -> Result<Vec<bool>> {
    check_inputs(design, target)?;
    if design.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("design matrix is identically zero".into()));
    }
    let (sd, st, _, _) = standardize(design, target);
    Ok(fb_on_problem(&Problem::from_data(&sd, &st)))
}

fn fb_on_problem(p: &Problem) -> Vec<bool> {
    let k = p.k();
    let mut z = vec![false; k];
    let mut best = bic(p, &[]);
    // every change lowers the BIC or keeps it while shrinking the set, so this terminates
    for _ in 0..=2 * k {
        let before = z.clone();
        for j in 0..k {
            if z[j] || p.gram[(j, j)] == 0.0 {
                continue;
            }
            z[j] = true;
            let s = bic(p, &active(&z));
            if s < best {
                best = s;
            } else {
                z[j] = false;
            }
        }
        for j in (0..k).rev() {
            if !z[j] {
                continue;
            }
            z[j] = false;
            let s = bic(p, &active(&z));
            if s <= best {
                best = s;
            } else {
                z[j] = true;
            }
        }
        if z == before {
            break;
        }
    }
    z
}

/// Unit-norm columns and target. Returns scaled design, scaled target,
/// column norms and the target norm. Zero columns keep a unit scale.
pub fn standardize(design: &DMatrix<f64>, target: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, Vec<f64>, f64) {
    let mut d = design.clone();
    let mut norms = Vec::with_capacity(design.ncols());
    for j in 0..d.ncols() {
        let n = d.column(j).norm();
        let s = if n > 0.0 { n } else { 1.0 };
        d.column_mut(j).scale_mut(1.0 / s);
        norms.push(s);
    }
    let yn = target.norm();
    let ys = if yn > 0.0 { yn } else { 1.0 };
    (d, target / ys, norms, yn)
}

/// Runs the sampler on stream 0 of `hp.seed`.
pub fn run_gibbs(design: &DMatrix<f64>, target: &DVector<f64>, hp: &Hyperparameters) -> Result<GibbsChain> {
    run_gibbs_stream(design, target, hp, 0)
}

/// Runs the sampler with an RNG seeded by `hp.seed` on the given stream, so
/// independent chains (one per DOF) never share random numbers.
pub fn run_gibbs_stream(
    design: &DMatrix<f64>,
    target: &DVector<f64>,
    hp: &Hyperparameters,
    stream: u64,
) -> Result<GibbsChain> {
    hp.validate()?;
    check_inputs(design, target)?;
    let k = design.ncols();
    if k == 0 {
        return Err(Error::Degenerate("no candidate columns left".into()));
    }
    let max_col = (0..k).map(|j| design.column(j).norm()).fold(0.0, f64::max);
    let yn = target.norm();
    if yn == 0.0 || yn <= 1e-14 * max_col {
        return Err(Error::Degenerate("regression target is zero".into()));
    }
    if max_col == 0.0 {
        return Err(Error::Degenerate("design matrix is identically zero".into()));
    }
    let (sd, st, col_norms, y_norm) = standardize(design, target);
    let p = Problem::from_data(&sd, &st);

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    rng.set_stream(stream);

    let mut z = fb_on_problem(&p);
    let initial_z = z.clone();
    let n = p.n as f64;
    // sigma2 is redrawn before first use; the OLS value only documents the start
    let sigma2_init = (subset_rss(&p, &active(&z)) / n).max(1e-12 * p.yty / n);
    log::debug!("chain start: {} active, sigma2 {sigma2_init:e}", active(&z).len());
    let mut theta = hp.theta0;
    let mut q = hp.q0;

    let unscale = |idx: &[usize], b: &DVector<f64>| -> Vec<f64> {
        idx.iter().zip(b.iter()).map(|(&j, v)| v * y_norm / col_norms[j]).collect()
    };

    let mut samples = Vec::with_capacity(hp.n_samples);
    let mut counts = vec![0usize; k];
    let (mut sum_sigma2, mut sum_theta) = (0.0, 0.0);
    for it in 0..hp.n_burnin + hp.n_samples {
        sample_z(&p, &mut z, theta, q, hp, &mut rng)?;
        let sigma2 = sample_sigma2(&p, &z, theta, hp, &mut rng)?;
        let beta = sample_beta(&p, &z, sigma2, theta, &mut rng)?;
        theta = sample_theta_slab(&beta, sigma2, hp, &mut rng);
        q = sample_q(&z, hp, &mut rng);
        if it >= hp.n_burnin {
            let idx = active(&z);
            for &j in &idx {
                counts[j] += 1;
            }
            sum_sigma2 += sigma2;
            sum_theta += theta;
            samples.push(GibbsState {
                z: z.clone(),
                beta_r: unscale(&idx, &beta),
                sigma2: sigma2 * y_norm * y_norm,
                theta_slab: theta,
                q,
            });
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::Degenerate("every retained sample is the empty model".into()));
    }
    let ns = hp.n_samples as f64;
    let pip: Vec<f64> = counts.iter().map(|&c| c as f64 / ns).collect();
    let selected: Vec<bool> = pip.iter().map(|&v| v > hp.pip_threshold).collect();
    let selected_indices = active(&selected);
    let mean_sigma2 = sum_sigma2 / ns;
    let mean_theta = sum_theta / ns;

    let mut mu_beta = vec![0.0; k];
    let mut sigma_beta = Vec::new();
    if !selected_indices.is_empty() {
        let c = collapsed(&p, &selected_indices, mean_theta, hp)?;
        let chol = c.chol.expect("non-empty model has a factor");
        let inv = chol.inverse();
        for (a, &j) in selected_indices.iter().enumerate() {
            mu_beta[j] = c.mean[a] * y_norm / col_norms[j];
        }
        let h = selected_indices.len();
        sigma_beta = (0..h)
            .map(|a| {
                (0..h)
                    .map(|b| {
                        let (ja, jb) = (selected_indices[a], selected_indices[b]);
                        mean_sigma2 * inv[(a, b)] * y_norm * y_norm / (col_norms[ja] * col_norms[jb])
                    })
                    .collect()
            })
            .collect();
    }
    Ok(GibbsChain {
        samples,
        pip,
        mu_beta,
        sigma_beta,
        selected,
        selected_indices,
        initial_z,
        mean_sigma2: mean_sigma2 * y_norm * y_norm,
        mean_theta,
    })
}
