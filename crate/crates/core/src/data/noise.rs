use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{FieldDataset, Meta, TrajectoryDataset};
use crate::error::{Error, Result};

/// Measurement noise: per-column Gaussian with std `level_zeta * std(column)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level_zeta: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(level_zeta: f64, seed: u64) -> Result<Self> {
        let s = NoiseSpec { level_zeta, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level_zeta >= 0.0) || !self.level_zeta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise level must be non-negative, got {}",
                self.level_zeta
            )));
        }
        Ok(())
    }

    fn record(&self, meta: &mut Meta) {
        meta.insert("noise_zeta".into(), self.level_zeta.into());
        meta.insert("noise_seed".into(), self.seed.into());
    }
}

fn column_std(m: &DMatrix<f64>, j: usize) -> f64 {
    let c = m.column(j);
    let n = c.len() as f64;
    let mean = c.sum() / n;
    (c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Adds `zeta * std(column)` Gaussian noise to every column of `m` in place.
pub fn add_noise_to(m: &mut DMatrix<f64>, zeta: f64, rng: &mut ChaCha8Rng) {
    if zeta == 0.0 {
        return;
    }
    for j in 0..m.ncols() {
        let s = zeta * column_std(m, j);
        for i in 0..m.nrows() {
            let e: f64 = StandardNormal.sample(rng);
            m[(i, j)] += s * e;
        }
    }
}

pub fn add_noise(d: &TrajectoryDataset, spec: &NoiseSpec) -> Result<TrajectoryDataset> {
    spec.validate()?;
    let mut out = d.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    add_noise_to(&mut out.states, spec.level_zeta, &mut rng);
    add_noise_to(&mut out.velocities, spec.level_zeta, &mut rng);
    spec.record(&mut out.meta);
    Ok(out)
}

pub fn add_noise_field(d: &FieldDataset, spec: &NoiseSpec) -> Result<FieldDataset> {
    spec.validate()?;
    let mut out = d.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    add_noise_to(&mut out.field, spec.level_zeta, &mut rng);
    if let Some(v) = out.velocity.as_mut() {
        add_noise_to(v, spec.level_zeta, &mut rng);
    }
    spec.record(&mut out.meta);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize) -> TrajectoryDataset {
        // column with population std exactly 2
        let x = DMatrix::from_fn(n, 1, |i, _| if i % 2 == 0 { 2.0 } else { -2.0 });
        let v = DMatrix::from_fn(n, 1, |i, _| (i as f64 * 0.01).sin());
        let mut meta = Meta::new();
        meta.insert("system".into(), "toy".into());
        TrajectoryDataset::new(0.0, 0.01, x, v, vec!["x1".into()], meta).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let d = data(100);
        let out = add_noise(&d, &NoiseSpec::new(0.0, 3).unwrap()).unwrap();
        assert_eq!(out.states, d.states);
        assert_eq!(out.velocities, d.velocities);
    }

    #[test]
    fn empirical_std_matches_level() {
        let d = data(10_000);
        let out = add_noise(&d, &NoiseSpec::new(0.05, 11).unwrap()).unwrap();
        let diff = &out.states - &d.states;
        let n = diff.len() as f64;
        let mean = diff.sum() / n;
        let sd = (diff.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.09..=0.11).contains(&sd), "{sd}");
    }

    #[test]
    fn deterministic_and_meta_only_gains_noise_keys() {
        let d = data(50);
        let spec = NoiseSpec::new(0.1, 7).unwrap();
        let a = add_noise(&d, &spec).unwrap();
        let b = add_noise(&d, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.meta["system"], d.meta["system"]);
        assert_eq!(a.meta.len(), d.meta.len() + 2);
    }

    #[test]
    fn negative_level_rejected() {
        assert!(NoiseSpec::new(-0.1, 0).is_err());
    }
}
