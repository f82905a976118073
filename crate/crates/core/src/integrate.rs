//! Fixed-step classical Runge-Kutta integration.

/// Result of [`rk4`]: one row per output sample, plus the time at which
/// the state stopped being finite, if it did.
#[derive(Clone, Debug, PartialEq)]
pub struct Integration {
    pub samples: Vec<Vec<f64>>,
    pub blow_up: Option<f64>,
}

/// Integrates `y' = f(y)` from `y0`, storing `n_samples` states spaced `dt`
/// apart (the first is `y0`). Each interval is split into `substeps` RK4 steps.
pub fn rk4<F>(f: F, y0: &[f64], t0: f64, dt: f64, n_samples: usize, substeps: usize) -> Integration
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = y0.len();
    let substeps = substeps.max(1);
    let h = dt / substeps as f64;
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut samples = Vec::with_capacity(n_samples);
    if n_samples == 0 {
        return Integration { samples, blow_up: None };
    }
    samples.push(y.clone());
    for s in 1..n_samples {
        for _ in 0..substeps {
            f(&y, &mut k1);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            f(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            f(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + h * k3[i];
            }
            f(&tmp, &mut k4);
            for i in 0..n {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Integration {
                samples,
                blow_up: Some(t0 + s as f64 * dt),
            };
        }
        samples.push(y.clone());
    }
    Integration { samples, blow_up: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_fourth_order() {
        let run = |sub| {
            let r = rk4(|y, d| d[0] = -y[0], &[1.0], 0.0, 0.1, 11, sub);
            (r.samples[10][0] - (-1.0f64).exp()).abs()
        };
        let (e1, e2) = (run(1), run(2));
        assert!(e1 < 1e-6);
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn reports_blow_up() {
        let r = rk4(|y, d| d[0] = y[0] * y[0], &[1.0], 0.0, 0.5, 10, 1);
        assert!(r.blow_up.is_some());
        assert!(r.samples.len() < 10);
    }
}
