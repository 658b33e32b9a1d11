//! Fixed-step explicit integrators over flat state vectors.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[serde(alias = "explicit_euler")]
    Euler,
    #[default]
    Rk4,
}

impl Scheme {
    pub fn order(self) -> u32 {
        match self {
            Self::Euler => 1,
            Self::Rk4 => 4,
        }
    }

    /// One step of size `dt` from `(t, y)` for `y' = f(t, y)`.
    pub fn step<F>(self, t: f64, y: &[f64], dt: f64, mut f: F) -> Result<Vec<f64>>
    where
        F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    {
        match self {
            Self::Euler => {
                let k = f(t, y)?;
                Ok(axpy(y, dt, &k))
            }
            Self::Rk4 => {
                let k1 = f(t, y)?;
                let k2 = f(t + 0.5 * dt, &axpy(y, 0.5 * dt, &k1))?;
                let k3 = f(t + 0.5 * dt, &axpy(y, 0.5 * dt, &k2))?;
                let k4 = f(t + dt, &axpy(y, dt, &k3))?;
                Ok(y
                    .iter()
                    .enumerate()
                    .map(|(i, yi)| yi + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect())
            }
        }
    }
}

fn axpy(y: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(yi, ki)| yi + a * ki).collect()
}

/// Steps needed to reach `t_end` with step `dt`, counting a final partial
/// step unless `dt` divides `t_end` up to round-off.
pub fn step_count(t_end: f64, dt: f64) -> usize {
    let ratio = t_end / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Start and length of step `k` out of `steps`; the last step ends exactly
/// at `t_end`.
pub fn step_span(t_end: f64, dt: f64, k: usize, steps: usize) -> (f64, f64) {
    let t = k as f64 * dt;
    let end = if k + 1 == steps { t_end } else { (k + 1) as f64 * dt };
    (t, end - t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay_error(scheme: Scheme, dt: f64) -> f64 {
        let steps = (1.0 / dt).round() as usize;
        let mut y = vec![1.0];
        for i in 0..steps {
            y = scheme
                .step(i as f64 * dt, &y, dt, |_, y| Ok(vec![-y[0]]))
                .unwrap();
        }
        (y[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn observed_orders() {
        for scheme in [Scheme::Euler, Scheme::Rk4] {
            let ratio = decay_error(scheme, 0.02) / decay_error(scheme, 0.01);
            let order = ratio.log2();
            assert!((order - scheme.order() as f64).abs() < 0.1, "{scheme:?}: {order}");
        }
    }

    #[test]
    fn partial_last_step_lands_on_t_end() {
        assert_eq!(step_count(2.0, 0.5), 4);
        assert_eq!(step_count(1.0, 0.1), 10);
        assert_eq!(step_count(2.0, 0.064), 32);
        let (t, h) = step_span(2.0, 0.064, 31, 32);
        assert!((t + h - 2.0).abs() < 1e-15 && h > 0.0 && h < 0.064);
    }
}
