//! Forward-process noise schedule.

use ndarray::Array1;

use crate::{Error, Result};

/// Per-step noise schedule with cached alpha products.
///
/// Arrays are indexed by `t - 1` for t in `1..=t_max`; use the accessors to
/// stay in the one-based step convention of the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub t_max: usize,
    pub beta: Array1<f64>,
    pub alpha: Array1<f64>,
    pub alpha_bar: Array1<f64>,
}

impl NoiseSchedule {
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    /// Reverse-process posterior variance
    /// beta_tilde_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t,
    /// with alpha_bar_0 = 1 so the t = 1 term vanishes.
    pub fn beta_tilde(&self, t: usize) -> f64 {
        let prev = if t == 1 { 1.0 } else { self.alpha_bar(t - 1) };
        (1.0 - prev) / (1.0 - self.alpha_bar(t)) * self.beta(t)
    }

    /// Index whose alpha_bar is closest to the given target.
    pub fn nearest_alpha_bar(&self, target: f64) -> usize {
        let mut best = 1;
        let mut best_err = f64::INFINITY;
        for t in 1..=self.t_max {
            let err = (self.alpha_bar(t) - target).abs();
            if err < best_err {
                best_err = err;
                best = t;
            }
        }
        best
    }
}

/// Linear beta schedule with endpoints (1e-4, 0.02) * (1000 / t_max).
///
/// The scaling keeps the total injected noise, and in particular
/// alpha_bar_T <= 1e-4, independent of the step count; t_max of 100 and
/// 1000 are the tuned operating points.
pub fn linear_schedule(t_max: usize) -> Result<NoiseSchedule> {
    if t_max < 2 {
        return Err(Error::BadSchedule(t_max));
    }
    let scale = 1000.0 / t_max as f64;
    let beta_start = 1e-4 * scale;
    let beta_end = 0.02 * scale;
    if beta_end >= 1.0 {
        return Err(Error::BadSchedule(t_max));
    }
    let beta = Array1::from_shape_fn(t_max, |i| {
        beta_start + (beta_end - beta_start) * i as f64 / (t_max - 1) as f64
    });
    let alpha = beta.mapv(|b| 1.0 - b);
    let mut alpha_bar = alpha.clone();
    for i in 1..t_max {
        alpha_bar[i] = alpha_bar[i - 1] * alpha[i];
    }
    Ok(NoiseSchedule {
        t_max,
        beta,
        alpha,
        alpha_bar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn thousand_step_schedule_hits_reference_endpoint() {
        let s = linear_schedule(1000).unwrap();
        assert_relative_eq!(s.beta(1), 1e-4, max_relative = 1e-12);
        assert_relative_eq!(s.beta(1000), 0.02, max_relative = 1e-12);
        // direct product computation puts alpha_bar_T near 4.0e-5
        let product: f64 = (1..=1000).map(|t| 1.0 - s.beta(t)).product();
        assert_relative_eq!(s.alpha_bar(1000), product, max_relative = 1e-12);
        assert!((3.6e-5..4.5e-5).contains(&s.alpha_bar(1000)));
    }

    #[test]
    fn terminal_alpha_bar_small_for_supported_lengths() {
        for t_max in [100, 250, 1000, 4000] {
            let s = linear_schedule(t_max).unwrap();
            assert!(s.alpha_bar(t_max) <= 1e-4, "t_max={t_max}");
        }
    }

    #[test]
    fn beta_strictly_increasing_and_products_consistent() {
        let s = linear_schedule(100).unwrap();
        for t in 2..=100 {
            assert!(s.beta(t) > s.beta(t - 1));
            assert_relative_eq!(
                s.alpha_bar(t),
                s.alpha_bar(t - 1) * s.alpha(t),
                max_relative = 1e-15
            );
        }
        for t in 1..=100 {
            assert_eq!(s.alpha(t), 1.0 - s.beta(t));
            assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
        }
        assert_eq!(s.beta_tilde(1), 0.0);
        assert!(s.beta_tilde(2) > 0.0);
    }

    #[test]
    fn rejects_degenerate_lengths() {
        assert!(matches!(linear_schedule(1), Err(Error::BadSchedule(1))));
        assert!(matches!(linear_schedule(10), Err(Error::BadSchedule(10))));
    }

    #[test]
    fn nearest_alpha_bar_matches_scan() {
        let s = linear_schedule(1000).unwrap();
        assert_eq!(s.nearest_alpha_bar(1.0), 1);
        let t = s.nearest_alpha_bar(0.5);
        for u in 1..=1000 {
            assert!((s.alpha_bar(t) - 0.5).abs() <= (s.alpha_bar(u) - 0.5).abs() + 1e-15);
        }
    }
}
