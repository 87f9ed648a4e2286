//! Unconditional ancestral sampling from a trained network; used for prior
//! quality checks rather than estimation.

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::net::{DenoiserNetwork, Real};
use super::schedule::NoiseSchedule;
use crate::Result;

/// Runs the reverse chain from h_T ~ N(0, I) down to h_0, applying the
/// beta_tilde_t-scaled perturbation at every step (it vanishes at t = 1
/// since alpha_bar_0 = 1).
pub fn reverse_sample<F: Real>(
    net: &DenoiserNetwork<F>,
    schedule: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<Array1<f64>> {
    assert_eq!(
        net.arch.t_max, schedule.t_max,
        "network and schedule step counts must match"
    );
    let dim = net.arch.dim();
    let mut h = Array1::from_shape_fn(dim, |_| {
        let e: f64 = StandardNormal.sample(rng);
        e
    });
    for t in (1..=schedule.t_max).rev() {
        let eps_hat = net.predict_vec(&h, t)?;
        let alpha = schedule.alpha(t);
        let coeff = (1.0 - alpha) / (1.0 - schedule.alpha_bar(t)).sqrt();
        let noise_scale = schedule.beta_tilde(t);
        for i in 0..dim {
            let z: f64 = StandardNormal.sample(rng);
            h[i] = (h[i] - coeff * eps_hat[i]) / alpha.sqrt() + noise_scale * z;
        }
    }
    Ok(h)
}
