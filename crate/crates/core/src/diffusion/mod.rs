//! Denoising diffusion machinery: schedule, network, training, checkpoints,
//! and unconditional sampling.

pub mod checkpoint;
pub mod net;
pub mod sample;
pub mod schedule;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointRole, CHECKPOINT_MAGIC};
pub use net::{
    image_to_vec, time_embedding, vec_to_image, DenoiserNetwork, NetworkArch, Real,
};
pub use sample::reverse_sample;
pub use schedule::{linear_schedule, NoiseSchedule};
pub use train::{assemble_batch, eval_loss, train, train_step, Adam, TrainConfig};

use ndarray::Array1;

/// Forward-process sample h_t = sqrt(alpha_bar_t) h_0 + sqrt(1 - alpha_bar_t) eps.
pub fn forward_sample(
    h0: &Array1<f64>,
    t: usize,
    eps: &Array1<f64>,
    schedule: &NoiseSchedule,
) -> Array1<f64> {
    let ab = schedule.alpha_bar(t);
    h0 * ab.sqrt() + eps * (1.0 - ab).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn forward_sample_deterministic_branches() {
        let schedule = linear_schedule(100).unwrap();
        let h0 = Array1::from_vec(vec![1.0, -2.0, 0.5]);
        let zero = Array1::zeros(3);
        let t = 40;
        let got = forward_sample(&h0, t, &zero, &schedule);
        let expect = &h0 * schedule.alpha_bar(t).sqrt();
        assert_eq!(got, expect);

        // alpha_bar = 1 leaves the sample untouched
        let mut degenerate = schedule.clone();
        degenerate.alpha_bar[t - 1] = 1.0;
        let eps = Array1::from_vec(vec![3.0, 3.0, 3.0]);
        assert_eq!(forward_sample(&h0, t, &eps, &degenerate), h0);
    }

    #[test]
    fn forward_sample_moments_match_marginal() {
        let schedule = linear_schedule(100).unwrap();
        let t = 20;
        let h0 = Array1::from_vec(vec![0.8, -1.1, 2.0, 1.4]);
        let mut rng = sample_rng(3, 0);
        let draws = 100_000;
        let mut mean = Array1::<f64>::zeros(4);
        let mut second = Array1::<f64>::zeros(4);
        for _ in 0..draws {
            let eps = Array1::from_shape_fn(4, |_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                e
            });
            let ht = forward_sample(&h0, t, &eps, &schedule);
            mean += &ht;
            second += &ht.mapv(|v| v * v);
        }
        mean /= draws as f64;
        second /= draws as f64;
        let ab = schedule.alpha_bar(t);
        for i in 0..4 {
            let expect_mean = ab.sqrt() * h0[i];
            let var = second[i] - mean[i] * mean[i];
            assert!(
                (mean[i] - expect_mean).abs() / expect_mean.abs() < 0.02,
                "mean[{i}]: {} vs {}",
                mean[i],
                expect_mean
            );
            assert!((var - (1.0 - ab)).abs() / (1.0 - ab) < 0.02, "var[{i}]");
        }
    }
}
