//! Training from noisy channel realizations: a stage-1 MMSE denoiser fit
//! with Stein's unbiased risk estimate, then a stage-2 DM trained on the
//! denoised samples.
//!
//! Noisy observations h_tilde = h + w are rescaled to
//! h_bar = sqrt(alpha_bar_tw) h_tilde with alpha_bar_tw = 1 / (1 + sigma_w^2),
//! which places them exactly on the forward-process marginal at the matched
//! step t_w. The SURE objective is
//! ||f(h_bar) - h_tilde||^2 + 2 sigma_w^2 div_{h_tilde} f, with the
//! divergence estimated by a single Monte Carlo probe; the probe is taken
//! in h_bar coordinates, so the chain rule contributes a
//! sqrt(alpha_bar_tw) factor that keeps the estimate unbiased for the MSE
//! against the true channel.

use ndarray::{Array1, Array2, Array3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::diffusion::{
    assemble_batch, train, DenoiserNetwork, NetworkArch, NoiseSchedule, Real, TrainConfig,
};
use crate::{Error, Result};

/// Normalized noisy sample set with its matched diffusion level.
#[derive(Debug, Clone)]
pub struct NoisyDataset {
    /// Row-per-sample h_bar vectors.
    pub samples: Array2<f32>,
    pub sigma_w_sq: f64,
    /// alpha_bar_tw = 1 / (1 + sigma_w^2).
    pub alpha_bar_tw: f64,
    /// Schedule index with the closest alpha_bar.
    pub t_w: usize,
    pub n_rx: u32,
    pub n_tx: u32,
}

/// Stage lengths and the Monte Carlo divergence probe settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SureConfig {
    pub mc_epsilon: f64,
    /// Divergence probes per sample per step during stage-1 training.
    /// A single probe leaves the parameter updates dominated by the
    /// Hutchinson variance at small dataset sizes; a handful restores a
    /// usable drift-to-noise ratio.
    pub mc_probes: usize,
    /// Stage-1 step size for the momentum-SGD fit of the denoiser.
    pub denoiser_lr: f64,
    pub denoiser_epochs: usize,
    pub dm_epochs: usize,
}

impl Default for SureConfig {
    fn default() -> Self {
        Self {
            mc_epsilon: 1e-5,
            mc_probes: 8,
            denoiser_lr: 2e-4,
            denoiser_epochs: 100,
            dm_epochs: 500,
        }
    }
}

/// Synthesizes h_tilde = h + w, rescales to h_bar, and matches t_w against
/// the schedule.
pub fn make_noisy_dataset(
    clean: &Dataset,
    sigma_w_sq: f64,
    schedule: &NoiseSchedule,
    rng: &mut impl Rng,
) -> NoisyDataset {
    assert!(sigma_w_sq >= 0.0);
    let alpha_bar_tw = 1.0 / (1.0 + sigma_w_sq);
    let scale = alpha_bar_tw.sqrt();
    let sigma = sigma_w_sq.sqrt();
    let mut samples = clean.samples.clone();
    for v in samples.iter_mut() {
        let w: f64 = StandardNormal.sample(rng);
        *v = ((*v as f64 + sigma * w) * scale) as f32;
    }
    NoisyDataset {
        samples,
        sigma_w_sq,
        alpha_bar_tw,
        t_w: schedule.nearest_alpha_bar(alpha_bar_tw),
        n_rx: clean.n_rx,
        n_tx: clean.n_tx,
    }
}

/// Tweedie-form MMSE denoiser:
/// f(h_bar) = (h_bar - sqrt(1 - alpha_bar_tw) eps_theta1(h_bar, t_w))
/// / sqrt(alpha_bar_tw).
///
/// `alpha_bar_tw` is the exact 1 / (1 + sigma_w^2) of the noise model; the
/// schedule index `t_w` only selects the network's time conditioning.
pub fn tweedie_denoiser<F: Real>(
    net: &DenoiserNetwork<F>,
    h_bar: &Array1<f64>,
    t_w: usize,
    alpha_bar_tw: f64,
) -> Result<Array1<f64>> {
    let eps_hat = net.predict_vec(h_bar, t_w)?;
    Ok((h_bar - &(eps_hat * (1.0 - alpha_bar_tw).sqrt())) / alpha_bar_tw.sqrt())
}

/// Single-probe Monte Carlo divergence estimate
/// v^T (f(x + eps v) - f(x)) / eps, with v ~ N(0, I) drawn fresh per call.
pub fn mc_divergence(
    f: impl Fn(&Array1<f64>) -> Array1<f64>,
    x: &Array1<f64>,
    epsilon: f64,
    rng: &mut impl Rng,
) -> f64 {
    assert!(epsilon > 0.0);
    let v = Array1::from_shape_fn(x.len(), |_| {
        let e: f64 = StandardNormal.sample(rng);
        e
    });
    let shifted = x + &(&v * epsilon);
    let delta = f(&shifted) - f(x);
    v.dot(&delta) / epsilon
}

/// SURE objective for one normalized sample under a generic denoiser:
/// ||f(h_bar) - h_bar / sqrt(ab)||^2
/// + 2 sigma_w^2 sqrt(ab) * (h_bar-space divergence probe).
pub fn sure_objective(
    f: impl Fn(&Array1<f64>) -> Array1<f64>,
    h_bar: &Array1<f64>,
    sigma_w_sq: f64,
    alpha_bar_tw: f64,
    mc_epsilon: f64,
    rng: &mut impl Rng,
) -> f64 {
    let h_tilde = h_bar / alpha_bar_tw.sqrt();
    let resid = &f(h_bar) - &h_tilde;
    let div = mc_divergence(&f, h_bar, mc_epsilon, rng);
    resid.dot(&resid) + 2.0 * sigma_w_sq * alpha_bar_tw.sqrt() * div
}

/// Batch-mean SURE loss of the Tweedie denoiser built from `net`.
pub fn sure_loss<F: Real>(
    net: &DenoiserNetwork<F>,
    batch: &Array2<f32>,
    noisy: &NoisyDataset,
    cfg: &SureConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    assert!(batch.nrows() > 0, "batch must be nonempty");
    let mut acc = 0.0;
    for row in batch.rows() {
        let h_bar = row.mapv(|v| v as f64);
        let f = |x: &Array1<f64>| {
            tweedie_denoiser(net, x, noisy.t_w, noisy.alpha_bar_tw).expect("shape fixed by caller")
        };
        let h_tilde = &h_bar / noisy.alpha_bar_tw.sqrt();
        let resid = &f(&h_bar) - &h_tilde;
        let mut div = 0.0;
        for _ in 0..cfg.mc_probes.max(1) {
            div += mc_divergence(&f, &h_bar, cfg.mc_epsilon, rng);
        }
        div /= cfg.mc_probes.max(1) as f64;
        acc += resid.dot(&resid) + 2.0 * noisy.sigma_w_sq * noisy.alpha_bar_tw.sqrt() * div;
    }
    let loss = acc / batch.nrows() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            context: "sure loss".into(),
        });
    }
    Ok(loss)
}

/// Loss and parameter gradient of the batch-mean SURE objective with
/// explicit probes (`[k, b, 2, s]`, averaged over k), differentiating
/// through every denoiser evaluation.
fn sure_loss_and_grad<F: Real>(
    net: &DenoiserNetwork<F>,
    h_bar: &Array3<F>,
    probes: &ndarray::Array4<F>,
    noisy: &NoisyDataset,
    cfg: &SureConfig,
) -> Result<(f64, Array1<F>)> {
    let (b, _, s) = h_bar.dim();
    let k_probes = probes.dim().0;
    assert!(k_probes >= 1);
    let ab = noisy.alpha_bar_tw;
    let sqrt_ab = ab.sqrt();
    let coeff = (1.0 - ab).sqrt() / sqrt_ab; // f = h_bar/sqrt(ab) - coeff * eps_theta
    let eps = cfg.mc_epsilon;
    let ts = vec![noisy.t_w; b];

    let (out_base, cache_base) = net.forward_cached(h_bar, &ts)?;

    // residual term and its cotangent
    let mut loss = 0.0;
    let mut d_base = Array3::<F>::zeros(out_base.dim());
    let div_weight = 2.0 * noisy.sigma_w_sq * sqrt_ab / eps;
    for bi in 0..b {
        for c in 0..2 {
            for si in 0..s {
                let x = h_bar[[bi, c, si]].as_f64();
                let f_base = x / sqrt_ab - coeff * out_base[[bi, c, si]].as_f64();
                let r = f_base - x / sqrt_ab;
                loss += r * r / b as f64;
                d_base[[bi, c, si]] = F::from_f64(-coeff * 2.0 * r / b as f64);
            }
        }
    }

    // divergence term, averaged over the probe set
    let mut grad_shift_total = Array1::<F>::zeros(net.param_count());
    for k in 0..k_probes {
        let probe = probes.index_axis(ndarray::Axis(0), k);
        let shifted = h_bar + &probe.mapv(|v| v * F::from_f64(eps));
        let (out_shift, cache_shift) = net.forward_cached(&shifted, &ts)?;
        let mut d_shift = Array3::<F>::zeros(out_shift.dim());
        let weight = div_weight / (k_probes as f64 * b as f64);
        for bi in 0..b {
            // identity part of f carries a theta-free eps ||v||^2 / sqrt(ab)
            // contribution; substituting its exact mean eps N / sqrt(ab)
            // removes most of the probe variance from the loss readout
            // without touching the gradient
            let mut sample_div = eps * (2 * s) as f64 / sqrt_ab;
            for c in 0..2 {
                for si in 0..s {
                    let out_b = out_base[[bi, c, si]].as_f64();
                    let out_s = out_shift[[bi, c, si]].as_f64();
                    let v = probe[[bi, c, si]].as_f64();
                    sample_div -= coeff * v * (out_s - out_b);
                    d_shift[[bi, c, si]] = F::from_f64(-coeff * weight * v);
                    d_base[[bi, c, si]] =
                        d_base[[bi, c, si]] + F::from_f64(coeff * weight * v);
                }
            }
            loss += div_weight * sample_div / (k_probes as f64 * b as f64);
        }
        grad_shift_total = grad_shift_total + net.backward(&cache_shift, &d_shift);
    }

    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            context: "sure loss".into(),
        });
    }

    let grad = net.backward(&cache_base, &d_base) + grad_shift_total;
    Ok((loss, grad))
}

/// Per-stage training curves of [`train_sure_dm`].
#[derive(Debug, Clone, Default)]
pub struct SureTrainLog {
    pub denoiser_loss: Vec<f64>,
    pub dm_loss: Vec<f64>,
}

/// Two-stage pipeline: trains theta_1 with the SURE loss at the matched
/// level t_w, freezes it, denoises every sample, and trains theta_2 with
/// the standard noise-prediction loss on the denoised set.
pub fn train_sure_dm<F: Real>(
    noisy: &NoisyDataset,
    schedule: &NoiseSchedule,
    arch: &NetworkArch,
    train_cfg: &TrainConfig,
    sure_cfg: &SureConfig,
) -> Result<(DenoiserNetwork<F>, DenoiserNetwork<F>, SureTrainLog)> {
    assert!(noisy.samples.nrows() > 0, "noisy dataset must be nonempty");
    let n_rx = arch.n_rx;
    let n_tx = arch.n_tx;
    assert_eq!(noisy.samples.ncols(), arch.dim(), "sample length vs network");

    let mut log = SureTrainLog::default();

    // stage 1: SURE-trained MMSE denoiser, fit by momentum SGD with
    // plateau-triggered halving. Per-coordinate adaptive steps diffuse
    // under the Hutchinson probe noise, so the optimizer here is plain
    // momentum on the clipped gradient, restoring the best iterate
    // whenever an epoch regresses.
    let mut init_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut theta1 = DenoiserNetwork::<F>::init(arch.clone(), &mut init_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..noisy.samples.nrows()).collect();
    let mut momentum = Array1::<F>::zeros(theta1.param_count());
    let mut lr_cap = sure_cfg.denoiser_lr;
    let mut best_loss = f64::INFINITY;
    let mut best_params = theta1.params_flat();
    for epoch in 0..sure_cfg.denoiser_epochs {
        // linear decay toward zero so the iterate settles inside the basin
        // instead of diffusing around it
        let lr = lr_cap * (1.0 - epoch as f64 / sure_cfg.denoiser_epochs as f64);
        order.shuffle(&mut rng);
        let mut acc = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(train_cfg.batch_size) {
            let batch = assemble_batch::<F>(&noisy.samples, chunk, n_rx, n_tx);
            let (bb, bc, bs) = batch.dim();
            let probes = ndarray::Array4::from_shape_fn((sure_cfg.mc_probes, bb, bc, bs), |_| {
                F::standard_normal(&mut rng)
            });
            let (loss, grad) =
                sure_loss_and_grad(&theta1, &batch, &probes, noisy, sure_cfg).map_err(|e| {
                    match e {
                        Error::NonFiniteLoss { .. } => Error::NonFiniteLoss {
                            context: format!("sure stage 1, epoch {epoch}"),
                        },
                        other => other,
                    }
                })?;
            let norm = grad.dot(&grad).as_f64().sqrt();
            let scale = if norm > 100.0 { 100.0 / norm } else { 1.0 };
            let beta = F::from_f64(0.9);
            let gain = F::from_f64(scale);
            ndarray::Zip::from(&mut momentum)
                .and(&grad)
                .for_each(|m, &g| *m = beta * *m + gain * g);
            let mut params = theta1.params_flat();
            params.scaled_add(F::from_f64(-lr), &momentum);
            theta1.set_params_flat(&params);
            acc += loss;
            batches += 1;
        }
        let epoch_loss = acc / batches as f64;
        log.denoiser_loss.push(epoch_loss);
        if epoch_loss < best_loss {
            best_loss = epoch_loss;
            best_params = theta1.params_flat();
        } else if epoch_loss > best_loss + 2e-3 * best_loss.abs() {
            theta1.set_params_flat(&best_params);
            momentum.fill(F::from_f64(0.0));
            lr_cap *= 0.5;
        }
    }
    theta1.set_params_flat(&best_params);

    // stage 2: freeze theta_1, denoise the whole set, train the DM on it
    let mut denoised = Array2::<f32>::zeros(noisy.samples.dim());
    for (i, row) in noisy.samples.rows().into_iter().enumerate() {
        let h_bar = row.mapv(|v| v as f64);
        let clean = tweedie_denoiser(&theta1, &h_bar, noisy.t_w, noisy.alpha_bar_tw)?;
        for (dst, src) in denoised.row_mut(i).iter_mut().zip(clean.iter()) {
            *dst = *src as f32;
        }
    }

    let mut theta2_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed.wrapping_add(2));
    let mut theta2 = DenoiserNetwork::<F>::init(arch.clone(), &mut theta2_rng);
    let dm_cfg = TrainConfig {
        epochs: sure_cfg.dm_epochs,
        seed: train_cfg.seed.wrapping_add(3),
        ..train_cfg.clone()
    };
    log.dm_loss = train(&mut theta2, &denoised, schedule, &dm_cfg)?;

    Ok((theta1, theta2, log))
}
