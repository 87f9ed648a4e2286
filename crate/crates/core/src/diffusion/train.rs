//! Noise-prediction training: uniform step draws, the epsilon-matching MSE
//! loss, and an adaptive-moment optimizer.

use ndarray::{Array1, Array2, Array3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::{row_to_image_into, DenoiserNetwork, Real};
use super::schedule::NoiseSchedule;
use crate::{Error, Result};

/// Optimization hyperparameters; the defaults mirror the reference training
/// setup (500 epochs, batch 128, learning rate 1e-4).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 128,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

/// Adaptive-moment optimizer over the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    m: Array1<F>,
    v: Array1<F>,
    step: usize,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl<F: Real> Adam<F> {
    pub fn new(n_params: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: Array1::zeros(n_params),
            v: Array1::zeros(n_params),
            step: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    /// Overrides the base learning rate (used by decay schedules).
    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn update(&mut self, params: &mut Array1<F>, grad: &Array1<F>) {
        self.step += 1;
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let one_m_b1 = F::from_f64(1.0 - self.beta1);
        let one_m_b2 = F::from_f64(1.0 - self.beta2);
        let correction =
            self.lr * (1.0 - self.beta2.powi(self.step as i32)).sqrt()
                / (1.0 - self.beta1.powi(self.step as i32));
        let lr_t = F::from_f64(correction);
        let eps = F::from_f64(self.eps);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + one_m_b1 * g;
            self.v[i] = b2 * self.v[i] + one_m_b2 * g * g;
            params[i] = params[i] - lr_t * self.m[i] / (self.v[i].sqrt() + eps);
        }
    }
}

/// Gathers dataset rows into a `[b, 2, s]` image batch.
pub fn assemble_batch<F: Real>(
    data: &Array2<f32>,
    indices: &[usize],
    n_rx: usize,
    n_tx: usize,
) -> Array3<F> {
    let mut batch = Array3::<F>::zeros((indices.len(), 2, n_rx * n_tx));
    for (slot, &row) in indices.iter().enumerate() {
        row_to_image_into(data.row(row), n_rx, n_tx, batch.index_axis_mut(ndarray::Axis(0), slot));
    }
    batch
}

/// One gradient step on a batch of clean samples. Draws t ~ U{1..T} and
/// eps ~ N(0, I) per sample, forms h_t, and descends the mean squared
/// noise-prediction error (normalized per coordinate).
pub fn train_step<F: Real>(
    net: &mut DenoiserNetwork<F>,
    opt: &mut Adam<F>,
    h0: &Array3<F>,
    schedule: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<f64> {
    let (b, _, s) = h0.dim();
    let mut ts = vec![0usize; b];
    let mut h_t = Array3::<F>::zeros(h0.dim());
    let mut eps = Array3::<F>::zeros(h0.dim());
    for bi in 0..b {
        let t = rng.random_range(1..=schedule.t_max);
        ts[bi] = t;
        let sqrt_ab = F::from_f64(schedule.alpha_bar(t).sqrt());
        let sqrt_1m = F::from_f64((1.0 - schedule.alpha_bar(t)).sqrt());
        for c in 0..2 {
            for si in 0..s {
                let e = F::standard_normal(rng);
                eps[[bi, c, si]] = e;
                h_t[[bi, c, si]] = sqrt_ab * h0[[bi, c, si]] + sqrt_1m * e;
            }
        }
    }

    let (pred, cache) = net.forward_cached(&h_t, &ts)?;
    let resid = &pred - &eps;
    let denom = (b * 2 * s) as f64;
    let loss = resid.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / denom;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            context: "train step".into(),
        });
    }
    let scale = F::from_f64(2.0 / denom);
    let d_out = resid.mapv(|v| v * scale);
    let grad = net.backward(&cache, &d_out);

    let mut params = net.params_flat();
    opt.update(&mut params, &grad);
    net.set_params_flat(&params);
    Ok(loss)
}

/// Full training loop over a row-per-sample dataset; returns the per-epoch
/// mean loss trajectory. Epoch order is shuffled from `cfg.seed`, so runs
/// are bit-reproducible.
pub fn train<F: Real>(
    net: &mut DenoiserNetwork<F>,
    data: &Array2<f32>,
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    assert!(data.nrows() > 0, "dataset must be nonempty");
    assert_eq!(data.ncols(), net.arch.dim(), "sample length vs network");
    let n_rx = net.arch.n_rx;
    let n_tx = net.arch.n_tx;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(net.param_count(), cfg);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = assemble_batch::<F>(data, chunk, n_rx, n_tx);
            let loss =
                train_step(net, &mut opt, &batch, schedule, &mut rng).map_err(|e| match e {
                    Error::NonFiniteLoss { .. } => Error::NonFiniteLoss {
                        context: format!("epoch {epoch}"),
                    },
                    other => other,
                })?;
            acc += loss;
            batches += 1;
        }
        log.push(acc / batches as f64);
    }
    Ok(log)
}

/// Deterministic noise-prediction loss of a network on a sample set, with
/// the (t, eps) draws fixed by `seed`. Used for checkpoint verification.
pub fn eval_loss<F: Real>(
    net: &DenoiserNetwork<F>,
    data: &Array2<f32>,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<f64> {
    assert!(data.nrows() > 0, "dataset must be nonempty");
    let n_rx = net.arch.n_rx;
    let n_tx = net.arch.n_tx;
    let indices: Vec<usize> = (0..data.nrows()).collect();
    let h0 = assemble_batch::<F>(data, &indices, n_rx, n_tx);
    let (b, _, s) = h0.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ts = vec![0usize; b];
    let mut h_t = Array3::<F>::zeros(h0.dim());
    let mut eps = Array3::<F>::zeros(h0.dim());
    for bi in 0..b {
        let t = rng.random_range(1..=schedule.t_max);
        ts[bi] = t;
        let sqrt_ab = F::from_f64(schedule.alpha_bar(t).sqrt());
        let sqrt_1m = F::from_f64((1.0 - schedule.alpha_bar(t)).sqrt());
        for c in 0..2 {
            for si in 0..s {
                let e = F::standard_normal(&mut rng);
                eps[[bi, c, si]] = e;
                h_t[[bi, c, si]] = sqrt_ab * h0[[bi, c, si]] + sqrt_1m * e;
            }
        }
    }
    let pred = net.forward(&h_t, &ts)?;
    let denom = (b * 2 * s) as f64;
    let loss = (&pred - &eps).iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / denom;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            context: "eval".into(),
        });
    }
    Ok(loss)
}
