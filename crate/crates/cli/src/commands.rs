//! Subcommand implementations: dataset generation, training, sweeps, plots.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ndarray::Array1;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use dmce_core::baselines::{lasso_estimate, ls_estimate, LmmseFilter, SampleCovariance};
use dmce_core::channel::{noise_var, ClusterModel};
use dmce_core::dataset::Dataset;
use dmce_core::diffusion::{
    linear_schedule, load_checkpoint, save_checkpoint, train, CheckpointRole, DenoiserNetwork,
    NetworkArch, NoiseSchedule,
};
use dmce_core::estimator::{estimate, mean_nmse_db, nmse, EstimatorConfig};
use dmce_core::measurement::{make_pilots, received_power, MeasurementModel, Observation, Quantizer};
use dmce_core::sure::{make_noisy_dataset, train_sure_dm};
use dmce_core::numerics::median;

use crate::config::{ExperimentConfig, Method};
use crate::report::{write_results, ResultRow};

/// Deterministic RNG stream keyed by the experiment seed and a tag path.
fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut mix = 0x9e37_79b9_7f4a_7c15u64;
    for &t in tags {
        mix = (mix ^ t).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        mix ^= mix >> 31;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(mix);
    rng
}

/// Generates train/val/test datasets with disjoint per-sample RNG streams.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let cluster = ClusterModel::default_clustered();
    let splits: [(&Path, usize, u64); 3] = [
        (&cfg.paths.train_data, cfg.n_train, 0),
        (&cfg.paths.val_data, cfg.n_val, cfg.n_train as u64),
        (
            &cfg.paths.test_data,
            cfg.n_test,
            (cfg.n_train + cfg.n_val) as u64,
        ),
    ];
    for (path, count, offset) in splits {
        let data = Dataset::generate(&cfg.system, &cluster, count, offset);
        data.write(path)?;
        println!(
            "wrote {} ({} samples, {}x{})",
            path.display(),
            count,
            cfg.system.n_rx,
            cfg.system.n_tx
        );
    }
    Ok(())
}

fn write_loss_log(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Trains the DM prior on clean samples and stores checkpoint plus loss log.
pub fn train_dm(cfg: &ExperimentConfig) -> Result<()> {
    let data = Dataset::read(&cfg.paths.train_data)?;
    let schedule = linear_schedule(cfg.t_max)?;
    let arch = NetworkArch::new(
        cfg.s_init,
        cfg.s_max,
        data.n_rx as usize,
        data.n_tx as usize,
        cfg.t_max,
    );
    let mut net = DenoiserNetwork::<f32>::init(arch, &mut stream(cfg.train.seed, &[10]));
    println!(
        "training DM: {} samples, {} epochs, {} parameters",
        data.n_samples(),
        cfg.train.epochs,
        net.param_count()
    );
    let t0 = Instant::now();
    let log = train(&mut net, &data.samples, &schedule, &cfg.train)?;
    println!(
        "trained in {:.1?} (final loss {:.5})",
        t0.elapsed(),
        log.last().copied().unwrap_or(f64::NAN)
    );
    save_checkpoint(&net, CheckpointRole::Dm, &cfg.paths.checkpoint)?;
    write_loss_log(
        &cfg.paths.train_log,
        "epoch,loss",
        log.iter()
            .enumerate()
            .map(|(e, l)| format!("{e},{l:.6}")),
    )?;
    println!("wrote {}", cfg.paths.checkpoint.display());
    Ok(())
}

/// Two-stage SURE-DM training from synthetically noised samples; emits the
/// stage-1 denoiser and stage-2 DM checkpoints.
pub fn train_sure(cfg: &ExperimentConfig) -> Result<()> {
    let clean = Dataset::read(&cfg.paths.train_data)?;
    let schedule = linear_schedule(cfg.t_max)?;
    let noisy = make_noisy_dataset(
        &clean,
        cfg.sure_sigma_w_sq,
        &schedule,
        &mut stream(cfg.train.seed, &[20]),
    );
    println!(
        "SURE-DM: sigma_w^2 = {}, matched t_w = {} (alpha_bar {:.4})",
        cfg.sure_sigma_w_sq, noisy.t_w, noisy.alpha_bar_tw
    );
    let arch = NetworkArch::new(
        cfg.s_init,
        cfg.s_max,
        clean.n_rx as usize,
        clean.n_tx as usize,
        cfg.t_max,
    );
    let t0 = Instant::now();
    let (theta1, theta2, log) =
        train_sure_dm::<f32>(&noisy, &schedule, &arch, &cfg.train, &cfg.sure)?;
    println!("two-stage training took {:.1?}", t0.elapsed());
    save_checkpoint(
        &theta1,
        CheckpointRole::SureDenoiser,
        &cfg.paths.sure_denoiser_checkpoint,
    )?;
    save_checkpoint(&theta2, CheckpointRole::SureDm, &cfg.paths.sure_checkpoint)?;
    write_loss_log(
        &cfg.paths.sure_train_log,
        "stage,epoch,loss",
        log.denoiser_loss
            .iter()
            .enumerate()
            .map(|(e, l)| format!("denoiser,{e},{l:.6}"))
            .chain(
                log.dm_loss
                    .iter()
                    .enumerate()
                    .map(|(e, l)| format!("dm,{e},{l:.6}")),
            ),
    )?;
    println!(
        "wrote {} and {}",
        cfg.paths.sure_denoiser_checkpoint.display(),
        cfg.paths.sure_checkpoint.display()
    );
    Ok(())
}

struct MethodOutcome {
    nmse_db: f64,
    latency_ms: f64,
    n: usize,
}

/// Median latency with the first three calls treated as warm-up.
fn latency_policy(latencies: &[f64]) -> f64 {
    if latencies.len() > 3 {
        median(&latencies[3..])
    } else {
        median(latencies)
    }
}

#[allow(clippy::too_many_arguments)]
fn run_method(
    method: Method,
    observations: &[Observation],
    truths: &[Array1<f64>],
    model: &MeasurementModel,
    net: &DenoiserNetwork<f32>,
    schedule: &NoiseSchedule,
    cfg: &ExperimentConfig,
    cov: Option<&SampleCovariance>,
    lasso_lambda: f64,
    tags: &[u64],
) -> Result<MethodOutcome> {
    let n = observations.len();
    let results: Vec<(f64, f64)> = match method {
        Method::Dm | Method::DmEnhanced => {
            let est_cfg = EstimatorConfig {
                enhanced: matches!(method, Method::DmEnhanced),
                ..cfg.estimator.clone()
            };
            (0..n)
                .into_par_iter()
                .map(|r| {
                    let mut rng = stream(cfg.system.seed, &[tags[0], tags[1], tags[2], 90, r as u64]);
                    let t0 = Instant::now();
                    let h_hat =
                        estimate(&observations[r], model, net, schedule, &est_cfg, &mut rng)
                            .expect("estimate");
                    let ms = t0.elapsed().as_secs_f64() * 1e3;
                    (nmse(&h_hat, &truths[r]).expect("nonzero truth"), ms)
                })
                .collect()
        }
        Method::Ls => (0..n)
            .map(|r| {
                let t0 = Instant::now();
                let h_hat = ls_estimate(&observations[r].y, &model.svd);
                let ms = t0.elapsed().as_secs_f64() * 1e3;
                Ok((nmse(&h_hat, &truths[r])?, ms))
            })
            .collect::<Result<_>>()?,
        Method::Lmmse => {
            let cov = cov.expect("covariance required for lmmse");
            let filter = LmmseFilter::new(&model.a, cov, model.noise_var)?;
            (0..n)
                .map(|r| {
                    let t0 = Instant::now();
                    let h_hat = filter.apply(&observations[r].y);
                    let ms = t0.elapsed().as_secs_f64() * 1e3;
                    Ok((nmse(&h_hat, &truths[r])?, ms))
                })
                .collect::<Result<_>>()?
        }
        Method::Lasso => (0..n)
            .into_par_iter()
            .map(|r| {
                let t0 = Instant::now();
                let h_hat = lasso_estimate(
                    &observations[r].y,
                    &model.a,
                    model.svd.s[0],
                    lasso_lambda,
                    cfg.lasso_iters,
                );
                let ms = t0.elapsed().as_secs_f64() * 1e3;
                (nmse(&h_hat, &truths[r]).expect("nonzero truth"), ms)
            })
            .collect(),
    };
    let ratios: Vec<f64> = results.iter().map(|(r, _)| *r).collect();
    let latencies: Vec<f64> = results.iter().map(|(_, ms)| *ms).collect();
    Ok(MethodOutcome {
        nmse_db: mean_nmse_db(&ratios),
        latency_ms: latency_policy(&latencies),
        n,
    })
}

/// Validation-set lambda search for the LASSO, per (alpha, snr, bits).
fn tune_lasso_lambda(
    val: &Dataset,
    model: &MeasurementModel,
    quantizer: Option<&Quantizer>,
    cfg: &ExperimentConfig,
    tags: &[u64],
) -> f64 {
    let n = val.n_samples().min(20);
    let observations: Vec<(Array1<f64>, Array1<f64>)> = (0..n)
        .map(|r| {
            let truth = val.sample_f64(r);
            let mut rng = stream(cfg.system.seed, &[tags[0], tags[1], tags[2], 91, r as u64]);
            let mut obs = model.observe(&truth, &mut rng);
            if let Some(q) = quantizer {
                obs = obs.quantize(q);
            }
            (obs.y, truth)
        })
        .collect();
    let scales: Vec<f64> = observations
        .iter()
        .map(|(y, _)| {
            model
                .a
                .t()
                .dot(y)
                .iter()
                .map(|v| v.abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let scale = median(&scales);
    let mut best = (f64::INFINITY, 0.05 * scale);
    for factor in [1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0] {
        let lambda = factor * scale;
        let ratios: Vec<f64> = observations
            .iter()
            .map(|(y, truth)| {
                let h_hat = lasso_estimate(y, &model.a, model.svd.s[0], lambda, cfg.lasso_iters);
                nmse(&h_hat, truth).unwrap_or(f64::INFINITY)
            })
            .collect();
        let score = ratios.iter().sum::<f64>() / ratios.len() as f64;
        if score < best.0 {
            best = (score, lambda);
        }
    }
    best.1
}

/// Runs the (snr, alpha, bits) x method grid and writes the results CSV.
pub fn sweep(cfg: &ExperimentConfig) -> Result<()> {
    let (net, _role) = load_checkpoint(&cfg.paths.checkpoint)?;
    let test = Dataset::read(&cfg.paths.test_data)?;
    if (net.arch.n_rx, net.arch.n_tx) != (test.n_rx as usize, test.n_tx as usize) {
        bail!(
            "checkpoint geometry {}x{} does not match test data {}x{}",
            net.arch.n_rx,
            net.arch.n_tx,
            test.n_rx,
            test.n_tx
        );
    }
    if net.arch.t_max != cfg.estimator.t_max {
        bail!(
            "checkpoint was trained for t_max = {} but the estimator is configured for {}",
            net.arch.t_max,
            cfg.estimator.t_max
        );
    }
    let schedule = linear_schedule(cfg.estimator.t_max)?;
    let cov = if cfg.methods.contains(&Method::Lmmse) {
        let train_data = Dataset::read(&cfg.paths.train_data)?;
        Some(SampleCovariance::from_rows(&train_data.samples.view()))
    } else {
        None
    };
    let val = if cfg.methods.contains(&Method::Lasso) {
        Some(Dataset::read(&cfg.paths.val_data)?)
    } else {
        None
    };

    let n_real = cfg.realizations.min(test.n_samples());
    if n_real == 0 {
        bail!("test dataset is empty");
    }
    let truths: Vec<Array1<f64>> = (0..n_real).map(|r| test.sample_f64(r)).collect();
    let n_tx = cfg.system.n_tx;
    let mut rows = Vec::new();

    for (ai, &alpha) in cfg.sweep_alpha.iter().enumerate() {
        let n_pilot = ((alpha * n_tx as f64).round() as usize).max(1);
        let pilot = make_pilots(
            cfg.pilot_kind,
            n_tx,
            n_pilot,
            &mut stream(cfg.system.seed, &[30, ai as u64]),
        )?;
        for (si, &snr_db) in cfg.sweep_snr_db.iter().enumerate() {
            let nv = noise_var(n_tx, snr_db);
            let model = MeasurementModel::build(pilot.clone(), cfg.system.n_rx, nv);
            let raw: Vec<Observation> = (0..n_real)
                .map(|r| {
                    let mut rng =
                        stream(cfg.system.seed, &[40, ai as u64, si as u64, r as u64]);
                    model.observe(&truths[r], &mut rng)
                })
                .collect();
            for (bi, &bits) in cfg.sweep_bits.iter().enumerate() {
                let (observations, quantizer) = if bits == 0 {
                    (raw.clone(), None)
                } else {
                    let p_y = raw.iter().map(|o| received_power(&o.y)).sum::<f64>()
                        / raw.len() as f64;
                    let q = Quantizer::design(bits, p_y)?;
                    let quantized = raw.iter().map(|o| o.quantize(&q)).collect();
                    (quantized, Some(q))
                };
                let tags = [ai as u64, si as u64, bi as u64];
                for &method in &cfg.methods {
                    let lambda = if method == Method::Lasso {
                        tune_lasso_lambda(
                            val.as_ref().expect("validation data loaded"),
                            &model,
                            quantizer.as_ref(),
                            cfg,
                            &tags,
                        )
                    } else {
                        0.0
                    };
                    let outcome = run_method(
                        method,
                        &observations,
                        &truths,
                        &model,
                        &net,
                        &schedule,
                        cfg,
                        cov.as_ref(),
                        lambda,
                        &tags,
                    )?;
                    println!(
                        "alpha {alpha:.3} snr {snr_db:+.1} dB bits {bits} {}: NMSE {:.2} dB, latency {:.2} ms ({} realizations)",
                        method.name(),
                        outcome.nmse_db,
                        outcome.latency_ms,
                        outcome.n
                    );
                    rows.push(ResultRow {
                        method: method.name().to_string(),
                        snr_db,
                        alpha,
                        bits,
                        nmse_db: outcome.nmse_db,
                        latency_ms: outcome.latency_ms,
                        n_realizations: outcome.n,
                    });
                }
            }
        }
    }
    write_results(&cfg.paths.results, &rows)?;
    println!("wrote {}", cfg.paths.results.display());
    Ok(())
}

/// Renders the results CSV into one SVG per (alpha, bits) pair.
pub fn plot(cfg: &ExperimentConfig) -> Result<()> {
    let rows = crate::report::read_results(&cfg.paths.results)?;
    let written = crate::svg::plot_results(&rows, &cfg.out_dir)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
