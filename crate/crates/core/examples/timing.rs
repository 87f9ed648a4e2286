//! Rough wall-clock probe for the training and estimation hot paths.

use std::time::Instant;

use dmce_core::baselines::{lasso_estimate, ls_estimate};
use dmce_core::channel::{sample_rng, ClusterModel, SystemConfig};
use dmce_core::dataset::Dataset;
use dmce_core::diffusion::{linear_schedule, train, DenoiserNetwork, NetworkArch, TrainConfig};
use dmce_core::estimator::{estimate, likelihood_score_direct, likelihood_score_svd, EstimatorConfig};
use dmce_core::measurement::{make_pilots, MeasurementModel, PilotKind};

fn main() {
    // desk-scale training epoch
    let cfg = SystemConfig::new(16, 4, 16, 20.0, 1).unwrap();
    let cluster = ClusterModel::default_clustered();
    let t0 = Instant::now();
    let data = Dataset::generate(&cfg, &cluster, 1500, 0);
    println!("generate 1500 desk samples: {:?}", t0.elapsed());

    let schedule = linear_schedule(100).unwrap();
    let arch = NetworkArch::new(64, 64, 4, 16, 100);
    println!("desk net params: {}", arch.param_count());
    let mut net = DenoiserNetwork::<f32>::init(arch, &mut sample_rng(2, 0));
    let train_cfg = TrainConfig {
        epochs: 3,
        batch_size: 128,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let log = train(&mut net, &data.samples, &schedule, &train_cfg).unwrap();
    println!(
        "3 desk epochs (D=1500): {:?} ({:?}/epoch), losses {:?}",
        t0.elapsed(),
        t0.elapsed() / 3,
        log
    );

    // desk estimate()
    let pilot = make_pilots(PilotKind::QpskRandom, 16, 16, &mut sample_rng(3, 0)).unwrap();
    let model = MeasurementModel::build(pilot, 4, cfg.noise_var());
    let h = data.sample_f64(0);
    let obs = model.observe(&h, &mut sample_rng(4, 0));
    let est_cfg = EstimatorConfig::default();
    let t0 = Instant::now();
    let reps = 5;
    for r in 0..reps {
        let _ = estimate(&obs, &model, &net, &schedule, &est_cfg, &mut sample_rng(5, r)).unwrap();
    }
    println!("desk estimate(): {:?}/call", t0.elapsed() / reps as u32);

    // paper-profile estimate(): 64 tx, 16 rx, alpha = 1
    let paper = SystemConfig::new(64, 16, 64, 20.0, 1).unwrap();
    let t0 = Instant::now();
    let pilot = make_pilots(PilotKind::ZadoffChu, 64, 64, &mut sample_rng(6, 0)).unwrap();
    let model = MeasurementModel::build(pilot, 16, paper.noise_var());
    println!(
        "paper-profile model build (M=N=2048, structured SVD): {:?}",
        t0.elapsed()
    );
    let arch = NetworkArch::new(64, 64, 16, 64, 100);
    let net = DenoiserNetwork::<f32>::init(arch, &mut sample_rng(7, 0));
    let sample = dmce_core::channel::generate_channel(&paper, &cluster, &mut sample_rng(8, 0));
    let obs = model.observe(&sample.real_vec, &mut sample_rng(9, 0));
    let t0 = Instant::now();
    for r in 0..3 {
        let _ = estimate(&obs, &model, &net, &schedule, &est_cfg, &mut sample_rng(10, r)).unwrap();
    }
    println!("paper estimate(): {:?}/call", t0.elapsed() / 3);

    // SVD vs direct likelihood paths at M = N = 2048
    let h = sample.real_vec.clone();
    let _ = model.gram(); // warm the cache
    let t0 = Instant::now();
    for t in [30usize, 60, 90] {
        let _ = likelihood_score_svd(&obs.y, &model.svd, &h, t, model.noise_var, &schedule);
    }
    let svd_time = t0.elapsed() / 3;
    let t0 = Instant::now();
    let _ =
        likelihood_score_direct(&obs.y, &model.a, model.gram(), &h, 50, model.noise_var, &schedule)
            .unwrap();
    let direct_time = t0.elapsed();
    println!("likelihood svd path: {svd_time:?}/call, direct path: {direct_time:?}/call");

    // classical baselines at desk scale
    let pilot = make_pilots(PilotKind::QpskRandom, 16, 16, &mut sample_rng(11, 0)).unwrap();
    let model = MeasurementModel::build(pilot, 4, cfg.noise_var());
    let h = data.sample_f64(1);
    let obs = model.observe(&h, &mut sample_rng(12, 0));
    let t0 = Instant::now();
    for _ in 0..100 {
        let _ = ls_estimate(&obs.y, &model.svd);
    }
    println!("desk ls: {:?}/call", t0.elapsed() / 100);
    let t0 = Instant::now();
    for _ in 0..10 {
        let _ = lasso_estimate(&obs.y, &model.a, model.svd.s[0], 0.05, 300);
    }
    println!("desk lasso(300 iters): {:?}/call", t0.elapsed() / 10);
}
