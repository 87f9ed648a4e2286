//! Grid over (s, enhanced) for the 1-bit operating point.

use dmce_core::channel::{noise_var, sample_rng, ClusterModel, SystemConfig};
use dmce_core::dataset::Dataset;
use dmce_core::diffusion::{linear_schedule, load_checkpoint};
use dmce_core::estimator::{estimate, mean_nmse_db, nmse, EstimatorConfig};
use dmce_core::measurement::{
    make_pilots, received_power, MeasurementModel, Observation, ObservationKind, PilotKind,
    Quantizer,
};

fn main() {
    let sys = SystemConfig::new(16, 4, 16, 20.0, 42).unwrap();
    let cluster = ClusterModel::default_clustered();
    let n_test = 40;
    let test_set = Dataset::generate(&sys, &cluster, n_test, 50_000);
    let schedule = linear_schedule(100).unwrap();
    let (net, _) = load_checkpoint(std::path::Path::new("/tmp/calib_model.ckpt")).unwrap();

    let pilot = make_pilots(PilotKind::ZadoffChu, 16, 16, &mut sample_rng(9, 0)).unwrap();
    let nv10 = noise_var(16, 10.0);
    let model = MeasurementModel::build(pilot, 4, nv10);

    let truths: Vec<_> = (0..n_test).map(|r| test_set.sample_f64(r)).collect();
    let raw: Vec<Observation> = (0..n_test)
        .map(|r| model.observe(&truths[r], &mut sample_rng(13, r as u64)))
        .collect();
    let p_y = raw.iter().map(|o| received_power(&o.y)).sum::<f64>() / raw.len() as f64;
    let q = Quantizer::design(1, p_y).unwrap();
    let quantized: Vec<Observation> = raw.iter().map(|o| o.quantize(&q)).collect();
    let as_full: Vec<Observation> = quantized
        .iter()
        .map(|o| Observation {
            y: o.y.clone(),
            kind: ObservationKind::Full,
            noise_var: o.noise_var,
        })
        .collect();

    for enhanced in [false, true] {
        for s in [0.3, 0.5, 1.0, 2.0, 3.0] {
            let cfg = EstimatorConfig {
                grad_scale: s,
                enhanced,
                ..EstimatorConfig::default()
            };
            let run = |obs: &[Observation]| {
                let ratios: Vec<f64> = obs
                    .iter()
                    .zip(&truths)
                    .enumerate()
                    .map(|(r, (o, t))| {
                        let mut rng = sample_rng(14, r as u64);
                        nmse(&estimate(o, &model, &net, &schedule, &cfg, &mut rng).unwrap(), t)
                            .unwrap()
                    })
                    .collect();
                mean_nmse_db(&ratios)
            };
            println!(
                "enhanced={enhanced} s={s}: revised {:.2} dB, full-res-score {:.2} dB",
                run(&quantized),
                run(&as_full)
            );
        }
    }
}
