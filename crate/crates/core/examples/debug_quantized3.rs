//! 1-bit chain with an oracle prior: isolates the likelihood machinery
//! from the trained prior's quality.

use dmce_core::channel::{noise_var, sample_rng, ClusterModel, SystemConfig};
use dmce_core::dataset::Dataset;
use dmce_core::diffusion::linear_schedule;
use dmce_core::estimator::{estimate, mean_nmse_db, nmse, EstimatorConfig, NoisePredictor};
use dmce_core::measurement::{
    make_pilots, received_power, MeasurementModel, Observation, ObservationKind, PilotKind,
    Quantizer,
};
use dmce_core::{NoiseSchedule, Result};
use ndarray::Array1;

/// Predicts the exact noise relative to a known clean target.
struct OraclePrior {
    truth: Array1<f64>,
    schedule: NoiseSchedule,
}

impl NoisePredictor for OraclePrior {
    fn predict(&self, h_t: &Array1<f64>, t: usize) -> Result<Array1<f64>> {
        let ab = self.schedule.alpha_bar(t);
        Ok((h_t - &(&self.truth * ab.sqrt())) / (1.0 - ab).sqrt())
    }
}

fn main() {
    let sys = SystemConfig::new(16, 4, 16, 20.0, 42).unwrap();
    let cluster = ClusterModel::default_clustered();
    let n_test = 20;
    let test_set = Dataset::generate(&sys, &cluster, n_test, 50_000);
    let schedule = linear_schedule(100).unwrap();

    let pilot = make_pilots(PilotKind::QpskRandom, 16, 16, &mut sample_rng(9, 0)).unwrap();
    let nv10 = noise_var(16, 10.0);
    let model = MeasurementModel::build(pilot, 4, nv10);

    let truths: Vec<_> = (0..n_test).map(|r| test_set.sample_f64(r)).collect();
    let raw: Vec<Observation> = (0..n_test)
        .map(|r| model.observe(&truths[r], &mut sample_rng(13, r as u64)))
        .collect();
    let p_y = raw.iter().map(|o| received_power(&o.y)).sum::<f64>() / raw.len() as f64;
    let q = Quantizer::design(1, p_y).unwrap();

    for s in [0.5, 1.0, 3.0] {
        let cfg = EstimatorConfig {
            grad_scale: s,
            ..EstimatorConfig::default()
        };
        let mut revised = Vec::new();
        let mut linear = Vec::new();
        for r in 0..n_test {
            let oracle = OraclePrior {
                truth: truths[r].clone(),
                schedule: schedule.clone(),
            };
            let quantized = raw[r].quantize(&q);
            let as_full = Observation {
                y: quantized.y.clone(),
                kind: ObservationKind::Full,
                noise_var: quantized.noise_var,
            };
            let mut rng = sample_rng(21, r as u64);
            let h1 = estimate(&quantized, &model, &oracle, &schedule, &cfg, &mut rng).unwrap();
            revised.push(nmse(&h1, &truths[r]).unwrap());
            let mut rng = sample_rng(21, r as u64);
            let h2 = estimate(&as_full, &model, &oracle, &schedule, &cfg, &mut rng).unwrap();
            linear.push(nmse(&h2, &truths[r]).unwrap());
        }
        println!(
            "oracle prior s={s}: revised {:.2} dB, full-res-score {:.2} dB",
            mean_nmse_db(&revised),
            mean_nmse_db(&linear)
        );
    }
}
