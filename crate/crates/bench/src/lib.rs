//! Shared fixtures for the criterion benchmarks.

use dmce_core::channel::{generate_channel, sample_rng, ClusterModel, SystemConfig};
use dmce_core::diffusion::{linear_schedule, DenoiserNetwork, NetworkArch, NoiseSchedule};
use dmce_core::measurement::{make_pilots, MeasurementModel, Observation, PilotKind};
use ndarray::Array1;

pub struct Fixture {
    pub model: MeasurementModel,
    pub net: DenoiserNetwork<f32>,
    pub schedule: NoiseSchedule,
    pub observation: Observation,
    pub truth: Array1<f64>,
}

/// Measurement model, trained-shape network, and one observation at the
/// given antenna geometry with full pilot density.
pub fn fixture(n_tx: usize, n_rx: usize, t_max: usize) -> Fixture {
    let cfg = SystemConfig::new(n_tx, n_rx, n_tx, 20.0, 1).unwrap();
    let cluster = ClusterModel::default_clustered();
    let pilot = make_pilots(PilotKind::ZadoffChu, n_tx, n_tx, &mut sample_rng(1, 0)).unwrap();
    let model = MeasurementModel::build(pilot, n_rx, cfg.noise_var());
    let schedule = linear_schedule(t_max).unwrap();
    let arch = NetworkArch::new(64, 64, n_rx, n_tx, t_max);
    let net = DenoiserNetwork::<f32>::init(arch, &mut sample_rng(2, 0));
    let sample = generate_channel(&cfg, &cluster, &mut sample_rng(3, 0));
    let observation = model.observe(&sample.real_vec, &mut sample_rng(4, 0));
    Fixture {
        model,
        net,
        schedule,
        observation,
        truth: sample.real_vec,
    }
}
