//! Traces the reverse chain on a 1-bit observation.

use dmce_core::channel::{noise_var, sample_rng, ClusterModel, SystemConfig};
use dmce_core::dataset::Dataset;
use dmce_core::diffusion::{linear_schedule, load_checkpoint};
use dmce_core::estimator::{
    estimate, likelihood_score_quantized, nmse, prior_update, EstimatorConfig,
};
use dmce_core::measurement::{make_pilots, received_power, MeasurementModel, PilotKind, Quantizer};
use ndarray::Array1;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let sys = SystemConfig::new(16, 4, 16, 20.0, 42).unwrap();
    let cluster = ClusterModel::default_clustered();
    let test_set = Dataset::generate(&sys, &cluster, 4, 50_000);
    let schedule = linear_schedule(100).unwrap();
    let (net, _) = load_checkpoint(std::path::Path::new("/tmp/calib_model.ckpt")).unwrap();

    let pilot = make_pilots(PilotKind::QpskRandom, 16, 16, &mut sample_rng(9, 0)).unwrap();
    let nv10 = noise_var(16, 10.0);
    let model = MeasurementModel::build(pilot, 4, nv10);
    let truth = test_set.sample_f64(0);
    let obs = model.observe(&truth, &mut sample_rng(13, 0));
    let p_y = received_power(&obs.y);
    let q = Quantizer::design(1, p_y).unwrap();
    let quantized = obs.quantize(&q);
    println!("p_y = {p_y:.3}, delta = {:.3}, ||h|| = {:.3}", q.step, truth.dot(&truth).sqrt());

    for s in [0.5, 1.0, 3.0] {
        // manual chain with per-step norms
        let mut rng = sample_rng(99, 0);
        let n = model.dim_channel();
        let mut h = Array1::from_shape_fn(n, |_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            e
        });
        let mut worst: f64 = 0.0;
        for t in (1..=100).rev() {
            let alpha = schedule.alpha(t);
            let like = likelihood_score_quantized(
                &quantized.y,
                &model,
                &q,
                &h,
                t,
                nv10,
                &schedule,
            )
            .unwrap();
            let mut next = prior_update(&net, &schedule, &h, t).unwrap();
            next.scaled_add(s * (1.0 - alpha) / alpha.sqrt(), &like);
            if t % 20 == 0 || t <= 5 {
                println!(
                    "  s={s} t={t}: ||h||={:.2} ||like||={:.2} -> ||h'||={:.2}",
                    h.dot(&h).sqrt(),
                    like.dot(&like).sqrt(),
                    next.dot(&next).sqrt()
                );
            }
            worst = worst.max(next.dot(&next).sqrt());
            h = next;
        }
        let ratio = nmse(&h, &truth).unwrap();
        println!("s={s}: final nmse {:.3} ({:.1} dB), max ||h_t|| {worst:.1}", ratio, 10.0 * ratio.log10());
    }

    // estimate() across 4 realizations, s = 1
    let cfg = EstimatorConfig {
        grad_scale: 1.0,
        ..EstimatorConfig::default()
    };
    for r in 0..4 {
        let truth = test_set.sample_f64(r);
        let obs = model.observe(&truth, &mut sample_rng(13, r as u64));
        let quantized = obs.quantize(&q);
        let h_hat = estimate(&quantized, &model, &net, &schedule, &cfg, &mut sample_rng(14, r as u64)).unwrap();
        println!("r={r}: nmse {:.2} dB", 10.0 * nmse(&h_hat, &truth).unwrap().log10());
    }
}
