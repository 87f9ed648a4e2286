//! Synthetic MIMO channel generation and representation changes.
//!
//! Channels are narrowband `n_rx x n_tx` complex matrices produced by a
//! clustered geometric model for uniform linear arrays with half-wavelength
//! spacing. Three views of each sample are kept consistent: the spatial
//! matrix, its angular-domain transform under transmit/receive DFT bases,
//! and the real vector obtained by column-major complex vectorization
//! followed by `[Re; Im]` stacking.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Antenna/pilot geometry and operating point of the simulated link.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Transmit antenna count N_t.
    pub n_tx: usize,
    /// Receive antenna count N_r.
    pub n_rx: usize,
    /// Pilot symbol count N_p.
    pub n_pilot: usize,
    /// Signal-to-noise ratio in dB, defined as N_t / (2 sigma_n^2).
    pub snr_db: f64,
    /// Base RNG seed for dataset generation.
    pub seed: u64,
}

impl SystemConfig {
    pub fn new(n_tx: usize, n_rx: usize, n_pilot: usize, snr_db: f64, seed: u64) -> Result<Self> {
        if n_tx == 0 || n_rx == 0 || n_pilot == 0 {
            return Err(Error::ShapeMismatch {
                expected: "n_tx, n_rx, n_pilot >= 1".into(),
                got: format!("({n_tx}, {n_rx}, {n_pilot})"),
            });
        }
        Ok(Self {
            n_tx,
            n_rx,
            n_pilot,
            snr_db,
            seed,
        })
    }

    /// Pilot density alpha = N_p / N_t; below one the problem is
    /// under-determined.
    pub fn alpha(&self) -> f64 {
        self.n_pilot as f64 / self.n_tx as f64
    }

    /// Noise variance per real component, sigma_n^2 = N_t / (2 SNR).
    pub fn noise_var(&self) -> f64 {
        noise_var(self.n_tx, self.snr_db)
    }

    /// Length of the real channel vector, N = 2 N_r N_t.
    pub fn dim_channel(&self) -> usize {
        2 * self.n_rx * self.n_tx
    }

    /// Length of the real measurement vector, M = 2 N_r N_p.
    pub fn dim_measurement(&self) -> usize {
        2 * self.n_rx * self.n_pilot
    }
}

/// sigma_n^2 per real component for a given transmit count and SNR in dB.
pub fn noise_var(n_tx: usize, snr_db: f64) -> f64 {
    let snr = 10f64.powf(snr_db / 10.0);
    n_tx as f64 / (2.0 * snr)
}

/// Clustered geometric scatterer layout used by [`generate_channel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub n_clusters: usize,
    pub paths_per_cluster: usize,
    /// Laplacian scale of the per-path angle offsets around each cluster
    /// center, in degrees.
    pub angle_spread_deg: f64,
    /// Per-cluster power weights; normalized to sum to one.
    pub gain_profile: Vec<f64>,
}

impl ClusterModel {
    pub fn new(
        n_clusters: usize,
        paths_per_cluster: usize,
        angle_spread_deg: f64,
        gain_profile: Vec<f64>,
    ) -> Result<Self> {
        if n_clusters == 0 || paths_per_cluster == 0 || gain_profile.len() != n_clusters {
            return Err(Error::ShapeMismatch {
                expected: format!("{n_clusters} positive cluster gains"),
                got: format!("{:?}", gain_profile),
            });
        }
        let total: f64 = gain_profile.iter().sum();
        if gain_profile.iter().any(|g| *g < 0.0) || total <= 0.0 {
            return Err(Error::ShapeMismatch {
                expected: "nonnegative gain profile with positive sum".into(),
                got: format!("{:?}", gain_profile),
            });
        }
        Ok(Self {
            n_clusters,
            paths_per_cluster,
            angle_spread_deg,
            gain_profile: gain_profile.iter().map(|g| g / total).collect(),
        })
    }

    /// Three clusters of ten paths, 5 degree Laplacian spread, and
    /// exponentially decaying cluster powers.
    pub fn default_clustered() -> Self {
        let decay: Vec<f64> = (0..3).map(|c| (-(c as f64)).exp()).collect();
        Self::new(3, 10, 5.0, decay).expect("static profile is valid")
    }
}

/// One channel realization with its three mutually consistent views.
#[derive(Debug, Clone)]
pub struct ChannelSample {
    /// Spatial-domain channel H, N_r x N_t.
    pub spatial: Array2<Complex64>,
    /// Angular-domain channel, N_r x N_t.
    pub angular: Array2<Complex64>,
    /// Real vector view of the angular channel, length 2 N_r N_t.
    pub real_vec: Array1<f64>,
}

impl ChannelSample {
    /// Builds the angular and real-vector views from a spatial matrix.
    pub fn from_spatial(spatial: Array2<Complex64>) -> Self {
        let angular = to_angular(&spatial);
        let real_vec = vectorize_real(&angular);
        Self {
            spatial,
            angular,
            real_vec,
        }
    }
}

/// Unitary DFT matrix with entries exp(-j 2 pi k l / n) / sqrt(n).
pub fn dft_matrix(n: usize) -> Array2<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    Array2::from_shape_fn((n, n), |(k, l)| {
        let phase = -2.0 * std::f64::consts::PI * (k as f64) * (l as f64) / n as f64;
        Complex64::from_polar(scale, phase)
    })
}

/// Unit-norm ULA steering vector at half-wavelength spacing,
/// entries exp(-j pi k sin(angle)) / sqrt(n).
pub fn steering_vector(n: usize, angle: f64) -> Array1<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    let omega = std::f64::consts::PI * angle.sin();
    Array1::from_shape_fn(n, |k| Complex64::from_polar(scale, -omega * k as f64))
}

/// Rank-one contribution of a single propagation path,
/// gain * a_rx(theta) a_tx(phi)^H.
pub fn single_path(
    n_rx: usize,
    n_tx: usize,
    gain: Complex64,
    theta: f64,
    phi: f64,
) -> Array2<Complex64> {
    let a_rx = steering_vector(n_rx, theta);
    let a_tx = steering_vector(n_tx, phi);
    Array2::from_shape_fn((n_rx, n_tx), |(i, j)| gain * a_rx[i] * a_tx[j].conj())
}

fn sample_laplacian(rng: &mut impl Rng, scale: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Draws one clustered-geometry channel realization.
///
/// Cluster centers are uniform over (-pi/2, pi/2) at both ends of the link,
/// per-path offsets are Laplacian with the configured spread, and per-path
/// gains are complex Gaussian weighted by the cluster powers. The output is
/// scaled so that E[|h_ij|^2] = 1 over the ensemble.
pub fn generate_channel(
    cfg: &SystemConfig,
    cluster: &ClusterModel,
    rng: &mut impl Rng,
) -> ChannelSample {
    let mut spatial = Array2::<Complex64>::zeros((cfg.n_rx, cfg.n_tx));
    let spread = cluster.angle_spread_deg.to_radians();
    let per_path = 1.0 / cluster.paths_per_cluster as f64;
    for c in 0..cluster.n_clusters {
        let center_rx = (rng.random::<f64>() - 0.5) * std::f64::consts::PI;
        let center_tx = (rng.random::<f64>() - 0.5) * std::f64::consts::PI;
        let path_var = cluster.gain_profile[c] * per_path;
        let sigma = (path_var / 2.0).sqrt();
        for _ in 0..cluster.paths_per_cluster {
            let theta = center_rx + sample_laplacian(rng, spread);
            let phi = center_tx + sample_laplacian(rng, spread);
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let gain = Complex64::new(re * sigma, im * sigma);
            spatial += &single_path(cfg.n_rx, cfg.n_tx, gain, theta, phi);
        }
    }
    // unit-norm steering vectors leave E[|h_ij|^2] = 1 / (N_r N_t)
    let norm = ((cfg.n_rx * cfg.n_tx) as f64).sqrt();
    spatial.mapv_inplace(|z| z * norm);
    ChannelSample::from_spatial(spatial)
}

/// Deterministic per-sample RNG stream derived from (seed, sample index).
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Angular-domain transform, H_ad = A_R^H H A_T.
pub fn to_angular(spatial: &Array2<Complex64>) -> Array2<Complex64> {
    let (n_rx, n_tx) = spatial.dim();
    let a_r = dft_matrix(n_rx);
    let a_t = dft_matrix(n_tx);
    let a_r_h = a_r.t().mapv(|z| z.conj());
    a_r_h.dot(spatial).dot(&a_t)
}

/// Exact inverse of [`to_angular`], H = A_R H_ad A_T^H.
pub fn from_angular(angular: &Array2<Complex64>) -> Array2<Complex64> {
    let (n_rx, n_tx) = angular.dim();
    let a_r = dft_matrix(n_rx);
    let a_t = dft_matrix(n_tx);
    let a_t_h = a_t.t().mapv(|z| z.conj());
    a_r.dot(angular).dot(&a_t_h)
}

/// Column-major complex vectorization followed by `[Re; Im]` stacking.
pub fn vectorize_real(mat: &Array2<Complex64>) -> Array1<f64> {
    let (rows, cols) = mat.dim();
    let mut out = Array1::<f64>::zeros(2 * rows * cols);
    let half = rows * cols;
    for j in 0..cols {
        for i in 0..rows {
            let idx = j * rows + i;
            out[idx] = mat[[i, j]].re;
            out[half + idx] = mat[[i, j]].im;
        }
    }
    out
}

/// Exact inverse of [`vectorize_real`] for a `rows x cols` matrix.
pub fn devectorize_real(vec: &Array1<f64>, rows: usize, cols: usize) -> Array2<Complex64> {
    assert_eq!(vec.len(), 2 * rows * cols, "real vector length mismatch");
    let half = rows * cols;
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let idx = j * rows + i;
        Complex64::new(vec[idx], vec[half + idx])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn max_gram_error(n: usize) -> f64 {
        let f = dft_matrix(n);
        let fh = f.t().mapv(|z| z.conj());
        let gram = f.dot(&fh);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                worst = worst.max((gram[[i, j]] - expect).norm());
            }
        }
        worst
    }

    #[test]
    fn dft_trivial_sizes() {
        let f1 = dft_matrix(1);
        assert_eq!(f1.dim(), (1, 1));
        assert_relative_eq!(f1[[0, 0]].re, 1.0, max_relative = 1e-15);
        assert_relative_eq!(f1[[0, 0]].im, 0.0, epsilon = 1e-15);

        let f2 = dft_matrix(2);
        let s = 1.0 / 2f64.sqrt();
        for (idx, expect) in [((0, 0), s), ((0, 1), s), ((1, 0), s), ((1, 1), -s)] {
            assert_relative_eq!(f2[[idx.0, idx.1]].re, expect, epsilon = 1e-15);
            assert!(f2[[idx.0, idx.1]].im.abs() < 1e-15);
        }
    }

    #[test]
    fn dft_unitarity_across_sizes() {
        for n in 1..=64 {
            assert!(max_gram_error(n) < 1e-12, "n={n}");
        }
        for n in [100, 128, 200, 256] {
            assert!(max_gram_error(n) < 1e-12, "n={n}");
        }
    }

    #[test]
    fn broadside_single_path_is_flat_rank_one() {
        let h = single_path(4, 8, Complex64::new(1.0, 0.0), 0.0, 0.0);
        let expected = 1.0 / (4.0 * 8.0f64).sqrt();
        for z in h.iter() {
            assert_relative_eq!(z.norm(), expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn broadside_concentrates_in_one_angular_entry() {
        let h = single_path(4, 8, Complex64::new(1.0, 0.0), 0.0, 0.0);
        let ad = to_angular(&h);
        assert!(ad[[0, 0]].norm() > 1.0 - 1e-12);
        for i in 0..4 {
            for j in 0..8 {
                if (i, j) != (0, 0) {
                    assert!(ad[[i, j]].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let cfg = SystemConfig::new(8, 2, 8, 20.0, 7).unwrap();
        let cluster = ClusterModel::default_clustered();
        let a = generate_channel(&cfg, &cluster, &mut sample_rng(3, 11));
        let b = generate_channel(&cfg, &cluster, &mut sample_rng(3, 11));
        assert_eq!(a.spatial, b.spatial);
        assert_eq!(a.real_vec, b.real_vec);
    }

    #[test]
    fn monte_carlo_entry_power_is_normalized() {
        let cfg = SystemConfig::new(16, 4, 16, 20.0, 0).unwrap();
        let cluster = ClusterModel::default_clustered();
        let mut acc = 0.0;
        let n_samples = 10_000;
        for i in 0..n_samples {
            let sample = generate_channel(&cfg, &cluster, &mut sample_rng(42, i));
            acc += sample.spatial.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        let mean = acc / (n_samples as f64 * (cfg.n_rx * cfg.n_tx) as f64);
        assert!((0.95..=1.05).contains(&mean), "mean entry power {mean}");
    }

    #[test]
    fn angular_round_trip_and_frobenius() {
        let mut rng = sample_rng(5, 0);
        let h = Array2::from_shape_fn((4, 6), |_| {
            Complex64::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            )
        });
        let ad = to_angular(&h);
        let back = from_angular(&ad);
        let err: f64 = (&back - &h).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);

        let frob = |m: &Array2<Complex64>| m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert_relative_eq!(frob(&ad), frob(&h), max_relative = 1e-12);
    }

    #[test]
    fn vectorize_single_entry() {
        let m = Array2::from_elem((1, 1), Complex64::new(2.0, 3.0));
        let v = vectorize_real(&m);
        assert_eq!(v.to_vec(), vec![2.0, 3.0]);
    }

    proptest! {
        #[test]
        fn vectorize_round_trip_and_isometry(rows in 1usize..5, cols in 1usize..5, seed in 0u64..1000) {
            let mut rng = sample_rng(seed, 0);
            let m = Array2::from_shape_fn((rows, cols), |_| {
                Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            });
            let v = vectorize_real(&m);
            let back = devectorize_real(&v, rows, cols);
            prop_assert_eq!(&back, &m);
            let norm_v = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let frob = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!((norm_v - frob).abs() < 1e-12);
        }
    }
}
