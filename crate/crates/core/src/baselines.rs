//! Classical estimators for head-to-head comparison: least-squares
//! pseudo-inverse, sample-covariance LMMSE, and angular-domain LASSO
//! solved by a monotone fast iterative shrinkage-thresholding scheme.

use nalgebra::{Cholesky, DMatrix};
use ndarray::{Array1, Array2};

use crate::measurement::MeasurementSvd;
use crate::{Error, Result};

/// Empirical channel covariance C_h = (1/D) sum h h^T.
#[derive(Debug, Clone)]
pub struct SampleCovariance {
    pub c_h: Array2<f64>,
    pub n_samples: usize,
}

impl SampleCovariance {
    /// Accumulates the covariance from a row-per-sample dataset.
    pub fn from_rows(data: &ndarray::ArrayView2<'_, f32>) -> Self {
        let (d, n) = data.dim();
        assert!(d > 0, "need at least one sample");
        let mut c = Array2::<f64>::zeros((n, n));
        let mut row = Array1::<f64>::zeros(n);
        for r in 0..d {
            for (dst, src) in row.iter_mut().zip(data.row(r).iter()) {
                *dst = *src as f64;
            }
            for i in 0..n {
                let hi = row[i];
                for j in i..n {
                    c[[i, j]] += hi * row[j];
                }
            }
        }
        let scale = 1.0 / d as f64;
        for i in 0..n {
            for j in i..n {
                let v = c[[i, j]] * scale;
                c[[i, j]] = v;
                c[[j, i]] = v;
            }
        }
        Self {
            c_h: c,
            n_samples: d,
        }
    }
}

/// Minimum-norm least-squares solution A^+ y through the cached SVD, with
/// singular values below 1e-10 * sigma_max treated as zero.
pub fn ls_estimate(y: &Array1<f64>, svd: &MeasurementSvd) -> Array1<f64> {
    let cutoff = 1e-10 * svd.s[0].max(0.0);
    let u_t_y = svd.u.t().dot(y);
    let mut w = Array1::<f64>::zeros(svd.s.len());
    for i in 0..svd.s.len() {
        if svd.s[i] > cutoff {
            w[i] = u_t_y[i] / svd.s[i];
        }
    }
    svd.v.dot(&w)
}

/// LMMSE filter W = C_h A^T (A C_h A^T + sigma_n^2 I)^{-1}, factored once
/// per (A, sigma_n^2) and applied per observation.
#[derive(Debug, Clone)]
pub struct LmmseFilter {
    w: Array2<f64>,
}

impl LmmseFilter {
    pub fn new(a: &Array2<f64>, c_h: &SampleCovariance, noise_var: f64) -> Result<Self> {
        let (m, n) = a.dim();
        assert_eq!(c_h.c_h.dim(), (n, n), "covariance size vs operator");
        let a_c = a.dot(&c_h.c_h); // M x N
        let mut inner = a_c.dot(&a.t()); // A C A^T
        for i in 0..m {
            inner[[i, i]] += noise_var;
        }
        let inner_na = DMatrix::from_fn(m, m, |i, j| inner[[i, j]]);
        let chol = Cholesky::new(inner_na).ok_or(Error::SingularSystem)?;
        // W = (S^{-1} A C)^T by symmetry of S
        let rhs = DMatrix::from_fn(m, n, |i, j| a_c[[i, j]]);
        let solved = chol.solve(&rhs);
        let w = Array2::from_shape_fn((n, m), |(i, j)| solved[(j, i)]);
        Ok(Self { w })
    }

    pub fn apply(&self, y: &Array1<f64>) -> Array1<f64> {
        self.w.dot(y)
    }
}

/// One-shot LMMSE estimate; build an [`LmmseFilter`] to amortize the
/// factorization over many observations.
pub fn lmmse_estimate(
    y: &Array1<f64>,
    a: &Array2<f64>,
    c_h: &SampleCovariance,
    noise_var: f64,
) -> Result<Array1<f64>> {
    Ok(LmmseFilter::new(a, c_h, noise_var)?.apply(y))
}

fn soft_threshold(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

fn lasso_objective(y: &Array1<f64>, a: &Array2<f64>, x: &Array1<f64>, lambda: f64) -> f64 {
    let resid = &a.dot(x) - y;
    0.5 * resid.dot(&resid) + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

/// min_x 0.5 ||y - A x||^2 + lambda ||x||_1 by accelerated proximal descent
/// with step 1 / sigma_max(A)^2 and a monotone safeguard: any momentum step
/// that would raise the objective is replaced by a plain proximal step from
/// the previous iterate (which cannot increase it) and the momentum
/// restarts. Stops after `max_iters` or when the relative change drops
/// below 1e-6.
pub fn lasso_estimate(
    y: &Array1<f64>,
    a: &Array2<f64>,
    sigma_max: f64,
    lambda: f64,
    max_iters: usize,
) -> Array1<f64> {
    lasso_with_history(y, a, sigma_max, lambda, max_iters).0
}

/// [`lasso_estimate`] plus the per-iteration objective trace.
pub fn lasso_with_history(
    y: &Array1<f64>,
    a: &Array2<f64>,
    sigma_max: f64,
    lambda: f64,
    max_iters: usize,
) -> (Array1<f64>, Vec<f64>) {
    assert!(lambda >= 0.0, "lambda must be nonnegative");
    let n = a.ncols();
    if sigma_max <= 0.0 {
        return (Array1::zeros(n), vec![lasso_objective(y, a, &Array1::zeros(n), lambda)]);
    }
    let step = 1.0 / (sigma_max * sigma_max);
    let tau = lambda * step;

    let mut x = Array1::<f64>::zeros(n);
    let mut z = x.clone();
    let mut theta = 1.0f64;
    let mut obj = lasso_objective(y, a, &x, lambda);
    let mut history = vec![obj];

    let prox_step = |point: &Array1<f64>| {
        let grad = a.t().dot(&(&a.dot(point) - y));
        let mut out = point - &(grad * step);
        out.mapv_inplace(|v| soft_threshold(v, tau));
        out
    };

    for _ in 0..max_iters {
        let mut candidate = prox_step(&z);
        let mut cand_obj = lasso_objective(y, a, &candidate, lambda);
        if cand_obj > obj {
            candidate = prox_step(&x);
            cand_obj = lasso_objective(y, a, &candidate, lambda);
            theta = 1.0;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let momentum = (theta - 1.0) / theta_next;
        z = &candidate + &((&candidate - &x) * momentum);
        let delta = (&candidate - &x).dot(&(&candidate - &x)).sqrt();
        let scale = x.dot(&x).sqrt().max(1e-12);
        x = candidate;
        obj = cand_obj;
        theta = theta_next;
        history.push(obj);
        if delta / scale < 1e-6 {
            break;
        }
    }
    (x, history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_rng;
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_mat(m: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = sample_rng(seed, 0);
        Array2::from_shape_fn((m, n), |_| StandardNormal.sample(&mut rng))
    }

    fn random_vec(n: usize, seed: u64) -> Array1<f64> {
        let mut rng = sample_rng(seed, 1);
        Array1::from_shape_fn(n, |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn ls_recovers_exactly_on_square_systems() {
        let a = random_mat(6, 6, 1);
        let h = random_vec(6, 2);
        let y = a.dot(&h);
        let svd = MeasurementSvd::from_matrix(&a);
        let got = ls_estimate(&y, &svd);
        for i in 0..6 {
            assert!((got[i] - h[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn ls_on_scaled_identity_halves() {
        let a = Array2::eye(4) * 2.0;
        let svd = MeasurementSvd::from_matrix(&a);
        let y = random_vec(4, 3);
        let got = ls_estimate(&y, &svd);
        for i in 0..4 {
            assert_relative_eq!(got[i], y[i] / 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn ls_underdetermined_is_consistent_minimum_norm() {
        // alpha = 0.5 analogue: half as many rows as columns
        let a = random_mat(5, 10, 4);
        let y = random_vec(5, 5);
        let svd = MeasurementSvd::from_matrix(&a);
        let got = ls_estimate(&y, &svd);
        let resid = &a.dot(&got) - &y;
        assert!(resid.dot(&resid).sqrt() <= 1e-9);
        // minimum-norm solutions live in the row space
        let proj = svd.v.dot(&svd.v.t().dot(&got));
        let off = (&got - &proj).dot(&(&got - &proj)).sqrt();
        assert!(off <= 1e-9);
    }

    #[test]
    fn lmmse_scalar_conjugate_case() {
        let a = Array2::eye(3);
        let c = SampleCovariance {
            c_h: Array2::eye(3),
            n_samples: 1,
        };
        let y = random_vec(3, 6);
        let got = lmmse_estimate(&y, &a, &c, 0.5).unwrap();
        for i in 0..3 {
            assert_relative_eq!(got[i], y[i] / 1.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn lmmse_collapses_to_zero_at_infinite_noise() {
        let a = random_mat(6, 8, 7);
        let c = SampleCovariance {
            c_h: Array2::eye(8),
            n_samples: 1,
        };
        let y = random_vec(6, 8);
        let got = lmmse_estimate(&y, &a, &c, 1e12).unwrap();
        assert!(got.dot(&got).sqrt() < 1e-9);
    }

    fn gaussian_with_covariance(
        sqrt_diag: &Array1<f64>,
        n_draws: usize,
        seed: u64,
    ) -> Vec<Array1<f64>> {
        let mut rng = sample_rng(seed, 2);
        (0..n_draws)
            .map(|_| {
                Array1::from_shape_fn(sqrt_diag.len(), |i| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    sqrt_diag[i] * e
                })
            })
            .collect()
    }

    #[test]
    fn lmmse_matches_analytic_mmse_on_known_gaussian() {
        // diagonal covariance with a strong profile; analytic error
        // covariance is C - C A^T (A C A^T + s I)^{-1} A C
        let n = 12;
        let m = 8;
        let a = random_mat(m, n, 9);
        let diag = Array1::from_shape_fn(n, |i| (-(i as f64) / 3.0).exp());
        let c_true = Array2::from_diag(&diag);
        let cov = SampleCovariance {
            c_h: c_true.clone(),
            n_samples: 1,
        };
        let noise_var = 0.2;
        let filter = LmmseFilter::new(&a, &cov, noise_var).unwrap();

        // analytic NMSE = trace(E) / trace(C)
        let a_c = a.dot(&c_true);
        let mut inner = a_c.dot(&a.t());
        for i in 0..m {
            inner[[i, i]] += noise_var;
        }
        let inner_na = DMatrix::from_fn(m, m, |i, j| inner[[i, j]]);
        let chol = Cholesky::new(inner_na).unwrap();
        let rhs = DMatrix::from_fn(m, n, |i, j| a_c[[i, j]]);
        let solved = chol.solve(&rhs);
        let mut trace_e = 0.0;
        for i in 0..n {
            let mut gain = 0.0;
            for k in 0..m {
                gain += a_c[[k, i]] * solved[(k, i)];
            }
            trace_e += c_true[[i, i]] - gain;
        }
        let analytic = trace_e / diag.sum();

        let sqrt_diag = diag.mapv(f64::sqrt);
        let draws = gaussian_with_covariance(&sqrt_diag, 4000, 10);
        let mut noise_rng = sample_rng(11, 3);
        let mut err_acc = 0.0;
        let mut sig_acc = 0.0;
        for h in &draws {
            let mut y = a.dot(h);
            for v in y.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut noise_rng);
                *v += noise_var.sqrt() * e;
            }
            let est = filter.apply(&y);
            let diff = &est - h;
            err_acc += diff.dot(&diff);
            sig_acc += h.dot(h);
        }
        let empirical = err_acc / sig_acc;
        assert_relative_eq!(empirical, analytic, max_relative = 0.03);
    }

    #[test]
    fn lmmse_dominates_ls_on_gaussian_data() {
        let n = 12;
        let m = 12;
        let a = random_mat(m, n, 12);
        let svd = MeasurementSvd::from_matrix(&a);
        let diag = Array1::from_shape_fn(n, |i| (-(i as f64) / 2.0).exp());
        let cov = SampleCovariance {
            c_h: Array2::from_diag(&diag),
            n_samples: 1,
        };
        let sqrt_diag = diag.mapv(f64::sqrt);
        for (snr_idx, noise_var) in [(0usize, 1.0f64), (1, 0.1), (2, 0.01)] {
            let filter = LmmseFilter::new(&a, &cov, noise_var).unwrap();
            let draws = gaussian_with_covariance(&sqrt_diag, 150, 13 + snr_idx as u64);
            let mut noise_rng = sample_rng(14, snr_idx as u64);
            let mut lmmse_err = 0.0;
            let mut ls_err = 0.0;
            for h in &draws {
                let mut y = a.dot(h);
                for v in y.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut noise_rng);
                    *v += noise_var.sqrt() * e;
                }
                let d1 = &filter.apply(&y) - h;
                let d2 = &ls_estimate(&y, &svd) - h;
                lmmse_err += d1.dot(&d1);
                ls_err += d2.dot(&d2);
            }
            assert!(
                lmmse_err <= ls_err,
                "noise_var={noise_var}: lmmse {lmmse_err} vs ls {ls_err}"
            );
        }
    }

    #[test]
    fn sample_covariance_is_symmetric_psd_and_converges() {
        let diag = Array1::from_shape_fn(6, |i| 1.0 / (1.0 + i as f64));
        let sqrt_diag = diag.mapv(f64::sqrt);
        let frob = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c_true = Array2::from_diag(&diag);
        let mut errs = Vec::new();
        for (d, seed) in [(100usize, 20u64), (10_000, 21)] {
            let draws = gaussian_with_covariance(&sqrt_diag, d, seed);
            let mut rows = Array2::<f32>::zeros((d, 6));
            for (i, h) in draws.iter().enumerate() {
                for j in 0..6 {
                    rows[[i, j]] = h[j] as f32;
                }
            }
            let cov = SampleCovariance::from_rows(&rows.view());
            assert_eq!(cov.n_samples, d);
            for i in 0..6 {
                for j in 0..6 {
                    assert_eq!(cov.c_h[[i, j]], cov.c_h[[j, i]]);
                }
            }
            let eig = DMatrix::from_fn(6, 6, |i, j| cov.c_h[[i, j]])
                .symmetric_eigen()
                .eigenvalues;
            assert!(eig.iter().all(|&l| l >= -1e-10));
            errs.push(frob(&(&cov.c_h - &c_true)));
        }
        assert!(errs[1] < errs[0], "errors {errs:?}");
    }

    #[test]
    fn lasso_unregularized_limit_matches_ls() {
        let a = random_mat(8, 8, 30);
        let h = random_vec(8, 31);
        let y = a.dot(&h);
        let svd = MeasurementSvd::from_matrix(&a);
        let ls = ls_estimate(&y, &svd);
        let got = lasso_estimate(&y, &a, svd.s[0], 0.0, 20_000);
        let diff = (&got - &ls).dot(&(&got - &ls)).sqrt();
        assert!(diff / ls.dot(&ls).sqrt() <= 1e-4, "gap {diff}");
    }

    #[test]
    fn lasso_full_shrinkage_returns_zero() {
        let a = random_mat(6, 10, 32);
        let y = random_vec(6, 33);
        let lambda = a.t().dot(&y).iter().map(|v| v.abs()).fold(0.0, f64::max);
        let svd = MeasurementSvd::from_matrix(&a);
        let got = lasso_estimate(&y, &a, svd.s[0], lambda, 500);
        assert!(got.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lasso_objective_is_monotone_nonincreasing() {
        for seed in [40u64, 41, 42] {
            let a = random_mat(10, 16, seed);
            let y = random_vec(10, seed + 10);
            let svd = MeasurementSvd::from_matrix(&a);
            let (_, history) = lasso_with_history(&y, &a, svd.s[0], 0.05, 300);
            for w in history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "objective rose: {} -> {}", w[0], w[1]);
            }
        }
    }

    proptest! {
        #[test]
        fn soft_threshold_is_1_lipschitz(a in -10f64..10.0, b in -10f64..10.0, tau in 0f64..5.0) {
            let d = (soft_threshold(a, tau) - soft_threshold(b, tau)).abs();
            prop_assert!(d <= (a - b).abs() + 1e-15);
        }
    }
}
