//! Scalar numerics shared across modules: standard-normal density/CDF
//! helpers that stay accurate deep into the tails, and small statistics
//! used by tests and the benchmark surface.

/// 1/sqrt(2*pi)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// ln(sqrt(2*pi))
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Threshold (in standard deviations) beyond which interval statistics are
/// evaluated in log space. erfc alone starts cancelling much earlier than it
/// underflows, so tail handling switches well before that point.
const TAIL_SWITCH: f64 = 8.0;

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// log of the upper-tail probability, log(1 - Phi(x)).
///
/// Uses erfc up to the underflow region and the standard asymptotic
/// expansion beyond it, so the result is finite for any representable x.
pub fn log_norm_cdf_upper(x: f64) -> f64 {
    if x < 30.0 {
        (0.5 * libm::erfc(x / SQRT_2)).ln()
    } else {
        // Phi_c(x) ~ pdf(x)/x * (1 - 1/x^2 + 3/x^4 - 15/x^6)
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - LN_SQRT_2PI - x.ln() + series.ln()
    }
}

/// Probability mass of the interval (a, b), Phi(b) - Phi(a), with the
/// difference taken in the dominant tail so it never cancels to zero for
/// non-degenerate intervals. Either bound may be infinite.
pub fn norm_interval_mass(a: f64, b: f64) -> f64 {
    debug_assert!(a <= b);
    if a <= 0.0 && b >= 0.0 {
        // straddles the mode: both erf terms add constructively
        0.5 * (libm::erf(b / SQRT_2) + libm::erf(-a / SQRT_2))
    } else if a > 0.0 {
        // right tail: Phi_c(a) - Phi_c(b)
        0.5 * (libm::erfc(a / SQRT_2) - libm::erfc(b / SQRT_2))
    } else {
        // left tail: mirror of the right tail
        0.5 * (libm::erfc(-b / SQRT_2) - libm::erfc(-a / SQRT_2))
    }
}

/// log(Phi(b) - Phi(a)), stable for intervals arbitrarily deep in a tail.
pub fn log_norm_interval_mass(a: f64, b: f64) -> f64 {
    debug_assert!(a <= b);
    if b < -TAIL_SWITCH {
        return log_norm_interval_mass(-b, -a);
    }
    if a <= TAIL_SWITCH {
        return norm_interval_mass(a, b).max(1e-300).ln();
    }
    // deep right tail: Phi_c(a) * (1 - Phi_c(b)/Phi_c(a))
    let la = log_norm_cdf_upper(a);
    if b.is_infinite() {
        return la;
    }
    let ratio = (log_norm_cdf_upper(b) - la).exp();
    la + (-ratio).ln_1p()
}

/// (pdf(a) - pdf(b)) / (Phi(b) - Phi(a)) for an interval (a, b).
///
/// This is the derivative of log(Phi(b - z) - Phi(a - z)) with respect to z
/// evaluated through the normalized bounds, the per-component factor of the
/// quantized-observation likelihood score. The evaluation switches to log
/// space once both bounds sit more than [`TAIL_SWITCH`] standard deviations
/// out, where the naive ratio is catastrophically cancellative, and the
/// denominator is clamped at 1e-300.
pub fn norm_interval_score(a: f64, b: f64) -> f64 {
    debug_assert!(a <= b);
    if b < -TAIL_SWITCH {
        // mirror symmetry: pdf is even, Phi(-x) = 1 - Phi(x)
        return -norm_interval_score(-b, -a);
    }
    if a <= TAIL_SWITCH {
        let num = pdf_diff(a, b);
        let den = norm_interval_mass(a, b).max(1e-300);
        return num / den;
    }
    // deep right tail; pdf(a) dominates pdf(b) since both are positive
    let la = -0.5 * a * a - LN_SQRT_2PI;
    let log_den = log_norm_interval_mass(a, b);
    let log_num = if b.is_infinite() {
        la
    } else {
        let lb = -0.5 * b * b - LN_SQRT_2PI;
        la + (-((lb - la).exp())).ln_1p()
    };
    (log_num - log_den).exp()
}

fn pdf_diff(a: f64, b: f64) -> f64 {
    let pa = if a.is_infinite() { 0.0 } else { norm_pdf(a) };
    let pb = if b.is_infinite() { 0.0 } else { norm_pdf(b) };
    pa - pb
}

/// Gini coefficient of a nonnegative energy vector; 0 for uniform spread,
/// approaching 1 as the energy concentrates in few entries.
pub fn gini(values: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = sorted.len() as f64;
    let total: f64 = sorted.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, v)| (2.0 * (i as f64 + 1.0) - n - 1.0) * v)
        .sum();
    weighted / (n * total)
}

/// Median of a slice (average of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cdf_matches_erf_identities() {
        assert_relative_eq!(norm_cdf(0.0), 0.5, max_relative = 1e-15);
        assert_relative_eq!(norm_cdf(1.0), 0.841344746068543, max_relative = 1e-12);
        assert_relative_eq!(
            norm_cdf(-1.0) + norm_cdf(1.0),
            1.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn interval_mass_matches_cdf_difference_in_the_bulk() {
        for &(a, b) in &[(-1.5, 0.3), (0.2, 1.7), (-3.0, -0.5), (-0.4, 0.4)] {
            assert_relative_eq!(
                norm_interval_mass(a, b),
                norm_cdf(b) - norm_cdf(a),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn log_mass_stays_finite_deep_in_the_tail() {
        let v = log_norm_interval_mass(40.0, 41.0);
        assert!(v.is_finite());
        // dominated by log Phi_c(40) ~ -0.5*1600 - ln(40*sqrt(2pi))
        assert!((v - (-0.5 * 1600.0 - (40.0f64 * (2.0 * std::f64::consts::PI).sqrt()).ln())).abs() < 1.0);
    }

    #[test]
    fn interval_score_one_sided_matches_mills_ratio() {
        // (0, inf): pdf(0)/Phi_c(0) = 2*pdf(0)
        assert_relative_eq!(
            norm_interval_score(0.0, f64::INFINITY),
            2.0 * norm_pdf(0.0),
            max_relative = 1e-13
        );
        // deep tail approaches a + 1/a
        let a = 12.0;
        let score = norm_interval_score(a, f64::INFINITY);
        assert_relative_eq!(score, a + 1.0 / a, max_relative = 1e-2);
    }

    #[test]
    fn interval_score_is_odd_under_mirroring() {
        for &(a, b) in &[(0.5, 1.5), (3.0, f64::INFINITY), (9.0, 10.0), (42.0, 43.5)] {
            let right = norm_interval_score(a, b);
            let left = norm_interval_score(-b, -a);
            assert_relative_eq!(right, -left, max_relative = 1e-12);
            assert!(right.is_finite());
        }
    }

    #[test]
    fn interval_score_matches_finite_difference_of_log_mass() {
        // d/dz log(Phi(b - z) - Phi(a - z)) at z = 0 equals the interval score
        let cases = [(-0.7, 0.4), (1.0, 2.0), (-2.5, -1.0), (8.5, 9.5), (11.0, f64::INFINITY)];
        for &(a, b) in &cases {
            let h = 1e-6;
            let up = log_norm_interval_mass(a - h, if b.is_finite() { b - h } else { b });
            let dn = log_norm_interval_mass(a + h, if b.is_finite() { b + h } else { b });
            let fd = (up - dn) / (2.0 * h);
            assert_relative_eq!(norm_interval_score(a, b), fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn gini_extremes() {
        assert!(gini(&[1.0, 1.0, 1.0, 1.0]).abs() < 1e-12);
        let concentrated = gini(&[0.0, 0.0, 0.0, 1.0]);
        assert!(concentrated > 0.7);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
