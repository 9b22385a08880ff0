//! Logistic link and its derivative.

/// Logistic function `1 / (1 + e^{-z})`.
///
/// Evaluated on the side that never exponentiates a large positive number, so
/// it saturates cleanly to `0.0` / `1.0` instead of overflowing.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the logistic function, `μ(z)(1 − μ(z))`.
#[inline]
pub fn sigmoid_derivative(z: f64) -> f64 {
    // μ(z)·μ(−z) keeps full relative precision in both tails.
    sigmoid(z) * sigmoid(-z)
}

/// Worst-case link slope over unit-norm features and parameters within
/// distance one of a parameter bounded by `s_bound`: `μ̇(s_bound + 1)`.
///
/// Negative bounds are treated as zero.
pub fn kappa_lower_bound(s_bound: f64) -> f64 {
    sigmoid_derivative(s_bound.max(0.0) + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    // 1/(1+e^{-1}) and μ̇(1) evaluated with 50-digit arithmetic (mpmath).
    const SIGMOID_ONE: f64 = 0.731_058_578_630_004_9;
    const SIGMOID_PRIME_ONE: f64 = 0.196_611_933_241_481_85;

    #[test]
    fn sigmoid_zero_is_half() {
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        assert_eq!(sigmoid(f64::INFINITY), 1.0);
        assert_eq!(sigmoid(f64::NEG_INFINITY), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!(sigmoid_derivative(800.0).is_finite());
        assert!(sigmoid_derivative(-800.0) >= 0.0);
    }

    #[test]
    fn sigmoid_one_matches_high_precision() {
        assert!((sigmoid(1.0) - SIGMOID_ONE).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_increasing_and_symmetric() {
        let mut prev = 0.0;
        for k in -400..=400 {
            let z = k as f64 * 0.05;
            let s = sigmoid(z);
            assert!(s >= prev);
            assert!((s + sigmoid(-z) - 1.0).abs() < 1e-15);
            prev = s;
        }
    }

    #[test]
    fn derivative_peaks_at_quarter() {
        assert_eq!(sigmoid_derivative(0.0), 0.25);
        for k in 1..100 {
            assert!(sigmoid_derivative(k as f64 * 0.1) < 0.25);
        }
    }

    #[test]
    fn kappa_bound_values() {
        assert!((kappa_lower_bound(0.0) - SIGMOID_PRIME_ONE).abs() < 1e-12);
        assert!(kappa_lower_bound(0.0) <= 0.25);
        assert!(kappa_lower_bound(1e3) < 1e-300);
        assert!(kappa_lower_bound(5.0) < kappa_lower_bound(1.0));
    }
}
