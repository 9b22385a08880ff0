//! Confidence-ellipsoid radii for the pairwise disagreement estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UssError};

/// Parameters shared by every confidence radius computed by a policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceConfig {
    /// Failure probability, in `(0, 1)`.
    pub delta: f64,
    /// Sub-Gaussian parameter of the disagreement noise, in `(0, 1)`.
    pub sigma: f64,
    /// Lower bound on the link slope, in `(0, 1/4]`.
    pub kappa: f64,
    /// Number of arms `K`.
    pub arms: usize,
    /// Lifted feature dimension `d'`.
    pub lifted_dim: usize,
    /// Norm bound on the disagreement parameters.
    pub s_bound: f64,
    /// Ridge added to the correlation matrix (zero for plain USS-PD).
    pub lambda: f64,
}

impl ConfidenceConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(UssError::Config(msg));
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return fail(format!("sigma must lie in (0, 1), got {}", self.sigma));
        }
        if !(self.kappa > 0.0 && self.kappa <= 0.25) {
            return fail(format!("kappa must lie in (0, 1/4], got {}", self.kappa));
        }
        if self.arms == 0 || self.lifted_dim == 0 {
            return fail("arm count and lifted dimension must be positive".into());
        }
        if !(self.s_bound > 0.0 && self.s_bound.is_finite()) {
            return fail(format!("s_bound must be positive, got {}", self.s_bound));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        2.0 * self.sigma / self.kappa
    }

    fn union_term(&self) -> f64 {
        let k = self.arms as f64;
        (k * k / (2.0 * self.delta)).ln()
    }
}

/// `α_t = (2σ/κ) √( (d'/2) ln(1 + 2t/d') + ln(K²/2δ) )`, clamped at zero when
/// the expression under the root is negative.
pub fn alpha_radius(t: u64, cfg: &ConfidenceConfig) -> f64 {
    let dp = cfg.lifted_dim as f64;
    let inner = 0.5 * dp * (1.0 + 2.0 * t as f64 / dp).ln() + cfg.union_term();
    cfg.scale() * inner.max(0.0).sqrt()
}

/// `β_n = (2σ/κ) √( (d'/2) ln(1 + n/(d'λ)) + ln(K²/2δ) ) + 2√λ S`.
pub fn beta_radius(n: u64, cfg: &ConfidenceConfig) -> Result<f64> {
    if cfg.lambda <= 0.0 {
        return Err(UssError::Precondition(
            "beta radius needs lambda > 0; use alpha_radius for the unregularized policy".into(),
        ));
    }
    let dp = cfg.lifted_dim as f64;
    let inner = 0.5 * dp * (1.0 + n as f64 / (dp * cfg.lambda)).ln() + cfg.union_term();
    Ok(cfg.scale() * inner.max(0.0).sqrt() + 2.0 * cfg.lambda.sqrt() * cfg.s_bound)
}
