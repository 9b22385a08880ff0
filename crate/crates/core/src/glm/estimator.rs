//! Online logistic estimators: one observation at a time, with the
//! correlation matrix and its inverse maintained alongside the MLE.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linalg::{add_outer, min_eig, quadratic_form, sherman_morrison_update, spd_inverse};
use super::link::{sigmoid, sigmoid_derivative};
use super::mle::{MleSolver, ObservationLog, WarmStart};
use crate::error::{Result, UssError};

/// When the MLE is recomputed as observations arrive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum RefitSchedule {
    /// After every observation.
    #[default]
    EveryRound,
    /// Once the sample count reaches `ratio` times the count at the last
    /// fit. `ratio = 1` is the same as refitting every round.
    Geometric { ratio: f64 },
}

impl RefitSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RefitSchedule::Geometric { ratio } if !(ratio >= 1.0 && ratio.is_finite()) => Err(
                UssError::Config(format!("refit ratio must be at least 1, got {ratio}")),
            ),
            _ => Ok(()),
        }
    }

    fn due(&self, fitted_n: usize, n: usize) -> bool {
        match *self {
            RefitSchedule::EveryRound => n > fitted_n,
            RefitSchedule::Geometric { ratio } => {
                n > fitted_n && (fitted_n == 0 || n as f64 >= ratio * fitted_n as f64)
            }
        }
    }
}

/// Logistic model of a binary signal observed through lifted features.
///
/// `v` is `Σ φφᵀ + regularizer·I` and `v_inv` its inverse. The inverse is
/// `None` while `v` is still singular (possible only without a regularizer).
///
/// [`GlmEstimator::record`] only logs an observation; the MLE is brought up
/// to date by [`GlmEstimator::refresh`], following the refit schedule.
/// [`GlmEstimator::update`] does both.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlmEstimator {
    log: ObservationLog,
    v: DMatrix<f64>,
    v_inv: Option<DMatrix<f64>>,
    theta_hat: Vec<f64>,
    projected: bool,
    regularizer: f64,
    s_bound: f64,
    #[serde(default)]
    schedule: RefitSchedule,
    /// Sample count at the last fit.
    #[serde(default)]
    fitted_n: usize,
    #[serde(skip)]
    warm: WarmStart,
}

impl GlmEstimator {
    pub fn new(dim: usize, regularizer: f64, s_bound: f64) -> Result<Self> {
        if dim == 0 {
            return Err(UssError::Precondition(
                "estimator dimension must be positive".into(),
            ));
        }
        if !(regularizer >= 0.0 && regularizer.is_finite()) {
            return Err(UssError::Precondition(format!(
                "regularizer must be nonnegative, got {regularizer}"
            )));
        }
        if !(s_bound > 0.0 && s_bound.is_finite()) {
            return Err(UssError::Precondition(format!(
                "norm bound must be positive, got {s_bound}"
            )));
        }
        let v = DMatrix::<f64>::identity(dim, dim) * regularizer;
        let v_inv = (regularizer > 0.0).then(|| DMatrix::<f64>::identity(dim, dim) / regularizer);
        Ok(Self {
            log: ObservationLog::new(dim),
            v,
            v_inv,
            theta_hat: vec![0.0; dim],
            projected: false,
            regularizer,
            s_bound,
            schedule: RefitSchedule::EveryRound,
            fitted_n: 0,
            warm: WarmStart::default(),
        })
    }

    pub fn with_schedule(mut self, schedule: RefitSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn schedule(&self) -> RefitSchedule {
        self.schedule
    }

    /// Whether observations arrived since the last fit.
    pub fn is_stale(&self) -> bool {
        self.fitted_n < self.log.len()
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn n(&self) -> usize {
        self.log.len()
    }

    pub fn log(&self) -> &ObservationLog {
        &self.log
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn v_inv(&self) -> Option<&DMatrix<f64>> {
        self.v_inv.as_ref()
    }

    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    pub fn projected(&self) -> bool {
        self.projected
    }

    pub fn regularizer(&self) -> f64 {
        self.regularizer
    }

    pub fn min_eig(&self) -> Result<f64> {
        min_eig(&self.v)
    }

    /// Whether the smallest eigenvalue of `v` is at least `level`.
    ///
    /// Answered by attempting a Cholesky factorization of `v − level·I`
    /// (with a tiny tolerance) before falling back to an eigen-solve.
    pub fn min_eig_at_least(&self, level: f64) -> Result<bool> {
        let d = self.dim();
        let shifted = &self.v - DMatrix::<f64>::identity(d, d) * (level - 1e-12);
        if shifted.cholesky().is_some() {
            return Ok(true);
        }
        Ok(self.min_eig()? >= level)
    }

    /// Appends one observation, updates `v` and its inverse, and refits the
    /// MLE warm-started at the previous estimate.
    pub fn update(&mut self, phi: &[f64], label: bool) -> Result<()> {
        self.record(phi, label)?;
        self.fit()
    }

    /// Appends one observation and updates `v` and its inverse, leaving the
    /// MLE as it was.
    pub fn record(&mut self, phi: &[f64], label: bool) -> Result<()> {
        if phi.len() != self.dim() {
            return Err(UssError::Precondition(format!(
                "feature vector has length {}, estimator dimension is {}",
                phi.len(),
                self.dim()
            )));
        }
        self.log.push(phi, label)?;
        add_outer(&mut self.v, phi);
        self.update_inverse(phi);

        // Keep the warm-start material exact for the grown log at θ̂.
        let z = self.predictor(phi);
        if let Some(h) = self.warm.info.as_mut() {
            let w = sigmoid_derivative(z);
            let scaled: Vec<f64> = phi.iter().map(|p| p * w.sqrt()).collect();
            add_outer(h, &scaled);
        }
        if let Some(g) = self.warm.grad.as_mut() {
            let resid = f64::from(u8::from(label)) - sigmoid(z);
            for (gi, p) in g.iter_mut().zip(phi) {
                *gi += resid * p;
            }
        }
        Ok(())
    }

    /// Refits the MLE if the schedule calls for it.
    pub fn refresh(&mut self) -> Result<()> {
        if self.schedule.due(self.fitted_n, self.log.len()) {
            self.fit()?;
        }
        Ok(())
    }

    fn fit(&mut self) -> Result<()> {
        let solver = MleSolver::new(self.s_bound);
        let warm = std::mem::take(&mut self.warm);
        let (fit, warm) = solver.solve_warm(&self.log, &self.theta_hat, warm)?;
        self.theta_hat = fit.theta;
        self.projected = fit.projected;
        self.warm = warm;
        self.fitted_n = self.log.len();
        Ok(())
    }

    fn update_inverse(&mut self, phi: &[f64]) {
        match self.v_inv.as_mut() {
            Some(inv) => {
                if !sherman_morrison_update(inv, phi) {
                    warn!("rank-one inverse update ill-conditioned; inverting directly");
                    self.v_inv = spd_inverse(&self.v);
                }
            }
            None => {
                // Singular until the logged features span the space.
                if self.log.len() >= self.dim() {
                    self.v_inv = spd_inverse(&self.v);
                }
            }
        }
    }

    /// `φᵀθ̂`, the linear predictor at the current estimate.
    pub fn predictor(&self, phi: &[f64]) -> f64 {
        phi.iter().zip(&self.theta_hat).map(|(a, b)| a * b).sum()
    }

    /// Plug-in probability `μ(φᵀθ̂)`.
    pub fn plug_in(&self, phi: &[f64]) -> f64 {
        sigmoid(self.predictor(phi))
    }

    /// `‖φ‖_{V⁻¹}`; infinite while `v` is singular.
    pub fn width(&self, phi: &[f64]) -> Result<f64> {
        let Some(inv) = self.v_inv.as_ref() else {
            return Ok(f64::INFINITY);
        };
        let q = quadratic_form(inv, phi);
        if !q.is_finite() {
            return Err(UssError::InternalState(
                "inverse correlation matrix is not finite".into(),
            ));
        }
        Ok(q.max(0.0).sqrt())
    }

    /// Upper-confidence probability `μ(φᵀθ̂ + radius·‖φ‖_{V⁻¹})`.
    pub fn optimistic(&self, phi: &[f64], radius: f64) -> Result<f64> {
        if phi.len() != self.dim() {
            return Err(UssError::Precondition(format!(
                "feature vector has length {}, estimator dimension is {}",
                phi.len(),
                self.dim()
            )));
        }
        let w = self.width(phi)?;
        let bonus = if radius == 0.0 { 0.0 } else { radius * w };
        Ok(sigmoid(self.predictor(phi) + bonus))
    }
}

/// Estimator of the disagreement probability between arms `pair.0 < pair.1`
/// (0-based).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairEstimator {
    pub pair: (usize, usize),
    pub estimator: GlmEstimator,
}

impl PairEstimator {
    pub fn new(pair: (usize, usize), dim: usize, regularizer: f64, s_bound: f64) -> Result<Self> {
        if pair.0 >= pair.1 {
            return Err(UssError::Precondition(format!(
                "pair must satisfy i < j, got ({}, {})",
                pair.0, pair.1
            )));
        }
        Ok(Self {
            pair,
            estimator: GlmEstimator::new(dim, regularizer, s_bound)?,
        })
    }

    /// Records whether the two arms disagreed on a context with lift `phi`.
    pub fn pair_update(&mut self, phi: &[f64], disagreed: bool) -> Result<()> {
        self.estimator.update(phi, disagreed)
    }

    /// Like [`PairEstimator::pair_update`] without refitting.
    pub fn pair_record(&mut self, phi: &[f64], disagreed: bool) -> Result<()> {
        self.estimator.record(phi, disagreed)
    }

    pub fn n(&self) -> usize {
        self.estimator.n()
    }

    pub fn optimistic_disagreement(&self, phi: &[f64], radius: f64) -> Result<f64> {
        self.estimator.optimistic(phi, radius)
    }
}
