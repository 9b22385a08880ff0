//! Maximum-likelihood estimation for logistic disagreement models.
//!
//! The estimator solves the score equation
//! `Σ_s (d_s − μ(φ_sᵀθ)) φ_s = 0` by damped Newton iterations. When the data
//! is separable (no finite root) or the root leaves the ball `‖θ‖ ≤ S`, the
//! likelihood is instead maximized over that ball and the fit is flagged as
//! projected.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::confidence::ConfidenceConfig;
use super::link::{sigmoid, sigmoid_derivative};
use crate::error::{Result, UssError};

/// Binary-labelled feature vectors in arrival order.
///
/// Identical feature vectors share one stored row; the sequence of arrivals is
/// kept alongside so the log can be replayed exactly.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "LogRepr", into = "LogRepr")]
pub struct ObservationLog {
    dim: usize,
    rows: Vec<f64>,
    counts: Vec<f64>,
    positives: Vec<f64>,
    sequence: Vec<(u32, bool)>,
    index: HashMap<Vec<u64>, u32>,
}

#[derive(Serialize, Deserialize)]
struct LogRepr {
    dim: usize,
    rows: Vec<f64>,
    sequence: Vec<(u32, bool)>,
}

impl From<ObservationLog> for LogRepr {
    fn from(log: ObservationLog) -> Self {
        LogRepr {
            dim: log.dim,
            rows: log.rows,
            sequence: log.sequence,
        }
    }
}

impl From<LogRepr> for ObservationLog {
    fn from(repr: LogRepr) -> Self {
        let mut log = ObservationLog::new(repr.dim);
        for (row, label) in repr.sequence {
            let start = row as usize * repr.dim;
            let phi = &repr.rows[start..start + repr.dim];
            log.push_unchecked(phi, label);
        }
        log
    }
}

impl ObservationLog {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    /// Number of distinct feature vectors seen so far.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn push(&mut self, phi: &[f64], label: bool) -> Result<()> {
        if phi.len() != self.dim {
            return Err(UssError::Precondition(format!(
                "feature vector has length {}, log dimension is {}",
                phi.len(),
                self.dim
            )));
        }
        if let Some(k) = phi.iter().position(|v| !v.is_finite()) {
            return Err(UssError::Data(format!("feature {k} is not finite")));
        }
        self.push_unchecked(phi, label);
        Ok(())
    }

    fn push_unchecked(&mut self, phi: &[f64], label: bool) {
        let key: Vec<u64> = phi.iter().map(|v| v.to_bits()).collect();
        let next = self.counts.len() as u32;
        let row = *self.index.entry(key).or_insert(next);
        if row == next {
            self.rows.extend_from_slice(phi);
            self.counts.push(0.0);
            self.positives.push(0.0);
        }
        self.counts[row as usize] += 1.0;
        if label {
            self.positives[row as usize] += 1.0;
        }
        self.sequence.push((row, label));
    }

    /// Observations in arrival order.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64], bool)> + '_ {
        self.sequence.iter().map(move |&(row, label)| {
            let start = row as usize * self.dim;
            (&self.rows[start..start + self.dim], label)
        })
    }

    /// Orthogonal projection of `theta` onto the span of the logged
    /// features. The likelihood only sees `φᵀθ`, so this picks the
    /// minimum-norm member of a non-unique set of maximizers.
    fn project_to_span(&self, theta: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut gram = DMatrix::<f64>::zeros(d, d);
        for g in 0..self.counts.len() {
            let phi = self.row(g);
            for c in 0..d {
                for r in 0..d {
                    gram[(r, c)] += phi[r] * phi[c];
                }
            }
        }
        let eig = nalgebra::SymmetricEigen::new(gram);
        let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let t = DVector::from_column_slice(theta);
        let mut out = DVector::<f64>::zeros(d);
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > 1e-10 * top {
                let u = eig.eigenvectors.column(k);
                out += u * u.dot(&t);
            }
        }
        out.iter().copied().collect()
    }

    fn row(&self, g: usize) -> &[f64] {
        &self.rows[g * self.dim..(g + 1) * self.dim]
    }

    /// Score of the ridge-penalized log-likelihood at `theta`; optionally also
    /// the observed information `Σ μ̇ φφᵀ + ridge·I`.
    fn evaluate(&self, theta: &[f64], ridge: f64, info: Option<&mut DMatrix<f64>>) -> Vec<f64> {
        let d = self.dim;
        let mut grad: Vec<f64> = theta.iter().map(|t| -ridge * t).collect();
        let mut upper = info.as_ref().map(|_| vec![0.0; d * d]);
        for g in 0..self.counts.len() {
            let phi = self.row(g);
            let z: f64 = phi.iter().zip(theta).map(|(a, b)| a * b).sum();
            let resid = self.positives[g] - self.counts[g] * sigmoid(z);
            for (gr, p) in grad.iter_mut().zip(phi) {
                *gr += resid * p;
            }
            if let Some(h) = upper.as_mut() {
                let w = self.counts[g] * sigmoid_derivative(z);
                for r in 0..d {
                    let wr = w * phi[r];
                    let row = &mut h[r * d..(r + 1) * d];
                    for c in r..d {
                        row[c] += wr * phi[c];
                    }
                }
            }
        }
        if let (Some(h), Some(out)) = (upper, info) {
            for r in 0..d {
                out[(r, r)] = h[r * d + r] + ridge;
                for c in (r + 1)..d {
                    out[(r, c)] = h[r * d + c];
                    out[(c, r)] = h[r * d + c];
                }
            }
        }
        grad
    }
}

/// Left side of the score equation, `Σ_s (d_s − μ(φ_sᵀθ)) φ_s`.
pub fn score_residual(theta: &[f64], log: &ObservationLog) -> Result<Vec<f64>> {
    if theta.len() != log.dim() {
        return Err(UssError::Precondition(format!(
            "theta has length {}, log dimension is {}",
            theta.len(),
            log.dim()
        )));
    }
    Ok(log.evaluate(theta, 0.0, None))
}

/// Result of a maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub theta: Vec<f64>,
    /// The root of the score equation was not usable and `theta` maximizes
    /// the likelihood over `‖θ‖ ≤ S` instead.
    pub projected: bool,
    pub iterations: usize,
    /// Norm of the (unpenalized) score at `theta`.
    pub score_norm: f64,
}

/// Solves the score equation warm-started at `theta_init`.
pub fn solve_mle(
    log: &ObservationLog,
    theta_init: &[f64],
    cfg: &ConfidenceConfig,
) -> Result<MleFit> {
    MleSolver::new(cfg.s_bound).solve(log, theta_init)
}

/// Damped Newton solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleSolver {
    pub max_iter: usize,
    /// Absolute tolerance on the score norm.
    pub tol: f64,
    pub s_bound: f64,
}

struct NewtonRun {
    theta: Vec<f64>,
    grad_norm: f64,
    converged: bool,
    iterations: usize,
    info: Option<DMatrix<f64>>,
    rank_deficient: bool,
    grad: Vec<f64>,
}

/// Warm-start material carried between consecutive fits of a growing log.
#[derive(Debug, Clone, Default)]
pub(crate) struct WarmStart {
    /// Information matrix near the starting point.
    pub info: Option<DMatrix<f64>>,
    /// Exact score of the log at the starting point.
    pub grad: Option<Vec<f64>>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl MleSolver {
    pub fn new(s_bound: f64) -> Self {
        Self {
            max_iter: 50,
            tol: 1e-10,
            s_bound,
        }
    }

    pub fn solve(&self, log: &ObservationLog, theta_init: &[f64]) -> Result<MleFit> {
        self.solve_warm(log, theta_init, WarmStart::default())
            .map(|(fit, _)| fit)
    }

    /// Like [`MleSolver::solve`], but may start from an approximate
    /// information matrix (typically the previous fit's, updated for the newly
    /// appended observations) and a known score at `theta_init`. Returns the
    /// same material for the fitted point when the fit is unconstrained.
    pub(crate) fn solve_warm(
        &self,
        log: &ObservationLog,
        theta_init: &[f64],
        warm: WarmStart,
    ) -> Result<(MleFit, WarmStart)> {
        if log.is_empty() {
            return Err(UssError::Precondition(
                "maximum-likelihood estimate needs at least one observation".into(),
            ));
        }
        if theta_init.len() != log.dim() {
            return Err(UssError::Precondition(format!(
                "initial theta has length {}, log dimension is {}",
                theta_init.len(),
                log.dim()
            )));
        }
        let (init, warm) = if theta_init.iter().all(|v| v.is_finite()) {
            (theta_init.to_vec(), warm)
        } else {
            (vec![0.0; log.dim()], WarmStart::default())
        };
        let grad0 = warm.grad.filter(|g| g.len() == log.dim());
        let divergence = 10.0 * self.s_bound.max(1.0);
        let run = self.newton(log, 0.0, init, warm.info, grad0, self.max_iter, divergence);
        let mut run = run;
        if run.converged && (run.rank_deficient || log.distinct() < log.dim()) {
            run.theta = log.project_to_span(&run.theta);
        }
        if run.converged && norm(&run.theta) <= self.s_bound {
            let fit = MleFit {
                theta: run.theta,
                projected: false,
                iterations: run.iterations,
                score_norm: run.grad_norm,
            };
            let warm = WarmStart {
                info: run.info,
                grad: Some(run.grad),
            };
            return Ok((fit, warm));
        }
        let (theta, iterations) = self.ball_constrained(log, &run.theta, run.iterations)?;
        let score_norm = norm(&log.evaluate(&theta, 0.0, None));
        Ok((
            MleFit {
                theta,
                projected: true,
                iterations,
                score_norm,
            },
            WarmStart::default(),
        ))
    }

    /// Damped Newton ascent on the ridge-penalized log-likelihood.
    ///
    /// A supplied information matrix is used until it stops delivering a
    /// halving of the score norm per step, after which the exact information
    /// is recomputed every iteration.
    fn newton(
        &self,
        log: &ObservationLog,
        ridge: f64,
        mut theta: Vec<f64>,
        hint: Option<DMatrix<f64>>,
        grad0: Option<Vec<f64>>,
        max_iter: usize,
        divergence: f64,
    ) -> NewtonRun {
        let d = log.dim();
        let mut grad = grad0.unwrap_or_else(|| log.evaluate(&theta, ridge, None));
        let mut grad_norm = norm(&grad);
        let mut info = hint;
        let mut fresh = info.is_none();
        let mut iterations = 0;
        let mut buf = DMatrix::<f64>::zeros(d, d);
        let mut rank_deficient = false;
        while grad_norm > self.tol && iterations < max_iter {
            iterations += 1;
            if fresh || info.is_none() {
                let _ = log.evaluate(&theta, ridge, Some(&mut buf));
                info = Some(buf.clone());
                fresh = true;
            }
            let h = info.as_ref().expect("information matrix set above");
            let step = match solve_spd(h, &grad) {
                Some((s, shifted)) => {
                    rank_deficient |= shifted && fresh;
                    s
                }
                None if !fresh => {
                    fresh = true;
                    continue;
                }
                None => break,
            };
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let cand: Vec<f64> = theta
                    .iter()
                    .zip(&step)
                    .map(|(t, s)| t + scale * s)
                    .collect();
                let g = log.evaluate(&cand, ridge, None);
                let gn = norm(&g);
                if gn < grad_norm {
                    accepted = Some((cand, g, gn));
                    break;
                }
                scale *= 0.5;
            }
            match accepted {
                Some((cand, g, gn)) => {
                    let slow = gn > 0.5 * grad_norm;
                    theta = cand;
                    grad = g;
                    grad_norm = gn;
                    if !fresh && slow {
                        fresh = true;
                    }
                }
                None if !fresh => fresh = true,
                None => break,
            }
            if norm(&theta) > divergence {
                break;
            }
        }
        NewtonRun {
            converged: grad_norm <= self.tol,
            theta,
            grad_norm,
            iterations,
            info,
            rank_deficient,
            grad,
        }
    }

    /// Maximizes the log-likelihood over `‖θ‖ ≤ S`.
    ///
    /// Only called when the unconstrained maximizer lies outside the ball (or
    /// does not exist), so the solution sits on the sphere and satisfies
    /// `score(θ) = ηθ` for some `η > 0`. `η` is found by a safeguarded Newton
    /// iteration on `1/‖θ(η)‖ − 1/S`, where `θ(η)` maximizes the
    /// `η`-penalized likelihood.
    fn ball_constrained(
        &self,
        log: &ObservationLog,
        start: &[f64],
        mut iterations: usize,
    ) -> Result<(Vec<f64>, usize)> {
        let s = self.s_bound;
        let start_norm = norm(start);
        let mut theta: Vec<f64> = if start_norm > s {
            start.iter().map(|v| v * s / start_norm).collect()
        } else {
            start.to_vec()
        };
        let g0 = log.evaluate(&theta, 0.0, None);
        let dot: f64 = g0.iter().zip(&theta).map(|(a, b)| a * b).sum();
        let mut eta = (dot / (s * s)).max(1e-8);
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let inner_tol = self.tol;
        for _ in 0..200 {
            let inner = MleSolver {
                tol: inner_tol,
                ..*self
            };
            let run = inner.newton(log, eta, theta.clone(), None, None, 100, f64::INFINITY);
            iterations += run.iterations;
            theta = run.theta;
            let nrm = norm(&theta);
            if (nrm - s).abs() <= 1e-10 * s {
                break;
            }
            if nrm > s {
                lo = eta;
            } else {
                hi = eta;
            }
            let mut next = f64::NAN;
            if let Some(h) = run.info.as_ref() {
                if let Some((q, _)) = solve_spd(h, &theta) {
                    let q2: f64 = q.iter().zip(&theta).map(|(a, b)| a * b).sum();
                    if q2 > 0.0 {
                        next = eta + (nrm - s) / s * nrm * nrm / q2;
                    }
                }
            }
            if !(next > lo && next < hi) || !next.is_finite() {
                next = if hi.is_finite() {
                    if lo > 0.0 {
                        (lo * hi).sqrt()
                    } else {
                        hi / 10.0
                    }
                } else {
                    eta * 10.0
                };
            }
            if hi.is_finite() && (hi - lo) <= 1e-15 * hi {
                break;
            }
            eta = next;
        }
        let nrm = norm(&theta);
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(UssError::InternalState(
                "constrained maximum-likelihood solve produced non-finite parameters".into(),
            ));
        }
        // The maximizer lies on the sphere. If the likelihood was too flat
        // for the inner solves to reach it, move radially onto it.
        if nrm > 0.0 {
            theta.iter_mut().for_each(|v| *v *= s / nrm);
        }
        Ok((theta, iterations))
    }
}

/// Solves `h x = rhs` for a symmetric positive-semidefinite `h`.
///
/// When `h` is singular (features not yet spanning the space) a small,
/// escalating diagonal shift is added; the score always lies in the span of
/// the features, so the shifted step still drives it to zero.
fn solve_spd(h: &DMatrix<f64>, rhs: &[f64]) -> Option<(Vec<f64>, bool)> {
    let d = h.nrows();
    let scale = (h.trace() / d as f64).abs().max(1e-300);
    let mut shift = 0.0;
    for _ in 0..8 {
        let mut m = h.clone();
        for k in 0..d {
            m[(k, k)] += shift;
        }
        if let Some(chol) = m.cholesky() {
            let x = chol.solve(&DVector::from_column_slice(rhs));
            if x.iter().all(|v| v.is_finite()) {
                return Some((x.iter().copied().collect(), shift > 0.0));
            }
        }
        shift = if shift == 0.0 {
            1e-12 * scale
        } else {
            shift * 100.0
        };
    }
    None
}

/// Maximizer of the (unpenalized) likelihood on the sphere `‖θ‖ = s_bound`,
/// flagged projected. Used for degenerate training data.
pub fn fit_on_sphere(log: &ObservationLog, s_bound: f64) -> Result<MleFit> {
    if log.is_empty() {
        return Err(UssError::Precondition("cannot fit an empty log".into()));
    }
    let solver = MleSolver::new(s_bound);
    let start = vec![0.0; log.dim()];
    let (theta, iterations) = solver.ball_constrained(log, &start, 0)?;
    let score_norm = norm(&log.evaluate(&theta, 0.0, None));
    Ok(MleFit {
        theta,
        projected: true,
        iterations,
        score_norm,
    })
}

/// Ridge-penalized logistic fit used to train the cascade's arms:
/// maximizes `Σ log-lik(θ) − (ridge/2)‖θ‖²`.
///
/// When the penalized optimum lies outside `‖θ‖ ≤ s_bound` (or does not
/// exist, e.g. separable data with `ridge = 0`) the fit falls back to the
/// constrained maximizer on that ball and is flagged projected.
pub fn fit_penalized(log: &ObservationLog, ridge: f64, s_bound: f64) -> Result<MleFit> {
    if log.is_empty() {
        return Err(UssError::Precondition("cannot fit an empty log".into()));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(UssError::Precondition(format!(
            "ridge must be nonnegative, got {ridge}"
        )));
    }
    let solver = MleSolver {
        max_iter: 100,
        ..MleSolver::new(s_bound)
    };
    let init = vec![0.0; log.dim()];
    let run = solver.newton(
        log,
        ridge,
        init,
        None,
        None,
        solver.max_iter,
        10.0 * s_bound.max(1.0),
    );
    if run.converged && norm(&run.theta) <= s_bound {
        return Ok(MleFit {
            score_norm: run.grad_norm,
            theta: run.theta,
            projected: false,
            iterations: run.iterations,
        });
    }
    let (theta, iterations) = solver.ball_constrained(log, &run.theta, run.iterations)?;
    let score_norm = norm(&log.evaluate(&theta, ridge, None));
    Ok(MleFit {
        theta,
        projected: true,
        iterations,
        score_norm,
    })
}
