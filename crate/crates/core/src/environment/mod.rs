//! Ground-truth cascades: arms as fixed logistic classifiers, plus the oracle
//! quantities (error rates, disagreement probabilities, optimal arm, WD
//! margin) that only the simulator can see.
//!
//! Arms are 0-based throughout the library.

mod data;
mod training;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UssError};
use crate::glm::{sigmoid, FeatureMapConfig};

pub use data::{
    generate_synthetic, load_dataset, read_contexts_csv, synthetic_label, write_contexts_csv,
    ColumnScaling, Dataset, DatasetSchema,
};
pub use training::{train_arm, TrainedArm};

/// One context with its (hidden) true label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledContext {
    pub x: Vec<f64>,
    pub y: bool,
}

/// Outputs of every arm for one round; policies only ever see a prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundFeedback {
    pub y_true: bool,
    pub arm_outputs: Vec<bool>,
}

/// Logistic classifier over a subset of the raw context coordinates.
///
/// With `quadratic` set, the inputs are the selected coordinates followed by
/// their pairwise products `x_a·x_b` (`a ≤ b` in column-list order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub columns: Vec<usize>,
    pub intercept: f64,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub quadratic: bool,
}

impl ArmModel {
    pub fn linear(columns: Vec<usize>, intercept: f64, weights: Vec<f64>) -> Self {
        Self {
            columns,
            intercept,
            weights,
            quadratic: false,
        }
    }

    /// Number of weights the feature layout calls for.
    pub fn input_len(&self) -> usize {
        arm_input_len(self.columns.len(), self.quadratic)
    }

    /// Probability that the arm outputs label 1 on `x`.
    pub fn prob(&self, x: &[f64]) -> f64 {
        let mut z = self.intercept;
        let mut w = self.weights.iter();
        for &c in &self.columns {
            z += w.next().copied().unwrap_or(0.0) * x[c];
        }
        if self.quadratic {
            for (a, &ca) in self.columns.iter().enumerate() {
                for &cb in &self.columns[a..] {
                    z += w.next().copied().unwrap_or(0.0) * x[ca] * x[cb];
                }
            }
        }
        sigmoid(z)
    }
}

pub(crate) fn arm_input_len(columns: usize, quadratic: bool) -> usize {
    if quadratic {
        columns + columns * (columns + 1) / 2
    } else {
        columns
    }
}

/// Appends the arm inputs of `x` for the given layout to `out`.
pub(crate) fn arm_inputs(x: &[f64], columns: &[usize], quadratic: bool, out: &mut Vec<f64>) {
    out.extend(columns.iter().map(|&c| x[c]));
    if quadratic {
        for (a, &ca) in columns.iter().enumerate() {
            for &cb in &columns[a..] {
                out.push(x[ca] * x[cb]);
            }
        }
    }
}

/// Prefix sums of the per-arm costs.
pub fn cumulative_costs(costs: &[f64]) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    costs
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(UssError::Validation(format!(
                    "cost of arm {} must be a nonnegative number, got {c}",
                    i + 1
                )));
            }
            acc += c;
            Ok(acc)
        })
        .collect()
}

/// A fully specified cascade environment. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    costs: Vec<f64>,
    cum_costs: Vec<f64>,
    tradeoff: Vec<f64>,
    arms: Vec<ArmModel>,
    feature_map: FeatureMapConfig,
    /// Names of the raw context coordinates (informational).
    #[serde(default)]
    feature_names: Vec<String>,
    /// Affine maps that took raw dataset columns into `[-1, 1]`, if any.
    #[serde(default)]
    scaling: Vec<ColumnScaling>,
}

impl ProblemInstance {
    pub fn new(costs: Vec<f64>, arms: Vec<ArmModel>, input_dim: usize) -> Result<Self> {
        let tradeoff = vec![1.0; costs.len()];
        Self::with_tradeoff(costs, tradeoff, arms, input_dim)
    }

    pub fn with_tradeoff(
        costs: Vec<f64>,
        tradeoff: Vec<f64>,
        arms: Vec<ArmModel>,
        input_dim: usize,
    ) -> Result<Self> {
        let cum_costs = cumulative_costs(&costs)?;
        let inst = Self {
            costs,
            cum_costs,
            tradeoff,
            arms,
            feature_map: FeatureMapConfig::quadratic(input_dim)?,
            feature_names: Vec::new(),
            scaling: Vec::new(),
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_metadata(mut self, names: Vec<String>, scaling: Vec<ColumnScaling>) -> Self {
        self.feature_names = names;
        self.scaling = scaling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.costs.len();
        if k == 0 {
            return Err(UssError::Validation(
                "instance needs at least one arm".into(),
            ));
        }
        if self.arms.len() != k || self.tradeoff.len() != k || self.cum_costs.len() != k {
            return Err(UssError::Validation(format!(
                "instance has {k} costs but {} arms and {} trade-off weights",
                self.arms.len(),
                self.tradeoff.len()
            )));
        }
        let expected = cumulative_costs(&self.costs)?;
        if expected != self.cum_costs {
            return Err(UssError::Validation(
                "cumulative costs do not match per-arm costs".into(),
            ));
        }
        if let Some(l) = self.tradeoff.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(UssError::Validation(format!(
                "trade-off weights must be positive, got {l}"
            )));
        }
        self.feature_map.validate()?;
        let d = self.feature_map.input_dim;
        for (i, arm) in self.arms.iter().enumerate() {
            if arm.input_len() != arm.weights.len() {
                return Err(UssError::Validation(format!(
                    "arm {} expects {} weights but has {}",
                    i + 1,
                    arm.input_len(),
                    arm.weights.len()
                )));
            }
            if let Some(c) = arm.columns.iter().find(|&&c| c >= d) {
                return Err(UssError::Validation(format!(
                    "arm {} uses column {c}, contexts have {d} coordinates",
                    i + 1
                )));
            }
            if !arm.intercept.is_finite() || arm.weights.iter().any(|w| !w.is_finite()) {
                return Err(UssError::Validation(format!(
                    "arm {} has non-finite parameters",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.costs.len()
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn cum_costs(&self) -> &[f64] {
        &self.cum_costs
    }

    pub fn tradeoff(&self) -> &[f64] {
        &self.tradeoff
    }

    pub fn arms(&self) -> &[ArmModel] {
        &self.arms
    }

    pub fn feature_map(&self) -> &FeatureMapConfig {
        &self.feature_map
    }

    pub fn input_dim(&self) -> usize {
        self.feature_map.input_dim
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn scaling(&self) -> &[ColumnScaling] {
        &self.scaling
    }

    fn check_context(&self, ctx: &LabeledContext) -> Result<()> {
        if ctx.x.len() != self.input_dim() {
            return Err(UssError::Precondition(format!(
                "context has {} coordinates, instance expects {}",
                ctx.x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn check_arm(&self, i: usize) -> Result<()> {
        if i >= self.k() {
            return Err(UssError::Precondition(format!(
                "arm index {i} out of range for {} arms",
                self.k()
            )));
        }
        Ok(())
    }

    /// Draws every arm's output independently given the context.
    pub fn sample_round<R: Rng + ?Sized>(
        &self,
        ctx: &LabeledContext,
        rng: &mut R,
    ) -> RoundFeedback {
        let arm_outputs = self
            .arms
            .iter()
            .map(|a| rng.gen::<f64>() < a.prob(&ctx.x))
            .collect();
        RoundFeedback {
            y_true: ctx.y,
            arm_outputs,
        }
    }

    /// `γ_i(x)`: probability that arm `i` mislabels the context.
    pub fn error_rate(&self, i: usize, ctx: &LabeledContext) -> Result<f64> {
        self.check_arm(i)?;
        self.check_context(ctx)?;
        Ok(error_from_prob(self.arms[i].prob(&ctx.x), ctx.y))
    }

    /// `p_ij(x)`; zero when `i == j`.
    pub fn pair_disagreement(&self, i: usize, j: usize, ctx: &LabeledContext) -> Result<f64> {
        self.check_arm(i)?;
        self.check_arm(j)?;
        self.check_context(ctx)?;
        if i == j {
            return Ok(0.0);
        }
        Ok(disagreement(
            self.arms[i].prob(&ctx.x),
            self.arms[j].prob(&ctx.x),
        ))
    }

    /// Every oracle quantity for one context, computed once.
    pub fn oracle(&self, ctx: &LabeledContext) -> Result<ContextOracle> {
        self.check_context(ctx)?;
        let probs: Vec<f64> = self.arms.iter().map(|a| a.prob(&ctx.x)).collect();
        Ok(ContextOracle::from_probs(
            probs,
            ctx.y,
            &self.cum_costs,
            &self.tradeoff,
        ))
    }

    pub fn optimal_arm(&self, ctx: &LabeledContext) -> Result<usize> {
        Ok(self.oracle(ctx)?.i_star)
    }

    pub fn xi_margin(&self, ctx: &LabeledContext) -> Result<f64> {
        Ok(self.oracle(ctx)?.xi)
    }

    pub fn oracle_select(&self, ctx: &LabeledContext) -> Result<usize> {
        Ok(self.oracle(ctx)?.oracle_select(&self.cum_costs))
    }

    /// Fraction of `contexts` whose WD margin is positive.
    pub fn wd_fraction(&self, contexts: &[LabeledContext]) -> Result<f64> {
        if contexts.is_empty() {
            return Err(UssError::Precondition("wd_fraction needs contexts".into()));
        }
        let mut hits = 0usize;
        for ctx in contexts {
            if self.xi_margin(ctx)? > 0.0 {
                hits += 1;
            }
        }
        Ok(hits as f64 / contexts.len() as f64)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| UssError::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| UssError::io(path, e))?;
        let inst: Self = serde_json::from_str(&text)?;
        inst.validate()?;
        Ok(inst)
    }
}

fn error_from_prob(p_one: f64, y: bool) -> f64 {
    if y {
        1.0 - p_one
    } else {
        p_one
    }
}

/// Disagreement probability of two independent Bernoulli outputs.
pub fn disagreement(pi: f64, pj: f64) -> f64 {
    pi * (1.0 - pj) + pj * (1.0 - pi)
}

/// Minimum of the cascade selection set
/// `{i : C_j − C_i > p_ij for all j > i} ∪ {K}` for a given matrix of
/// disagreement values (`p(i, j)` is only queried with `i < j`).
pub fn cascade_stop(cum_costs: &[f64], mut p: impl FnMut(usize, usize) -> f64) -> usize {
    let k = cum_costs.len();
    (0..k)
        .find(|&i| ((i + 1)..k).all(|j| cum_costs[j] - cum_costs[i] > p(i, j)))
        .unwrap_or(k - 1)
}

/// Oracle view of one context.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextOracle {
    /// `μ(x_colsᵀθ_i)` for each arm.
    pub probs: Vec<f64>,
    /// `γ_i(x)`.
    pub errors: Vec<f64>,
    /// `γ_i(x) + λ_i C_i`.
    pub totals: Vec<f64>,
    pub i_star: usize,
    /// WD margin; `+∞` when the optimal arm is the last one.
    pub xi: f64,
}

impl ContextOracle {
    pub fn from_probs(probs: Vec<f64>, y: bool, cum_costs: &[f64], tradeoff: &[f64]) -> Self {
        let errors: Vec<f64> = probs.iter().map(|&p| error_from_prob(p, y)).collect();
        let totals: Vec<f64> = errors
            .iter()
            .zip(cum_costs.iter().zip(tradeoff))
            .map(|(g, (c, l))| g + l * c)
            .collect();
        // Largest index among the minimizers.
        let mut i_star = 0;
        for (i, &v) in totals.iter().enumerate() {
            if v <= totals[i_star] {
                i_star = i;
            }
        }
        let xi = ((i_star + 1)..probs.len())
            .map(|j| cum_costs[j] - cum_costs[i_star] - disagreement(probs[i_star], probs[j]))
            .fold(f64::INFINITY, f64::min);
        Self {
            probs,
            errors,
            totals,
            i_star,
            xi,
        }
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            disagreement(self.probs[i], self.probs[j])
        }
    }

    pub fn wd(&self) -> bool {
        self.xi > 0.0
    }

    pub fn oracle_select(&self, cum_costs: &[f64]) -> usize {
        cascade_stop(cum_costs, |i, j| self.p(i, j))
    }
}
