//! Experiment configuration documents (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, UssError};
use crate::glm::{kappa_lower_bound, ConfidenceConfig, RefitSchedule};
use crate::policies::{ExplorationMode, PolicyKind, RadiusMode};

/// Where contexts come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceSpec {
    /// Uniform contexts on `(-1, 1)³` labelled by the synthetic rule.
    Synthetic { n: usize, seed: u64 },
    /// A CSV file; relative paths resolve against the config file's
    /// directory.
    Dataset {
        path: PathBuf,
        features: Vec<String>,
        label: String,
    },
}

/// How rounds pick a context from the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextOrder {
    /// Uniform draws with replacement, independent per repetition.
    Iid,
    /// Pool order, wrapping around.
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    /// Feature names the arm's classifier sees.
    pub features: Vec<String>,
    /// ℓ₂ penalty on the mean log-loss used to train the arm.
    pub reg: f64,
    /// Also feed the classifier pairwise products of its features.
    #[serde(default)]
    pub quadratic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub source: SourceSpec,
    pub costs: Vec<f64>,
    pub arms: Vec<ArmSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tradeoff: Option<Vec<f64>>,
    /// Defaults to IID for synthetic sources and round-robin for datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<ContextOrder>,
}

impl InstanceSpec {
    pub fn order(&self) -> ContextOrder {
        self.order.unwrap_or(match self.source {
            SourceSpec::Synthetic { .. } => ContextOrder::Iid,
            SourceSpec::Dataset { .. } => ContextOrder::RoundRobin,
        })
    }

    /// Names of the raw context coordinates.
    pub fn feature_names(&self) -> Vec<String> {
        match &self.source {
            SourceSpec::Synthetic { .. } => vec!["x1".into(), "x2".into(), "x3".into()],
            SourceSpec::Dataset { features, .. } => features.clone(),
        }
    }

    /// Column indices of each arm's features.
    pub fn arm_columns(&self) -> Result<Vec<Vec<usize>>> {
        let names = self.feature_names();
        self.arms
            .iter()
            .enumerate()
            .map(|(a, arm)| {
                arm.features
                    .iter()
                    .map(|f| {
                        names.iter().position(|n| n == f).ok_or_else(|| {
                            UssError::Config(format!("arm {} uses unknown feature '{f}'", a + 1))
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

/// Shared defaults for the learning policies; each field can be overridden
/// per policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceSpec {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Link-slope lower bound; `null` means `μ̇(S + 1)`.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default = "default_s_bound")]
    pub s_bound: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_delta() -> f64 {
    0.05
}
fn default_sigma() -> f64 {
    0.1
}
fn default_s_bound() -> f64 {
    5.0
}
fn default_lambda() -> f64 {
    1.0
}

impl Default for ConfidenceSpec {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            sigma: default_sigma(),
            kappa: None,
            s_bound: default_s_bound(),
            lambda: default_lambda(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    #[serde(flatten)]
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploration: Option<ExplorationMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<RadiusMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refit: Option<RefitSchedule>,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            delta: None,
            sigma: None,
            kappa: None,
            s_bound: None,
            lambda: None,
            exploration: None,
            radius: None,
            refit: None,
        }
    }

    /// Confidence parameters after applying this policy's overrides.
    pub fn resolve(
        &self,
        defaults: &ConfidenceSpec,
        arms: usize,
        lifted_dim: usize,
    ) -> ConfidenceConfig {
        let s_bound = self.s_bound.unwrap_or(defaults.s_bound);
        ConfidenceConfig {
            delta: self.delta.unwrap_or(defaults.delta),
            sigma: self.sigma.unwrap_or(defaults.sigma),
            kappa: self
                .kappa
                .or(defaults.kappa)
                .unwrap_or_else(|| kappa_lower_bound(s_bound)),
            arms,
            lifted_dim,
            s_bound,
            lambda: self.lambda.unwrap_or(defaults.lambda),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub instance: InstanceSpec,
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub confidence: ConfidenceSpec,
    #[serde(default)]
    pub exploration: ExplorationMode,
    #[serde(default)]
    pub radius: RadiusMode,
    #[serde(default)]
    pub refit: RefitSchedule,
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads a config and resolves a relative dataset path against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| UssError::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| UssError::Config(format!("{}: {e}", path.display())))?;
        if let SourceSpec::Dataset { path: data, .. } = &mut cfg.instance.source {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(UssError::Config(m));
        if self.horizon == 0 {
            return fail("horizon must be at least 1".into());
        }
        if self.reps == 0 {
            return fail("reps must be at least 1".into());
        }
        let k = self.instance.costs.len();
        if k == 0 {
            return fail("instance needs at least one cost".into());
        }
        if self.instance.arms.len() != k {
            return fail(format!(
                "{} costs but {} arm specifications",
                k,
                self.instance.arms.len()
            ));
        }
        if let Some(t) = &self.instance.tradeoff {
            if t.len() != k {
                return fail(format!("{} costs but {} trade-off weights", k, t.len()));
            }
        }
        if let Some(c) = self
            .instance
            .costs
            .iter()
            .find(|c| !(**c >= 0.0 && c.is_finite()))
        {
            return fail(format!("costs must be nonnegative, got {c}"));
        }
        if let Some(a) = self
            .instance
            .arms
            .iter()
            .find(|a| !(a.reg >= 0.0 && a.reg.is_finite()))
        {
            return fail(format!(
                "arm regularization must be nonnegative, got {}",
                a.reg
            ));
        }
        if let SourceSpec::Synthetic { n, .. } = self.instance.source {
            if n == 0 {
                return fail("synthetic source needs n >= 1".into());
            }
        }
        self.instance.arm_columns()?;
        if self.policies.is_empty() {
            return fail("no policies configured".into());
        }
        let d = self.instance.feature_names().len();
        let lifted = 1 + d + d * (d + 1) / 2;
        let mut labels = std::collections::BTreeSet::new();
        for p in &self.policies {
            if !labels.insert(p.kind.label()) {
                return fail(format!("policy '{}' listed twice", p.kind.label()));
            }
            if let PolicyKind::Fixed { arm } = p.kind {
                if arm == 0 || arm > k {
                    return fail(format!("fixed policy arm {arm} outside 1..={k}"));
                }
            }
            if !matches!(p.kind, PolicyKind::Fixed { .. } | PolicyKind::Random) {
                p.resolve(&self.confidence, k, lifted).validate()?;
                p.refit.unwrap_or(self.refit).validate()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> &'static str {
        r#"{
            "name": "demo",
            "instance": {
                "source": {"type": "synthetic", "n": 100, "seed": 3},
                "costs": [0.01, 0.5],
                "arms": [{"features": ["x1"], "reg": 1.0}, {"features": ["x1", "x2", "x3"], "reg": 0.01}]
            },
            "policies": [
                {"kind": "uss_pd", "kappa": 0.2},
                {"kind": "fixed", "arm": 2},
                {"kind": "random"}
            ],
            "horizon": 50,
            "reps": 2,
            "seed": 9
        }"#
    }

    #[test]
    fn parses_with_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(sample()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.confidence.delta, 0.05);
        assert_eq!(cfg.confidence.sigma, 0.1);
        assert_eq!(cfg.exploration, ExplorationMode::Adaptive { cap: 500 });
        assert_eq!(cfg.instance.order(), ContextOrder::Iid);
        assert_eq!(cfg.policies[1].kind, PolicyKind::Fixed { arm: 2 });
        let conf = cfg.policies[0].resolve(&cfg.confidence, 2, 10);
        assert_eq!(conf.kappa, 0.2);
        let conf = cfg.policies[2].resolve(&cfg.confidence, 2, 10);
        assert_eq!(conf.kappa, kappa_lower_bound(5.0));
        assert_eq!(
            cfg.instance.arm_columns().unwrap(),
            vec![vec![0], vec![0, 1, 2]]
        );
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let base: ExperimentConfig = serde_json::from_str(sample()).unwrap();
        let mut c = base.clone();
        c.horizon = 0;
        assert!(matches!(c.validate(), Err(UssError::Config(_))));
        let mut c = base.clone();
        c.instance.costs.push(0.3);
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.policies[1].kind = PolicyKind::Fixed { arm: 3 };
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.instance.arms[0].features = vec!["nope".into()];
        assert!(c.validate().is_err());
        let mut c = base;
        c.policies[0].kappa = Some(0.5);
        assert!(c.validate().is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg: ExperimentConfig = serde_json::from_str(sample()).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
