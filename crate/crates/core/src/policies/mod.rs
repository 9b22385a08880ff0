//! Arm-selection policies behind a single choose/learn interface.
//!
//! The USS-PD family keeps one disagreement estimator per ordered arm pair
//! and walks the cascade from the cheapest arm, stopping at the first arm
//! whose optimistic disagreement with every later arm is below the extra
//! cost of going further. The supervised variant replaces disagreements by
//! per-arm error estimates. `fixed` and `random` are baselines.

use log::warn;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::environment::cascade_stop;
use crate::error::{Result, UssError};
use crate::glm::{
    alpha_radius, beta_radius, ConfidenceConfig, FeatureMapConfig, GlmEstimator, PairEstimator,
    RefitSchedule,
};

/// Which algorithm a policy runs. Fixed arms are 1-based, as in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    UssPd,
    UssPdLambda,
    Supervised,
    Fixed { arm: usize },
    Random,
}

impl PolicyKind {
    /// Short label used in file names and CSV rows.
    pub fn label(&self) -> String {
        match self {
            PolicyKind::UssPd => "uss_pd".into(),
            PolicyKind::UssPdLambda => "uss_pd_lambda".into(),
            PolicyKind::Supervised => "supervised".into(),
            PolicyKind::Fixed { arm } => format!("fixed{arm}"),
            PolicyKind::Random => "random".into(),
        }
    }

    fn learns(&self) -> bool {
        matches!(
            self,
            PolicyKind::UssPd | PolicyKind::UssPdLambda | PolicyKind::Supervised
        )
    }
}

/// How the initial arm-`K` rounds are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExplorationMode {
    /// Play arm `K` until every estimator's correlation matrix has minimum
    /// eigenvalue at least one, or `cap` rounds have passed.
    Adaptive { cap: usize },
    /// Play arm `K` for exactly `m` rounds.
    Fixed { m: usize },
}

impl Default for ExplorationMode {
    fn default() -> Self {
        ExplorationMode::Adaptive { cap: 500 }
    }
}

/// Argument fed to the confidence radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMode {
    /// Number of completed rounds `t − 1`.
    #[default]
    Round,
    /// Number of observations held by the estimator being queried.
    PairCount,
}

/// One row of the stopping test: arm `arm` against each later arm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub arm: usize,
    /// `(j, value)` pairs: the optimistic disagreement (or error gap for the
    /// supervised variant) compared against `C_j − C_arm`.
    pub values: Vec<(usize, f64)>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    /// 0-based selected arm.
    pub arm: usize,
    pub probes: Vec<Probe>,
    pub explored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Phase {
    Exploring { rounds: usize },
    Done { rounds: usize },
}

/// A policy with its learned state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Policy {
    kind: PolicyKind,
    conf: ConfidenceConfig,
    exploration: ExplorationMode,
    radius_mode: RadiusMode,
    cum_costs: Vec<f64>,
    feature_map: FeatureMapConfig,
    /// Pair estimators in lexicographic `(i, j)` order.
    pairs: Vec<PairEstimator>,
    /// Per-arm error estimators (supervised variant only).
    arm_errors: Vec<GlmEstimator>,
    #[serde(default)]
    refit: RefitSchedule,
    phase: Phase,
    t: u64,
    pending: Option<usize>,
}

/// Position of pair `(i, j)`, `i < j < k`, in lexicographic order.
pub fn pair_index(i: usize, j: usize, k: usize) -> usize {
    i * (2 * k - i - 1) / 2 + (j - i - 1)
}

impl Policy {
    /// Builds a policy for a cascade with the given cumulative costs.
    ///
    /// `conf.arms` and `conf.lifted_dim` must agree with the costs and the
    /// feature map.
    pub fn new(
        kind: PolicyKind,
        cum_costs: &[f64],
        feature_map: FeatureMapConfig,
        conf: ConfidenceConfig,
        exploration: ExplorationMode,
        radius_mode: RadiusMode,
    ) -> Result<Self> {
        let k = cum_costs.len();
        if k == 0 {
            return Err(UssError::Config("policy needs at least one arm".into()));
        }
        if let PolicyKind::Fixed { arm } = kind {
            if arm == 0 || arm > k {
                return Err(UssError::Config(format!(
                    "fixed policy arm {arm} outside 1..={k}"
                )));
            }
        }
        if kind.learns() {
            conf.validate()?;
            if conf.arms != k || conf.lifted_dim != feature_map.lifted_dim {
                return Err(UssError::Config(format!(
                    "confidence config expects K = {}, d' = {} but the instance has K = {k}, d' = {}",
                    conf.arms, conf.lifted_dim, feature_map.lifted_dim
                )));
            }
            if kind == PolicyKind::UssPdLambda && conf.lambda <= 0.0 {
                return Err(UssError::Config("uss_pd_lambda needs lambda > 0".into()));
            }
        }
        let d = feature_map.lifted_dim;
        let ridge = if kind == PolicyKind::UssPdLambda {
            conf.lambda
        } else {
            0.0
        };
        let mut pairs = Vec::new();
        if matches!(kind, PolicyKind::UssPd | PolicyKind::UssPdLambda) {
            for i in 0..k {
                for j in (i + 1)..k {
                    pairs.push(PairEstimator::new((i, j), d, ridge, conf.s_bound)?);
                }
            }
        }
        let mut arm_errors = Vec::new();
        if kind == PolicyKind::Supervised {
            for _ in 0..k {
                arm_errors.push(GlmEstimator::new(d, 0.0, conf.s_bound)?);
            }
        }
        let mut policy = Self {
            kind,
            conf,
            exploration,
            radius_mode,
            cum_costs: cum_costs.to_vec(),
            feature_map,
            pairs,
            arm_errors,
            refit: RefitSchedule::EveryRound,
            phase: Phase::Exploring { rounds: 0 },
            t: 0,
            pending: None,
        };
        if !kind.learns() || policy.exploration_complete(0)? {
            policy.phase = Phase::Done { rounds: 0 };
        }
        Ok(policy)
    }

    /// Sets when the learned estimators refit their MLE. Estimates are
    /// refreshed lazily, right before the stopping rule reads them.
    pub fn with_refit(mut self, refit: RefitSchedule) -> Result<Self> {
        refit.validate()?;
        self.refit = refit;
        for p in &mut self.pairs {
            p.estimator = p.estimator.clone().with_schedule(refit);
        }
        for e in &mut self.arm_errors {
            *e = e.clone().with_schedule(refit);
        }
        Ok(self)
    }

    pub fn refit(&self) -> RefitSchedule {
        self.refit
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.cum_costs.len()
    }

    /// Completed choose/learn cycles.
    pub fn rounds(&self) -> u64 {
        self.t
    }

    pub fn is_exploring(&self) -> bool {
        matches!(self.phase, Phase::Exploring { .. })
    }

    /// Number of forced-exploration rounds played so far (final once
    /// exploration is over).
    pub fn exploration_rounds(&self) -> usize {
        match self.phase {
            Phase::Exploring { rounds } | Phase::Done { rounds } => rounds,
        }
    }

    pub fn pairs(&self) -> &[PairEstimator] {
        &self.pairs
    }

    pub fn pair(&self, i: usize, j: usize) -> &PairEstimator {
        &self.pairs[pair_index(i, j, self.k())]
    }

    pub fn arm_errors(&self) -> &[GlmEstimator] {
        &self.arm_errors
    }

    pub fn conf(&self) -> &ConfidenceConfig {
        &self.conf
    }

    fn exploration_complete(&self, rounds: usize) -> Result<bool> {
        match self.exploration {
            ExplorationMode::Fixed { m } => Ok(rounds >= m),
            ExplorationMode::Adaptive { cap } => {
                for p in &self.pairs {
                    if !p.estimator.min_eig_at_least(1.0)? {
                        if rounds >= cap {
                            warn!(
                                "exploration cap {cap} reached before pair {:?} was well conditioned",
                                p.pair
                            );
                            return Ok(true);
                        }
                        return Ok(false);
                    }
                }
                for e in &self.arm_errors {
                    if !e.min_eig_at_least(1.0)? {
                        if rounds >= cap {
                            warn!("exploration cap {cap} reached before error estimators were well conditioned");
                            return Ok(true);
                        }
                        return Ok(false);
                    }
                }
                Ok(true)
            }
        }
    }

    fn radius(&self, est: &GlmEstimator) -> Result<f64> {
        let arg = match self.radius_mode {
            RadiusMode::Round => self.t,
            RadiusMode::PairCount => est.n() as u64,
        };
        if self.kind == PolicyKind::UssPdLambda {
            beta_radius(arg, &self.conf)
        } else {
            Ok(alpha_radius(arg, &self.conf))
        }
    }

    /// Selects an arm for context `x`. Must be followed by exactly one call
    /// to [`Policy::learn`] (or [`Policy::supervised_learn`]).
    pub fn choose(&mut self, x: &[f64], rng: &mut dyn RngCore) -> Result<Decision> {
        if self.pending.is_some() {
            return Err(UssError::Protocol(
                "choose called twice without learning from the first decision".into(),
            ));
        }
        let k = self.k();
        let decision = match self.kind {
            PolicyKind::Fixed { arm } => Decision {
                arm: arm - 1,
                probes: vec![],
                explored: false,
            },
            PolicyKind::Random => Decision {
                arm: rng.gen_range(0..k),
                probes: vec![],
                explored: false,
            },
            _ if self.is_exploring() => Decision {
                arm: k - 1,
                probes: vec![],
                explored: true,
            },
            PolicyKind::UssPd | PolicyKind::UssPdLambda => self.choose_disagreement(x)?,
            PolicyKind::Supervised => self.choose_supervised(x)?,
        };
        self.pending = Some(decision.arm);
        Ok(decision)
    }

    fn choose_disagreement(&mut self, x: &[f64]) -> Result<Decision> {
        let phi = self.feature_map.lift(x)?;
        let k = self.k();
        let mut probes = Vec::new();
        for i in 0..k {
            let mut values = Vec::with_capacity(k - i - 1);
            let mut passed = true;
            for j in (i + 1)..k {
                let idx = pair_index(i, j, k);
                self.pairs[idx].estimator.refresh()?;
                let est = &self.pairs[idx];
                if est.n() == 0 && est.estimator.regularizer() == 0.0 {
                    return Err(UssError::InternalState(format!(
                        "pair ({}, {}) has no observations after exploration",
                        i + 1,
                        j + 1
                    )));
                }
                let r = self.radius(&est.estimator)?;
                let p = est.optimistic_disagreement(&phi, r)?;
                passed &= self.cum_costs[j] - self.cum_costs[i] > p;
                values.push((j, p));
            }
            probes.push(Probe {
                arm: i,
                values,
                passed,
            });
            if passed {
                return Ok(Decision {
                    arm: i,
                    probes,
                    explored: false,
                });
            }
        }
        unreachable!("the last arm always passes its empty test")
    }

    fn choose_supervised(&mut self, x: &[f64]) -> Result<Decision> {
        let phi = self.feature_map.lift(x)?;
        let k = self.k();
        let mut upper = Vec::with_capacity(k);
        let mut plug = Vec::with_capacity(k);
        for est in &mut self.arm_errors {
            est.refresh()?;
        }
        for est in &self.arm_errors {
            if est.n() == 0 {
                return Err(UssError::InternalState(
                    "error estimator has no observations after exploration".into(),
                ));
            }
            let r = self.radius(est)?;
            upper.push(est.optimistic(&phi, r)?);
            plug.push(est.plug_in(&phi));
        }
        let mut probes = Vec::new();
        for i in 0..k {
            let values: Vec<(usize, f64)> = ((i + 1)..k).map(|j| (j, upper[i] - plug[j])).collect();
            let passed = values
                .iter()
                .all(|&(j, gap)| self.cum_costs[j] - self.cum_costs[i] > gap);
            probes.push(Probe {
                arm: i,
                values,
                passed,
            });
            if passed {
                return Ok(Decision {
                    arm: i,
                    probes,
                    explored: false,
                });
            }
        }
        unreachable!("the last arm always passes its empty test")
    }

    fn take_pending(&mut self, prefix: &[bool]) -> Result<usize> {
        let arm = self
            .pending
            .ok_or_else(|| UssError::Protocol("learn called without a preceding choose".into()))?;
        if prefix.len() != arm + 1 {
            return Err(UssError::Protocol(format!(
                "feedback prefix has {} outputs but arm {} was selected",
                prefix.len(),
                arm + 1
            )));
        }
        self.pending = None;
        Ok(arm)
    }

    fn finish_round(&mut self, explored: bool) -> Result<()> {
        self.t += 1;
        if let Phase::Exploring { rounds } = self.phase {
            let rounds = rounds + usize::from(explored);
            self.phase = if self.exploration_complete(rounds)? {
                Phase::Done { rounds }
            } else {
                Phase::Exploring { rounds }
            };
        }
        Ok(())
    }

    /// Learns from the outputs of arms `1..=I_t`.
    pub fn learn(&mut self, x: &[f64], prefix: &[bool]) -> Result<()> {
        if self.kind == PolicyKind::Supervised {
            return Err(UssError::Protocol(
                "the supervised policy needs the true label; use supervised_learn".into(),
            ));
        }
        let explored = self.is_exploring() && self.kind.learns();
        let arm = self.take_pending(prefix)?;
        if matches!(self.kind, PolicyKind::UssPd | PolicyKind::UssPdLambda) && arm > 0 {
            let phi = self.feature_map.lift(x)?;
            let k = self.k();
            for i in 0..arm {
                for j in (i + 1)..=arm {
                    self.pairs[pair_index(i, j, k)].pair_record(&phi, prefix[i] != prefix[j])?;
                }
            }
        }
        self.finish_round(explored)
    }

    /// Learns per-arm error indicators `1{Y^i ≠ y}` for arms `1..=I_t`.
    pub fn supervised_learn(&mut self, x: &[f64], prefix: &[bool], y_true: bool) -> Result<()> {
        if self.kind != PolicyKind::Supervised {
            return Err(UssError::Protocol(format!(
                "supervised_learn called on a {} policy",
                self.kind.label()
            )));
        }
        let explored = self.is_exploring();
        let arm = self.take_pending(prefix)?;
        let phi = self.feature_map.lift(x)?;
        for (est, &out) in self.arm_errors[..=arm].iter_mut().zip(prefix) {
            est.record(&phi, out != y_true)?;
        }
        self.finish_round(explored)
    }

    /// Dispatches to the learning rule appropriate for this policy.
    pub fn observe(&mut self, x: &[f64], prefix: &[bool], y_true: bool) -> Result<()> {
        if self.kind == PolicyKind::Supervised {
            self.supervised_learn(x, prefix, y_true)
        } else {
            self.learn(x, prefix)
        }
    }
}

/// Stopping rule applied to an exact disagreement matrix. With the true
/// probabilities this is the oracle selection `min(B_t)`.
pub fn select_with(cum_costs: &[f64], p: impl FnMut(usize, usize) -> f64) -> usize {
    cascade_stop(cum_costs, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn conf(k: usize, d: usize) -> ConfidenceConfig {
        ConfidenceConfig {
            delta: 0.05,
            sigma: 0.1,
            kappa: 0.2,
            arms: k,
            lifted_dim: d,
            s_bound: 5.0,
            lambda: 1.0,
        }
    }

    fn policy(kind: PolicyKind, cum: &[f64]) -> Policy {
        let map = FeatureMapConfig::quadratic(1).unwrap();
        Policy::new(
            kind,
            cum,
            map,
            conf(cum.len(), map.lifted_dim),
            ExplorationMode::default(),
            RadiusMode::Round,
        )
        .unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn pair_index_is_lexicographic() {
        let k = 5;
        let mut n = 0;
        for i in 0..k {
            for j in (i + 1)..k {
                assert_eq!(pair_index(i, j, k), n);
                n += 1;
            }
        }
    }

    #[test]
    fn fixed_and_random_baselines() {
        let mut p = policy(PolicyKind::Fixed { arm: 3 }, &[0.1, 0.2, 0.3]);
        let mut r = rng();
        for _ in 0..5 {
            let d = p.choose(&[0.0], &mut r).unwrap();
            assert_eq!(d.arm, 2);
            p.learn(&[0.0], &[true, false, true]).unwrap();
        }
        let cum = [0.1, 0.2, 0.3];
        let map = FeatureMapConfig::quadratic(1).unwrap();
        assert!(matches!(
            Policy::new(
                PolicyKind::Fixed { arm: 4 },
                &cum,
                map,
                conf(3, 3),
                ExplorationMode::default(),
                RadiusMode::Round
            ),
            Err(UssError::Config(_))
        ));

        let mut p = policy(PolicyKind::Random, &cum);
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            let d = p.choose(&[0.0], &mut r).unwrap();
            counts[d.arm] += 1;
            p.learn(&[0.0], &vec![false; d.arm + 1]).unwrap();
        }
        assert!(
            counts.iter().all(|&c| (900..1100).contains(&c)),
            "{counts:?}"
        );
    }

    #[test]
    fn uss_pd_explores_last_arm_first() {
        let mut p = policy(PolicyKind::UssPd, &[0.1, 0.2, 0.3]);
        assert!(p.is_exploring());
        let d = p.choose(&[0.3], &mut rng()).unwrap();
        assert_eq!(d.arm, 2);
        assert!(d.explored);
    }

    #[test]
    fn single_arm_needs_no_tests() {
        let mut p = policy(PolicyKind::UssPd, &[0.4]);
        assert!(!p.is_exploring());
        let d = p.choose(&[0.1], &mut rng()).unwrap();
        assert_eq!(d.arm, 0);
        assert_eq!(d.probes.len(), 1);
        assert!(d.probes[0].values.is_empty());
    }

    #[test]
    fn learn_updates_only_prefix_pairs() {
        let mut p = policy(PolicyKind::UssPd, &[0.1, 0.2, 0.3, 0.4]);
        // Force the pending arm directly to exercise each prefix length.
        for (arm, expected) in [(0usize, 0usize), (1, 1), (2, 3)] {
            let before: Vec<usize> = p.pairs().iter().map(|e| e.n()).collect();
            p.pending = Some(arm);
            p.learn(&[0.2], &vec![true; arm + 1]).unwrap();
            let after: Vec<usize> = p.pairs().iter().map(|e| e.n()).collect();
            let changed: Vec<(usize, usize)> = p
                .pairs()
                .iter()
                .zip(before.iter().zip(&after))
                .filter(|(_, (b, a))| a > b)
                .map(|(e, _)| e.pair)
                .collect();
            assert_eq!(changed.len(), expected);
            assert!(changed.iter().all(|&(i, j)| i < j && j <= arm));
        }
    }

    #[test]
    fn protocol_errors() {
        let mut p = policy(PolicyKind::UssPd, &[0.1, 0.2]);
        assert!(matches!(
            p.learn(&[0.0], &[true]),
            Err(UssError::Protocol(_))
        ));
        let d = p.choose(&[0.0], &mut rng()).unwrap();
        assert!(matches!(
            p.choose(&[0.0], &mut rng()),
            Err(UssError::Protocol(_))
        ));
        assert!(matches!(
            p.learn(&[0.0], &vec![true; d.arm]),
            Err(UssError::Protocol(_))
        ));
        assert!(matches!(
            p.supervised_learn(&[0.0], &vec![true; d.arm + 1], true),
            Err(UssError::Protocol(_))
        ));
        let mut s = policy(PolicyKind::Supervised, &[0.1, 0.2]);
        s.choose(&[0.0], &mut rng()).unwrap();
        assert!(matches!(
            s.learn(&[0.0], &[true, true]),
            Err(UssError::Protocol(_))
        ));
    }

    #[test]
    fn adaptive_exploration_ends_when_all_pairs_are_conditioned() {
        let mut p = policy(PolicyKind::UssPd, &[0.1, 0.2, 0.9]);
        let mut r = rng();
        let mut xs = (0..400).map(|k| -1.0 + 2.0 * ((k * 37) % 400) as f64 / 400.0);
        while p.is_exploring() {
            let x = [xs.next().unwrap()];
            let d = p.choose(&x, &mut r).unwrap();
            assert_eq!(d.arm, 2);
            p.learn(&x, &[r.gen(), r.gen(), r.gen()]).unwrap();
        }
        let m = p.exploration_rounds();
        assert!(m > 0 && m as u64 == p.rounds());
        for e in p.pairs() {
            assert!(e.estimator.min_eig().unwrap() >= 1.0);
        }
    }

    #[test]
    fn fixed_m_exploration_counts_rounds() {
        let map = FeatureMapConfig::quadratic(1).unwrap();
        let mut p = Policy::new(
            PolicyKind::UssPd,
            &[0.1, 0.5],
            map,
            conf(2, 3),
            ExplorationMode::Fixed { m: 7 },
            RadiusMode::Round,
        )
        .unwrap();
        let mut r = rng();
        for t in 0..7 {
            assert!(p.is_exploring(), "round {t}");
            let x = [t as f64 / 7.0];
            p.choose(&x, &mut r).unwrap();
            p.learn(&x, &[true, t % 2 == 0]).unwrap();
        }
        assert!(!p.is_exploring());
        assert_eq!(p.exploration_rounds(), 7);
    }

    #[test]
    fn lambda_variant_skips_forced_exploration() {
        let p = policy(PolicyKind::UssPdLambda, &[0.1, 0.2, 0.3]);
        assert!(!p.is_exploring());
        assert!(p.pairs().iter().all(|e| e.estimator.regularizer() == 1.0));
    }

    #[test]
    fn disagreement_choice_matches_brute_force_on_probe_matrix() {
        let mut r = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let k = 4;
            let mut costs: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..0.3)).collect();
            costs.iter_mut().fold(0.0, |acc, c| {
                *c += acc;
                *c
            });
            let mut p = policy(PolicyKind::UssPd, &costs);
            let mut t = 0;
            while p.is_exploring() || t < 30 + trial {
                let x = [r.gen_range(-1.0..1.0)];
                let d = p.choose(&x, &mut r).unwrap();
                let prefix: Vec<bool> = (0..=d.arm)
                    .map(|i| r.gen_bool(0.2 + 0.15 * i as f64))
                    .collect();
                p.learn(&x, &prefix).unwrap();
                t += 1;
            }
            let x = [r.gen_range(-1.0..1.0)];
            let phi = FeatureMapConfig::quadratic(1).unwrap().lift(&x).unwrap();
            let radius = alpha_radius(p.rounds(), p.conf());
            let mut pt = vec![vec![0.0; k]; k];
            for i in 0..k {
                for j in (i + 1)..k {
                    pt[i][j] = p.pair(i, j).optimistic_disagreement(&phi, radius).unwrap();
                }
            }
            let brute = (0..k)
                .filter(|&i| i == k - 1 || ((i + 1)..k).all(|j| costs[j] - costs[i] > pt[i][j]))
                .min()
                .unwrap();
            let d = p.choose(&x, &mut r).unwrap();
            assert_eq!(d.arm, brute);
            assert_eq!(d.probes.len(), d.arm + 1);
            for (n, probe) in d.probes.iter().enumerate() {
                assert_eq!(probe.arm, n);
                assert_eq!(probe.passed, n == d.arm);
                for &(j, v) in &probe.values {
                    assert!(v >= p.pair(n, j).estimator.plug_in(&phi));
                }
            }
            p.learn(&x, &vec![false; d.arm + 1]).unwrap();
        }
    }

    #[test]
    fn saturated_agreement_stops_at_first_arm() {
        // Arms always agree; huge cost gaps make every test pass once the
        // estimates are confident.
        let mut p = policy(PolicyKind::UssPd, &[0.0, 5.0, 10.0]);
        let mut r = rng();
        for k in 0..200 {
            let x = [-1.0 + 2.0 * (k as f64 / 200.0)];
            let d = p.choose(&x, &mut r).unwrap();
            p.learn(&x, &vec![true; d.arm + 1]).unwrap();
        }
        let d = p.choose(&[0.3], &mut r).unwrap();
        assert_eq!(d.arm, 0);
    }

    #[test]
    fn supervised_updates_prefix_error_estimators() {
        let mut p = policy(PolicyKind::Supervised, &[0.1, 0.2, 0.3]);
        let mut r = rng();
        let d = p.choose(&[0.5], &mut r).unwrap();
        assert_eq!(d.arm, 2);
        p.pending = Some(1);
        p.supervised_learn(&[0.5], &[true, false], true).unwrap();
        let ns: Vec<usize> = p.arm_errors().iter().map(|e| e.n()).collect();
        assert_eq!(ns, vec![1, 1, 0]);
    }

    #[test]
    fn always_correct_arm_has_vanishing_error_estimate() {
        // The estimate is clipped to the ball of radius S, so use a wide one.
        let map = FeatureMapConfig::quadratic(1).unwrap();
        let mut wide = conf(2, 3);
        wide.s_bound = 50.0;
        let mut p = Policy::new(
            PolicyKind::Supervised,
            &[0.1, 0.2],
            map,
            wide,
            ExplorationMode::default(),
            RadiusMode::Round,
        )
        .unwrap();
        let mut r = rng();
        for k in 0..100 {
            let x = [-1.0 + 0.02 * k as f64];
            let d = p.choose(&x, &mut r).unwrap();
            // Arm 1 is always right, arm 2 always wrong.
            let prefix: Vec<bool> = [true, false][..=d.arm].to_vec();
            p.supervised_learn(&x, &prefix, true).unwrap();
        }
        let phi = FeatureMapConfig::quadratic(1)
            .unwrap()
            .lift(&[0.0])
            .unwrap();
        assert!(p.arm_errors()[0].plug_in(&phi) < 1e-3);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut p = policy(PolicyKind::UssPd, &[0.1, 0.3]);
        let mut r = rng();
        for k in 0..10 {
            let x = [k as f64 / 10.0];
            let d = p.choose(&x, &mut r).unwrap();
            p.learn(&x, &vec![k % 3 == 0; d.arm + 1]).unwrap();
        }
        let json = serde_json::to_string(&p).unwrap();
        let back: Policy = serde_json::from_str(&json).unwrap();
        assert_eq!(back.rounds(), 10);
        assert_eq!(back.pair(0, 1).n(), p.pair(0, 1).n());
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }
}
