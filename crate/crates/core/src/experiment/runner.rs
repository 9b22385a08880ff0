//! Builds instances from configs and simulates repetitions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ContextOrder, ExperimentConfig, InstanceSpec, PolicySpec, SourceSpec};
use crate::environment::{
    generate_synthetic, load_dataset, train_arm, ContextOracle, DatasetSchema, LabeledContext,
    ProblemInstance,
};
use crate::error::{Result, UssError};
use crate::evaluation::{pseudo_regret, regret_from_oracle};
use crate::glm::{ConfidenceConfig, RefitSchedule};
use crate::policies::{Policy, PolicyKind};

/// An instance together with its context pool and cached oracle views.
#[derive(Debug, Clone)]
pub struct BuiltInstance {
    pub instance: ProblemInstance,
    pub pool: Vec<LabeledContext>,
    pub oracles: Vec<ContextOracle>,
    pub order: ContextOrder,
    pub train_accuracy: Vec<f64>,
    pub train_projected: Vec<bool>,
}

impl BuiltInstance {
    pub fn from_parts(
        instance: ProblemInstance,
        pool: Vec<LabeledContext>,
        order: ContextOrder,
    ) -> Result<Self> {
        if pool.is_empty() {
            return Err(UssError::Precondition("context pool is empty".into()));
        }
        let oracles = pool
            .iter()
            .map(|c| instance.oracle(c))
            .collect::<Result<Vec<_>>>()?;
        let k = instance.k();
        Ok(Self {
            instance,
            pool,
            oracles,
            order,
            train_accuracy: vec![f64::NAN; k],
            train_projected: vec![false; k],
        })
    }

    pub fn wd_fraction(&self) -> f64 {
        self.oracles.iter().filter(|o| o.wd()).count() as f64 / self.oracles.len() as f64
    }

    /// Finite WD margins over the pool, sorted ascending.
    pub fn finite_margins(&self) -> Vec<f64> {
        let mut xi: Vec<f64> = self
            .oracles
            .iter()
            .map(|o| o.xi)
            .filter(|v| v.is_finite())
            .collect();
        xi.sort_by(f64::total_cmp);
        xi
    }
}

/// Loads or generates the context pool and trains the arms.
pub fn build_instance(spec: &InstanceSpec) -> Result<BuiltInstance> {
    let (pool, scaling) = match &spec.source {
        SourceSpec::Synthetic { n, seed } => (generate_synthetic(*n, *seed)?, Vec::new()),
        SourceSpec::Dataset {
            path,
            features,
            label,
        } => {
            let ds = load_dataset(
                path,
                &DatasetSchema {
                    features: features.clone(),
                    label: label.clone(),
                },
            )?;
            (ds.contexts, ds.scaling)
        }
    };
    let columns = spec.arm_columns()?;
    let mut arms = Vec::with_capacity(columns.len());
    let mut accuracy = Vec::new();
    let mut projected = Vec::new();
    for (cols, arm) in columns.iter().zip(&spec.arms) {
        let trained = train_arm(&pool, cols, arm.quadratic, arm.reg)?;
        accuracy.push(trained.train_accuracy);
        projected.push(trained.projected);
        arms.push(trained.model);
    }
    let d = spec.feature_names().len();
    let tradeoff = spec
        .tradeoff
        .clone()
        .unwrap_or_else(|| vec![1.0; spec.costs.len()]);
    let instance = ProblemInstance::with_tradeoff(spec.costs.clone(), tradeoff, arms, d)?
        .with_metadata(spec.feature_names(), scaling);
    let mut built = BuiltInstance::from_parts(instance, pool, spec.order())?;
    built.train_accuracy = accuracy;
    built.train_projected = projected;
    Ok(built)
}

/// Mixes `(seed, rep, lane)` into an independent stream seed.
pub fn stream_seed(seed: u64, rep: u64, lane: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(seed) ^ rep) ^ lane)
}

const LANE_CONTEXT: u64 = 1;
const LANE_FEEDBACK: u64 = 2;
const LANE_POLICY: u64 = 3;

/// Fully resolved settings for one policy.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedPolicy {
    pub label: String,
    pub kind: PolicyKind,
    pub conf: ConfidenceConfig,
    pub exploration: crate::policies::ExplorationMode,
    pub radius: crate::policies::RadiusMode,
    pub refit: RefitSchedule,
}

impl ResolvedPolicy {
    pub fn from_spec(spec: &PolicySpec, cfg: &ExperimentConfig, inst: &ProblemInstance) -> Self {
        Self {
            label: spec.kind.label(),
            kind: spec.kind,
            conf: spec.resolve(&cfg.confidence, inst.k(), inst.feature_map().lifted_dim),
            exploration: spec.exploration.unwrap_or(cfg.exploration),
            radius: spec.radius.unwrap_or(cfg.radius),
            refit: spec.refit.unwrap_or(cfg.refit),
        }
    }

    pub fn build(&self, inst: &ProblemInstance) -> Result<Policy> {
        Policy::new(
            self.kind,
            inst.cum_costs(),
            *inst.feature_map(),
            self.conf,
            self.exploration,
            self.radius,
        )?
        .with_refit(self.refit)
    }
}

/// Per-round trace of one repetition. Arms are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub rep: usize,
    pub context_ids: Vec<usize>,
    pub arms: Vec<usize>,
    pub i_star: Vec<usize>,
    pub wd: Vec<bool>,
    pub regret_cum: Vec<f64>,
    pub pseudo_regret_cum: Vec<f64>,
    pub cost_cum: Vec<f64>,
    pub regret_wd_cum: Vec<f64>,
    pub regret_non_wd_cum: Vec<f64>,
    /// Rounds spent in forced exploration (a prefix of the run).
    pub exploration_rounds: usize,
}

impl RunTrace {
    pub fn horizon(&self) -> usize {
        self.arms.len()
    }

    /// Post-exploration rounds with `I_t < i*_t`, and the number of
    /// post-exploration rounds.
    pub fn left_selections(&self) -> (usize, usize) {
        let start = self.exploration_rounds.min(self.horizon());
        let left = (start..self.horizon())
            .filter(|&t| self.arms[t] < self.i_star[t])
            .count();
        (left, self.horizon() - start)
    }
}

/// Simulates one repetition of `policy` on `built`.
///
/// Context and feedback streams depend only on `(seed, rep)`, so every
/// policy sees the same contexts and the same arm outputs in a repetition.
pub fn simulate_run(
    built: &BuiltInstance,
    policy: &ResolvedPolicy,
    horizon: usize,
    seed: u64,
    rep: usize,
) -> Result<RunTrace> {
    let inst = &built.instance;
    let cum = inst.cum_costs();
    let k = inst.k();
    let mut state = policy.build(inst)?;
    let mut ctx_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, rep as u64, LANE_CONTEXT));
    let mut fb_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, rep as u64, LANE_FEEDBACK));
    let mut pol_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, rep as u64, LANE_POLICY));
    let n = built.pool.len();
    let mut trace = RunTrace {
        rep,
        context_ids: Vec::with_capacity(horizon),
        arms: Vec::with_capacity(horizon),
        i_star: Vec::with_capacity(horizon),
        wd: Vec::with_capacity(horizon),
        regret_cum: Vec::with_capacity(horizon),
        pseudo_regret_cum: Vec::with_capacity(horizon),
        cost_cum: Vec::with_capacity(horizon),
        regret_wd_cum: Vec::with_capacity(horizon),
        regret_non_wd_cum: Vec::with_capacity(horizon),
        exploration_rounds: 0,
    };
    let (mut reg, mut pse, mut cost, mut reg_wd, mut reg_non) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut outputs = vec![false; k];
    for t in 0..horizon {
        let id = match built.order {
            ContextOrder::Iid => ctx_rng.gen_range(0..n),
            ContextOrder::RoundRobin => t % n,
        };
        let ctx = &built.pool[id];
        let oracle = &built.oracles[id];
        for (o, &p) in outputs.iter_mut().zip(&oracle.probs) {
            *o = fb_rng.gen::<f64>() < p;
        }
        let decision = state.choose(&ctx.x, &mut pol_rng)?;
        let arm = decision.arm;
        state.observe(&ctx.x, &outputs[..=arm], ctx.y)?;

        // The split uses the increment of the running total, which is what a
        // reader of the per-round CSV can recompute bit for bit.
        let prev = reg;
        reg += regret_from_oracle(oracle, arm);
        if oracle.wd() {
            reg_wd += reg - prev;
        } else {
            reg_non += reg - prev;
        }
        pse += pseudo_regret(cum, arm, oracle.i_star, oracle.p(oracle.i_star, arm));
        cost += oracle.errors[arm] + cum[arm];
        trace.context_ids.push(id);
        trace.arms.push(arm);
        trace.i_star.push(oracle.i_star);
        trace.wd.push(oracle.wd());
        trace.regret_cum.push(reg);
        trace.pseudo_regret_cum.push(pse);
        trace.cost_cum.push(cost);
        trace.regret_wd_cum.push(reg_wd);
        trace.regret_non_wd_cum.push(reg_non);
    }
    trace.exploration_rounds = state.exploration_rounds();
    Ok(trace)
}

#[derive(Debug, Clone)]
pub struct PolicyRuns {
    pub policy: ResolvedPolicy,
    pub runs: Vec<RunTrace>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub built: BuiltInstance,
    pub policies: Vec<PolicyRuns>,
}

/// Runs every configured policy for `cfg.reps` repetitions on up to `jobs`
/// worker threads. Results do not depend on `jobs`.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let built = build_instance(&cfg.instance)?;
    run_on_instance(cfg, built, jobs)
}

/// Like [`run_experiment`] for an already built instance.
pub fn run_on_instance(
    cfg: &ExperimentConfig,
    built: BuiltInstance,
    jobs: usize,
) -> Result<ExperimentResult> {
    let resolved: Vec<ResolvedPolicy> = cfg
        .policies
        .iter()
        .map(|p| ResolvedPolicy::from_spec(p, cfg, &built.instance))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..resolved.len())
        .flat_map(|p| (0..cfg.reps).map(move |r| (p, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| UssError::Config(format!("cannot start worker pool: {e}")))?;
    let traces: Vec<RunTrace> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(p, r)| simulate_run(&built, &resolved[p], cfg.horizon, cfg.seed, r))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut iter = traces.into_iter();
    let policies = resolved
        .into_iter()
        .map(|policy| PolicyRuns {
            policy,
            runs: iter.by_ref().take(cfg.reps).collect(),
        })
        .collect();
    Ok(ExperimentResult {
        config: cfg.clone(),
        built,
        policies,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::experiment::config::{ArmSpec, ConfidenceSpec};
    use crate::policies::ExplorationMode;

    pub(crate) fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            name: "unit".into(),
            instance: InstanceSpec {
                source: SourceSpec::Synthetic { n: 200, seed: 5 },
                costs: vec![0.01, 0.05, 0.6],
                arms: vec![
                    ArmSpec {
                        features: vec!["x1".into()],
                        reg: 0.1,
                        quadratic: false,
                    },
                    ArmSpec {
                        features: vec!["x1".into(), "x3".into()],
                        reg: 0.01,
                        quadratic: false,
                    },
                    ArmSpec {
                        features: vec!["x1".into(), "x2".into(), "x3".into()],
                        reg: 10.0,
                        quadratic: false,
                    },
                ],
                tradeoff: None,
                order: None,
            },
            policies: vec![
                PolicySpec::new(PolicyKind::UssPd),
                PolicySpec::new(PolicyKind::Fixed { arm: 2 }),
                PolicySpec::new(PolicyKind::Random),
            ],
            confidence: ConfidenceSpec {
                kappa: Some(0.25),
                ..Default::default()
            },
            exploration: ExplorationMode::Adaptive { cap: 100 },
            radius: Default::default(),
            refit: Default::default(),
            horizon: 150,
            reps: 3,
            seed: 11,
            out: None,
        }
    }

    #[test]
    fn stream_seeds_differ_across_reps_and_lanes() {
        let a = stream_seed(1, 0, 1);
        assert_ne!(a, stream_seed(1, 1, 1));
        assert_ne!(a, stream_seed(1, 0, 2));
        assert_ne!(a, stream_seed(2, 0, 1));
        assert_eq!(a, stream_seed(1, 0, 1));
    }

    #[test]
    fn runs_are_reproducible_and_job_independent() {
        let cfg = small_config();
        let a = run_experiment(&cfg, 1).unwrap();
        let b = run_experiment(&cfg, 3).unwrap();
        for (pa, pb) in a.policies.iter().zip(&b.policies) {
            assert_eq!(pa.runs, pb.runs);
        }
    }

    #[test]
    fn traces_are_consistent() {
        let cfg = small_config();
        let res = run_experiment(&cfg, 1).unwrap();
        // Same contexts across policies within a repetition.
        let ids0 = &res.policies[0].runs[1].context_ids;
        for p in &res.policies {
            assert_eq!(&p.runs[1].context_ids, ids0);
            for run in &p.runs {
                assert_eq!(run.horizon(), cfg.horizon);
                for t in 0..run.horizon() {
                    let sum = run.regret_wd_cum[t] + run.regret_non_wd_cum[t];
                    assert!((sum - run.regret_cum[t]).abs() < 1e-9);
                    assert!(run.pseudo_regret_cum[t] >= run.regret_cum[t] - 1e-9);
                    if t > 0 {
                        assert!(run.regret_cum[t] >= run.regret_cum[t - 1]);
                    }
                }
            }
        }
        let fixed = &res.policies[1];
        assert!(fixed.runs.iter().all(|r| r.arms.iter().all(|&a| a == 1)));
        let uss = &res.policies[0];
        for run in &uss.runs {
            assert!(run.exploration_rounds > 0);
            assert!(run.arms[..run.exploration_rounds].iter().all(|&a| a == 2));
        }
    }
}
