//! Regret and cost accounting, plus aggregation over repetitions.

use serde::{Deserialize, Serialize};

use crate::environment::{ContextOracle, LabeledContext, ProblemInstance};
use crate::error::{Result, UssError};

/// One simulated round, as seen by the evaluator. Arms are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub t: u64,
    pub context_id: usize,
    pub policy: String,
    pub arm: usize,
    pub i_star: usize,
    pub regret_inc: f64,
    pub pseudo_regret_inc: f64,
    pub total_cost_inc: f64,
    pub wd_flag: bool,
}

impl RoundRecord {
    /// Builds the record for selecting `arm` on a context with oracle view
    /// `oracle`.
    pub fn new(
        t: u64,
        context_id: usize,
        policy: &str,
        arm: usize,
        oracle: &ContextOracle,
        cum_costs: &[f64],
    ) -> Self {
        Self {
            t,
            context_id,
            policy: policy.to_string(),
            arm,
            i_star: oracle.i_star,
            regret_inc: regret_from_oracle(oracle, arm),
            pseudo_regret_inc: pseudo_regret(
                cum_costs,
                arm,
                oracle.i_star,
                oracle.p(oracle.i_star, arm),
            ),
            total_cost_inc: oracle.errors[arm] + cum_costs[arm],
            wd_flag: oracle.wd(),
        }
    }
}

/// Regret of `arm` against the optimal arm of an oracle view.
pub fn regret_from_oracle(oracle: &ContextOracle, arm: usize) -> f64 {
    // Clamp the round-off that can appear when `arm` ties with `i_star`.
    (oracle.totals[arm] - oracle.totals[oracle.i_star]).max(0.0)
}

/// `γ_I + λ_I C_I − (γ_{i*} + λ_{i*} C_{i*})`.
pub fn round_regret(inst: &ProblemInstance, ctx: &LabeledContext, arm: usize) -> Result<f64> {
    check_arm(inst, arm)?;
    Ok(regret_from_oracle(&inst.oracle(ctx)?, arm))
}

/// `C_I − C_{i*} + p_{i*,I}`, with the disagreement term dropped when
/// `I = i*`.
pub fn pseudo_regret(cum_costs: &[f64], arm: usize, i_star: usize, p_exact: f64) -> f64 {
    if arm == i_star {
        0.0
    } else {
        cum_costs[arm] - cum_costs[i_star] + p_exact
    }
}

/// `γ_I(x) + C_I`.
pub fn round_total_cost(inst: &ProblemInstance, ctx: &LabeledContext, arm: usize) -> Result<f64> {
    check_arm(inst, arm)?;
    Ok(inst.error_rate(arm, ctx)? + inst.cum_costs()[arm])
}

/// Largest single-round regret over every arm and supplied context.
pub fn r_max(inst: &ProblemInstance, contexts: &[LabeledContext]) -> Result<f64> {
    if contexts.is_empty() {
        return Err(UssError::Precondition("r_max needs contexts".into()));
    }
    let mut best = 0.0f64;
    for ctx in contexts {
        let o = inst.oracle(ctx)?;
        for arm in 0..inst.k() {
            best = best.max(regret_from_oracle(&o, arm));
        }
    }
    Ok(best)
}

fn check_arm(inst: &ProblemInstance, arm: usize) -> Result<()> {
    if arm >= inst.k() {
        return Err(UssError::Precondition(format!(
            "arm index {arm} out of range for {} arms",
            inst.k()
        )));
    }
    Ok(())
}

/// Running sum of a per-round quantity.
pub fn cumulative(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .into_iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Cumulative regret split by the WD flag: `(wd, non_wd)`.
pub fn decompose_wd(records: &[RoundRecord]) -> (Vec<f64>, Vec<f64>) {
    let wd = cumulative(
        records
            .iter()
            .map(|r| if r.wd_flag { r.regret_inc } else { 0.0 }),
    );
    let non = cumulative(
        records
            .iter()
            .map(|r| if r.wd_flag { 0.0 } else { r.regret_inc }),
    );
    (wd, non)
}

/// Per-round mean and normal-approximation 95% band over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub mean: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub reps: usize,
}

impl RunAggregate {
    pub fn last_mean(&self) -> f64 {
        *self.mean.last().expect("aggregate of an empty horizon")
    }

    pub fn half_width(&self, idx: usize) -> f64 {
        self.ci_high[idx] - self.mean[idx]
    }
}

/// `mean ± 1.96·sd/√R` at each step, with `sd` the sample standard
/// deviation. A single run yields a zero-width band.
pub fn aggregate_runs(runs: &[Vec<f64>]) -> Result<RunAggregate> {
    let r = runs.len();
    if r == 0 {
        return Err(UssError::Validation("no runs to aggregate".into()));
    }
    let h = runs[0].len();
    if let Some(bad) = runs.iter().position(|run| run.len() != h) {
        return Err(UssError::Validation(format!(
            "run {bad} has {} steps, run 0 has {h}",
            runs[bad].len()
        )));
    }
    let mut mean = Vec::with_capacity(h);
    let mut ci_low = Vec::with_capacity(h);
    let mut ci_high = Vec::with_capacity(h);
    for t in 0..h {
        // Sorted summation keeps the result independent of run order.
        let mut col: Vec<f64> = runs.iter().map(|run| run[t]).collect();
        col.sort_by(f64::total_cmp);
        let m = col.iter().sum::<f64>() / r as f64;
        let half = if r > 1 {
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (r - 1) as f64;
            1.96 * var.sqrt() / (r as f64).sqrt()
        } else {
            0.0
        };
        mean.push(m);
        ci_low.push(m - half);
        ci_high.push(m + half);
    }
    Ok(RunAggregate {
        mean,
        ci_low,
        ci_high,
        reps: r,
    })
}

/// Increments of a cumulative series over the windows `[T/4, T/2]` and
/// `[T/2, T]` (1-based rounds). Shrinking increments indicate sub-linear
/// growth.
pub fn dyadic_increments(series: &[f64]) -> (f64, f64) {
    let t = series.len();
    let at = |round: usize| series[round.max(1) - 1];
    (at(t / 2) - at(t / 4), at(t) - at(t / 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::ArmModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_arm(p: f64) -> ArmModel {
        ArmModel {
            columns: vec![],
            intercept: (p / (1.0 - p)).ln(),
            weights: vec![],
            quadratic: false,
        }
    }

    fn two_arm() -> ProblemInstance {
        // γ = (0.4, 0.1) on label 1, C = (0.1, 0.3).
        ProblemInstance::new(
            vec![0.1, 0.2],
            vec![constant_arm(0.6), constant_arm(0.9)],
            1,
        )
        .unwrap()
    }

    fn ctx(y: bool) -> LabeledContext {
        LabeledContext { x: vec![0.0], y }
    }

    #[test]
    fn regret_examples() {
        let inst = two_arm();
        assert!((round_regret(&inst, &ctx(true), 0).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(round_regret(&inst, &ctx(true), 1).unwrap(), 0.0);
        let single = ProblemInstance::new(vec![0.2], vec![constant_arm(0.3)], 1).unwrap();
        assert_eq!(round_regret(&single, &ctx(false), 0).unwrap(), 0.0);
        assert_eq!(r_max(&single, &[ctx(true), ctx(false)]).unwrap(), 0.0);
    }

    #[test]
    fn pseudo_regret_examples() {
        assert_eq!(pseudo_regret(&[0.1, 0.3], 1, 1, 0.7), 0.0);
        assert!((pseudo_regret(&[0.1, 0.3], 1, 0, 0.25) - 0.45).abs() < 1e-12);
    }

    #[test]
    fn pseudo_regret_dominates_regret_on_random_rounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10_000 {
            let k = rng.gen_range(1..6);
            let probs: Vec<f64> = (0..k).map(|_| rng.gen()).collect();
            let costs: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..0.3)).collect();
            let cum = crate::environment::cumulative_costs(&costs).unwrap();
            let o = ContextOracle::from_probs(probs, rng.gen(), &cum, &vec![1.0; k]);
            let arm = rng.gen_range(0..k);
            let reg = regret_from_oracle(&o, arm);
            let ps = pseudo_regret(&cum, arm, o.i_star, o.p(o.i_star, arm));
            assert!(reg >= 0.0);
            assert!(ps >= reg - 1e-12, "{ps} < {reg}");
        }
    }

    #[test]
    fn total_cost_examples_and_identity() {
        let zero_err = ProblemInstance::new(
            vec![0.1, 0.2],
            vec![constant_arm(0.5), ArmModel::linear(vec![], 800.0, vec![])],
            1,
        )
        .unwrap();
        assert!((round_total_cost(&zero_err, &ctx(true), 1).unwrap() - 0.3).abs() < 1e-12);

        let inst = ProblemInstance::new(vec![0.1], vec![constant_arm(0.2)], 1).unwrap();
        assert!((round_total_cost(&inst, &ctx(false), 0).unwrap() - 0.3).abs() < 1e-12);

        // Σ total cost = Σ regret + Σ oracle total cost.
        let inst = two_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut cost, mut reg, mut best) = (0.0, 0.0, 0.0);
        for _ in 0..500 {
            let c = ctx(rng.gen());
            let arm = rng.gen_range(0..2);
            let o = inst.oracle(&c).unwrap();
            cost += round_total_cost(&inst, &c, arm).unwrap();
            reg += round_regret(&inst, &c, arm).unwrap();
            best += o.totals[o.i_star];
        }
        assert!((cost - (reg + best)).abs() < 1e-9);
    }

    #[test]
    fn r_max_by_enumeration() {
        let inst = two_arm();
        let contexts = [ctx(true), ctx(false)];
        let mut brute = 0.0f64;
        for c in &contexts {
            for arm in 0..2 {
                let tot = |a: usize| inst.error_rate(a, c).unwrap() + inst.cum_costs()[a];
                let best = tot(0).min(tot(1));
                brute = brute.max(tot(arm) - best);
            }
        }
        assert!((r_max(&inst, &contexts).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn aggregate_examples() {
        let same = vec![vec![1.0, 2.0, 3.0]; 5];
        let a = aggregate_runs(&same).unwrap();
        assert_eq!(a.ci_low, a.mean);
        assert_eq!(a.ci_high, a.mean);

        let one = aggregate_runs(&[vec![0.5, 0.7]]).unwrap();
        assert_eq!(one.ci_low, vec![0.5, 0.7]);
        assert_eq!(one.ci_high, vec![0.5, 0.7]);

        // Final values 1..4: mean 2.5, sd = sqrt(5/3), half-width 1.96·sd/2.
        let runs: Vec<Vec<f64>> = (1..=4).map(|v| vec![0.0, v as f64]).collect();
        let a = aggregate_runs(&runs).unwrap();
        assert_eq!(a.mean[1], 2.5);
        let half = 1.96 * (5.0f64 / 3.0).sqrt() / 2.0;
        assert!((a.half_width(1) - half).abs() < 1e-12);
        assert!(a.ci_low[1] <= a.mean[1] && a.mean[1] <= a.ci_high[1]);

        assert!(matches!(
            aggregate_runs(&[vec![1.0], vec![1.0, 2.0]]),
            Err(UssError::Validation(_))
        ));
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let runs: Vec<Vec<f64>> = (0..7)
            .map(|_| cumulative((0..20).map(|_| rng.gen::<f64>())))
            .collect();
        let mut rev = runs.clone();
        rev.reverse();
        rev.swap(1, 4);
        assert_eq!(
            aggregate_runs(&runs).unwrap(),
            aggregate_runs(&rev).unwrap()
        );
    }

    fn record(t: u64, regret: f64, wd: bool) -> RoundRecord {
        RoundRecord {
            t,
            context_id: 0,
            policy: "p".into(),
            arm: 0,
            i_star: 0,
            regret_inc: regret,
            pseudo_regret_inc: regret,
            total_cost_inc: regret,
            wd_flag: wd,
        }
    }

    #[test]
    fn wd_decomposition_partitions_regret() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let records: Vec<RoundRecord> = (1..=100)
            .map(|t| record(t, rng.gen(), rng.gen_bool(0.7)))
            .collect();
        let (wd, non) = decompose_wd(&records);
        let whole = cumulative(records.iter().map(|r| r.regret_inc));
        for t in 0..100 {
            assert!((wd[t] + non[t] - whole[t]).abs() < 1e-12);
        }
        let all_wd: Vec<RoundRecord> = (1..=10).map(|t| record(t, 0.3, true)).collect();
        assert!(decompose_wd(&all_wd).1.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dyadic_windows() {
        let linear: Vec<f64> = (1..=100).map(|t| t as f64).collect();
        let (a, b) = dyadic_increments(&linear);
        assert_eq!((a, b), (25.0, 50.0));
        let log: Vec<f64> = (1..=1000).map(|t| (t as f64).ln()).collect();
        let (a, b) = dyadic_increments(&log);
        assert!((a - b).abs() < 1e-2);
    }
}
