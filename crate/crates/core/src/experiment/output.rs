//! CSV and JSON artifacts of an experiment.
//!
//! Layout under the output directory:
//! `rounds/<policy>_run<r>.csv`, `aggregate/<policy>_<metric>.csv`,
//! `metadata.json` and `instance.json`. Nothing written depends on wall-clock
//! time or thread count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::{stream_seed, ExperimentResult, ResolvedPolicy, RunTrace};
use crate::error::{Result, UssError};
use crate::evaluation::{aggregate_runs, RunAggregate};

/// Aggregated metrics, in file-name form.
pub const METRICS: [&str; 5] = [
    "regret",
    "pseudo_regret",
    "cost",
    "regret_wd",
    "regret_non_wd",
];

pub const ROUND_HEADER: [&str; 9] = [
    "run_id",
    "t",
    "policy",
    "arm",
    "i_star",
    "regret_cum",
    "pseudo_regret_cum",
    "cost_cum",
    "wd_flag",
];

pub const AGGREGATE_HEADER: [&str; 6] = ["policy", "metric", "t", "mean", "ci_low", "ci_high"];

/// Cumulative series of the named metric for one run.
pub fn metric_series<'a>(run: &'a RunTrace, metric: &str) -> Result<&'a [f64]> {
    Ok(match metric {
        "regret" => &run.regret_cum,
        "pseudo_regret" => &run.pseudo_regret_cum,
        "cost" => &run.cost_cum,
        "regret_wd" => &run.regret_wd_cum,
        "regret_non_wd" => &run.regret_non_wd_cum,
        other => return Err(UssError::Config(format!("unknown metric '{other}'"))),
    })
}

/// Aggregates of every metric for every policy, keyed by `(policy, metric)`.
pub fn aggregates(res: &ExperimentResult) -> Result<BTreeMap<(String, String), RunAggregate>> {
    let mut out = BTreeMap::new();
    for p in &res.policies {
        for metric in METRICS {
            let series = p
                .runs
                .iter()
                .map(|r| metric_series(r, metric).map(<[f64]>::to_vec))
                .collect::<Result<Vec<_>>>()?;
            out.insert(
                (p.policy.label.clone(), metric.to_string()),
                aggregate_runs(&series)?,
            );
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSummary {
    /// Contexts whose optimal arm is the last one (margin is +∞).
    pub infinite: usize,
    pub min: Option<f64>,
    pub q05: Option<f64>,
    pub q25: Option<f64>,
    pub median: Option<f64>,
    pub q75: Option<f64>,
    pub max: Option<f64>,
}

impl MarginSummary {
    pub fn from_sorted(finite: &[f64], infinite: usize) -> Self {
        let q = |p: f64| {
            if finite.is_empty() {
                None
            } else {
                let idx = ((finite.len() - 1) as f64 * p).round() as usize;
                Some(finite[idx])
            }
        };
        Self {
            infinite,
            min: finite.first().copied(),
            q05: q(0.05),
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            max: finite.last().copied(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyMetadata {
    #[serde(flatten)]
    pub resolved: ResolvedPolicy,
    /// Forced-exploration rounds per repetition.
    pub exploration_rounds: Vec<usize>,
    pub final_mean: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub name: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub pool_size: usize,
    pub wd_fraction: f64,
    pub xi: MarginSummary,
    pub optimal_arm_counts: Vec<usize>,
    pub train_accuracy: Vec<f64>,
    pub train_projected: Vec<bool>,
    /// Per-repetition stream seeds `(context, feedback, policy)`.
    pub rep_seeds: Vec<[u64; 3]>,
    pub policies: Vec<PolicyMetadata>,
}

pub fn metadata(res: &ExperimentResult) -> Result<Metadata> {
    let built = &res.built;
    let finite = built.finite_margins();
    let infinite = built.oracles.len() - finite.len();
    let mut counts = vec![0; built.instance.k()];
    for o in &built.oracles {
        counts[o.i_star] += 1;
    }
    let aggs = aggregates(res)?;
    let policies = res
        .policies
        .iter()
        .map(|p| PolicyMetadata {
            resolved: p.policy.clone(),
            exploration_rounds: p.runs.iter().map(|r| r.exploration_rounds).collect(),
            final_mean: METRICS
                .iter()
                .map(|m| {
                    let a = &aggs[&(p.policy.label.clone(), m.to_string())];
                    (m.to_string(), a.last_mean())
                })
                .collect(),
        })
        .collect();
    let seed = res.config.seed;
    Ok(Metadata {
        name: res.config.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: res.config.clone(),
        pool_size: built.pool.len(),
        wd_fraction: built.wd_fraction(),
        xi: MarginSummary::from_sorted(&finite, infinite),
        optimal_arm_counts: counts,
        train_accuracy: built.train_accuracy.clone(),
        train_projected: built.train_projected.clone(),
        rep_seeds: (0..res.config.reps as u64)
            .map(|r| [1, 2, 3].map(|lane| stream_seed(seed, r, lane)))
            .collect(),
        policies,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| UssError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| UssError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| UssError::io(path, e))
}

pub fn rounds_path(out: &Path, policy: &str, rep: usize) -> PathBuf {
    out.join("rounds").join(format!("{policy}_run{rep}.csv"))
}

pub fn aggregate_path(out: &Path, policy: &str, metric: &str) -> PathBuf {
    out.join("aggregate").join(format!("{policy}_{metric}.csv"))
}

/// Writes one per-round CSV. Arms are written 1-based.
pub fn write_rounds(path: &Path, policy: &str, run: &RunTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(ROUND_HEADER)?;
    for t in 0..run.horizon() {
        w.write_record([
            run.rep.to_string(),
            (t + 1).to_string(),
            policy.to_string(),
            (run.arms[t] + 1).to_string(),
            (run.i_star[t] + 1).to_string(),
            run.regret_cum[t].to_string(),
            run.pseudo_regret_cum[t].to_string(),
            run.cost_cum[t].to_string(),
            u8::from(run.wd[t]).to_string(),
        ])?;
    }
    w.flush().map_err(|e| UssError::io(path, e))
}

pub fn write_aggregate(path: &Path, policy: &str, metric: &str, agg: &RunAggregate) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(AGGREGATE_HEADER)?;
    for t in 0..agg.mean.len() {
        w.write_record([
            policy.to_string(),
            metric.to_string(),
            (t + 1).to_string(),
            agg.mean[t].to_string(),
            agg.ci_low[t].to_string(),
            agg.ci_high[t].to_string(),
        ])?;
    }
    w.flush().map_err(|e| UssError::io(path, e))
}

/// Writes every artifact of `res` under `out`.
pub fn write_outputs(res: &ExperimentResult, out: &Path) -> Result<()> {
    create_dir(&out.join("rounds"))?;
    create_dir(&out.join("aggregate"))?;
    for p in &res.policies {
        for run in &p.runs {
            write_rounds(
                &rounds_path(out, &p.policy.label, run.rep),
                &p.policy.label,
                run,
            )?;
        }
    }
    for ((policy, metric), agg) in aggregates(res)? {
        write_aggregate(
            &aggregate_path(out, &policy, &metric),
            &policy,
            &metric,
            &agg,
        )?;
    }
    write_json(&out.join("metadata.json"), &metadata(res)?)?;
    res.built.instance.save_json(&out.join("instance.json"))
}

/// A per-round CSV read back into cumulative series.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundsFile {
    pub policy: String,
    pub run_id: usize,
    pub series: BTreeMap<String, Vec<f64>>,
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, col: usize, row: usize) -> Result<T> {
    let raw = rec.get(col).unwrap_or("");
    raw.parse().map_err(|_| UssError::Parse {
        row,
        column: ROUND_HEADER[col].to_string(),
        message: format!("cannot parse '{raw}'"),
    })
}

/// Reads a per-round CSV and rebuilds the cumulative series of every metric,
/// splitting regret by the WD flag.
pub fn read_rounds(path: &Path) -> Result<RoundsFile> {
    let file = fs::File::open(path).map_err(|e| UssError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers()?.clone();
    if header.iter().ne(ROUND_HEADER) {
        return Err(UssError::Parse {
            row: 0,
            column: String::new(),
            message: format!("{}: unexpected header", path.display()),
        });
    }
    let mut policy = None;
    let mut run_id = 0;
    let mut cols: [Vec<f64>; 5] = Default::default();
    let (mut prev, mut wd, mut non) = (0.0, 0.0, 0.0);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        run_id = parse_field(&rec, 0, row)?;
        let t: usize = parse_field(&rec, 1, row)?;
        if t != row {
            return Err(UssError::Parse {
                row,
                column: "t".into(),
                message: format!("expected round {row}, found {t}"),
            });
        }
        policy.get_or_insert_with(|| rec[2].to_string());
        let regret: f64 = parse_field(&rec, 5, row)?;
        let flag: u8 = parse_field(&rec, 8, row)?;
        if flag == 1 {
            wd += regret - prev;
        } else {
            non += regret - prev;
        }
        prev = regret;
        cols[0].push(regret);
        cols[1].push(parse_field(&rec, 6, row)?);
        cols[2].push(parse_field(&rec, 7, row)?);
        cols[3].push(wd);
        cols[4].push(non);
    }
    let policy =
        policy.ok_or_else(|| UssError::Data(format!("{} has no rounds", path.display())))?;
    Ok(RoundsFile {
        policy,
        run_id,
        series: METRICS.iter().map(|m| m.to_string()).zip(cols).collect(),
    })
}

/// Recomputes `aggregate/` from the per-round CSVs under `out/rounds`.
/// Returns the number of aggregate files written.
pub fn reaggregate(out: &Path) -> Result<usize> {
    let dir = out.join("rounds");
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| UssError::io(&dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| UssError::io(&dir, e)))
        .collect::<Result<Vec<_>>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "csv"));
    paths.sort();
    let mut by_policy: BTreeMap<String, Vec<RoundsFile>> = BTreeMap::new();
    for p in &paths {
        let f = read_rounds(p)?;
        by_policy.entry(f.policy.clone()).or_default().push(f);
    }
    if by_policy.is_empty() {
        return Err(UssError::Data(format!(
            "no round files in {}",
            dir.display()
        )));
    }
    create_dir(&out.join("aggregate"))?;
    let mut written = 0;
    for (policy, mut files) in by_policy {
        files.sort_by_key(|f| f.run_id);
        for metric in METRICS {
            let runs: Vec<Vec<f64>> = files.iter().map(|f| f.series[metric].clone()).collect();
            let agg = aggregate_runs(&runs)?;
            write_aggregate(&aggregate_path(out, &policy, metric), &policy, metric, &agg)?;
            written += 1;
        }
    }
    Ok(written)
}
