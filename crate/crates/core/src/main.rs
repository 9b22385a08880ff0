use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use uss::environment::{generate_synthetic, write_contexts_csv};
use uss::error::{Result, UssError};
use uss::experiment::output::{metadata, MarginSummary};
use uss::experiment::{
    build_instance, reaggregate, run_experiment, write_outputs, ExperimentConfig,
};

#[derive(Parser)]
#[command(
    name = "uss",
    version,
    about = "Contextual unsupervised sequential selection simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic context pool as CSV (x1,x2,x3,label).
    GenSynth {
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured arms and write the instance snapshot.
    TrainArms {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the WD fraction and margin statistics of a configured instance.
    WdReport {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate every configured policy and write round, aggregate and
    /// metadata files.
    Run(RunArgs),
    /// Recompute aggregate CSVs from the per-round CSVs of a finished run.
    Aggregate {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory; defaults to the config's `out`, then `runs/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    let out = args
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| Path::new("runs").join(&cfg.name));
    cfg.out = None;
    cfg.validate()?;
    info!(
        "running '{}': {} policies x {} reps x {} rounds on {} threads",
        cfg.name,
        cfg.policies.len(),
        cfg.reps,
        cfg.horizon,
        args.jobs
    );
    let res = run_experiment(&cfg, args.jobs)?;
    write_outputs(&res, &out)?;
    let meta = metadata(&res)?;
    for p in &meta.policies {
        println!(
            "{:<14} regret {:>10.3}  cost {:>10.3}",
            p.resolved.label, p.final_mean["regret"], p.final_mean["cost"]
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn wd_report(config: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let built = build_instance(&cfg.instance)?;
    let finite = built.finite_margins();
    let mut counts = vec![0usize; built.instance.k()];
    for o in &built.oracles {
        counts[o.i_star] += 1;
    }
    let report = serde_json::json!({
        "name": cfg.name,
        "contexts": built.pool.len(),
        "wd_fraction": built.wd_fraction(),
        "xi": MarginSummary::from_sorted(&finite, built.oracles.len() - finite.len()),
        "optimal_arm_counts": counts,
        "train_accuracy": built.train_accuracy,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth { n, seed, out } => {
            let data = generate_synthetic(n, seed)?;
            write_contexts_csv(&out, &data)?;
            println!("wrote {} contexts to {}", data.len(), out.display());
        }
        Command::TrainArms { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let built = build_instance(&cfg.instance)?;
            for (i, (acc, proj)) in built
                .train_accuracy
                .iter()
                .zip(&built.train_projected)
                .enumerate()
            {
                let note = if *proj { " (norm-clipped)" } else { "" };
                println!("arm {}: training accuracy {acc:.4}{note}", i + 1);
            }
            built.instance.save_json(&out)?;
            println!("wrote {}", out.display());
        }
        Command::WdReport { config } => wd_report(&config)?,
        Command::Run(args) => run(args)?,
        Command::Aggregate { out } => {
            let n = reaggregate(&out)?;
            if n == 0 {
                return Err(UssError::Data("nothing to aggregate".into()));
            }
            println!(
                "wrote {n} aggregate files under {}",
                out.join("aggregate").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
