//! `sipe`: generate target-system data, train demonstration policies, run
//! calibration and transfer benchmarks, and render plots and reports.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sipe_harness::config::{BenchConfig, TrajectorySource};
use sipe_harness::dataset::{Split, Variant};
use sipe_harness::runner::{self, RunContext};
use sipe_harness::store::RunStore;
use sipe_harness::{plot, report};

#[derive(Parser)]
#[command(name = "sipe", version, about = "Simulation parameter estimation benchmark")]
struct Cli {
    /// Benchmark configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for truths, datasets, and estimator streams.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output root for datasets, policies, and runs.
    #[arg(long, global = true, default_value = "sipe-out")]
    out: PathBuf,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GenDataArgs {
    /// Environments to generate; defaults to the run's environment list.
    #[arg(long = "env")]
    envs: Vec<String>,

    /// Variants to generate (default, in_distribution, out_of_distribution);
    /// all three when omitted.
    #[arg(long = "variant")]
    variants: Vec<Variant>,

    /// Splits to generate (reference, validation, test); all three when
    /// omitted.
    #[arg(long = "split")]
    splits: Vec<Split>,

    /// Trajectories per split; defaults to the configured reference count.
    #[arg(long)]
    n: Option<usize>,

    /// Steps per trajectory; defaults to the environment's horizon.
    #[arg(long)]
    horizon: Option<usize>,

    /// Action source: "scripted" excitation or a trained "policy".
    #[arg(long, default_value = "scripted")]
    source: String,
}

#[derive(Args)]
struct TrainPolicyArgs {
    /// Environments to train on; defaults to the run's environment list.
    #[arg(long = "env")]
    envs: Vec<String>,
}

#[derive(Args)]
struct RunIdArgs {
    /// Calibration run id (see `<out>/runs/index.json`).
    #[arg(long)]
    run: String,
}

#[derive(Subcommand)]
enum Command {
    /// Generate target-system trajectory datasets and the environment catalog.
    GenData(GenDataArgs),
    /// Train and store a demonstration policy per environment.
    TrainPolicy(TrainPolicyArgs),
    /// Run the full calibration benchmark and store a score report.
    Calibrate,
    /// Train policies inside stored estimates and score them on the truth.
    Transfer(RunIdArgs),
    /// Render radar plots for one run, or overlay the means of several.
    Plot {
        /// One run id for min/mean/max plots; several to compare their means.
        #[arg(long = "run", required = true)]
        runs: Vec<String>,
    },
    /// Render the markdown report for a run.
    Report(RunIdArgs),
}

fn load_config(cli: &Cli) -> Result<BenchConfig> {
    match &cli.config {
        Some(path) => {
            BenchConfig::load(path).with_context(|| format!("loading {}", path.display()))
        }
        None => Ok(BenchConfig::default()),
    }
}

fn context(cli: &Cli) -> Result<RunContext> {
    Ok(RunContext {
        cfg: load_config(cli)?,
        out: cli.out.clone(),
        master_seed: cli.seed,
        jobs: cli.jobs,
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::GenData(args) => {
            let ctx = context(&cli)?;
            let envs = if args.envs.is_empty() { ctx.cfg.active_envs() } else { args.envs.clone() };
            let variants =
                if args.variants.is_empty() { Variant::ALL.to_vec() } else { args.variants.clone() };
            let splits = if args.splits.is_empty() { Split::ALL.to_vec() } else { args.splits.clone() };
            let source = match args.source.as_str() {
                "scripted" => TrajectorySource::Demonstrations,
                "policy" => TrajectorySource::LearnedPolicy,
                other => bail!("unknown --source `{other}` (expected scripted or policy)"),
            };
            let written =
                runner::gen_data(&ctx, &envs, &variants, &splits, args.n, args.horizon, source)?;
            for path in written {
                println!("wrote {}", path.display());
            }
        }
        Command::TrainPolicy(args) => {
            let ctx = context(&cli)?;
            let envs = if args.envs.is_empty() { ctx.cfg.active_envs() } else { args.envs.clone() };
            for env in &envs {
                let file =
                    runner::train_policy(&ctx.out, env, &ctx.cfg.run.transfer, ctx.master_seed)?;
                println!(
                    "trained {env}: return {:.3} (best {:.3}, floor {:.3}), converged: {}",
                    file.final_return, file.best_return, file.floor, file.converged
                );
            }
        }
        Command::Calibrate => {
            let ctx = context(&cli)?;
            let report = runner::run_calibration(&ctx)?;
            println!("run {}", report.run.run_id);
            for agg in &report.aggregates {
                match &agg.scalar {
                    Some(s) => println!(
                        "  {}/{}: mean {:.3} (min {:.3}, max {:.3}, spread {:.3})",
                        agg.env_id, agg.estimator, s.mean, s.min, s.max, s.spread
                    ),
                    None => println!(
                        "  {}/{}: all {} seeds failed",
                        agg.env_id, agg.estimator, agg.n_seeds
                    ),
                }
            }
            let failed: usize = report.cells.iter().filter(|c| !c.is_ok()).count();
            if failed > 0 {
                println!("  ({failed} of {} cells failed; see the report)", report.cells.len());
            }
        }
        Command::Transfer(args) => {
            let ctx = context(&cli)?;
            let transfer = runner::run_transfer(&ctx, &args.run)?;
            for cell in &transfer.cells {
                match cell.score {
                    Some(score) => println!(
                        "  {}/{} seed {}: transfer {:.3}",
                        cell.env_id, cell.estimator, cell.seed_index, score
                    ),
                    None => println!(
                        "  {}/{} seed {}: failed",
                        cell.env_id, cell.estimator, cell.seed_index
                    ),
                }
            }
        }
        Command::Plot { runs } => {
            let store = RunStore::new(&cli.out);
            if runs.len() == 1 {
                let report = store.load_report(&runs[0])?;
                let plots = plot::report_plots(&report)?;
                for path in store.save_plots(&runs[0], &plots)? {
                    println!("wrote {}", path.display());
                }
            } else {
                let reports: Vec<_> =
                    runs.iter().map(|id| store.load_report(id)).collect::<Result<_, _>>()?;
                let plots = plot::compare_plots(&reports)?;
                let dir = cli.out.join("plots-compare");
                std::fs::create_dir_all(&dir)?;
                for (stem, svg) in &plots {
                    let path = dir.join(format!("{stem}.svg"));
                    std::fs::write(&path, svg)?;
                    println!("wrote {}", path.display());
                }
            }
        }
        Command::Report(args) => {
            let store = RunStore::new(&cli.out);
            let score_report = store.load_report(&args.run)?;
            let transfer = store.load_transfer(&args.run)?;
            let md = report::render_report(&score_report, transfer.as_ref())?;
            let path = store.save_rendered_report(&args.run, &md)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
