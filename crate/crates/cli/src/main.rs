//! `merl`: train, ablate, transfer, aggregate, gradcheck.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use merl_core::harness::{
    aggregate_seeds, run_ablation, run_experiment, run_gradcheck, run_transfer, write_summary, GradcheckConfig,
};
use merl_core::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "merl",
    version,
    about = "PPO with variance-explained and next-state value heads"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured heads for every seed.
    Train(RunArgs),
    /// Train all four head combinations for every seed.
    Ablate(RunArgs),
    /// Train on `env`, switch to `transfer_env`, plus from-scratch controls.
    Transfer(RunArgs),
    /// Summarise metrics files across seeds.
    Aggregate {
        /// Metrics files, or directories searched for `*.metrics.jsonl`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every analytic gradient.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 3)]
        obs_dim: usize,
        /// Trunk widths, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "6,5")]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 6)]
        minibatch: usize,
    },
    /// Print a preset config as JSON.
    Profile { name: String },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file.
    #[arg(long, conflicts_with = "profile")]
    config: Option<PathBuf>,
    /// Preset config: `control` or `shared`.
    #[arg(long)]
    profile: Option<String>,
    /// Run a single seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `dotted.key=value`, value parsed as JSON or taken as a string.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let base = match (&self.config, &self.profile) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::profile(name)?,
            (None, None) => bail!("pass --config <path> or --profile <name>"),
        };
        let mut cfg = base.with_overrides(&self.overrides)?;
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn save_config(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join("config.json");
    std::fs::write(&path, cfg.to_json()?).with_context(|| format!("writing {}", path.display()))
}

fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            for e in std::fs::read_dir(p).with_context(|| format!("reading {}", p.display()))? {
                let path = e?.path();
                if path.to_string_lossy().ends_with(".metrics.jsonl") {
                    files.push(path);
                }
            }
        } else {
            files.push(p.clone());
        }
    }
    files.sort();
    Ok(files)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            save_config(&cfg)?;
            let mut ok = true;
            for &seed in &cfg.seeds {
                match run_experiment(&cfg, seed, cfg.heads) {
                    Ok(o) => println!(
                        "{}: {} updates, final mean return {}",
                        o.metrics_path.display(),
                        o.updates,
                        o.final_mean_return.map_or("n/a".into(), |r| format!("{r:.3}"))
                    ),
                    Err(e) => {
                        eprintln!("seed {seed}: {e}");
                        ok = false;
                    }
                }
            }
            Ok(ok)
        }
        Command::Ablate(args) => {
            let cfg = args.resolve()?;
            save_config(&cfg)?;
            let grid = run_ablation(&cfg)?;
            for e in &grid {
                match (&e.outcome, &e.error) {
                    (Some(o), _) => println!("{} seed {}: {}", e.variant, e.seed, o.metrics_path.display()),
                    (None, Some(err)) => eprintln!("{} seed {}: FAILED: {err}", e.variant, e.seed),
                    _ => {}
                }
            }
            Ok(grid.iter().all(|e| e.error.is_none()))
        }
        Command::Transfer(args) => {
            let cfg = args.resolve()?;
            save_config(&cfg)?;
            let report = run_transfer(&cfg)?;
            for s in &report.switches {
                println!(
                    "{} seed {}: switch at step {} ({}), continuity {}",
                    s.variant,
                    s.seed,
                    s.switch_step,
                    s.hash_after,
                    if s.continuous { "ok" } else { "BROKEN" }
                );
            }
            let failed = report
                .runs
                .iter()
                .chain(&report.controls)
                .filter(|e| e.error.is_some())
                .count();
            if failed > 0 {
                eprintln!("{failed} runs failed");
            }
            Ok(failed == 0 && report.switches.iter().all(|s| s.continuous))
        }
        Command::Aggregate { inputs, out } => {
            let files = collect_inputs(&inputs)?;
            let summary = aggregate_seeds(&files)?;
            let out = out.unwrap_or_else(|| {
                inputs
                    .first()
                    .filter(|p| p.is_dir())
                    .cloned()
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            write_summary(&summary, &out)?;
            print!("{}", summary.table());
            Ok(true)
        }
        Command::Gradcheck {
            seed,
            instances,
            obs_dim,
            hidden,
            minibatch,
        } => {
            let cfg = GradcheckConfig {
                seed,
                instances,
                obs_dim,
                hidden,
                minibatch,
                ..GradcheckConfig::default()
            };
            let report = run_gradcheck(&cfg)?;
            print!("{}", report.render());
            Ok(report.passed)
        }
        Command::Profile { name } => {
            let cfg = ExperimentConfig::profile(&name)?;
            println!("{}", cfg.to_json()?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
