use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use vagent::checkpoint;
use vagent::commands::{self, OutputFormat, TrainArgs};
use vagent::formats::{load_pgm_dir, load_points_csv};

#[derive(Parser)]
#[command(name = "vagent", version, about = "Train and sample goal-conditioned generative agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Pgm,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Pgm => OutputFormat::Pgm,
        }
    }
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the agents; writes checkpoint.vagc and metrics.csv to the output directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trajectories: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint; metrics are appended.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Echo every N-th metrics row to stderr.
        #[arg(long, default_value_t = 0)]
        log_every: usize,
    },
    /// Generate samples with the selection and proposal networks.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Add the Gaussian emission noise to each sample.
        #[arg(long)]
        noise: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct goals with the greedy goal-conditioned agent.
    Reconstruct {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Goals as a points CSV or a directory of PGM files; defaults to the configured dataset.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Reconstruct at most this many goals.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print `mse,mmd2[,coverage_0,...]` for a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of samples for MMD and coverage.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Coverage radius around each mixture center.
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
    },
    /// Verify the variational bound and KL chain rule on random finite MDPs.
    CheckBound {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train {
            config,
            seed,
            trajectories,
            out,
            resume,
            log_every,
        } => {
            let rows = commands::train(&TrainArgs {
                config: config.config,
                overrides: config.overrides,
                seed,
                trajectories,
                out,
                resume,
                log_every,
            })?;
            if let Some(last) = rows.last() {
                println!("trained through trajectory {}, last terminal loss {}", last.traj, last.term_loss);
            }
        }
        Command::Sample {
            checkpoint,
            n,
            seed,
            format,
            noise,
            out,
        } => {
            let samples = commands::sample(&checkpoint, n, seed, noise)?;
            commands::write_samples(&out, &samples, format.into())?;
        }
        Command::Reconstruct {
            checkpoint: ckpt,
            config,
            input,
            n,
            format,
            out,
        } => {
            let trainer = checkpoint::load(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            let goals = match input {
                Some(p) if p.is_dir() => load_pgm_dir(&p)?,
                Some(p) => load_points_csv(&p)?,
                None => {
                    let cfg = commands::load_config(config.config.as_deref(), &config.overrides)?;
                    commands::split(&cfg, commands::load_dataset(&cfg)?)?.1
                }
            };
            let mut goals = goals.points().to_vec();
            goals.truncate(n.unwrap_or(goals.len()));
            let recons = commands::reconstruct(&trainer, &goals)?;
            commands::write_pairs(&out, &goals, &recons, format.into())?;
        }
        Command::Eval {
            checkpoint: ckpt,
            config,
            n,
            seed,
            radius,
        } => {
            let trainer = checkpoint::load(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            let cfg = commands::load_config(config.config.as_deref(), &config.overrides)?;
            println!("{}", commands::evaluate(&trainer, &cfg, n, seed, radius)?.to_csv());
        }
        Command::CheckBound { instances, seed } => {
            let (text, ok) = commands::check_bound(instances, seed)?;
            println!("{text}");
            return Ok(ok);
        }
        Command::Gradcheck { seed } => {
            let (text, ok) = commands::gradcheck(seed)?;
            println!("{text}");
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
