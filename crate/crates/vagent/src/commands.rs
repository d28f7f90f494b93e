//! The subcommands, callable in-process.

use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use vagent_core::data::{gaussian_mixture, glyphs, square_corners, Dataset};
use vagent_core::env::sample_terminal;
use vagent_core::eval::{median_heuristic_gamma, mmd2_unbiased, mode_coverage, reconstruction_mse};
use vagent_core::gradcheck::run_gradcheck;
use vagent_core::inference::{reconstruct_many, sample_many};
use vagent_core::oracle::check_bound_suite;
use vagent_core::rng::{self, STREAM_SAMPLE};
use vagent_core::training::{MetricsRow, Trainer};

use crate::checkpoint;
use crate::config::{DatasetSpec, RunConfig};
use crate::formats::{self, load_pgm_dir, load_points_csv, pgm_grid, square_side, write_metrics, write_pgm};

pub const CHECKPOINT_FILE: &str = "checkpoint.vagc";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    cfg.apply_overrides(overrides)?;
    Ok(cfg)
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    Ok(match &cfg.dataset {
        DatasetSpec::Gmm { side, std, per_mode } => gaussian_mixture(&square_corners(*side), *per_mode, *std, cfg.data_seed)?,
        DatasetSpec::Glyphs { per_class, noise } => glyphs(*per_class, *noise, cfg.data_seed)?,
        DatasetSpec::Csv(p) => load_points_csv(p)?,
        DatasetSpec::PgmDir(p) => load_pgm_dir(p)?,
    })
}

/// Training and evaluation sets; without a holdout both are the full set.
pub fn split(cfg: &RunConfig, data: Dataset) -> Result<(Dataset, Dataset)> {
    if cfg.holdout_every == 0 {
        return Ok((data.clone(), data));
    }
    Ok(data.split_every(cfg.holdout_every)?)
}

#[derive(Clone, Debug, Default)]
pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub trajectories: Option<usize>,
    pub out: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub log_every: usize,
}

/// Train (or resume) and write the checkpoint and metrics into the output
/// directory. Returns the metrics of this invocation.
pub fn train(args: &TrainArgs) -> Result<Vec<MetricsRow>> {
    let mut cfg = load_config(args.config.as_deref(), &args.overrides)?;
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    if let Some(n) = args.trajectories {
        cfg.train.trajectories = n;
    }
    if let Some(o) = &args.out {
        cfg.output = o.clone();
    }
    let (train_set, _) = split(&cfg, load_dataset(&cfg)?)?;
    let mut trainer = match &args.resume {
        Some(p) => {
            let t = checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?;
            if t.env.dim != train_set.dim() {
                bail!("checkpoint has d = {} but the dataset has dimension {}", t.env.dim, train_set.dim());
            }
            t
        }
        None => {
            let env = cfg.env_for(&train_set)?;
            let net = cfg.net_config(env.dim);
            Trainer::new(env, &net, cfg.train.clone())?
        }
    };
    fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    let metrics_path = cfg.output.join(METRICS_FILE);
    let fresh = args.resume.is_none() || !metrics_path.exists();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&metrics_path)
        .with_context(|| format!("opening {}", metrics_path.display()))?;
    let mut out = BufWriter::new(file);
    if fresh {
        writeln!(out, "{}", formats::METRICS_HEADER)?;
    }
    let mut rows = Vec::with_capacity(cfg.train.trajectories);
    for _ in 0..cfg.train.trajectories {
        let row = trainer.step(&train_set)?;
        writeln!(out, "{}", formats::metrics_line(&row))?;
        if args.log_every > 0 && row.traj % args.log_every as u64 == 0 {
            eprintln!("{}", formats::metrics_line(&row));
        }
        rows.push(row);
    }
    out.flush()?;
    checkpoint::save(&cfg.output.join(CHECKPOINT_FILE), &trainer)?;
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Pgm,
}

fn write_points(path: &Path, points: &[Vec<f64>], format: OutputFormat, dim: usize) -> Result<()> {
    match format {
        OutputFormat::Csv => formats::write_points_csv(path, points)?,
        OutputFormat::Pgm => {
            let side = square_side(dim).with_context(|| format!("d = {dim} is not a square image"))?;
            write_pgm(path, &pgm_grid(points, side, side))?;
        }
    }
    Ok(())
}

/// Draw `n` S-agent samples. With `noise`, each terminal mean is perturbed
/// by the emission noise `N(0, sigma^2 I)`.
pub fn sample(checkpoint_path: &Path, n: usize, seed: u64, noise: bool) -> Result<Vec<Vec<f64>>> {
    let trainer = checkpoint::load(checkpoint_path).with_context(|| format!("loading {}", checkpoint_path.display()))?;
    let (env, agents) = (&trainer.env, &trainer.agents);
    let mut r = rng::seeded(seed, STREAM_SAMPLE);
    let samples = sample_many(&agents.proposal, &agents.selection, env, n, &mut r)?;
    Ok(samples
        .into_iter()
        .map(|s| if noise { sample_terminal(&s.value, env, &mut r) } else { s.value })
        .collect())
}

pub fn write_samples(path: &Path, samples: &[Vec<f64>], format: OutputFormat) -> Result<()> {
    let dim = samples.first().map_or(0, Vec::len);
    write_points(path, samples, format, dim)
}

/// Greedy reconstructions of `goals`.
pub fn reconstruct(trainer: &Trainer, goals: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let refs: Vec<&[f64]> = goals.iter().map(Vec::as_slice).collect();
    Ok(reconstruct_many(&trainer.agents.proposal, &trainer.agents.q, &trainer.env, &refs)?
        .into_iter()
        .map(|s| s.value)
        .collect())
}

/// Goal/reconstruction pairs: CSV rows `goal..., reconstruction...`, or a
/// PGM grid alternating goal and reconstruction.
pub fn write_pairs(path: &Path, goals: &[Vec<f64>], recons: &[Vec<f64>], format: OutputFormat) -> Result<()> {
    let dim = goals.first().map_or(0, Vec::len);
    match format {
        OutputFormat::Csv => {
            let rows: Vec<Vec<f64>> = goals.iter().zip(recons).map(|(g, r)| [g.as_slice(), r].concat()).collect();
            formats::write_points_csv(path, &rows)?;
        }
        OutputFormat::Pgm => {
            let tiles: Vec<Vec<f64>> = goals.iter().zip(recons).flat_map(|(g, r)| [g.clone(), r.clone()]).collect();
            write_points(path, &tiles, format, dim)?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalLine {
    pub mse: f64,
    pub mmd2: f64,
    /// Per-mode fractions, for mixture datasets only.
    pub coverage: Vec<f64>,
}

impl EvalLine {
    pub fn to_csv(&self) -> String {
        let mut fields = vec![formats::format_g9(self.mse), formats::format_g9(self.mmd2)];
        fields.extend(self.coverage.iter().map(|&c| formats::format_g9(c)));
        fields.join(",")
    }
}

/// Reconstruction MSE on the evaluation split, unbiased MMD² between `n`
/// samples and the training split (median-heuristic bandwidth), and mode
/// coverage within `radius` for mixture datasets.
pub fn evaluate(trainer: &Trainer, cfg: &RunConfig, n: usize, seed: u64, radius: f64) -> Result<EvalLine> {
    let (train_set, test_set) = split(cfg, load_dataset(cfg)?)?;
    let (env, agents) = (&trainer.env, &trainer.agents);
    if env.dim != train_set.dim() {
        bail!("checkpoint has d = {} but the dataset has dimension {}", env.dim, train_set.dim());
    }
    let mse = reconstruction_mse(&agents.proposal, &agents.q, env, test_set.points())?;
    let mut r = rng::seeded(seed, STREAM_SAMPLE);
    let samples: Vec<Vec<f64>> = sample_many(&agents.proposal, &agents.selection, env, n, &mut r)?
        .into_iter()
        .map(|s| s.value)
        .collect();
    let gamma = median_heuristic_gamma(train_set.points())?;
    let mmd2 = mmd2_unbiased(&samples, train_set.points(), gamma)?;
    let coverage = match cfg.dataset {
        DatasetSpec::Gmm { side, .. } => mode_coverage(&samples, &square_corners(side), radius)?,
        _ => Vec::new(),
    };
    Ok(EvalLine { mse, mmd2, coverage })
}

/// Run the oracle suite; returns the report line and whether it passed.
pub fn check_bound(instances: usize, seed: u64) -> Result<(String, bool)> {
    let report = check_bound_suite(instances, seed)?;
    let mut text = String::new();
    text.push_str("check                      violations  worst\n");
    text.push_str(&format!(
        "bound >= -log reach        {:>10}  {:e}\n",
        report.bound_violations, report.worst_bound_gap
    ));
    text.push_str(&format!(
        "posterior attains bound    {:>10}  {:e}\n",
        report.attainment_violations, report.worst_attainment_gap
    ));
    text.push_str(&format!(
        "KL chain rule              {:>10}  {:e}\n",
        report.chain_rule_violations, report.worst_chain_rule_gap
    ));
    let worst = (-report.worst_bound_gap)
        .max(report.worst_attainment_gap)
        .max(report.worst_chain_rule_gap);
    if report.passed() {
        text.push_str(&format!("{}/{} bound OK, max violation ≤ 1e-9", report.ok_count(), report.instances));
    } else {
        text.push_str(&format!(
            "{}/{} bound OK, max violation {worst:e} > 1e-9",
            report.ok_count(),
            report.instances
        ));
    }
    Ok((text, report.passed()))
}

/// Run the gradient suite; returns the report and whether it passed.
pub fn gradcheck(seed: u64) -> Result<(String, bool)> {
    let report = run_gradcheck(seed)?;
    let mut text = String::new();
    for c in &report.cases {
        text.push_str(&format!("{:<32} {:>5} params  max rel err {:e}\n", c.name, c.params, c.max_relative_error));
    }
    let verdict = if report.passed() { "OK" } else { "FAILED" };
    text.push_str(&format!(
        "{} cases, worst {:e} (tolerance {:e}): {verdict}",
        report.cases.len(),
        report.worst(),
        report.tolerance
    ));
    Ok((text, report.passed()))
}

pub fn write_metrics_file(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_metrics(&mut out, rows, true)?;
    out.flush()?;
    Ok(())
}
