//! Command-line surface. Each subcommand validates its inputs before touching
//! the filesystem.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analytic::{build_solution, verify_solution, AnalyticSpec};
use crate::checkpoint::{Checkpoint, Seeds};
use crate::config::{RunConfig, SweepConfig};
use crate::error::{Error, Result};
use crate::partition::{evaluate_partition, rank_neurons, score_neurons, select_partition, ScoreKind};
use crate::spectral::{evaluate_filtration, frequency_report_csv, frequency_stats, phase_report_csv};
use crate::sweep::{run_sweep, SweepOptions};
use crate::task::{NoiseMode, NoisyDataset, Op, SplitRatios, TaskSpec};
use crate::trainer::{grad_diagnostics, layout, train_to_dir, train_with, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "modlab", version, about = "Modular-arithmetic networks under label noise")]
pub struct Cli {
    /// Output directory for the command's artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Continue into an existing output directory, skipping finished work.
    #[arg(long, global = true)]
    pub resume: bool,
    /// Maximum worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network from a TOML run configuration.
    Train {
        config: PathBuf,
    },
    /// Run a grid of trainings from a TOML sweep configuration.
    Sweep {
        config: PathBuf,
    },
    /// Split a checkpoint by dominant frequency and evaluate both halves.
    Filter(CheckpointArgs),
    /// Split a checkpoint into generalising and memorising neuron sets.
    Partition {
        #[command(flatten)]
        source: CheckpointArgs,
        #[arg(long, default_value = "str")]
        score: ScoreKind,
        #[arg(long, default_value_t = 0.95)]
        tau: f64,
        /// Also apply frequency filtration to the generalising sub-network.
        #[arg(long)]
        filter: bool,
    },
    /// Build and verify the closed-form quadratic solution.
    Analytic {
        #[arg(long, short = 'p')]
        modulus: usize,
        #[arg(long, default_value = "add")]
        op: Op,
        #[arg(long, default_value_t = 8)]
        neurons_per_freq: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
    /// Gradient alignment between clean and noisy training samples.
    Diagnose {
        #[arg(long, conflicts_with = "config")]
        checkpoint: Option<PathBuf>,
        #[arg(long, requires = "checkpoint")]
        manifest: Option<PathBuf>,
        /// Train from this configuration and record diagnostics along the way.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Epoch count for a live run; defaults to the configuration's.
        #[arg(long, requires = "config")]
        epochs: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct CheckpointArgs {
    pub checkpoint: PathBuf,
    /// Dataset manifest; defaults to `dataset.manifest` beside the checkpoint.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    let g = Globals { out: cli.out, resume: cli.resume, threads: cli.threads };
    if let Some(0) = g.threads {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    match cli.command {
        Command::Train { config } => cmd_train(&config, &g).map(|_| ()),
        Command::Sweep { config } => cmd_sweep(&config, &g).map(|_| ()),
        Command::Filter(src) => cmd_filter(&src.checkpoint, src.manifest.as_deref(), &g).map(|_| ()),
        Command::Partition { source, score, tau, filter } => {
            cmd_partition(&source.checkpoint, source.manifest.as_deref(), score, tau, filter, &g).map(|_| ())
        }
        Command::Analytic { modulus, op, neurons_per_freq, lambda } => {
            let spec = AnalyticSpec { modulus, neurons_per_freq, lambda, op };
            cmd_analytic(&spec, &g).map(|_| ())
        }
        Command::Diagnose { checkpoint, manifest, config, epochs } => match (checkpoint, config) {
            (Some(ck), None) => cmd_diagnose_checkpoint(&ck, manifest.as_deref(), &g).map(|_| ()),
            (None, Some(cfg)) => cmd_diagnose_live(&cfg, epochs, &g).map(|_| ()),
            _ => Err(Error::Config("diagnose needs either --checkpoint or --config".into())),
        },
    }
}

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct Globals {
    pub out: Option<PathBuf>,
    pub resume: bool,
    pub threads: Option<usize>,
}

fn ensure_fresh(dir: &Path, resume: bool) -> Result<()> {
    let occupied = dir.exists() && std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
    if occupied && !resume {
        return Err(Error::Config(format!(
            "output directory {} already exists; pass --resume to reuse it",
            dir.display()
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value).expect("reports serialise") + "\n"))
}

fn sibling_dir(checkpoint: &Path, name: &str) -> PathBuf {
    checkpoint.parent().unwrap_or(Path::new(".")).join(name)
}

/// Loads the manifest given explicitly or the one stored beside the checkpoint.
fn load_manifest(checkpoint: &Path, explicit: Option<&Path>) -> Result<NoisyDataset> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => sibling_dir(checkpoint, layout::MANIFEST),
    };
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    NoisyDataset::read_manifest(&path)
}

fn load_pair(checkpoint: &Path, manifest: Option<&Path>) -> Result<(Checkpoint, NoisyDataset)> {
    let ck = Checkpoint::load(checkpoint)?;
    let ds = load_manifest(checkpoint, manifest)?;
    if ds.task != TaskSpec::new(ck.meta.op, ck.meta.modulus)? {
        return Err(Error::Config(format!(
            "manifest task {} mod {} does not match checkpoint {} mod {}",
            ds.task.op(),
            ds.task.modulus(),
            ck.meta.op,
            ck.meta.modulus
        )));
    }
    Ok((ck, ds))
}

pub fn cmd_train(config: &Path, g: &Globals) -> Result<PathBuf> {
    let (cfg, text) = RunConfig::load(config)?;
    let dir = g
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set [output] dir".into()))?;
    let ds = cfg.dataset()?;
    if g.resume && dir.join(layout::FINAL).exists() {
        let previous = std::fs::read_to_string(dir.join(layout::CONFIG)).unwrap_or_default();
        if previous == text {
            println!("run in {} is already complete", dir.display());
            return Ok(dir);
        }
    }
    ensure_fresh(&dir, g.resume)?;
    let run = train_to_dir(&cfg.train_config(), &ds, &dir, &text, cfg.seeds)?;
    let last = run.metrics.last().expect("final epoch is recorded");
    println!(
        "trained {} epochs: train loss {}, clean {}, noisy {}, test {}",
        run.steps,
        last.train_loss,
        last.acc_clean,
        last.acc_noisy.map_or("-".to_string(), |a| a.to_string()),
        last.acc_test
    );
    println!("run directory: {}", dir.display());
    Ok(dir)
}

pub fn cmd_sweep(config: &Path, g: &Globals) -> Result<PathBuf> {
    let (cfg, text) = SweepConfig::load(config)?;
    let out = g
        .out
        .clone()
        .or_else(|| cfg.base.output.dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set [base.output] dir".into()))?;
    let total = cfg.points().len();
    println!("sweep: {total} runs into {}", out.display());
    let opts = SweepOptions { resume: g.resume, threads: g.threads };
    let outcome = run_sweep(&cfg, &text, &out, &opts, |row| {
        println!("  {} {}", row.run_id, if row.ok { "ok" } else { "failed" });
    })?;
    let failed = outcome.rows.iter().filter(|r| !r.ok).count();
    println!(
        "sweep finished: {} executed, {} skipped, {} failed; summary in {}",
        outcome.executed,
        outcome.skipped,
        failed,
        out.join(crate::sweep::SUMMARY).display()
    );
    Ok(out)
}

pub fn cmd_filter(checkpoint: &Path, manifest: Option<&Path>, g: &Globals) -> Result<PathBuf> {
    let (ck, ds) = load_pair(checkpoint, manifest)?;
    let dir = g.out.clone().unwrap_or_else(|| sibling_dir(checkpoint, "filter"));
    ensure_fresh(&dir, g.resume)?;
    let (split, report) = evaluate_filtration(&ck.params, &ds);
    write_json(&dir.join("filter_report.json"), &report)?;
    write(&dir.join("phases.csv"), &phase_report_csv(&split, ck.meta.op))?;
    write(&dir.join("frequencies.csv"), &frequency_report_csv(&frequency_stats(&split)))?;
    Checkpoint::new(ck.meta.op, ck.meta.seeds, ck.meta.epoch, split.g).save(&dir.join("checkpoint.g"))?;
    Checkpoint::new(ck.meta.op, ck.meta.seeds, ck.meta.epoch, split.r).save(&dir.join("checkpoint.r"))?;
    println!("{:<6} {:>10} {:>10} {:>10}", "model", "clean", "noisy", "test");
    for (name, acc) in [("f", report.full), ("f^G", report.g), ("f^R", report.r)] {
        println!("{name:<6} {:>10.4} {:>10.4} {:>10.4}", acc.clean, acc.noisy, acc.test);
    }
    println!("‖R‖ = {:.3e}, degenerate neurons = {}", report.r_weight_norm, report.degenerate_neurons);
    if let Some(mse) = report.phase_mse {
        println!("phase MSE = {mse}");
    }
    println!("report directory: {}", dir.display());
    Ok(dir)
}

#[derive(Serialize)]
struct PartitionSummary {
    score: ScoreKind,
    tau: f64,
    width: usize,
    k_g: usize,
    gamma_g: f64,
    k_r: Option<usize>,
    gamma_r: Option<f64>,
    tau_reached: Option<bool>,
    m_g: Vec<usize>,
    m_r: Option<Vec<usize>>,
    evaluation: crate::partition::PartitionReport,
}

pub fn cmd_partition(
    checkpoint: &Path,
    manifest: Option<&Path>,
    score: ScoreKind,
    tau: f64,
    filter: bool,
    g: &Globals,
) -> Result<PathBuf> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("--tau must lie in (0, 1], got {tau}")));
    }
    let (ck, ds) = load_pair(checkpoint, manifest)?;
    let dir = g.out.clone().unwrap_or_else(|| sibling_dir(checkpoint, &format!("partition_{score}")));
    let params = &ck.params;
    let ranking = rank_neurons(params, score);
    let result = select_partition(params, &ranking, &ds.val, &ds.noisy_train(), tau)?;
    ensure_fresh(&dir, g.resume)?;
    let evaluation = evaluate_partition(params, &result, &ds, filter);
    let mem = result.memorization.as_ref();
    let summary = PartitionSummary {
        score,
        tau,
        width: params.width(),
        k_g: result.k_g,
        gamma_g: result.gamma_g,
        k_r: mem.map(|m| m.k),
        gamma_r: mem.map(|m| m.gamma),
        tau_reached: mem.map(|m| m.reached_tau),
        m_g: result.m_g.clone(),
        m_r: mem.map(|m| m.neurons.clone()),
        evaluation: evaluation.clone(),
    };
    write_json(&dir.join("partition_report.json"), &summary)?;
    let mut curve = String::from("k,val_accuracy\n");
    for (k, acc) in &result.val_curve {
        writeln!(curve, "{k},{acc}").unwrap();
    }
    write(&dir.join("val_curve.csv"), &curve)?;
    let mut scores = String::from("neuron,ipr,strength\n");
    for s in score_neurons(params) {
        writeln!(scores, "{},{},{}", s.index, s.ipr, s.strength).unwrap();
    }
    write(&dir.join("scores.csv"), &scores)?;
    let sub = |idx: &[usize]| Checkpoint::new(ck.meta.op, ck.meta.seeds, ck.meta.epoch, params.select_neurons(idx));
    if !result.m_g.is_empty() {
        sub(&result.m_g).save(&dir.join("checkpoint.g"))?;
    }
    if let Some(m) = mem {
        sub(&m.neurons).save(&dir.join("checkpoint.r"))?;
    }
    // Sub-checkpoints are evaluated on the same data, so keep the manifest with them.
    ds.write_manifest(&dir.join(layout::MANIFEST))?;
    println!("score {score}, tau {tau}: gamma_G = {}, gamma_R = {}", result.gamma_g, fmt_opt(summary.gamma_r));
    if summary.tau_reached == Some(false) {
        println!("note: no suffix reached tau; M^R is the whole network");
    }
    if mem.is_none() {
        println!("note: no noisy samples; memorisation step skipped");
    }
    println!(
        "val acc f = {:.4}, f^G = {:.4}; test acc f = {:.4}, f^G = {:.4}, f^R = {}",
        evaluation.val_full,
        evaluation.val_g,
        evaluation.test_full,
        evaluation.test_g,
        fmt_opt(evaluation.test_r)
    );
    if let Some(t) = evaluation.test_g_filtered {
        println!("test acc of filtered f^G = {t:.4}");
    }
    println!("report directory: {}", dir.display());
    Ok(dir)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("-".to_string(), |v| format!("{v:.4}"))
}

pub fn cmd_analytic(spec: &AnalyticSpec, g: &Globals) -> Result<PathBuf> {
    spec.validate()?;
    let task = TaskSpec::new(spec.op, spec.modulus)?;
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from(format!("analytic_{}_{}", spec.op, spec.modulus)));
    let params = build_solution(spec)?;
    let report = verify_solution(&params, &task)?;
    ensure_fresh(&dir, g.resume)?;
    Checkpoint::new(spec.op, Seeds::default(), 0, params).save(&dir.join(layout::FINAL))?;
    let ds = NoisyDataset::generate(task, SplitRatios::default(), 0.0, NoiseMode::Asymmetric, 0, 0)?;
    ds.write_manifest(&dir.join(layout::MANIFEST))?;
    write_json(&dir.join("verification.json"), &report)?;
    println!(
        "P = {}, {}: width {}, accuracy {}, coverage complete {}, phase MSE {}, min margin {}",
        report.modulus,
        report.op,
        report.width,
        report.accuracy,
        report.coverage_complete,
        report.phase_mse.map_or("-".to_string(), |m| format!("{m:.3e}")),
        report.min_margin
    );
    if report.accuracy < 1.0 {
        return Err(Error::NumericalFailure {
            epoch: None,
            detail: format!("analytic solution reached accuracy {} < 1", report.accuracy),
        });
    }
    println!("checkpoint: {}", dir.join(layout::FINAL).display());
    Ok(dir)
}

const DIAG_HEADER: &str = "epoch,s_c,s_n,grad_inner,identity_residual";

pub fn cmd_diagnose_checkpoint(checkpoint: &Path, manifest: Option<&Path>, g: &Globals) -> Result<PathBuf> {
    let (ck, ds) = load_pair(checkpoint, manifest)?;
    let noisy = ds.noisy_train();
    if noisy.is_empty() {
        return Err(Error::Config("the dataset has no noisy samples (noise ratio 0)".into()));
    }
    let d = grad_diagnostics(&ck.params, &ds.clean_train(), &noisy)?;
    let dir = g.out.clone().unwrap_or_else(|| sibling_dir(checkpoint, "diagnose"));
    ensure_fresh(&dir, g.resume)?;
    let text = format!("{DIAG_HEADER}\n{},{},{},{},{}\n", ck.meta.epoch, d.s_c, d.s_n, d.inner, d.identity_residual);
    write(&dir.join("diagnostics.csv"), &text)?;
    print!("{text}");
    Ok(dir)
}

pub fn cmd_diagnose_live(config: &Path, epochs: Option<usize>, g: &Globals) -> Result<PathBuf> {
    let (cfg, _) = RunConfig::load(config)?;
    if cfg.data.noise_ratio == 0.0 {
        return Err(Error::Config("the dataset has no noisy samples (noise ratio 0)".into()));
    }
    let ds = cfg.dataset()?;
    let mut tc: TrainConfig = cfg.train_config();
    if let Some(e) = epochs {
        tc.epochs = e;
    }
    if tc.diag_every == 0 {
        tc.diag_every = 1;
    }
    tc.validate()?;
    let dir = g
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone().map(|d| d.join("diagnose")))
        .ok_or_else(|| Error::Config("no output directory: pass --out or set [output] dir".into()))?;
    ensure_fresh(&dir, g.resume)?;
    let mut text = format!("{DIAG_HEADER}\n");
    let result = train_with(&tc, &ds, |row| {
        if let Some(d) = row.diagnostics {
            let line = format!("{},{},{},{},{}", row.epoch, d.s_c, d.s_n, d.inner, d.identity_residual);
            println!("{line}");
            text.push_str(&line);
            text.push('\n');
        }
    });
    write(&dir.join("diagnostics.csv"), &text)?;
    result.map_err(|f| f.error)?;
    Ok(dir)
}
