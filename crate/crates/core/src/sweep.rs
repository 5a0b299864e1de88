//! Runs a grid of training jobs on a bounded thread pool and keeps a
//! `summary.csv` with one row per finished run.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;

use crate::checkpoint::Seeds;
use crate::config::{SweepConfig, SweepPoint};
use crate::error::{Error, Result};
use crate::trainer::train_to_dir;

pub const SUMMARY: &str = "summary.csv";
pub const SNAPSHOT: &str = "sweep.snapshot";
pub const RUNS_DIR: &str = "runs";
const HEADER: &str = "run_id,M,alpha,wd,optimizer,activation,seed,status,acc_clean,acc_noisy,acc_test,loss_test";

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub run_id: String,
    pub width: usize,
    pub alpha: f64,
    pub weight_decay: f64,
    pub optimizer: String,
    pub activation: String,
    pub seed: u64,
    pub ok: bool,
    pub acc_clean: Option<f64>,
    pub acc_noisy: Option<f64>,
    pub acc_test: Option<f64>,
    pub loss_test: Option<f64>,
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl SummaryRow {
    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.width,
            self.alpha,
            self.weight_decay,
            self.optimizer,
            self.activation,
            self.seed,
            if self.ok { "ok" } else { "failed" },
            cell(self.acc_clean),
            cell(self.acc_noisy),
            cell(self.acc_test),
            cell(self.loss_test),
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        let bad = |d: &str| Error::parse("sweep summary", format!("{d} in line {line:?}"));
        if f.len() != 12 {
            return Err(bad("expected 12 fields"));
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad("bad number"))
            }
        };
        Ok(Self {
            run_id: f[0].to_string(),
            width: f[1].parse().map_err(|_| bad("bad width"))?,
            alpha: f[2].parse().map_err(|_| bad("bad alpha"))?,
            weight_decay: f[3].parse().map_err(|_| bad("bad wd"))?,
            optimizer: f[4].to_string(),
            activation: f[5].to_string(),
            seed: f[6].parse().map_err(|_| bad("bad seed"))?,
            ok: match f[7] {
                "ok" => true,
                "failed" => false,
                _ => return Err(bad("bad status")),
            },
            acc_clean: num(f[8])?,
            acc_noisy: num(f[9])?,
            acc_test: num(f[10])?,
            loss_test: num(f[11])?,
        })
    }

    fn pending(point: &SweepPoint) -> Self {
        Self {
            run_id: point.run_id(),
            width: point.width,
            alpha: point.noise_ratio,
            weight_decay: point.weight_decay,
            optimizer: point.optimizer.to_string(),
            activation: point.activation.to_string(),
            seed: point.seed,
            ok: false,
            acc_clean: None,
            acc_noisy: None,
            acc_test: None,
            loss_test: None,
        }
    }
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines().skip(1).filter(|l| !l.trim().is_empty()).map(SummaryRow::parse).collect()
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut text = format!("{HEADER}\n");
    for r in rows {
        text.push_str(&r.to_line());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    pub resume: bool,
    /// Upper bound on worker threads; the sweep's own `parallelism` also applies.
    pub threads: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SummaryRow>,
    pub skipped: usize,
    pub executed: usize,
}

pub fn run_dir(out: &Path, point: &SweepPoint) -> PathBuf {
    out.join(RUNS_DIR).join(point.run_id())
}

/// Runs every grid point not already completed. `on_done` sees each row as it lands.
pub fn run_sweep(
    cfg: &SweepConfig,
    snapshot: &str,
    out: &Path,
    opts: &SweepOptions,
    on_done: impl Fn(&SummaryRow) + Sync,
) -> Result<SweepOutcome> {
    let points = cfg.points();
    let summary_path = out.join(SUMMARY);
    let occupied = out.exists() && std::fs::read_dir(out).map_err(|e| Error::io(out, e))?.next().is_some();
    if occupied && !opts.resume {
        return Err(Error::Config(format!(
            "output directory {} already exists; pass --resume to continue it",
            out.display()
        )));
    }
    let previous = if summary_path.exists() { read_summary(&summary_path)? } else { Vec::new() };
    let mut finished: HashMap<String, SummaryRow> =
        previous.into_iter().filter(|r| r.ok).map(|r| (r.run_id.clone(), r)).collect();
    let pending: Vec<&SweepPoint> = points.iter().filter(|p| !finished.contains_key(&p.run_id())).collect();
    let skipped = points.len() - pending.len();

    std::fs::create_dir_all(out.join(RUNS_DIR)).map_err(|e| Error::io(out, e))?;
    let snap_path = out.join(SNAPSHOT);
    if !snap_path.exists() {
        std::fs::write(&snap_path, snapshot).map_err(|e| Error::io(&snap_path, e))?;
    }
    let kept: Vec<SummaryRow> = points.iter().filter_map(|p| finished.get(&p.run_id()).cloned()).collect();
    write_summary(&summary_path, &kept)?;

    let threads = opts.threads.map_or(cfg.parallelism, |t| t.min(cfg.parallelism)).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let sink = Mutex::new(
        OpenOptions::new().append(true).open(&summary_path).map_err(|e| Error::io(&summary_path, e))?,
    );
    let results: Vec<SummaryRow> = pool.install(|| {
        pending
            .par_iter()
            .map(|point| {
                let row = execute(cfg, point, out);
                let mut file = sink.lock().expect("summary writer poisoned");
                // A failed append only loses the incremental copy; the final rewrite below still has the row.
                let _ = writeln!(file, "{}", row.to_line());
                drop(file);
                on_done(&row);
                row
            })
            .collect()
    });
    let executed = results.len();
    for row in results {
        finished.insert(row.run_id.clone(), row);
    }
    let rows: Vec<SummaryRow> = points.iter().filter_map(|p| finished.remove(&p.run_id())).collect();
    write_summary(&summary_path, &rows)?;
    Ok(SweepOutcome { rows, skipped, executed })
}

fn execute(cfg: &SweepConfig, point: &SweepPoint, out: &Path) -> SummaryRow {
    let mut row = SummaryRow::pending(point);
    let dir = run_dir(out, point);
    let attempt = || -> Result<_> {
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let run_cfg = cfg.run_config(point);
        let ds = run_cfg.dataset()?;
        let seeds: Seeds = run_cfg.seeds;
        train_to_dir(&run_cfg.train_config(), &ds, &dir, &run_cfg.to_toml(), seeds)
    };
    match attempt() {
        Ok(run) => {
            let last = run.metrics.last().expect("training always records the final epoch");
            row.ok = true;
            row.acc_clean = Some(last.acc_clean);
            row.acc_noisy = last.acc_noisy;
            row.acc_test = Some(last.acc_test);
            row.loss_test = Some(last.loss_test);
        }
        Err(e) => {
            let _ = std::fs::create_dir_all(&dir);
            let _ = std::fs::write(dir.join("error.txt"), format!("{e}\n"));
        }
    }
    row
}
