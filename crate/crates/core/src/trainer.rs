//! Full-batch training with periodic evaluation and gradient-alignment
//! diagnostics.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Seeds};
use crate::error::{Error, Result};
use crate::network::{accuracy, init_params, loss_and_grads, mean_loss, Activation, Batch, LabelField, ModelParams};
use crate::optim::{OptimConfig, Optimizer};
use crate::task::{NoisyDataset, Sample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub width: usize,
    pub activation: Activation,
    pub tied: bool,
    pub optim: OptimConfig,
    pub epochs: usize,
    pub eval_every: usize,
    /// Diagnostics cadence in epochs; 0 disables them.
    pub diag_every: usize,
    pub init_seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::Config("width must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        self.optim.validate()
    }

    fn records(&self, epoch: usize) -> bool {
        epoch.is_multiple_of(self.eval_every) || self.diagnoses(epoch) || epoch == self.epochs
    }

    fn diagnoses(&self, epoch: usize) -> bool {
        self.diag_every > 0 && epoch.is_multiple_of(self.diag_every)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradDiagnostics {
    pub s_c: f64,
    pub s_n: f64,
    pub inner: f64,
    /// `s_c·|D_c| + s_n·|D_n| − ‖∇L_c + ∇L_n‖²`, zero up to rounding.
    pub identity_residual: f64,
    pub total_norm_sq: f64,
}

/// Evaluation of a parameter state. `acc_noisy` is `None` when there is no noise.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub acc_clean: f64,
    pub acc_noisy: Option<f64>,
    pub acc_val: f64,
    pub acc_test: f64,
    pub loss_test: f64,
    pub diagnostics: Option<GradDiagnostics>,
}

/// Clean accuracy is against true labels, noisy accuracy against the observed
/// (corrupted) labels. Test loss is the mean cross-entropy against true labels.
pub fn eval_full(params: &ModelParams, ds: &NoisyDataset) -> MetricsRow {
    let clean = ds.clean_train();
    let noisy = ds.noisy_train();
    let train_loss = mean_or_nan(params, &ds.train, LabelField::Observed);
    MetricsRow {
        epoch: 0,
        train_loss,
        acc_clean: accuracy(params, &clean, LabelField::True),
        acc_noisy: (!noisy.is_empty()).then(|| accuracy(params, &noisy, LabelField::Observed)),
        acc_val: accuracy(params, &ds.val, LabelField::True),
        acc_test: accuracy(params, &ds.test, LabelField::True),
        loss_test: mean_or_nan(params, &ds.test, LabelField::True),
        diagnostics: None,
    }
}

fn mean_or_nan(params: &ModelParams, samples: &[Sample], field: LabelField) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    mean_loss(params, &Batch::from_samples(samples, field)).unwrap_or(f64::NAN)
}

/// Gradient alignment between the clean and noisy subsets using summed losses.
pub fn grad_diagnostics(params: &ModelParams, clean: &[Sample], noisy: &[Sample]) -> Result<GradDiagnostics> {
    if clean.is_empty() || noisy.is_empty() {
        return Err(Error::Domain("gradient diagnostics need nonempty clean and noisy subsets".into()));
    }
    let sum_grad = |samples: &[Sample]| -> Result<_> {
        let (_, mut g) = loss_and_grads(params, &Batch::from_samples(samples, LabelField::Observed))?;
        g.scale(samples.len() as f64);
        Ok(g)
    };
    let gc = sum_grad(clean)?;
    let gn = sum_grad(noisy)?;
    let mut total = gc.clone();
    total.add(&gn);
    let (nc, nn) = (clean.len() as f64, noisy.len() as f64);
    let s_c = gc.dot(&total) / nc;
    let s_n = gn.dot(&total) / nn;
    let total_norm_sq = total.norm_sq();
    Ok(GradDiagnostics {
        s_c,
        s_n,
        inner: gc.dot(&gn),
        identity_residual: s_c * nc + s_n * nn - total_norm_sq,
        total_norm_sq,
    })
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub params: ModelParams,
    pub metrics: Vec<MetricsRow>,
    pub steps: usize,
}

/// A run that hit a non-finite value. `last_good` is the state after `last_good_epoch` steps.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub last_good: ModelParams,
    pub last_good_epoch: usize,
    pub metrics: Vec<MetricsRow>,
}

pub fn train(config: &TrainConfig, ds: &NoisyDataset) -> Result<TrainRun, Box<TrainFailure>> {
    train_with(config, ds, |_| {})
}

/// Like [`train`], calling `on_row` for every metrics row as it is produced.
pub fn train_with(
    config: &TrainConfig,
    ds: &NoisyDataset,
    mut on_row: impl FnMut(&MetricsRow),
) -> Result<TrainRun, Box<TrainFailure>> {
    let p = ds.task.modulus();
    let early = |error: Error| {
        Box::new(TrainFailure {
            error,
            last_good: ModelParams::zeros(p, config.width, config.activation, config.tied),
            last_good_epoch: 0,
            metrics: Vec::new(),
        })
    };
    config.validate().map_err(early)?;
    if ds.train.is_empty() {
        return Err(early(Error::Config("training split is empty".into())));
    }
    let clean = ds.clean_train();
    let noisy = ds.noisy_train();
    if config.diag_every > 0 && (noisy.is_empty() || clean.is_empty()) {
        return Err(early(Error::Config("diagnostics need both clean and noisy training samples".into())));
    }
    let mut params = init_params(p, config.width, config.activation, config.tied, config.init_seed).map_err(early)?;
    let mut opt = Optimizer::new(config.optim.clone()).map_err(early)?;
    let batch = Batch::from_samples(&ds.train, LabelField::Observed);
    let mut metrics = Vec::new();

    let mut record = |params: &ModelParams, epoch: usize, metrics: &mut Vec<MetricsRow>| -> Result<()> {
        let mut row = eval_full(params, ds);
        row.epoch = epoch;
        if config.diagnoses(epoch) {
            row.diagnostics = Some(grad_diagnostics(params, &clean, &noisy)?);
        }
        on_row(&row);
        metrics.push(row);
        Ok(())
    };
    let fail = |error: Error, last_good: ModelParams, epoch: usize, metrics: Vec<MetricsRow>| {
        Box::new(TrainFailure { error: error.at_epoch(epoch), last_good, last_good_epoch: epoch - 1, metrics })
    };

    record(&params, 0, &mut metrics).map_err(early)?;
    for epoch in 1..=config.epochs {
        let (loss, grads) = match loss_and_grads(&params, &batch) {
            Ok(v) => v,
            Err(e) => return Err(fail(e, params, epoch, metrics)),
        };
        if !loss.is_finite() {
            let e = Error::NumericalFailure { epoch: None, detail: format!("training loss is {loss}") };
            return Err(fail(e, params, epoch, metrics));
        }
        let last_good = params.clone();
        if let Err(e) = opt.step(&mut params, &grads) {
            return Err(fail(e, last_good, epoch, metrics));
        }
        if config.records(epoch) {
            if let Err(e) = record(&params, epoch, &mut metrics) {
                return Err(fail(e, last_good, epoch, metrics));
            }
        }
    }
    Ok(TrainRun { params, metrics, steps: opt.steps_taken() })
}

pub const METRICS_HEADER: &str = "epoch,train_loss,acc_clean,acc_noisy,acc_val,acc_test,loss_test,s_c,s_n,grad_inner";
const METRICS_NOTE: &str =
    "# train_loss and loss_test are per-sample means; s_c, s_n and grad_inner are computed from summed losses";

fn opt_cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_NOTE}\n{METRICS_HEADER}\n");
    for r in rows {
        let d = r.diagnostics;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            r.acc_clean,
            opt_cell(r.acc_noisy),
            r.acc_val,
            r.acc_test,
            r.loss_test,
            opt_cell(d.map(|d| d.s_c)),
            opt_cell(d.map(|d| d.s_n)),
            opt_cell(d.map(|d| d.inner)),
        )
        .expect("writing to a String");
    }
    out
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    std::fs::write(path, metrics_csv(rows)).map_err(|e| Error::io(path, e))
}

/// File names inside a run directory.
pub mod layout {
    pub const CONFIG: &str = "config.snapshot";
    pub const MANIFEST: &str = "dataset.manifest";
    pub const METRICS: &str = "metrics.csv";
    pub const FINAL: &str = "checkpoint.final";
    pub const LAST_GOOD: &str = "checkpoint.lastgood";
}

/// Trains and persists a complete run directory. `snapshot` is written
/// verbatim as the configuration record. On numerical failure the last good
/// parameters and the metrics so far are saved before the error is returned.
pub fn train_to_dir(
    config: &TrainConfig,
    ds: &NoisyDataset,
    dir: &Path,
    snapshot: &str,
    seeds: Seeds,
) -> Result<TrainRun> {
    config.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let put = |name: &str, text: &str| -> Result<()> {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
    };
    put(layout::CONFIG, snapshot)?;
    ds.write_manifest(&dir.join(layout::MANIFEST))?;
    let op = ds.task.op();
    match train(config, ds) {
        Ok(run) => {
            write_metrics(&dir.join(layout::METRICS), &run.metrics)?;
            Checkpoint::new(op, seeds, config.epochs, run.params.clone()).save(&dir.join(layout::FINAL))?;
            Ok(run)
        }
        Err(failure) => {
            write_metrics(&dir.join(layout::METRICS), &failure.metrics)?;
            Checkpoint::new(op, seeds, failure.last_good_epoch, failure.last_good)
                .save(&dir.join(layout::LAST_GOOD))?;
            Err(failure.error)
        }
    }
}
