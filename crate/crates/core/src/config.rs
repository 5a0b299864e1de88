//! TOML run and sweep configurations. Unknown keys are rejected, and every
//! error names the file line it came from when one can be located.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Seeds;
use crate::error::{Error, Result};
use crate::network::Activation;
use crate::optim::{OptimConfig, OptimizerKind};
use crate::task::{NoiseMode, NoisyDataset, Op, SplitRatios, TaskSpec};
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub noise_ratio: f64,
    pub noise_mode: NoiseMode,
}

impl Default for DataSection {
    fn default() -> Self {
        let r = SplitRatios::default();
        Self { train: r.train, val: r.val, test: r.test, noise_ratio: 0.0, noise_mode: NoiseMode::Asymmetric }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub width: usize,
    pub activation: Activation,
    pub tied: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { width: 1025, activation: Activation::Relu, tied: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub eval_every: usize,
    pub diag_every: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self { epochs: 200_000, eval_every: 2_000, diag_every: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

fn default_task() -> TaskSpec {
    TaskSpec::new(Op::Add, 113).expect("113 is prime")
}

/// A single training run: modular addition at `P = 113`, width 1025, ReLU,
/// AdamW (1e-3, decay 0.1), seed 42 unless overridden.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_task")]
    pub task: TaskSpec,
    pub data: DataSection,
    pub model: ModelSection,
    pub optimizer: OptimConfig,
    pub training: TrainingSection,
    pub seeds: Seeds,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: default_task(),
            data: DataSection::default(),
            model: ModelSection::default(),
            optimizer: OptimConfig::default(),
            training: TrainingSection::default(),
            seeds: Seeds { split: 42, noise: 42, init: 42 },
            output: OutputSection::default(),
        }
    }
}

/// 1-based line of the first `key = …` assignment in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn located(origin: &str, text: &str, key: &str, msg: String) -> Error {
    match line_of(text, key) {
        Some(line) => Error::Config(format!("{origin}:{line}: {msg}")),
        None => Error::Config(format!("{origin}: {msg}")),
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let msg = e.message().trim().to_string();
        match line {
            Some(line) => Error::Config(format!("{origin}:{line}: {msg}")),
            None => Error::Config(format!("{origin}: {msg}")),
        }
    })
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig = parse_toml(text, origin)?;
        cfg.validate_against(text, origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = read_text(path)?;
        let cfg = Self::from_toml(&text, &path.display().to_string())?;
        Ok((cfg, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_against("", "config")
    }

    fn validate_against(&self, text: &str, origin: &str) -> Result<()> {
        let err = |key: &str, msg: String| Err(located(origin, text, key, msg));
        if let Err(Error::Config(m)) = self.ratios().validate() {
            return err("train", m);
        }
        let alpha = self.data.noise_ratio;
        if !(0.0..1.0).contains(&alpha) {
            return err("noise_ratio", format!("noise_ratio must lie in [0, 1), got {alpha}"));
        }
        if self.data.noise_mode == NoiseMode::Symmetric && !self.task.op().is_commutative() {
            return err("noise_mode", format!("symmetric noise needs a commutative op, got {}", self.task.op()));
        }
        if self.model.width == 0 {
            return err("width", "width must be at least 1".into());
        }
        if self.training.epochs == 0 {
            return err("epochs", "epochs must be at least 1".into());
        }
        if self.training.eval_every == 0 {
            return err("eval_every", "eval_every must be at least 1".into());
        }
        if self.training.diag_every > 0 && alpha == 0.0 {
            return err("diag_every", "diagnostics need a noisy subset (noise_ratio > 0)".into());
        }
        if let Err(Error::Config(m)) = self.optimizer.validate() {
            return err("lr", m);
        }
        Ok(())
    }

    pub fn ratios(&self) -> SplitRatios {
        SplitRatios { train: self.data.train, val: self.data.val, test: self.data.test }
    }

    pub fn dataset(&self) -> Result<NoisyDataset> {
        NoisyDataset::generate(
            self.task,
            self.ratios(),
            self.data.noise_ratio,
            self.data.noise_mode,
            self.seeds.split,
            self.seeds.noise,
        )
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            width: self.model.width,
            activation: self.model.activation,
            tied: self.model.tied,
            optim: self.optimizer.clone(),
            epochs: self.training.epochs,
            eval_every: self.training.eval_every,
            diag_every: self.training.diag_every,
            init_seed: self.seeds.init,
        }
    }
}

/// Widths `2^k + 1` for `k = 4..=12`.
pub fn default_widths() -> Vec<usize> {
    (4..=12).map(|k| (1usize << k) + 1).collect()
}

/// Axes of a sweep. Empty axes other than `widths` fall back to the base run's value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub widths: Vec<usize>,
    pub noise_ratios: Vec<f64>,
    pub weight_decays: Vec<f64>,
    pub optimizers: Vec<OptimizerKind>,
    pub activations: Vec<Activation>,
    /// Each seed drives the split, noise and init streams together.
    pub seeds: Vec<u64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            widths: default_widths(),
            noise_ratios: Vec::new(),
            weight_decays: Vec::new(),
            optimizers: Vec::new(),
            activations: Vec::new(),
            seeds: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub parallelism: usize,
    pub base: RunConfig,
    pub grid: Grid,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { parallelism: 1, base: RunConfig::default(), grid: Grid::default() }
    }
}

/// One grid point, already resolved against the base configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub width: usize,
    pub noise_ratio: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub activation: Activation,
    pub seed: u64,
}

impl SweepPoint {
    pub fn run_id(&self) -> String {
        format!(
            "M{}_a{}_wd{}_{}_{}_s{}",
            self.width, self.noise_ratio, self.weight_decay, self.optimizer, self.activation, self.seed
        )
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: SweepConfig = parse_toml(text, origin)?;
        if cfg.parallelism == 0 {
            return Err(located(origin, text, "parallelism", "parallelism must be at least 1".into()));
        }
        if cfg.grid.widths.is_empty() {
            return Err(located(origin, text, "widths", "grid axis widths is empty".into()));
        }
        cfg.base.validate_against(text, origin)?;
        for point in cfg.points() {
            cfg.run_config(&point)
                .validate()
                .map_err(|e| Error::Config(format!("{origin}: run {}: {e}", point.run_id())))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = read_text(path)?;
        let cfg = Self::from_toml(&text, &path.display().to_string())?;
        Ok((cfg, text))
    }

    /// Grid points in a fixed order: width, noise, decay, optimizer, activation, seed.
    pub fn points(&self) -> Vec<SweepPoint> {
        let b = &self.base;
        let or = |axis: &[f64], v: f64| if axis.is_empty() { vec![v] } else { axis.to_vec() };
        let alphas = or(&self.grid.noise_ratios, b.data.noise_ratio);
        let decays = or(&self.grid.weight_decays, b.optimizer.weight_decay);
        let opts = if self.grid.optimizers.is_empty() { vec![b.optimizer.kind] } else { self.grid.optimizers.clone() };
        let acts =
            if self.grid.activations.is_empty() { vec![b.model.activation] } else { self.grid.activations.clone() };
        let seeds = if self.grid.seeds.is_empty() { vec![b.seeds.init] } else { self.grid.seeds.clone() };
        let mut out = Vec::new();
        for &width in &self.grid.widths {
            for &noise_ratio in &alphas {
                for &weight_decay in &decays {
                    for &optimizer in &opts {
                        for &activation in &acts {
                            for &seed in &seeds {
                                out.push(SweepPoint { width, noise_ratio, weight_decay, optimizer, activation, seed });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn run_config(&self, point: &SweepPoint) -> RunConfig {
        let mut cfg = self.base.clone();
        cfg.model.width = point.width;
        cfg.model.activation = point.activation;
        cfg.data.noise_ratio = point.noise_ratio;
        cfg.optimizer.weight_decay = point.weight_decay;
        if cfg.optimizer.kind != point.optimizer {
            cfg.optimizer.kind = point.optimizer;
            cfg.optimizer.momentum = None;
        }
        if !self.grid.seeds.is_empty() {
            cfg.seeds = Seeds { split: point.seed, noise: point.seed, init: point.seed };
        }
        cfg.output.dir = None;
        cfg
    }
}
