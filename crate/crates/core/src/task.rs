//! Modular-arithmetic tasks, the exhaustive dataset, splits and label noise.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Add,
    Sub,
    Mul,
}

impl Op {
    pub fn is_commutative(self) -> bool {
        matches!(self, Op::Add | Op::Mul)
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Op {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(Op::Add),
            "sub" => Ok(Op::Sub),
            "mul" => Ok(Op::Mul),
            other => Err(Error::Config(format!("unknown operation `{other}` (expected add, sub or mul)"))),
        }
    }
}

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// A modular operation over a prime modulus `P ≥ 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTask")]
pub struct TaskSpec {
    op: Op,
    modulus: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    op: Op,
    modulus: usize,
}

impl TryFrom<RawTask> for TaskSpec {
    type Error = Error;

    fn try_from(raw: RawTask) -> Result<Self> {
        TaskSpec::new(raw.op, raw.modulus)
    }
}

impl TaskSpec {
    pub fn new(op: Op, modulus: usize) -> Result<Self> {
        if modulus < 3 || !is_prime(modulus) {
            return Err(Error::Domain(format!("modulus must be a prime >= 3, got {modulus}")));
        }
        Ok(Self { op, modulus })
    }

    pub fn op(&self) -> Op {
        self.op
    }

    pub fn modulus(&self) -> usize {
        self.modulus
    }

    /// `a ∘ b mod P` for in-range operands.
    pub fn apply(&self, a: usize, b: usize) -> Result<usize> {
        mod_op(a, b, self)
    }
}

pub fn mod_op(a: usize, b: usize, task: &TaskSpec) -> Result<usize> {
    let p = task.modulus;
    if a >= p || b >= p {
        return Err(Error::Domain(format!("operands ({a}, {b}) outside [0, {p})")));
    }
    Ok(match task.op {
        Op::Add => (a + b) % p,
        Op::Sub => (a + p - b) % p,
        Op::Mul => (a * b) % p,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sample {
    pub a: usize,
    pub b: usize,
    pub true_label: usize,
    pub observed_label: usize,
    pub is_noisy: bool,
}

impl Sample {
    pub fn clean(a: usize, b: usize, label: usize) -> Self {
        Self { a, b, true_label: label, observed_label: label, is_noisy: false }
    }
}

/// All `P²` samples in row-major `(a, b)` order.
pub fn build_total(task: &TaskSpec) -> Vec<Sample> {
    let p = task.modulus;
    let mut out = Vec::with_capacity(p * p);
    for a in 0..p {
        for b in 0..p {
            let c = mod_op(a, b, task).expect("operands in range");
            out.push(Sample::clean(a, b, c));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.5, val: 0.2, test: 0.3 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::Config(format!("split ratios must be positive, got {self:?}")));
        }
        if self.sum() > 1.0 + 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {} > 1", self.sum())));
        }
        Ok(())
    }

    fn sum(&self) -> f64 {
        self.train + self.val + self.test
    }

    fn covers_all(&self) -> bool {
        (self.sum() - 1.0).abs() <= 1e-9
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    Asymmetric,
    Symmetric,
}

impl NoiseMode {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMode::Asymmetric => "asymmetric",
            NoiseMode::Symmetric => "symmetric",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisyDataset {
    pub task: TaskSpec,
    pub ratios: SplitRatios,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub noise_ratio: f64,
    pub noise_mode: NoiseMode,
    pub split_seed: u64,
    pub noise_seed: u64,
}

/// `floor(ratio · n)` with a guard against `x.9999…` products of exact ratios.
fn floor_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64) + 1e-9).floor() as usize
}

pub fn split_dataset(
    total: &[Sample],
    task: TaskSpec,
    ratios: SplitRatios,
    seed: u64,
) -> Result<NoisyDataset> {
    ratios.validate()?;
    let n = total.len();
    let n_train = floor_count(ratios.train, n);
    let n_val = floor_count(ratios.val, n);
    let n_test = if ratios.covers_all() {
        n - n_train - n_val
    } else {
        floor_count(ratios.test, n).min(n - n_train - n_val)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |range: std::ops::Range<usize>| -> Vec<Sample> {
        order[range].iter().map(|&i| total[i]).collect()
    };
    Ok(NoisyDataset {
        task,
        ratios,
        train: pick(0..n_train),
        val: pick(n_train..n_train + n_val),
        test: pick(n_train + n_val..n_train + n_val + n_test),
        noise_ratio: 0.0,
        noise_mode: NoiseMode::Asymmetric,
        split_seed: seed,
        noise_seed: 0,
    })
}

fn draw_wrong_label(rng: &mut ChaCha8Rng, p: usize, true_label: usize) -> usize {
    loop {
        let c = rng.random_range(0..p);
        if c != true_label {
            return c;
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("noise ratio must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

fn check_noise_free(ds: &NoisyDataset) -> Result<()> {
    if ds.train.iter().any(|s| s.is_noisy) {
        return Err(Error::Domain("dataset already carries label noise".into()));
    }
    Ok(())
}

/// Flips `floor(α·|train|)` training labels to uniformly drawn wrong classes.
pub fn inject_noise_asymmetric(ds: &NoisyDataset, alpha: f64, seed: u64) -> Result<NoisyDataset> {
    check_alpha(alpha)?;
    check_noise_free(ds)?;
    let mut out = ds.clone();
    out.noise_ratio = alpha;
    out.noise_mode = NoiseMode::Asymmetric;
    out.noise_seed = seed;
    let n = out.train.len();
    let k = floor_count(alpha, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    let p = out.task.modulus();
    for i in chosen {
        let s = &mut out.train[i];
        s.observed_label = draw_wrong_label(&mut rng, p, s.true_label);
        s.is_noisy = true;
    }
    Ok(out)
}

/// Flips `floor(α/2·|train|)` mirrored pairs `(a,b)`, `(b,a)` with `a < b` to a shared wrong label.
pub fn inject_noise_symmetric(ds: &NoisyDataset, alpha: f64, seed: u64) -> Result<NoisyDataset> {
    check_alpha(alpha)?;
    if !ds.task.op().is_commutative() {
        return Err(Error::Unsupported(format!(
            "symmetric noise requires a commutative operation, got {}",
            ds.task.op()
        )));
    }
    check_noise_free(ds)?;
    let n = ds.train.len();
    let p = ds.task.modulus();
    let position: std::collections::HashMap<(usize, usize), usize> =
        ds.train.iter().enumerate().map(|(i, s)| ((s.a, s.b), i)).collect();
    // Candidate pairs in training order, each with its mirror's index.
    let candidates: Vec<(usize, usize)> = ds
        .train
        .iter()
        .enumerate()
        .filter(|(_, s)| s.a < s.b)
        .filter_map(|(i, s)| position.get(&(s.b, s.a)).map(|&j| (i, j)))
        .collect();
    let k = floor_count(alpha / 2.0, n);
    if k > candidates.len() {
        return Err(Error::InsufficientMirroredPairs {
            requested: alpha,
            achievable: 2.0 * candidates.len() as f64 / n as f64,
        });
    }
    let mut out = ds.clone();
    out.noise_ratio = alpha;
    out.noise_mode = NoiseMode::Symmetric;
    out.noise_seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, candidates.len(), k).into_vec();
    chosen.sort_unstable();
    for c in chosen {
        let (i, j) = candidates[c];
        let label = draw_wrong_label(&mut rng, p, out.train[i].true_label);
        for idx in [i, j] {
            out.train[idx].observed_label = label;
            out.train[idx].is_noisy = true;
        }
    }
    Ok(out)
}

impl NoisyDataset {
    /// Builds the exhaustive table, splits it and injects noise in one go.
    pub fn generate(
        task: TaskSpec,
        ratios: SplitRatios,
        noise_ratio: f64,
        noise_mode: NoiseMode,
        split_seed: u64,
        noise_seed: u64,
    ) -> Result<Self> {
        let total = build_total(&task);
        let ds = split_dataset(&total, task, ratios, split_seed)?;
        match noise_mode {
            NoiseMode::Asymmetric => inject_noise_asymmetric(&ds, noise_ratio, noise_seed),
            NoiseMode::Symmetric => inject_noise_symmetric(&ds, noise_ratio, noise_seed),
        }
    }

    pub fn clean_train(&self) -> Vec<Sample> {
        self.train.iter().filter(|s| !s.is_noisy).copied().collect()
    }

    pub fn noisy_train(&self) -> Vec<Sample> {
        self.train.iter().filter(|s| s.is_noisy).copied().collect()
    }

    pub fn noisy_count(&self) -> usize {
        self.train.iter().filter(|s| s.is_noisy).count()
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_manifest_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_manifest_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# modlab dataset manifest v1")?;
        writeln!(w, "# task={}", self.task.op())?;
        writeln!(w, "# modulus={}", self.task.modulus())?;
        writeln!(w, "# train_ratio={}", self.ratios.train)?;
        writeln!(w, "# val_ratio={}", self.ratios.val)?;
        writeln!(w, "# test_ratio={}", self.ratios.test)?;
        writeln!(w, "# noise_ratio={}", self.noise_ratio)?;
        writeln!(w, "# noise_mode={}", self.noise_mode.name())?;
        writeln!(w, "# split_seed={}", self.split_seed)?;
        writeln!(w, "# noise_seed={}", self.noise_seed)?;
        writeln!(w, "split,a,b,observed_label,is_noisy")?;
        for (name, rows) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for s in rows.iter() {
                writeln!(w, "{name},{},{},{},{}", s.a, s.b, s.observed_label, u8::from(s.is_noisy))?;
            }
        }
        Ok(())
    }

    pub fn read_manifest(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_manifest_from(std::io::BufReader::new(file))
    }

    pub fn read_manifest_from(r: impl BufRead) -> Result<Self> {
        let bad = |line: usize, detail: String| Error::parse("dataset manifest", format!("line {line}: {detail}"));
        let mut meta = std::collections::HashMap::new();
        let mut rows: Vec<(usize, Split, Sample)> = Vec::new();
        let mut saw_header = false;
        let mut task: Option<TaskSpec> = None;
        for (lineno, line) in r.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| bad(lineno, e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if !saw_header {
                if line != "split,a,b,observed_label,is_noisy" {
                    return Err(bad(lineno, format!("unexpected column header `{line}`")));
                }
                saw_header = true;
                let op: Op = meta.get("task").ok_or_else(|| bad(lineno, "missing task".into()))?.parse()?;
                let p: usize = parse_meta(&meta, "modulus").map_err(|d| bad(lineno, d))?;
                task = Some(TaskSpec::new(op, p)?);
                continue;
            }
            let task = task.as_ref().expect("header seen");
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad(lineno, format!("expected 5 fields, found {}", fields.len())));
            }
            let split = match fields[0] {
                "train" => Split::Train,
                "val" => Split::Val,
                "test" => Split::Test,
                other => return Err(bad(lineno, format!("unknown split `{other}`"))),
            };
            let num = |s: &str| s.parse::<usize>().map_err(|e| bad(lineno, format!("`{s}`: {e}")));
            let (a, b, observed) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
            let is_noisy = match fields[4] {
                "0" => false,
                "1" => true,
                other => return Err(bad(lineno, format!("is_noisy must be 0 or 1, got `{other}`"))),
            };
            let true_label = task.apply(a, b).map_err(|e| bad(lineno, e.to_string()))?;
            if observed >= task.modulus() || is_noisy != (observed != true_label) {
                return Err(bad(lineno, "observed label inconsistent with noise flag".into()));
            }
            if is_noisy && split != Split::Train {
                return Err(bad(lineno, "noisy sample outside the training split".into()));
            }
            rows.push((lineno, split, Sample { a, b, true_label, observed_label: observed, is_noisy }));
        }
        let task = task.ok_or_else(|| Error::parse("dataset manifest", "no column header found"))?;
        let get_f = |k: &str| parse_meta::<f64>(&meta, k).map_err(|d| Error::parse("dataset manifest", d));
        let get_u = |k: &str| parse_meta::<u64>(&meta, k).map_err(|d| Error::parse("dataset manifest", d));
        let noise_mode = match meta.get("noise_mode").map(String::as_str) {
            Some("asymmetric") => NoiseMode::Asymmetric,
            Some("symmetric") => NoiseMode::Symmetric,
            other => return Err(Error::parse("dataset manifest", format!("bad noise_mode {other:?}"))),
        };
        let mut ds = NoisyDataset {
            task,
            ratios: SplitRatios { train: get_f("train_ratio")?, val: get_f("val_ratio")?, test: get_f("test_ratio")? },
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
            noise_ratio: get_f("noise_ratio")?,
            noise_mode,
            split_seed: get_u("split_seed")?,
            noise_seed: get_u("noise_seed")?,
        };
        let mut seen = HashSet::new();
        for (lineno, split, s) in rows {
            if !seen.insert((s.a, s.b)) {
                return Err(bad(lineno, format!("pair ({}, {}) listed twice", s.a, s.b)));
            }
            match split {
                Split::Train => ds.train.push(s),
                Split::Val => ds.val.push(s),
                Split::Test => ds.test.push(s),
            }
        }
        Ok(ds)
    }
}

fn parse_meta<T: FromStr>(meta: &std::collections::HashMap<String, String>, key: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    let raw = meta.get(key).ok_or_else(|| format!("missing `{key}`"))?;
    raw.parse().map_err(|e| format!("`{key}`: {e}"))
}
