//! Neuron scores and the prefix/suffix selection that splits a trained network
//! into a generalising sub-network and a memorising one.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{accuracy, argmax, Activation, LabelField, ModelParams};
use crate::spectral::{filter_model, ipr};
use crate::task::{NoisyDataset, Sample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Ipr,
    Str,
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreKind::Ipr => "ipr",
            ScoreKind::Str => "str",
        })
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ipr" => Ok(ScoreKind::Ipr),
            "str" | "strength" => Ok(ScoreKind::Str),
            other => Err(Error::Config(format!("unknown score {other:?} (expected ipr or str)"))),
        }
    }
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `‖w‖_∞ · φ(‖u‖_∞ + ‖v‖_∞)`.
pub fn strength(u: &[f64], v: &[f64], w: &[f64], activation: Activation) -> f64 {
    inf_norm(w) * activation.eval(inf_norm(u) + inf_norm(v))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeuronScore {
    pub index: usize,
    /// IPR of `w_m`; 0 for a neuron whose output weights are all zero.
    pub ipr: f64,
    pub strength: f64,
}

impl NeuronScore {
    pub fn get(&self, kind: ScoreKind) -> f64 {
        match kind {
            ScoreKind::Ipr => self.ipr,
            ScoreKind::Str => self.strength,
        }
    }
}

pub fn score_neurons(params: &ModelParams) -> Vec<NeuronScore> {
    (0..params.width())
        .map(|m| {
            let (u, v, w) = params.neuron(m);
            NeuronScore {
                index: m,
                ipr: ipr(&w).unwrap_or(0.0),
                strength: strength(&u, &v, &w, params.activation()),
            }
        })
        .collect()
}

/// Rounds to 12 significant digits so that scores equal up to last-bit noise tie.
fn snap(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    pub kind: ScoreKind,
    /// Neuron indices, highest score first.
    pub order: Vec<usize>,
}

/// Descending by score, ties broken by ascending neuron index.
pub fn rank_neurons(params: &ModelParams, kind: ScoreKind) -> Ranking {
    rank_scores(&score_neurons(params).iter().map(|s| s.get(kind)).collect::<Vec<_>>(), kind)
}

pub fn rank_scores(scores: &[f64], kind: ScoreKind) -> Ranking {
    let snapped: Vec<f64> = scores.iter().map(|&s| snap(s)).collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| snapped[b].total_cmp(&snapped[a]).then(a.cmp(&b)));
    Ranking { kind, order }
}

/// Logits that grow one neuron at a time. Each added neuron contributes
/// `w_m · φ(u_m[a] + v_m[b])` to every sample, so prefix `k` reuses prefix `k − 1`.
struct RunningLogits<'a> {
    params: &'a ModelParams,
    samples: &'a [Sample],
    logits: Vec<f64>,
}

impl<'a> RunningLogits<'a> {
    fn new(params: &'a ModelParams, samples: &'a [Sample]) -> Self {
        let logits = samples.iter().flat_map(|_| params.mu().iter().copied()).collect();
        Self { params, samples, logits }
    }

    fn add(&mut self, m: usize) {
        let p = self.params.modulus();
        let (u, v, w) = self.params.neuron(m);
        let act = self.params.activation();
        for (s, row) in self.samples.iter().zip(self.logits.chunks_mut(p)) {
            let h = act.eval(u[s.a] + v[s.b]);
            if h != 0.0 {
                row.iter_mut().zip(&w).for_each(|(z, wc)| *z += h * wc);
            }
        }
    }

    fn accuracy(&self, field: LabelField) -> f64 {
        let p = self.params.modulus();
        let hits = self
            .samples
            .iter()
            .zip(self.logits.chunks(p))
            .filter(|(s, row)| argmax(row) == field.of(s))
            .count();
        hits as f64 / self.samples.len() as f64
    }
}

/// Outcome of the suffix scan on the noisy subset.
#[derive(Clone, Debug, PartialEq)]
pub struct MemorizationSelection {
    pub neurons: Vec<usize>,
    pub k: usize,
    pub gamma: f64,
    /// False when no suffix reached `τ` and the whole network was taken.
    pub reached_tau: bool,
    /// Noisy-label accuracy of the suffix of each size `k = 1..=M`, up to the stopping point.
    pub noisy_curve: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionResult {
    pub score_kind: ScoreKind,
    pub ranking: Vec<usize>,
    pub tau: f64,
    pub m_g: Vec<usize>,
    pub k_g: usize,
    pub gamma_g: f64,
    /// Validation accuracy of each prefix `k = 1..=M` of the ranking.
    pub val_curve: Vec<(usize, f64)>,
    /// `None` when the noisy subset is empty and the suffix scan is skipped.
    pub memorization: Option<MemorizationSelection>,
}

impl PartitionResult {
    pub fn gamma_r(&self) -> Option<f64> {
        self.memorization.as_ref().map(|m| m.gamma)
    }

    pub fn m_r(&self) -> Option<&[usize]> {
        self.memorization.as_ref().map(|m| m.neurons.as_slice())
    }
}

/// Picks the best validation prefix and the smallest noise-memorising suffix.
pub fn select_partition(
    params: &ModelParams,
    ranking: &Ranking,
    val: &[Sample],
    noisy: &[Sample],
    tau: f64,
) -> Result<PartitionResult> {
    let m = params.width();
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Domain(format!("tau must lie in (0, 1], got {tau}")));
    }
    if m == 0 {
        return Err(Error::Domain("cannot partition a width-0 model".into()));
    }
    if val.is_empty() {
        return Err(Error::Domain("validation set is empty".into()));
    }
    let mut sorted = ranking.order.clone();
    sorted.sort_unstable();
    if sorted != (0..m).collect::<Vec<_>>() {
        return Err(Error::Domain("ranking is not a permutation of the neurons".into()));
    }
    let order = &ranking.order;

    let mut prefix = RunningLogits::new(params, val);
    let mut val_curve = Vec::with_capacity(m);
    let (mut k_g, mut best) = (0, f64::NEG_INFINITY);
    for (i, &neuron) in order.iter().enumerate() {
        prefix.add(neuron);
        let acc = prefix.accuracy(LabelField::True);
        val_curve.push((i + 1, acc));
        if acc > best {
            best = acc;
            k_g = i + 1;
        }
    }

    let memorization = (!noisy.is_empty()).then(|| {
        let mut suffix = RunningLogits::new(params, noisy);
        let mut noisy_curve = Vec::new();
        let mut found = None;
        for (i, &neuron) in order.iter().rev().enumerate() {
            suffix.add(neuron);
            let acc = suffix.accuracy(LabelField::Observed);
            noisy_curve.push((i + 1, acc));
            if acc >= tau {
                found = Some(i + 1);
                break;
            }
        }
        let k = found.unwrap_or(m);
        MemorizationSelection {
            neurons: order[m - k..].to_vec(),
            k,
            gamma: k as f64 / m as f64,
            reached_tau: found.is_some(),
            noisy_curve,
        }
    });

    Ok(PartitionResult {
        score_kind: ranking.kind,
        ranking: order.clone(),
        tau,
        m_g: order[..k_g].to_vec(),
        k_g,
        gamma_g: k_g as f64 / m as f64,
        val_curve,
        memorization,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionReport {
    pub val_full: f64,
    pub val_g: f64,
    pub test_full: f64,
    pub test_g: f64,
    pub test_r: Option<f64>,
    /// Test accuracy of `f^G` after frequency filtration, when requested.
    pub test_g_filtered: Option<f64>,
    pub noisy_full: Option<f64>,
    pub noisy_r: Option<f64>,
}

pub fn evaluate_partition(
    params: &ModelParams,
    result: &PartitionResult,
    ds: &NoisyDataset,
    filter_g: bool,
) -> PartitionReport {
    let g = params.select_neurons(&result.m_g);
    let r = result.m_r().map(|idx| params.select_neurons(idx));
    let noisy = ds.noisy_train();
    let noisy_acc = |model: &ModelParams| (!noisy.is_empty()).then(|| accuracy(model, &noisy, LabelField::Observed));
    PartitionReport {
        val_full: accuracy(params, &ds.val, LabelField::True),
        val_g: accuracy(&g, &ds.val, LabelField::True),
        test_full: accuracy(params, &ds.test, LabelField::True),
        test_g: accuracy(&g, &ds.test, LabelField::True),
        test_r: r.as_ref().map(|r| accuracy(r, &ds.test, LabelField::True)),
        test_g_filtered: filter_g.then(|| accuracy(&filter_model(&g).g, &ds.test, LabelField::True)),
        noisy_full: noisy_acc(params),
        noisy_r: r.as_ref().and_then(noisy_acc),
    }
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; NaN if either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs equal-length inputs");
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
