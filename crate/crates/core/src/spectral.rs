//! Unitary DFT on length-`P` vectors, dominant-frequency filtration of
//! neurons, phase statistics and spectral localisation.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{accuracy, LabelField, ModelParams};
use crate::task::{NoisyDataset, Op};

/// Non-DC bins at or below this magnitude (relative to `max(1, ‖w‖₂)`) count as absent.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// Twiddle factors `e^{−2πij/P}` for `j = 0..P`, indexed by `(k·n) mod P`.
fn twiddles(p: usize) -> Vec<Complex64> {
    (0..p).map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / p as f64)).collect()
}

/// `x̃_k = Σ_n x_n e^{−2πikn/P} / √P`.
pub fn dft(x: &[f64]) -> Vec<Complex64> {
    let p = x.len();
    let tw = twiddles(p);
    let norm = 1.0 / (p as f64).sqrt();
    (0..p)
        .map(|k| {
            let acc: Complex64 = x.iter().enumerate().map(|(n, &xn)| tw[(k * n) % p] * xn).sum();
            acc * norm
        })
        .collect()
}

/// Inverse of [`dft`], returning the real part.
pub fn idft(spec: &[Complex64]) -> Vec<f64> {
    let p = spec.len();
    let tw = twiddles(p);
    let norm = 1.0 / (p as f64).sqrt();
    (0..p)
        .map(|n| {
            let acc: Complex64 = spec.iter().enumerate().map(|(k, &c)| c * tw[(k * n) % p].conj()).sum();
            acc.re * norm
        })
        .collect()
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

fn check_modulus(x: &[f64], p: usize) -> Result<()> {
    if x.len() != p {
        return Err(Error::Domain(format!("vector of length {} where {p} was expected", x.len())));
    }
    Ok(())
}

fn dominant_in(spec: &[Complex64], scale: f64) -> Result<usize> {
    let half = (spec.len() - 1) / 2;
    let mut best = 0;
    let mut best_mag = DEGENERATE_TOL * scale.max(1.0);
    for (k, c) in spec.iter().enumerate().take(half + 1).skip(1) {
        let mag = c.norm();
        if mag > best_mag {
            best = k;
            best_mag = mag;
        }
    }
    if best == 0 {
        Err(Error::DegenerateNeuron)
    } else {
        Ok(best)
    }
}

/// Half-spectrum bin `1..=(P−1)/2` of largest magnitude, smaller bin on ties.
pub fn dominant_frequency(w: &[f64]) -> Result<usize> {
    if w.len() < 3 {
        return Err(Error::Domain("dominant frequency needs a vector of length at least 3".into()));
    }
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    dominant_in(&dft(w), norm)
}

/// The component of `x` in bins `{ω, P−ω}`: `(2/√P)·Re(x̃_ω e^{2πiωn/P})`.
fn project(spec: &[Complex64], omega: usize) -> Vec<f64> {
    let p = spec.len();
    let c = spec[omega];
    let scale = 2.0 / (p as f64).sqrt();
    (0..p)
        .map(|n| {
            let angle = 2.0 * PI * ((omega * n) % p) as f64 / p as f64;
            scale * (c * Complex64::from_polar(1.0, angle)).re
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Phases {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Triple {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuronSplit {
    pub g: Triple,
    pub r: Triple,
    pub omega: usize,
    pub phases: Phases,
}

/// Splits one neuron at the dominant frequency of `w`.
pub fn filter_neuron(u: &[f64], v: &[f64], w: &[f64]) -> Result<NeuronSplit> {
    let p = w.len();
    check_modulus(u, p)?;
    check_modulus(v, p)?;
    let omega = dominant_frequency(w)?;
    let (su, sv, sw) = (dft(u), dft(v), dft(w));
    let g = Triple { u: project(&su, omega), v: project(&sv, omega), w: project(&sw, omega) };
    let minus = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>();
    let r = Triple { u: minus(u, &g.u), v: minus(v, &g.v), w: minus(w, &g.w) };
    let phases = Phases {
        a: wrap_phase(su[omega].arg()),
        b: wrap_phase(sv[omega].arg()),
        c: wrap_phase(sw[omega].arg()),
    };
    Ok(NeuronSplit { g, r, omega, phases })
}

/// Per-neuron filtration of a whole model. Both halves share the original `μ`.
#[derive(Clone, Debug)]
pub struct SpectralSplit {
    pub g: ModelParams,
    pub r: ModelParams,
    /// Dominant frequency per neuron; `None` for degenerate neurons, which go wholly to `r`.
    pub freqs: Vec<Option<usize>>,
    pub phases: Vec<Option<Phases>>,
}

impl SpectralSplit {
    pub fn modulus(&self) -> usize {
        self.g.modulus()
    }

    pub fn degenerate_count(&self) -> usize {
        self.freqs.iter().filter(|f| f.is_none()).count()
    }
}

pub fn filter_model(params: &ModelParams) -> SpectralSplit {
    let (m, p) = (params.width(), params.modulus());
    let mut gu = Matrix::zeros(m, p);
    let mut gv = Matrix::zeros(m, p);
    let mut gw = Matrix::zeros(p, m);
    let mut freqs = Vec::with_capacity(m);
    let mut phases = Vec::with_capacity(m);
    for k in 0..m {
        let (u, v, w) = params.neuron(k);
        match filter_neuron(&u, &v, &w) {
            Ok(split) => {
                gu.row_mut(k).copy_from_slice(&split.g.u);
                gv.row_mut(k).copy_from_slice(&split.g.v);
                gw.set_column(k, &split.g.w);
                freqs.push(Some(split.omega));
                phases.push(Some(split.phases));
            }
            Err(_) => {
                freqs.push(None);
                phases.push(None);
            }
        }
    }
    let mut ru = params.u().clone();
    ru.add_scaled(-1.0, &gu);
    let mut rv = params.v().clone();
    rv.add_scaled(-1.0, &gv);
    let mut rw = params.w().clone();
    rw.add_scaled(-1.0, &gw);
    let tied = params.is_tied();
    let act = params.activation();
    let mu = params.mu().to_vec();
    let build = |u: Matrix, v: Matrix, w: Matrix| {
        ModelParams::new(u, (!tied).then_some(v), w, mu.clone(), act).expect("filtered shapes match the source")
    };
    SpectralSplit { g: build(gu, gv, gw), r: build(ru, rv, rw), freqs, phases }
}

fn phase_sign(op: Op) -> Result<f64> {
    match op {
        Op::Add => Ok(1.0),
        Op::Sub => Ok(-1.0),
        Op::Mul => Err(Error::Unsupported("phase relations are defined for add and sub only".into())),
    }
}

/// Wrapped defect `φ_a ± φ_b − φ_c` of one neuron.
pub fn phase_defect(ph: &Phases, op: Op) -> Result<f64> {
    Ok(wrap_phase(ph.a + phase_sign(op)? * ph.b - ph.c))
}

/// Mean squared wrapped phase defect over the non-degenerate neurons.
pub fn phase_mse(split: &SpectralSplit, op: Op) -> Result<f64> {
    phase_sign(op)?;
    let defects: Vec<f64> = split.phases.iter().flatten().map(|ph| phase_defect(ph, op)).collect::<Result<_>>()?;
    if defects.is_empty() {
        return Err(Error::Domain("phase MSE needs at least one non-degenerate neuron".into()));
    }
    Ok(defects.iter().map(|d| d * d).sum::<f64>() / defects.len() as f64)
}

/// `(‖w̃‖₄ / ‖w̃‖₂)⁴`, between `1/P` (flat spectrum) and 1 (single bin).
pub fn ipr(w: &[f64]) -> Result<f64> {
    if w.iter().all(|&x| x == 0.0) {
        return Err(Error::Domain("IPR of a zero vector is undefined".into()));
    }
    let spec = dft(w);
    let sq: Vec<f64> = spec.iter().map(|c| c.norm_sqr()).collect();
    let l2 = sq.iter().sum::<f64>();
    let l4 = sq.iter().map(|s| s * s).sum::<f64>();
    Ok(l4 / (l2 * l2))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyStats {
    /// `counts[ω − 1]` neurons have dominant frequency `ω ∈ 1..=(P−1)/2`.
    pub counts: Vec<usize>,
    /// `norms[k]` is the norm over neurons of bin `k` of `W̃^G`, for `k ∈ 0..=(P−1)/2`.
    pub norms: Vec<f64>,
}

pub fn frequency_stats(split: &SpectralSplit) -> FrequencyStats {
    let p = split.modulus();
    let half = (p - 1) / 2;
    let mut counts = vec![0; half];
    for omega in split.freqs.iter().flatten() {
        counts[omega - 1] += 1;
    }
    let mut sq = vec![0.0; half + 1];
    for k in 0..split.g.width() {
        let spec = dft(&split.g.w().column(k));
        for (acc, c) in sq.iter_mut().zip(&spec) {
            *acc += c.norm_sqr();
        }
    }
    FrequencyStats { counts, norms: sq.into_iter().map(f64::sqrt).collect() }
}

/// Per-neuron phase table. Degenerate neurons have empty cells.
pub fn phase_report_csv(split: &SpectralSplit, op: Op) -> String {
    let mut out = String::from("neuron,omega,phi_a,phi_b,phi_c,defect\n");
    for (k, (f, ph)) in split.freqs.iter().zip(&split.phases).enumerate() {
        match (f, ph) {
            (Some(f), Some(ph)) => {
                let defect = phase_defect(ph, op).map(|d| d.to_string()).unwrap_or_default();
                writeln!(out, "{k},{f},{},{},{},{defect}", ph.a, ph.b, ph.c).unwrap();
            }
            _ => writeln!(out, "{k},,,,,").unwrap(),
        }
    }
    out
}

/// Frequency table for bins `0..=(P−1)/2`; bin 0 never owns a neuron.
pub fn frequency_report_csv(stats: &FrequencyStats) -> String {
    let mut out = String::from("omega,neuron_count,magnitude_norm\n");
    for (k, norm) in stats.norms.iter().enumerate() {
        let count = if k == 0 { 0 } else { stats.counts[k - 1] };
        writeln!(out, "{k},{count},{norm}").unwrap();
    }
    out
}

/// Accuracy of one model on the three evaluation subsets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubsetAccuracy {
    /// Clean training samples against true labels.
    pub clean: f64,
    /// Noisy training samples against observed labels; NaN without noise.
    pub noisy: f64,
    pub test: f64,
}

impl SubsetAccuracy {
    pub fn of(params: &ModelParams, ds: &NoisyDataset) -> Self {
        Self {
            clean: accuracy(params, &ds.clean_train(), LabelField::True),
            noisy: accuracy(params, &ds.noisy_train(), LabelField::Observed),
            test: accuracy(params, &ds.test, LabelField::True),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiltrationReport {
    pub full: SubsetAccuracy,
    pub g: SubsetAccuracy,
    pub r: SubsetAccuracy,
    pub g_weight_norm: f64,
    pub r_weight_norm: f64,
    pub degenerate_neurons: usize,
    /// `None` for multiplication or when no neuron has a dominant frequency.
    pub phase_mse: Option<f64>,
}

/// Splits `params` and evaluates the full model and both halves on `ds`.
pub fn evaluate_filtration(params: &ModelParams, ds: &NoisyDataset) -> (SpectralSplit, FiltrationReport) {
    let split = filter_model(params);
    let weights = |m: &ModelParams| {
        let mut sq = m.u().frobenius_norm().powi(2) + m.w().frobenius_norm().powi(2);
        if !m.is_tied() {
            sq += m.v().frobenius_norm().powi(2);
        }
        sq.sqrt()
    };
    let report = FiltrationReport {
        full: SubsetAccuracy::of(params, ds),
        g: SubsetAccuracy::of(&split.g, ds),
        r: SubsetAccuracy::of(&split.r, ds),
        g_weight_norm: weights(&split.g),
        r_weight_norm: weights(&split.r),
        degenerate_neurons: split.degenerate_count(),
        phase_mse: phase_mse(&split, ds.task.op()).ok(),
    };
    (split, report)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(p: usize, omega: usize, phase: f64, amp: f64) -> Vec<f64> {
        (0..p).map(|n| amp * (2.0 * PI * (omega * n) as f64 / p as f64 + phase).cos()).collect()
    }

    #[test]
    fn constant_vector_has_only_dc() {
        let p = 11;
        let spec = dft(&vec![2.0; p]);
        assert!((spec[0].re - 2.0 * (p as f64).sqrt()).abs() < 1e-12);
        assert!(spec[1..].iter().all(|c| c.norm() < 1e-12));
        assert!(matches!(dominant_frequency(&vec![2.0; p]), Err(Error::DegenerateNeuron)));
        assert_eq!(ipr(&vec![2.0; p]).unwrap(), 1.0);
    }

    #[test]
    fn cosine_lands_in_conjugate_bins() {
        let p = 23;
        let spec = dft(&cosine(p, 5, 0.0, 1.0));
        let expect = (p as f64).sqrt() / 2.0;
        assert!((spec[5].norm() - expect).abs() < 1e-10);
        assert!((spec[p - 5].norm() - expect).abs() < 1e-10);
        let others = spec.iter().enumerate().filter(|(k, _)| *k != 5 && *k != p - 5);
        assert!(others.map(|(_, c)| c.norm()).fold(0.0, f64::max) < 1e-10);
    }

    #[test]
    fn dominant_frequency_examples() {
        let p = 23;
        assert_eq!(dominant_frequency(&cosine(p, 5, 0.3, 1.0)).unwrap(), 5);
        let mix: Vec<f64> = cosine(p, 3, 0.0, 2.0).iter().zip(cosine(p, 7, 0.0, 1.0)).map(|(a, b)| a + b).collect();
        assert_eq!(dominant_frequency(&mix).unwrap(), 3);
        let tie: Vec<f64> = cosine(p, 4, 0.0, 1.0).iter().zip(cosine(p, 2, 0.0, 1.0)).map(|(a, b)| a + b).collect();
        let s = dft(&tie);
        if (s[2].norm() - s[4].norm()).abs() == 0.0 {
            assert_eq!(dominant_frequency(&tie).unwrap(), 2);
        }
    }

    #[test]
    fn pure_cosine_neuron_splits_cleanly() {
        let p = 17;
        let (pa, pb, pc) = (0.4, -1.2, 2.9);
        let u = cosine(p, 4, pa, 1.5);
        let v = cosine(p, 4, pb, 0.7);
        let w = cosine(p, 4, pc, 2.0);
        let s = filter_neuron(&u, &v, &w).unwrap();
        assert_eq!(s.omega, 4);
        for x in s.r.u.iter().chain(&s.r.v).chain(&s.r.w) {
            assert!(x.abs() < 1e-12);
        }
        assert!((s.phases.a - pa).abs() < 1e-9);
        assert!((s.phases.b - pb).abs() < 1e-9);
        assert!((s.phases.c - pc).abs() < 1e-9);
    }

    #[test]
    fn frequency_is_taken_from_w() {
        let p = 19;
        let u = cosine(p, 2, 0.0, 1.0);
        let w = cosine(p, 6, 0.0, 1.0);
        let s = filter_neuron(&u, &u, &w).unwrap();
        assert_eq!(s.omega, 6);
        assert!(s.g.u.iter().all(|x| x.abs() < 1e-12));
        assert_eq!(s.r.u, u.iter().zip(&s.g.u).map(|(a, b)| a - b).collect::<Vec<_>>());
    }

    #[test]
    fn phase_defect_examples() {
        let wrap = |a, b, c| SpectralSplit {
            g: ModelParams::zeros(5, 1, crate::network::Activation::Relu, false),
            r: ModelParams::zeros(5, 1, crate::network::Activation::Relu, false),
            freqs: vec![Some(1)],
            phases: vec![Some(Phases { a, b, c })],
        };
        assert!(phase_mse(&wrap(PI, PI, 0.0), Op::Add).unwrap() < 1e-24);
        let quarter = phase_mse(&wrap(PI / 2.0, 0.0, 0.0), Op::Add).unwrap();
        assert!((quarter - (PI / 2.0).powi(2)).abs() < 1e-12);
        assert!((quarter - 2.4674).abs() < 1e-4);
        assert!(matches!(phase_mse(&wrap(0.0, 0.0, 0.0), Op::Mul), Err(Error::Unsupported(_))));
        assert!(phase_mse(&wrap(1.0, 0.5, 0.5), Op::Sub).unwrap() < 1e-24);
    }

    #[test]
    fn ipr_examples() {
        let p = 13;
        let mut delta = vec![0.0; p];
        delta[0] = 1.0;
        assert!((ipr(&delta).unwrap() - 1.0 / p as f64).abs() < 1e-15);
        assert!((ipr(&cosine(p, 3, 0.7, 2.0)).unwrap() - 0.5).abs() < 1e-12);
        assert!(ipr(&vec![0.0; p]).is_err());
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_phase(0.0), 0.0);
    }

    #[test]
    fn empty_model_has_no_counts() {
        let params = ModelParams::zeros(7, 0, crate::network::Activation::Relu, false);
        let split = filter_model(&params);
        let stats = frequency_stats(&split);
        assert_eq!(stats.counts, vec![0, 0, 0]);
        assert_eq!(stats.norms, vec![0.0; 4]);
    }
}
