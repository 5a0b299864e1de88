//! Closed-form quadratic-activation network that solves modular addition or
//! subtraction exactly.
//!
//! Each frequency `ω ∈ 1..=(P−1)/2` gets neurons
//! `u_i = λcos(2πωi/P + φ_a)`, `v_j = λcos(2πωj/P + φ_b)`, `w_k = λcos(2πωk/P + φ_c)`
//! with `φ_a ∈ {0, π/2, π, 3π/2}`, `φ_b ∈ {0, π/2}` and `φ_c = φ_a ± φ_b`. Over
//! that grid every harmonic except `cos(2πω(a ± b − c)/P)` sums to zero, so
//! `f_c(a, b) = K·Σ_ω cos(2πω(a ± b − c)/P)` with `K = 4λ³` per copy of the grid.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{accuracy, forward, Activation, Batch, LabelField, ModelParams};
use crate::spectral::{filter_model, frequency_stats, phase_mse};
use crate::task::{build_total, is_prime, Op, TaskSpec};

pub const GRID_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticSpec {
    pub modulus: usize,
    /// A positive multiple of 8; each multiple repeats the phase grid once.
    pub neurons_per_freq: usize,
    pub lambda: f64,
    pub op: Op,
}

impl AnalyticSpec {
    pub fn new(modulus: usize, op: Op) -> Self {
        Self { modulus, neurons_per_freq: GRID_SIZE, lambda: 1.0, op }
    }

    pub fn validate(&self) -> Result<()> {
        if !is_prime(self.modulus) || self.modulus < 3 {
            return Err(Error::Domain(format!("modulus {} is not an odd prime", self.modulus)));
        }
        if self.op == Op::Mul {
            return Err(Error::Unsupported("the closed-form solution covers add and sub only".into()));
        }
        if self.neurons_per_freq == 0 || !self.neurons_per_freq.is_multiple_of(GRID_SIZE) {
            return Err(Error::Domain(format!(
                "neurons_per_freq must be a positive multiple of {GRID_SIZE}, got {}",
                self.neurons_per_freq
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> usize {
        (self.modulus - 1) / 2
    }

    pub fn width(&self) -> usize {
        self.neurons_per_freq * self.frequencies()
    }

    /// The constant `K` in `f_c(a, b) = K·Σ_ω cos(2πω(a ± b − c)/P)`.
    pub fn logit_constant(&self) -> f64 {
        4.0 * (self.neurons_per_freq / GRID_SIZE) as f64 * self.lambda.powi(3)
    }
}

/// Frequency and grid phases `(ω, φ_a, φ_b, φ_c)` of neuron `m`.
/// Frequencies are assigned round-robin, so neuron `m` has `ω = 1 + m mod F`.
pub fn neuron_layout(spec: &AnalyticSpec, m: usize) -> (usize, f64, f64, f64) {
    let f = spec.frequencies();
    let omega = 1 + m % f;
    let slot = (m / f) % GRID_SIZE;
    let phi_a = (slot % 4) as f64 * FRAC_PI_2;
    let phi_b = (slot / 4) as f64 * FRAC_PI_2;
    let phi_c = match spec.op {
        Op::Sub => phi_a - phi_b,
        _ => phi_a + phi_b,
    };
    (omega, phi_a, phi_b, phi_c)
}

pub fn build_solution(spec: &AnalyticSpec) -> Result<ModelParams> {
    spec.validate()?;
    let p = spec.modulus;
    let m = spec.width();
    let lam = spec.lambda;
    let wave = |omega: usize, i: usize, phase: f64| {
        lam * (2.0 * PI * ((omega * i) % p) as f64 / p as f64 + phase).cos()
    };
    let mut u = Matrix::zeros(m, p);
    let mut v = Matrix::zeros(m, p);
    let mut w = Matrix::zeros(p, m);
    for k in 0..m {
        let (omega, pa, pb, pc) = neuron_layout(spec, k);
        for i in 0..p {
            u.set(k, i, wave(omega, i, pa));
            v.set(k, i, wave(omega, i, pb));
            w.set(i, k, wave(omega, i, pc));
        }
    }
    ModelParams::new(u, Some(v), w, vec![0.0; p], Activation::Quadratic)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub modulus: usize,
    pub op: Op,
    pub width: usize,
    pub accuracy: f64,
    /// Neurons per dominant frequency `ω = 1..=(P−1)/2`.
    pub coverage: Vec<usize>,
    pub coverage_complete: bool,
    pub degenerate_neurons: usize,
    /// `None` for multiplication or when every neuron is degenerate.
    pub phase_mse: Option<f64>,
    /// Smallest gap between the true logit and the best wrong logit over all inputs.
    pub min_margin: f64,
}

pub fn verify_solution(params: &ModelParams, task: &TaskSpec) -> Result<VerificationReport> {
    if params.modulus() != task.modulus() {
        return Err(Error::Domain(format!(
            "model modulus {} does not match task modulus {}",
            params.modulus(),
            task.modulus()
        )));
    }
    let total = build_total(task);
    let acc = accuracy(params, &total, LabelField::True);
    let logits = forward(params, &Batch::from_samples(&total, LabelField::True))?;
    let mut min_margin = f64::INFINITY;
    for (i, s) in total.iter().enumerate() {
        let row = logits.row(i);
        let rival = row
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != s.true_label)
            .map(|(_, &z)| z)
            .fold(f64::NEG_INFINITY, f64::max);
        min_margin = min_margin.min(row[s.true_label] - rival);
    }
    let split = filter_model(params);
    let coverage = frequency_stats(&split).counts;
    Ok(VerificationReport {
        modulus: task.modulus(),
        op: task.op(),
        width: params.width(),
        accuracy: acc,
        coverage_complete: coverage.iter().all(|&c| c > 0),
        coverage,
        degenerate_neurons: split.degenerate_count(),
        phase_mse: phase_mse(&split, task.op()).ok(),
        min_margin,
    })
}
