//! Full-batch optimizers: SGD with momentum, Adam (coupled L2), AdamW
//! (decoupled decay) and Muon, all behind a linear warmup.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{GradientSet, ModelParams};

/// Quintic Newton–Schulz coefficients `(a, b, c)` from the Muon reference implementation.
pub const NS_COEFFS: (f64, f64, f64) = (3.4445, -4.7750, 2.0315);
pub const NS_ITERS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    AdamW,
    Muon,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::AdamW => "adamw",
            OptimizerKind::Muon => "muon",
        }
    }

    fn default_momentum(self) -> f64 {
        match self {
            OptimizerKind::Muon => 0.95,
            _ => 0.9,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Momentum for SGD and Muon; defaults to 0.9 and 0.95 respectively.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    pub warmup_steps: usize,
}

impl Default for OptimConfig {
    /// AdamW with learning rate 1e-3 and weight decay 0.1.
    fn default() -> Self {
        Self::new(OptimizerKind::AdamW, 1e-3, 0.1)
    }
}

impl OptimConfig {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        Self {
            kind,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            momentum: None,
            warmup_steps: 10,
        }
    }

    pub fn momentum(&self) -> f64 {
        self.momentum.unwrap_or_else(|| self.kind.default_momentum())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be non-negative and finite, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2), ("momentum", self.momentum())] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return fail(format!("eps must be positive, got {}", self.eps));
        }
        Ok(())
    }
}

/// `lr · min(1, t / warmup_steps)` for step `t ≥ 1`.
pub fn lr_at_step(config: &OptimConfig, t: usize) -> f64 {
    if config.warmup_steps == 0 || t >= config.warmup_steps {
        config.lr
    } else {
        config.lr * t as f64 / config.warmup_steps as f64
    }
}

/// A parameter tensor handed to the update rules.
pub enum TensorMut<'a> {
    Matrix(&'a mut Matrix),
    Vector(&'a mut Vec<f64>),
}

impl TensorMut<'_> {
    fn values(&mut self) -> &mut [f64] {
        match self {
            TensorMut::Matrix(m) => m.as_mut_slice(),
            TensorMut::Vector(v) => v.as_mut_slice(),
        }
    }

    fn len(&self) -> usize {
        match self {
            TensorMut::Matrix(m) => m.as_slice().len(),
            TensorMut::Vector(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Slot {
    first: Vec<f64>,
    second: Vec<f64>,
    momentum: Vec<f64>,
}

/// Per-tensor accumulators and the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimState {
    pub t: usize,
    slots: Vec<Slot>,
}

impl OptimState {
    fn ensure(&mut self, lens: &[usize]) -> Result<()> {
        if self.slots.is_empty() {
            self.slots = lens
                .iter()
                .map(|&n| Slot { first: vec![0.0; n], second: vec![0.0; n], momentum: vec![0.0; n] })
                .collect();
        }
        let matches = self.slots.len() == lens.len() && self.slots.iter().zip(lens).all(|(s, &n)| s.first.len() == n);
        if !matches {
            return Err(Error::Domain("optimizer state does not match parameter shapes".into()));
        }
        Ok(())
    }
}

/// An optimizer configuration together with its running state.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub config: OptimConfig,
    pub state: OptimState,
}

impl Optimizer {
    pub fn new(config: OptimConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, state: OptimState::default() })
    }

    pub fn steps_taken(&self) -> usize {
        self.state.t
    }

    /// One update of the model parameters from their gradient.
    pub fn step(&mut self, params: &mut ModelParams, grads: &GradientSet) -> Result<()> {
        let grad_tensors = grads.tensors();
        self.step_tensors(params.tensors_mut(), &grad_tensors)?;
        if !params.is_finite() {
            return Err(Error::NumericalFailure {
                epoch: None,
                detail: format!("non-finite parameters after {} update", self.config.kind),
            });
        }
        Ok(())
    }

    /// One update of an arbitrary list of tensors; `grads[i]` pairs with `tensors[i]`.
    pub fn step_tensors(&mut self, mut tensors: Vec<TensorMut<'_>>, grads: &[&[f64]]) -> Result<()> {
        if tensors.len() != grads.len() || tensors.iter().zip(grads).any(|(t, g)| t.len() != g.len()) {
            return Err(Error::Domain("gradient shapes do not match parameters".into()));
        }
        if grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::NumericalFailure { epoch: None, detail: "non-finite gradient".into() });
        }
        let lens: Vec<usize> = tensors.iter().map(TensorMut::len).collect();
        self.state.ensure(&lens)?;
        self.state.t += 1;
        let t = self.state.t;
        let lr = lr_at_step(&self.config, t);
        let cfg = &self.config;
        for ((tensor, grad), slot) in tensors.iter_mut().zip(grads).zip(self.state.slots.iter_mut()) {
            match (cfg.kind, tensor) {
                (OptimizerKind::Sgd, tensor) => sgd_update(cfg, lr, tensor.values(), grad, slot),
                (OptimizerKind::Adam, tensor) => adam_update(cfg, lr, t, tensor.values(), grad, slot, false),
                (OptimizerKind::AdamW, tensor) => adam_update(cfg, lr, t, tensor.values(), grad, slot, true),
                (OptimizerKind::Muon, TensorMut::Matrix(m)) => muon_update(cfg, lr, m, grad, slot),
                (OptimizerKind::Muon, TensorMut::Vector(v)) => adam_update(cfg, lr, t, v, grad, slot, true),
            }
        }
        Ok(())
    }
}

fn sgd_update(cfg: &OptimConfig, lr: f64, theta: &mut [f64], grad: &[f64], slot: &mut Slot) {
    let mom = cfg.momentum();
    for ((x, &g), buf) in theta.iter_mut().zip(grad).zip(slot.momentum.iter_mut()) {
        let g = g + cfg.weight_decay * *x;
        *buf = mom * *buf + g;
        *x -= lr * *buf;
    }
}

fn adam_update(cfg: &OptimConfig, lr: f64, t: usize, theta: &mut [f64], grad: &[f64], slot: &mut Slot, decoupled: bool) {
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    let wd = cfg.weight_decay;
    for (((x, &g), m), v) in theta.iter_mut().zip(grad).zip(slot.first.iter_mut()).zip(slot.second.iter_mut()) {
        let g = if decoupled {
            *x -= lr * wd * *x;
            g
        } else {
            g + wd * *x
        };
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *x -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

fn muon_update(cfg: &OptimConfig, lr: f64, theta: &mut Matrix, grad: &[f64], slot: &mut Slot) {
    let mom = cfg.momentum();
    slot.momentum.iter_mut().zip(grad).for_each(|(b, &g)| *b = mom * *b + g);
    let (rows, cols) = theta.shape();
    let buf = Matrix::from_vec(rows, cols, slot.momentum.clone());
    let ortho = newton_schulz_orthogonalize(&buf, NS_ITERS);
    let scale = (rows as f64 / cols as f64).max(1.0).sqrt();
    let decay = 1.0 - lr * cfg.weight_decay;
    for (x, o) in theta.as_mut_slice().iter_mut().zip(ortho.as_slice()) {
        *x = *x * decay - lr * scale * o;
    }
}

/// Approximate polar factor of `g` by the quintic Newton–Schulz iteration
/// `X ← aX + b(XXᵀ)X + c(XXᵀ)²X` on the Frobenius-normalised input.
///
/// Singular values land in roughly `[0.7, 1.3]` rather than exactly 1.
/// A zero matrix maps to a zero matrix.
pub fn newton_schulz_orthogonalize(g: &Matrix, iters: usize) -> Matrix {
    let norm = g.frobenius_norm();
    if norm == 0.0 {
        return Matrix::zeros(g.rows(), g.cols());
    }
    let tall = g.rows() > g.cols();
    let mut x = if tall { g.transpose() } else { g.clone() };
    x.scale(1.0 / norm);
    let (a, b, c) = NS_COEFFS;
    for _ in 0..iters {
        let gram = x.gram();
        let mut poly = gram.matmul(&gram);
        poly.scale(c);
        poly.add_scaled(b, &gram);
        let mut next = poly.matmul(&x);
        next.add_scaled(a, &x);
        x = next;
    }
    if tall {
        x.transpose()
    } else {
        x
    }
}
