//! The two-layer network `f(a, b) = W φ(U e_a + V e_b) + μ`.
//!
//! One-hot inputs are never materialised: the pre-activation of neuron `m`
//! for input `(a, b)` is the gather `U[m, a] + V[m, b]`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix};
use crate::optim::TensorMut;
use crate::task::Sample;

/// Rows per evaluation chunk; bounds the size of the hidden-activation buffer.
const EVAL_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Quadratic,
    Gelu,
    ReverseRelu,
}

impl Activation {
    pub const ALL: [Activation; 4] =
        [Activation::Relu, Activation::Quadratic, Activation::Gelu, Activation::ReverseRelu];

    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Quadratic => z * z,
            Activation::Gelu => z * normal_cdf(z),
            Activation::ReverseRelu => (-z).max(0.0),
        }
    }

    #[inline]
    pub fn grad(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Quadratic => 2.0 * z,
            Activation::Gelu => normal_cdf(z) + z * normal_pdf(z),
            Activation::ReverseRelu => {
                if z < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Quadratic => "quadratic",
            Activation::Gelu => "gelu",
            Activation::ReverseRelu => "reverse_relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown activation `{s}`")))
    }
}

pub fn activation_eval(kind: Activation, z: f64) -> f64 {
    kind.eval(z)
}

pub fn activation_grad(kind: Activation, z: f64) -> f64 {
    kind.grad(z)
}

#[inline]
fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z * std::f64::consts::FRAC_1_SQRT_2))
}

#[inline]
fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Network weights. `U`, `V` are `M×P`, `W` is `P×M`, `μ` has length `P`.
///
/// A tied network stores a single first-layer matrix used for both inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    u: Matrix,
    v: Option<Matrix>,
    w: Matrix,
    mu: Vec<f64>,
    activation: Activation,
}

impl ModelParams {
    /// Assembles parameters; pass `v = None` for a tied first layer.
    pub fn new(u: Matrix, v: Option<Matrix>, w: Matrix, mu: Vec<f64>, activation: Activation) -> Result<Self> {
        let (m, p) = u.shape();
        let bad = |what: &str| Err(Error::Domain(format!("shape mismatch: {what}")));
        if let Some(v) = &v {
            if v.shape() != (m, p) {
                return bad("V must match U");
            }
        }
        if w.shape() != (p, m) {
            return bad("W must be P×M");
        }
        if mu.len() != p {
            return bad("μ must have length P");
        }
        Ok(Self { u, v, w, mu, activation })
    }

    pub fn zeros(modulus: usize, width: usize, activation: Activation, tied: bool) -> Self {
        Self {
            u: Matrix::zeros(width, modulus),
            v: (!tied).then(|| Matrix::zeros(width, modulus)),
            w: Matrix::zeros(modulus, width),
            mu: vec![0.0; modulus],
            activation,
        }
    }

    pub fn width(&self) -> usize {
        self.u.rows()
    }

    pub fn modulus(&self) -> usize {
        self.u.cols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn is_tied(&self) -> bool {
        self.v.is_none()
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn v(&self) -> &Matrix {
        self.v.as_ref().unwrap_or(&self.u)
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn u_mut(&mut self) -> &mut Matrix {
        &mut self.u
    }

    /// Mutable second-input matrix; for a tied model this is `U` itself.
    pub fn v_mut(&mut self) -> &mut Matrix {
        self.v.as_mut().unwrap_or(&mut self.u)
    }

    pub fn w_mut(&mut self) -> &mut Matrix {
        &mut self.w
    }

    pub fn mu_mut(&mut self) -> &mut [f64] {
        &mut self.mu
    }

    /// `(u_m, v_m, w_m)`: row `m` of `U` and `V`, column `m` of `W`.
    pub fn neuron(&self, m: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (self.u.row(m).to_vec(), self.v().row(m).to_vec(), self.w.column(m))
    }

    /// Keeps only the listed neurons, in the listed order.
    pub fn select_neurons(&self, neurons: &[usize]) -> ModelParams {
        let p = self.modulus();
        let gather_rows = |src: &Matrix| Matrix::from_fn(neurons.len(), p, |r, c| src.get(neurons[r], c));
        ModelParams {
            u: gather_rows(&self.u),
            v: self.v.as_ref().map(gather_rows),
            w: Matrix::from_fn(p, neurons.len(), |r, c| self.w.get(r, neurons[c])),
            mu: self.mu.clone(),
            activation: self.activation,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut sq = self.u.frobenius_norm().powi(2) + self.w.frobenius_norm().powi(2);
        if let Some(v) = &self.v {
            sq += v.frobenius_norm().powi(2);
        }
        (sq + self.mu.iter().map(|x| x * x).sum::<f64>()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite()
            && self.v.as_ref().is_none_or(Matrix::is_finite)
            && self.w.is_finite()
            && self.mu.iter().all(|x| x.is_finite())
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = vec![TensorMut::Matrix(&mut self.u)];
        if let Some(v) = self.v.as_mut() {
            out.push(TensorMut::Matrix(v));
        }
        out.push(TensorMut::Matrix(&mut self.w));
        out.push(TensorMut::Vector(&mut self.mu));
        out
    }
}

pub fn replace_activation(params: &ModelParams, new_kind: Activation) -> ModelParams {
    ModelParams { activation: new_kind, ..params.clone() }
}

/// I.i.d. Gaussian weights: std `1/√P` for `U`, `V` and `1/√M` for `W`; `μ = 0`.
pub fn init_params(modulus: usize, width: usize, activation: Activation, tied: bool, seed: u64) -> Result<ModelParams> {
    if width == 0 {
        return Err(Error::Domain("model width must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = Normal::new(0.0, 1.0 / (modulus as f64).sqrt()).expect("positive std");
    let second = Normal::new(0.0, 1.0 / (width as f64).sqrt()).expect("positive std");
    let mut draw = |n: usize, dist: &Normal<f64>| -> Vec<f64> { (0..n).map(|_| dist.sample(&mut rng)).collect() };
    let u = Matrix::from_vec(width, modulus, draw(width * modulus, &first));
    let v = (!tied).then(|| Matrix::from_vec(width, modulus, draw(width * modulus, &first)));
    let w = Matrix::from_vec(modulus, width, draw(width * modulus, &second));
    Ok(ModelParams { u, v, w, mu: vec![0.0; modulus], activation })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelField {
    True,
    Observed,
}

impl LabelField {
    pub fn of(self, s: &Sample) -> usize {
        match self {
            LabelField::True => s.true_label,
            LabelField::Observed => s.observed_label,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub inputs: Vec<(usize, usize)>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Vec<(usize, usize)>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::Domain("batch inputs and labels differ in length".into()));
        }
        Ok(Self { inputs, labels })
    }

    pub fn from_samples(samples: &[Sample], field: LabelField) -> Self {
        Self {
            inputs: samples.iter().map(|s| (s.a, s.b)).collect(),
            labels: samples.iter().map(|s| field.of(s)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn check(&self, p: usize) -> Result<()> {
        let bad = self.inputs.iter().any(|&(a, b)| a >= p || b >= p) || self.labels.iter().any(|&c| c >= p);
        if bad {
            return Err(Error::Domain(format!("batch index outside [0, {p})")));
        }
        Ok(())
    }
}

/// Gradients with the same layout as [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub du: Matrix,
    /// `None` for a tied model, whose `du` holds both first-layer contributions.
    pub dv: Option<Matrix>,
    pub dw: Matrix,
    pub dmu: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let (m, p) = (params.width(), params.modulus());
        Self {
            du: Matrix::zeros(m, p),
            dv: (!params.is_tied()).then(|| Matrix::zeros(m, p)),
            dw: Matrix::zeros(p, m),
            dmu: vec![0.0; p],
        }
    }

    fn parts(&self) -> impl Iterator<Item = &[f64]> {
        [Some(self.du.as_slice()), self.dv.as_ref().map(Matrix::as_slice), Some(self.dw.as_slice()), Some(&self.dmu[..])]
            .into_iter()
            .flatten()
    }

    /// Inner product over all flattened parameters.
    pub fn dot(&self, other: &GradientSet) -> f64 {
        assert_eq!(self.dv.is_some(), other.dv.is_some(), "gradient layouts differ");
        self.parts().zip(other.parts()).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn scale(&mut self, s: f64) {
        self.du.scale(s);
        if let Some(dv) = self.dv.as_mut() {
            dv.scale(s);
        }
        self.dw.scale(s);
        self.dmu.iter_mut().for_each(|x| *x *= s);
    }

    pub fn add(&mut self, other: &GradientSet) {
        self.du.add_scaled(1.0, &other.du);
        if let (Some(a), Some(b)) = (self.dv.as_mut(), other.dv.as_ref()) {
            a.add_scaled(1.0, b);
        }
        self.dw.add_scaled(1.0, &other.dw);
        self.dmu.iter_mut().zip(&other.dmu).for_each(|(a, b)| *a += b);
    }

    pub fn is_finite(&self) -> bool {
        self.parts().all(|s| s.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        self.parts().collect()
    }
}

/// Pre-activations `H[i, m] = U[m, a_i] + V[m, b_i]` as an `N×M` matrix.
fn hidden(params: &ModelParams, inputs: &[(usize, usize)], ut: &Matrix, vt: &Matrix) -> Matrix {
    let m = params.width();
    let mut h = Matrix::zeros(inputs.len(), m);
    for (i, &(a, b)) in inputs.iter().enumerate() {
        let (ua, vb) = (ut.row(a), vt.row(b));
        for ((dst, x), y) in h.row_mut(i).iter_mut().zip(ua).zip(vb) {
            *dst = x + y;
        }
    }
    h
}

fn transposed_first_layer(params: &ModelParams) -> (Matrix, Matrix) {
    let ut = params.u.transpose();
    let vt = match &params.v {
        Some(v) => v.transpose(),
        None => ut.clone(),
    };
    (ut, vt)
}

fn apply_activation(kind: Activation, h: &Matrix) -> Matrix {
    let mut act = h.clone();
    act.as_mut_slice().iter_mut().for_each(|x| *x = kind.eval(*x));
    act
}

fn logits_from_activations(params: &ModelParams, act: &Matrix) -> Matrix {
    let mut logits = Matrix::zeros(act.rows(), params.modulus());
    for i in 0..act.rows() {
        logits.row_mut(i).copy_from_slice(&params.mu);
    }
    gemm(1.0, act, false, &params.w, true, 1.0, &mut logits);
    logits
}

fn forward_inputs(params: &ModelParams, inputs: &[(usize, usize)], first: &(Matrix, Matrix)) -> Matrix {
    let h = hidden(params, inputs, &first.0, &first.1);
    logits_from_activations(params, &apply_activation(params.activation, &h))
}

/// Logits for every input in the batch, one row per input.
pub fn forward(params: &ModelParams, batch: &Batch) -> Result<Matrix> {
    batch.check(params.modulus())?;
    let first = transposed_first_layer(params);
    Ok(forward_inputs(params, &batch.inputs, &first))
}

/// Logits of the sub-network built from `neurons`; `μ` is always retained.
pub fn subnetwork_forward(params: &ModelParams, neurons: &[usize], batch: &Batch) -> Result<Matrix> {
    if let Some(&bad) = neurons.iter().find(|&&m| m >= params.width()) {
        return Err(Error::Domain(format!("neuron {bad} outside width {}", params.width())));
    }
    forward(&params.select_neurons(neurons), batch)
}

/// Index of the largest entry, lowest index on ties.
#[inline]
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Per-row log-sum-exp with max subtraction.
#[inline]
fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Predicted class for every input, evaluated in bounded chunks.
pub fn predict(params: &ModelParams, inputs: &[(usize, usize)]) -> Vec<usize> {
    let first = transposed_first_layer(params);
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(EVAL_CHUNK) {
        let logits = forward_inputs(params, chunk, &first);
        out.extend((0..chunk.len()).map(|i| argmax(logits.row(i))));
    }
    out
}

/// Fraction of samples whose argmax prediction equals the chosen label.
pub fn accuracy(params: &ModelParams, samples: &[Sample], field: LabelField) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let batch = Batch::from_samples(samples, field);
    let preds = predict(params, &batch.inputs);
    let hits = preds.iter().zip(&batch.labels).filter(|(p, l)| p == l).count();
    hits as f64 / samples.len() as f64
}

/// Mean cross-entropy without gradients.
pub fn mean_loss(params: &ModelParams, batch: &Batch) -> Result<f64> {
    batch.check(params.modulus())?;
    if batch.is_empty() {
        return Err(Error::Domain("loss of an empty batch".into()));
    }
    let first = transposed_first_layer(params);
    let mut total = 0.0;
    for (inputs, labels) in batch.inputs.chunks(EVAL_CHUNK).zip(batch.labels.chunks(EVAL_CHUNK)) {
        let logits = forward_inputs(params, inputs, &first);
        for (i, &y) in labels.iter().enumerate() {
            let row = logits.row(i);
            total += log_sum_exp(row) - row[y];
        }
    }
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NumericalFailure { epoch: None, detail: format!("non-finite loss {loss}") });
    }
    Ok(loss)
}

/// Mean softmax cross-entropy over the batch and its exact gradient.
pub fn loss_and_grads(params: &ModelParams, batch: &Batch) -> Result<(f64, GradientSet)> {
    batch.check(params.modulus())?;
    let n = batch.len();
    if n == 0 {
        return Err(Error::Domain("loss of an empty batch".into()));
    }
    let (m, p) = (params.width(), params.modulus());
    let (ut, vt) = transposed_first_layer(params);
    let h = hidden(params, &batch.inputs, &ut, &vt);
    let act = apply_activation(params.activation, &h);
    let mut dz = logits_from_activations(params, &act);

    // Softmax cross-entropy; dz becomes (softmax − onehot) / N in place.
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    for (i, &y) in batch.labels.iter().enumerate() {
        let row = dz.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let target = row[y] - max;
        let mut sum = 0.0;
        for z in row.iter_mut() {
            *z = (*z - max).exp();
            sum += *z;
        }
        total += sum.ln() - target;
        let scale = inv_n / sum;
        row.iter_mut().for_each(|z| *z *= scale);
        row[y] -= inv_n;
    }
    let loss = total * inv_n;
    if !loss.is_finite() {
        return Err(Error::NumericalFailure { epoch: None, detail: format!("non-finite loss {loss}") });
    }

    let mut grads = GradientSet::zeros_like(params);
    gemm(1.0, &dz, true, &act, false, 0.0, &mut grads.dw);
    for i in 0..n {
        grads.dmu.iter_mut().zip(dz.row(i)).for_each(|(g, d)| *g += d);
    }

    let mut dh = Matrix::zeros(n, m);
    gemm(1.0, &dz, false, &params.w, false, 0.0, &mut dh);
    let kind = params.activation;
    dh.as_mut_slice().iter_mut().zip(h.as_slice()).for_each(|(d, &z)| *d *= kind.grad(z));

    let mut dut = Matrix::zeros(p, m);
    let mut dvt = (!params.is_tied()).then(|| Matrix::zeros(p, m));
    for (i, &(a, b)) in batch.inputs.iter().enumerate() {
        let g = dh.row(i);
        dut.row_mut(a).iter_mut().zip(g).for_each(|(x, y)| *x += y);
        let target = dvt.as_mut().unwrap_or(&mut dut);
        target.row_mut(b).iter_mut().zip(g).for_each(|(x, y)| *x += y);
    }
    grads.du = dut.transpose();
    grads.dv = dvt.map(|m| m.transpose());
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(inputs: &[(usize, usize)], labels: &[usize]) -> Batch {
        Batch::new(inputs.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn activation_values() {
        assert_eq!(activation_eval(Activation::Relu, -2.0), 0.0);
        assert_eq!(activation_eval(Activation::Relu, 3.0), 3.0);
        assert_eq!(activation_eval(Activation::Quadratic, -3.0), 9.0);
        assert_eq!(activation_grad(Activation::Quadratic, -3.0), -6.0);
        assert_eq!(activation_eval(Activation::ReverseRelu, -2.0), 2.0);
        assert_eq!(activation_eval(Activation::ReverseRelu, 2.0), 0.0);
        assert_eq!(activation_grad(Activation::ReverseRelu, -2.0), -1.0);
        assert!((activation_eval(Activation::Gelu, 1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert_eq!(activation_eval(Activation::Gelu, 0.0), 0.0);
        assert!((activation_grad(Activation::Gelu, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn activation_names_roundtrip() {
        for a in Activation::ALL {
            assert_eq!(a.name().parse::<Activation>().unwrap(), a);
        }
        assert!("tanh".parse::<Activation>().is_err());
    }

    #[test]
    fn zero_weights_give_bias_rows() {
        let mut params = ModelParams::zeros(5, 3, Activation::Relu, false);
        params.mu_mut()[0] = 1.0;
        let logits = forward(&params, &batch(&[(0, 1), (4, 4)], &[0, 0])).unwrap();
        for i in 0..2 {
            assert_eq!(logits.row(i), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn hand_computed_single_neuron() {
        let u = Matrix::from_vec(1, 3, vec![1.0, 0.0, 0.0]);
        let v = Matrix::from_vec(1, 3, vec![0.0, 2.0, 0.0]);
        let w = Matrix::from_vec(3, 1, vec![1.0, 0.0, -1.0]);
        let params = ModelParams::new(u, Some(v), w, vec![0.0; 3], Activation::Relu).unwrap();
        let logits = forward(&params, &batch(&[(0, 1)], &[0])).unwrap();
        assert_eq!(logits.row(0), &[3.0, 0.0, -3.0]);
    }

    #[test]
    fn zero_model_loss_is_log_p() {
        let params = ModelParams::zeros(7, 4, Activation::Gelu, false);
        let (loss, grads) = loss_and_grads(&params, &batch(&[(1, 2), (3, 3)], &[3, 6])).unwrap();
        assert!((loss - (7f64).ln()).abs() < 1e-15);
        assert!(grads.is_finite());
    }

    #[test]
    fn zero_model_accuracy_is_chance() {
        let task = crate::task::TaskSpec::new(crate::task::Op::Add, 11).unwrap();
        let total = crate::task::build_total(&task);
        let params = ModelParams::zeros(11, 2, Activation::Relu, false);
        assert_eq!(accuracy(&params, &total, LabelField::True), 1.0 / 11.0);
    }

    #[test]
    fn shape_validation() {
        let bad = ModelParams::new(Matrix::zeros(2, 3), None, Matrix::zeros(2, 3), vec![0.0; 3], Activation::Relu);
        assert!(bad.is_err());
        let params = ModelParams::zeros(3, 2, Activation::Relu, false);
        assert!(forward(&params, &batch(&[(3, 0)], &[0])).is_err());
        assert!(Batch::new(vec![(0, 0)], vec![]).is_err());
        assert!(init_params(5, 0, Activation::Relu, false, 0).is_err());
    }

    #[test]
    fn subnetwork_edge_cases() {
        let params = init_params(5, 4, Activation::Relu, false, 11).unwrap();
        let b = batch(&[(0, 1), (2, 3), (4, 4)], &[0, 0, 0]);
        let full = forward(&params, &b).unwrap();
        let all = subnetwork_forward(&params, &[0, 1, 2, 3], &b).unwrap();
        assert!(full.max_abs_diff(&all) < 1e-12);
        let mut with_bias = params.clone();
        with_bias.mu_mut().copy_from_slice(&[0.5, -1.0, 2.0, 0.0, 0.25]);
        let empty = subnetwork_forward(&with_bias, &[], &b).unwrap();
        for i in 0..3 {
            assert_eq!(empty.row(i), with_bias.mu());
        }
        assert!(subnetwork_forward(&params, &[4], &b).is_err());
    }

    #[test]
    fn complementary_subnetworks_sum_to_full() {
        let mut params = init_params(7, 6, Activation::Gelu, false, 3).unwrap();
        params.mu_mut().iter_mut().enumerate().for_each(|(i, m)| *m = i as f64 * 0.1);
        let b = batch(&[(0, 6), (3, 2), (5, 5)], &[0, 0, 0]);
        let full = forward(&params, &b).unwrap();
        let g = subnetwork_forward(&params, &[0, 2, 5], &b).unwrap();
        let r = subnetwork_forward(&params, &[1, 3, 4], &b).unwrap();
        for i in 0..3 {
            for c in 0..7 {
                let combined = g.get(i, c) + r.get(i, c) - params.mu()[c];
                assert!((combined - full.get(i, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn replace_activation_keeps_weights() {
        let params = init_params(7, 5, Activation::Relu, false, 1).unwrap();
        let quad = replace_activation(&params, Activation::Quadratic);
        assert_eq!(quad.u(), params.u());
        assert_eq!(quad.w(), params.w());
        assert_eq!(quad.activation(), Activation::Quadratic);
        let b = batch(&[(1, 2), (0, 5)], &[0, 0]);
        let rev = replace_activation(&params, Activation::ReverseRelu);
        assert!(forward(&rev, &b).unwrap().max_abs_diff(&forward(&params, &b).unwrap()) > 1e-6);
        let back = replace_activation(&rev, Activation::Relu);
        assert_eq!(back, params);
    }

    #[test]
    fn init_is_seeded_with_zero_bias() {
        let a = init_params(11, 7, Activation::Relu, false, 5).unwrap();
        let b = init_params(11, 7, Activation::Relu, false, 5).unwrap();
        let c = init_params(11, 7, Activation::Relu, false, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.mu().iter().all(|&x| x == 0.0));
        assert!(init_params(11, 7, Activation::Relu, true, 5).unwrap().is_tied());
    }

    #[test]
    fn init_standard_deviation() {
        let p = 113;
        let params = init_params(p, 129, Activation::Relu, false, 42).unwrap();
        let u = params.u().as_slice();
        let n = u.len() as f64;
        let mean = u.iter().sum::<f64>() / n;
        let sd = (u.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let target = 1.0 / (p as f64).sqrt();
        assert!((sd / target - 1.0).abs() < 0.1, "sd {sd} vs {target}");
        let w = params.w().as_slice();
        let sdw = (w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64).sqrt();
        assert!((sdw * (129f64).sqrt() - 1.0).abs() < 0.1);
    }

    #[test]
    fn tied_model_is_commutative() {
        let params = init_params(7, 6, Activation::Relu, true, 9).unwrap();
        let pairs: Vec<_> = (0..7).flat_map(|a| (0..7).map(move |b| (a, b))).collect();
        let swapped: Vec<_> = pairs.iter().map(|&(a, b)| (b, a)).collect();
        let l = forward(&params, &Batch::new(pairs.clone(), vec![0; 49]).unwrap()).unwrap();
        let r = forward(&params, &Batch::new(swapped, vec![0; 49]).unwrap()).unwrap();
        assert_eq!(l, r);
    }

    #[test]
    fn accuracy_is_shift_invariant() {
        let task = crate::task::TaskSpec::new(crate::task::Op::Add, 7).unwrap();
        let total = crate::task::build_total(&task);
        let params = init_params(7, 8, Activation::Relu, false, 2).unwrap();
        let base = accuracy(&params, &total, LabelField::True);
        let mut shifted = params.clone();
        shifted.mu_mut().iter_mut().for_each(|m| *m += 3.25);
        assert_eq!(accuracy(&shifted, &total, LabelField::True), base);
    }

    #[test]
    fn mean_loss_matches_loss_and_grads() {
        let params = init_params(11, 5, Activation::Quadratic, false, 4).unwrap();
        let b = batch(&[(1, 2), (3, 10), (7, 7)], &[3, 1, 4]);
        let (l, _) = loss_and_grads(&params, &b).unwrap();
        assert!((mean_loss(&params, &b).unwrap() - l).abs() < 1e-12);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let mut params = ModelParams::zeros(3, 1, Activation::Relu, false);
        params.mu_mut()[0] = f64::NAN;
        let err = loss_and_grads(&params, &batch(&[(0, 0)], &[0])).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure { .. }));
        assert!(err.at_epoch(12).to_string().contains("epoch 12"));
    }
}
