//! Helpers shared by several integration-test targets.
#![allow(dead_code)]

use modlab::network::{loss_and_grads, init_params, mean_loss, Activation, Batch, GradientSet, ModelParams};

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

pub fn batch(p: usize) -> Batch {
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for a in 0..p {
        for b in 0..p {
            if (a * 7 + b * 3) % 4 != 0 {
                inputs.push((a, b));
                labels.push((a * b + 2 * a + 1) % p);
            }
        }
    }
    Batch::new(inputs, labels).unwrap()
}

/// Adds `delta` to the `idx`-th free parameter, in `GradientSet` order.
fn perturb(params: &mut ModelParams, mut idx: usize, delta: f64) {
    let tied = params.is_tied();
    let n = params.u().as_slice().len();
    if idx < n {
        params.u_mut().as_mut_slice()[idx] += delta;
        return;
    }
    idx -= n;
    if !tied {
        if idx < n {
            params.v_mut().as_mut_slice()[idx] += delta;
            return;
        }
        idx -= n;
    }
    let nw = params.w().as_slice().len();
    if idx < nw {
        params.w_mut().as_mut_slice()[idx] += delta;
        return;
    }
    params.mu_mut()[idx - nw] += delta;
}

fn flatten(g: &GradientSet) -> Vec<f64> {
    let mut out = g.du.as_slice().to_vec();
    if let Some(dv) = &g.dv {
        out.extend_from_slice(dv.as_slice());
    }
    out.extend_from_slice(g.dw.as_slice());
    out.extend_from_slice(&g.dmu);
    out
}

fn finite_difference(params: &ModelParams, batch: &Batch, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| {
            let mut plus = params.clone();
            perturb(&mut plus, i, STEP);
            let mut minus = params.clone();
            perturb(&mut minus, i, -STEP);
            (mean_loss(&plus, batch).unwrap() - mean_loss(&minus, batch).unwrap()) / (2.0 * STEP)
        })
        .collect()
}

/// Outcome of comparing analytic and numeric gradients on one random instance.
pub struct GradCheck {
    /// `‖analytic − numeric‖ / ‖numeric‖`.
    pub relative_error: f64,
    /// First entry outside `REL_TOL·max(|a|, |n|) + 1e-7`, if any.
    pub bad_entry: Option<(usize, f64, f64)>,
}

pub fn gradient_check(act: Activation, tied: bool, p: usize, m: usize, seed: u64) -> GradCheck {
    let mut params = init_params(p, m, act, tied, seed).unwrap();
    params.mu_mut().iter_mut().enumerate().for_each(|(i, x)| *x = 0.05 * i as f64);
    let b = batch(p);
    let (loss, grads) = loss_and_grads(&params, &b).unwrap();
    assert!((loss - mean_loss(&params, &b).unwrap()).abs() < 1e-12);
    let analytic = flatten(&grads);
    let numeric = finite_difference(&params, &b, analytic.len());
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let bad_entry = analytic
        .iter()
        .zip(&numeric)
        .enumerate()
        .find(|(_, (a, n))| (*a - *n).abs() > REL_TOL * a.abs().max(n.abs()) + 1e-7)
        .map(|(i, (a, n))| (i, *a, *n));
    GradCheck { relative_error: diff / scale, bad_entry }
}
