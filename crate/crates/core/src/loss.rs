//! Edge losses with analytic gradients with respect to pre-activation maps.
//!
//! All three losses are evaluated from logits through the stable
//! `softplus` / log-sum-exp forms, accumulated in `f64`, and summed (not
//! averaged) over classes and pixels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{sigmoid_scalar, Scalar, Tensor};
use crate::labels::{EdgeLabelStack, LabelMap};

/// Total training loss with its per-output contributions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub breakdown: BTreeMap<String, f64>,
}

impl LossValue {
    pub fn add(&mut self, name: impl Into<String>, value: f64) {
        *self.breakdown.entry(name.into()).or_insert(0.0) += value;
        self.total = self.breakdown.values().sum();
    }
}

/// Loss value of one output together with `d loss / d activation`.
#[derive(Clone, Debug)]
pub struct LossTerm<T> {
    pub value: f64,
    pub grad: Tensor<T>,
}

/// Fraction of non-edge entries over all classes and pixels of one image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaStat {
    pub beta: f64,
}

pub fn compute_beta(gt: &EdgeLabelStack) -> Result<BetaStat> {
    let total = gt.k() * gt.height() * gt.width();
    if total == 0 {
        return Err(Error::config("cannot compute beta of an empty label stack"));
    }
    let edges = gt.count_ones();
    Ok(BetaStat {
        beta: 1.0 - edges as f64 / total as f64,
    })
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn check_logits<T: Scalar>(a: &Tensor<T>, what: &str) -> Result<()> {
    a.check_finite(what)?;
    if a.shape().n != 1 {
        return Err(Error::config(format!("{what}: losses take one image at a time, got {}", a.shape())));
    }
    Ok(())
}

/// Class-balanced sigmoid cross-entropy summed over classes and pixels:
/// `-beta * y * ln(s) - (1 - beta) * (1 - y) * ln(1 - s)` with `s = sigmoid(a)`.
///
/// The gradient per entry is `beta * (s - 1)` on edges and `(1 - beta) * s`
/// elsewhere.
pub fn multilabel_loss<T: Scalar>(activations: &Tensor<T>, gt: &EdgeLabelStack, beta: BetaStat) -> Result<LossTerm<T>> {
    check_logits(activations, "multi-label loss activations")?;
    let s = activations.shape();
    if s.c != gt.k() || s.h != gt.height() || s.w != gt.width() {
        return Err(Error::config(format!(
            "activations {s} do not match {}x{}x{} labels",
            gt.k(),
            gt.height(),
            gt.width()
        )));
    }
    let b = beta.beta;
    let mut grad = Tensor::zeros(s);
    let mut total = 0.0;
    for ((&a, &y), g) in activations.data().iter().zip(gt.data()).zip(grad.data_mut()) {
        let x = a.to_f64_lossy();
        let sig = sigmoid_scalar(x);
        if y != 0 {
            total += b * softplus(-x);
            *g = T::of(b * (sig - 1.0));
        } else {
            total += (1.0 - b) * softplus(x);
            *g = T::of((1.0 - b) * sig);
        }
    }
    Ok(LossTerm { value: total, grad })
}

/// Binary edge loss on a single-channel map against the union of all class maps.
pub fn binary_edge_loss<T: Scalar>(activations: &Tensor<T>, gt_any: &EdgeLabelStack, beta: BetaStat) -> Result<LossTerm<T>> {
    if gt_any.k() != 1 {
        return Err(Error::config("binary edge loss expects a single collapsed label map"));
    }
    multilabel_loss(activations, gt_any, beta)
}

/// Multi-class softmax cross-entropy over `K + 1` channels (0 = non-edge),
/// background pixels weighted by `beta` and edge pixels by `1 - beta`, where
/// `beta` is the non-edge pixel fraction of `labels`.
pub fn reweighted_softmax_loss<T: Scalar>(activations: &Tensor<T>, labels: &LabelMap) -> Result<LossTerm<T>> {
    check_logits(activations, "softmax loss activations")?;
    let s = activations.shape();
    if s.h != labels.height() || s.w != labels.width() {
        return Err(Error::config(format!(
            "activations {s} do not match {}x{} label map",
            labels.height(),
            labels.width()
        )));
    }
    if let Some(&bad) = labels.data().iter().find(|&&l| l as usize >= s.c) {
        return Err(Error::data(format!("label {bad} out of range for {} softmax channels", s.c)));
    }
    let beta = labels.non_edge_fraction();
    let plane = s.h * s.w;
    let mut grad = Tensor::zeros(s);
    let mut total = 0.0;
    let data = activations.data();
    let mut probs = vec![0.0f64; s.c];
    for (p, &label) in labels.data().iter().enumerate() {
        let label = label as usize;
        let mut max = f64::NEG_INFINITY;
        for c in 0..s.c {
            max = max.max(data[c * plane + p].to_f64_lossy());
        }
        let mut z = 0.0;
        for (c, pr) in probs.iter_mut().enumerate() {
            *pr = (data[c * plane + p].to_f64_lossy() - max).exp();
            z += *pr;
        }
        let weight = if label == 0 { beta } else { 1.0 - beta };
        let logit = data[label * plane + p].to_f64_lossy();
        total += weight * (max + z.ln() - logit);
        let g = grad.data_mut();
        for (c, pr) in probs.iter().enumerate() {
            let target = if c == label { 1.0 } else { 0.0 };
            g[c * plane + p] = T::of(weight * (pr / z - target));
        }
    }
    Ok(LossTerm { value: total, grad })
}
