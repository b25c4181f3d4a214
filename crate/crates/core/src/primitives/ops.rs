//! Value-only kernels shared by the graph and by callers that need no
//! gradients.

use crate::error::{Error, Result};

use super::Tensor;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let cols = x.cols();
    if cols == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Attention weights `softmax(q·kᵀ/√D)`, one row per query.
pub fn attention_weights(q: &Tensor, k: &Tensor) -> Result<Tensor> {
    if q.cols() != k.cols() {
        return Err(Error::shape(format!(
            "attention: query dim {} vs key dim {}",
            q.cols(),
            k.cols()
        )));
    }
    if k.rows() == 0 {
        return Err(Error::shape("attention needs at least one key"));
    }
    let scores = q
        .matmul(&k.transpose())?
        .scale(1.0 / (q.cols() as f64).sqrt());
    Ok(softmax_rows(&scores))
}

/// Scaled dot-product attention over `(k, v)` pairs.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    if k.rows() != v.rows() {
        return Err(Error::shape(format!(
            "attention: {} keys but {} values",
            k.rows(),
            v.rows()
        )));
    }
    attention_weights(q, k)?.matmul(v)
}

/// Mean absolute element-wise difference.
pub fn l1_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "l1_distance: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(total / a.len() as f64)
}

/// `−(1−p)^γ · ln p`.
pub fn focal(p: f64, gamma: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("focal needs p in (0, 1], got {p}")));
    }
    if gamma < 0.0 {
        return Err(Error::Domain(format!(
            "focal needs gamma >= 0, got {gamma}"
        )));
    }
    Ok(-(1.0 - p).powf(gamma) * p.ln())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without cancellation for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Focal term on a logit: `−(1−p)^γ ln p` with `p = σ(z)`, and its
/// derivative with respect to `z`.
pub(crate) fn focal_logit(z: f64, gamma: f64) -> (f64, f64) {
    let p = sigmoid(z);
    let q = sigmoid(-z);
    let log_p = log_sigmoid(z);
    let w = q.powf(gamma);
    let value = -w * log_p;
    // d/dz = γ q^γ p ln p − q^(γ+1)
    let grad = gamma * w * p * log_p - w * q;
    (value, grad)
}

pub(crate) const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh-approximated GELU.
pub fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044_715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044_715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044_715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Global average pooling over a `cells×channels` map, optionally restricted
/// to cells whose mask entry is nonzero.
pub fn gap(x: &Tensor, mask: Option<&[bool]>) -> Result<Tensor> {
    match mask {
        None => x.mean_rows(),
        Some(mask) => {
            if mask.len() != x.rows() {
                return Err(Error::shape(format!(
                    "mask has {} cells, map has {}",
                    mask.len(),
                    x.rows()
                )));
            }
            let cells: Vec<usize> = mask
                .iter()
                .enumerate()
                .filter_map(|(i, &on)| on.then_some(i))
                .collect();
            if cells.is_empty() {
                return Err(Error::DegenerateRegion("mask selects no cells".into()));
            }
            x.select_rows(&cells)?.mean_rows()
        }
    }
}
