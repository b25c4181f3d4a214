//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied during one forward pass.
//! Parameters are pulled from a [`ParamStore`] by name and become leaves;
//! [`Graph::backward`] returns gradients for every node that contributed to
//! the output.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::ops::{self, focal_logit, gelu, gelu_grad, softmax_rows};
use super::params::ParamStore;
use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    /// Adds a `1×n` row to every row of the left operand.
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Gelu(usize),
    SoftmaxRows(usize),
    Transpose(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SelectRows(usize, Vec<usize>),
    MeanRows(usize),
    Sum(usize),
    MeanAbsDiff(usize, usize),
    /// Mean focal loss over logits with a constant `{0, 1}` target matrix.
    Focal {
        logits: usize,
        targets: Tensor,
        gamma: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    by_node: Vec<Option<Tensor>>,
    params: BTreeMap<String, usize>,
}

impl Gradients {
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.by_node.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of node `id`, zeros when the output does not depend on it.
    pub fn wrt_or_zeros(&self, id: NodeId, shape: (usize, usize)) -> Tensor {
        self.wrt(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }

    /// Gradient for every parameter of `store`; parameters the graph never
    /// touched get exact zeros.
    pub fn for_params(&self, store: &ParamStore) -> BTreeMap<String, Tensor> {
        store
            .iter()
            .map(|(name, value)| {
                let grad = self
                    .params
                    .get(name)
                    .and_then(|&i| self.by_node[i].clone())
                    .unwrap_or_else(|| Tensor::zeros(value.rows(), value.cols()));
                (name.to_string(), grad)
            })
            .collect()
    }
}

pub struct Graph<'p> {
    nodes: Vec<Node>,
    store: Option<&'p ParamStore>,
    params: BTreeMap<String, usize>,
    detached: Vec<usize>,
    pinned: Option<Vec<Tensor>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            store: None,
            params: BTreeMap::new(),
            detached: Vec::new(),
            pinned: None,
        }
    }

    pub fn with_params(store: &'p ParamStore) -> Self {
        Self {
            nodes: Vec::new(),
            store: Some(store),
            params: BTreeMap::new(),
            detached: Vec::new(),
            pinned: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// A leaf. Gradients are reported for it but it is constant to the graph.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Leaf bound to a named parameter; repeated lookups share one node.
    pub fn param(&mut self, name: &str) -> Result<NodeId> {
        if let Some(&i) = self.params.get(name) {
            return Ok(NodeId(i));
        }
        let store = self
            .store
            .ok_or_else(|| Error::Config(format!("graph has no parameter store for `{name}`")))?;
        let value = store
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?
            .clone();
        let id = self.push(value, Op::Leaf);
        self.params.insert(name.to_string(), id.0);
        Ok(id)
    }

    /// Copy of `x` that blocks gradient flow. Under [`Graph::pin_detached`]
    /// the k-th detach returns the k-th pinned value instead.
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let k = self.detached.len();
        let value = match self.pinned.as_ref().and_then(|p| p.get(k)) {
            Some(v) if v.shape() == self.shape(x) => v.clone(),
            _ => self.value(x).clone(),
        };
        let id = self.push(value, Op::Leaf);
        self.detached.push(id.0);
        id
    }

    /// Values of every detached node, in creation order.
    pub fn detached_values(&self) -> Vec<Tensor> {
        self.detached
            .iter()
            .map(|&i| self.nodes[i].value.clone())
            .collect()
    }

    /// Hold detached values fixed, e.g. at a base point while finite
    /// differences move the parameters. That is the derivative stop-gradient
    /// defines.
    pub fn pin_detached(&mut self, values: Vec<Tensor>) {
        self.pinned = Some(values);
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a.0, b.0)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a.0, b.0)))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(Error::shape(format!(
                "add_row: {:?} onto {:?}",
                r.shape(),
                x.shape()
            )));
        }
        let cols = x.cols();
        let mut value = x.clone();
        if cols > 0 {
            for chunk in value.data_mut().chunks_mut(cols) {
                for (v, b) in chunk.iter_mut().zip(r.data()) {
                    *v += b;
                }
            }
        }
        Ok(self.push(value, Op::AddRow(a.0, row.0)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a.0, b.0)))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let value = self.value(a).scale(s);
        self.push(value, Op::Scale(a.0, s))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(gelu);
        self.push(value, Op::Gelu(a.0))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let value = softmax_rows(self.value(a));
        self.push(value, Op::SoftmaxRows(a.0))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a.0))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat_cols(&values)?;
        Ok(self.push(value, Op::ConcatCols(parts.iter().map(|p| p.0).collect())))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat_rows(&values)?;
        Ok(self.push(value, Op::ConcatRows(parts.iter().map(|p| p.0).collect())))
    }

    pub fn select_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        let value = self.value(a).select_rows(indices)?;
        Ok(self.push(value, Op::SelectRows(a.0, indices.to_vec())))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).mean_rows()?;
        Ok(self.push(value, Op::MeanRows(a.0)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a.0))
    }

    /// Scalar mean of `|a − b|`.
    pub fn l1(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = Tensor::scalar(ops::l1_distance(self.value(a), self.value(b))?);
        Ok(self.push(value, Op::MeanAbsDiff(a.0, b.0)))
    }

    /// Mean focal loss over every (row, column) cell. Target 1 uses
    /// `p = σ(z)`, target 0 uses `p = 1 − σ(z)`.
    pub fn focal_loss(&mut self, logits: NodeId, targets: &Tensor, gamma: f64) -> Result<NodeId> {
        let z = self.value(logits);
        if z.shape() != targets.shape() {
            return Err(Error::shape(format!(
                "focal_loss: logits {:?} vs targets {:?}",
                z.shape(),
                targets.shape()
            )));
        }
        if gamma < 0.0 {
            return Err(Error::Domain(format!(
                "focal needs gamma >= 0, got {gamma}"
            )));
        }
        let mut total = 0.0;
        for (&l, &t) in z.data().iter().zip(targets.data()) {
            let signed = if t > 0.5 { l } else { -l };
            total += focal_logit(signed, gamma).0;
        }
        let value = if z.is_empty() {
            0.0
        } else {
            total / z.len() as f64
        };
        Ok(self.push(
            Tensor::scalar(value),
            Op::Focal {
                logits: logits.0,
                targets: targets.clone(),
                gamma,
            },
        ))
    }

    /// Weighted sum of scalar nodes, accumulated left to right.
    pub fn weighted_sum(&mut self, terms: &[(f64, NodeId)]) -> Result<NodeId> {
        let mut acc: Option<NodeId> = None;
        for &(w, id) in terms {
            let scaled = self.scale(id, w);
            acc = Some(match acc {
                None => scaled,
                Some(prev) => self.add(prev, scaled)?,
            });
        }
        acc.ok_or_else(|| Error::shape("weighted_sum of no terms"))
    }

    /// Reverse pass from a `1×1` output.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        if self.value(output).shape() != (1, 1) {
            return Err(Error::shape("backward needs a scalar output"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::scalar(1.0));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients {
            by_node: grads,
            params: self.params.clone(),
        })
    }

    fn propagate(
        &self,
        op: &Op,
        out: &Tensor,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let v = |i: usize| &self.nodes[i].value;
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let ga = g.matmul(&v(*b).transpose())?;
                let gb = v(*a).transpose().matmul(g)?;
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.scale(-1.0));
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone());
                let summed = column_sums(g);
                accumulate(grads, *row, summed);
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.zip_map(v(*b), |x, y| x * y)?);
                accumulate(grads, *b, g.zip_map(v(*a), |x, y| x * y)?);
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.scale(*s)),
            Op::Gelu(a) => {
                let ga = g.zip_map(v(*a), |gy, x| gy * gelu_grad(x))?;
                accumulate(grads, *a, ga);
            }
            Op::SoftmaxRows(a) => {
                let cols = out.cols();
                let mut ga = Tensor::zeros(out.rows(), cols);
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gy = g.row(r);
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        ga.set(r, c, y[c] * (gy[c] - dot));
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = v(p).cols();
                    let piece = Tensor::from_fn(g.rows(), w, |r, c| g.get(r, offset + c));
                    accumulate(grads, p, piece);
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let h = v(p).rows();
                    let piece = Tensor::from_fn(h, g.cols(), |r, c| g.get(offset + r, c));
                    accumulate(grads, p, piece);
                    offset += h;
                }
            }
            Op::SelectRows(a, indices) => {
                let src = v(*a);
                let mut ga = Tensor::zeros(src.rows(), src.cols());
                for (out_row, &i) in indices.iter().enumerate() {
                    for c in 0..src.cols() {
                        let cur = ga.get(i, c);
                        ga.set(i, c, cur + g.get(out_row, c));
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::MeanRows(a) => {
                let src = v(*a);
                let n = src.rows() as f64;
                let ga = Tensor::from_fn(src.rows(), src.cols(), |_, c| g.get(0, c) / n);
                accumulate(grads, *a, ga);
            }
            Op::Sum(a) => {
                let src = v(*a);
                accumulate(grads, *a, Tensor::filled(src.rows(), src.cols(), g.item()));
            }
            Op::MeanAbsDiff(a, b) => {
                let (x, y) = (v(*a), v(*b));
                if x.is_empty() {
                    return Ok(());
                }
                let scale = g.item() / x.len() as f64;
                let ga = x.zip_map(y, |p, q| scale * sign(p - q))?;
                accumulate(grads, *b, ga.scale(-1.0));
                accumulate(grads, *a, ga);
            }
            Op::Focal {
                logits,
                targets,
                gamma,
            } => {
                let z = v(*logits);
                if z.is_empty() {
                    return Ok(());
                }
                let scale = g.item() / z.len() as f64;
                let ga = z.zip_map(targets, |l, t| {
                    if t > 0.5 {
                        scale * focal_logit(l, *gamma).1
                    } else {
                        -scale * focal_logit(-l, *gamma).1
                    }
                })?;
                accumulate(grads, *logits, ga);
            }
        }
        Ok(())
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let mut out = vec![0.0; g.cols()];
    for r in 0..g.rows() {
        for (o, &x) in out.iter_mut().zip(g.row(r)) {
            *o += x;
        }
    }
    Tensor::row_vector(out)
}

fn accumulate(grads: &mut [Option<Tensor>], idx: usize, g: Tensor) {
    match &mut grads[idx] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
