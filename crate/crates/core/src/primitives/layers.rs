//! Parameterized building blocks. Each layer holds only parameter names;
//! the values live in a [`ParamStore`] so a forward pass can run against any
//! snapshot of the weights.

use crate::error::Result;

use super::graph::{Graph, NodeId};
use super::params::ParamStore;

/// Scaled dot-product attention as graph operations.
pub fn attention(g: &mut Graph, q: NodeId, k: NodeId, v: NodeId) -> Result<NodeId> {
    let dk = g.shape(k).1;
    let kt = g.transpose(k);
    let scores = g.matmul(q, kt)?;
    let scaled = g.scale(scores, 1.0 / (dk as f64).sqrt());
    let weights = g.softmax_rows(scaled);
    g.matmul(weights, v)
}

#[derive(Debug, Clone)]
pub struct Linear {
    weight: String,
    bias: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let weight = format!("{name}.weight");
        let bias = format!("{name}.bias");
        store.init_uniform(&weight, in_dim, out_dim, in_dim);
        store.init_uniform(&bias, 1, out_dim, in_dim);
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let w = g.param(&self.weight)?;
        let b = g.param(&self.bias)?;
        let xw = g.matmul(x, w)?;
        g.add_row(xw, b)
    }

    pub fn weight_name(&self) -> &str {
        &self.weight
    }

    pub fn bias_name(&self) -> &str {
        &self.bias
    }
}

/// Two linear maps with a GELU between them.
#[derive(Debug, Clone)]
pub struct Ffn {
    pub first: Linear,
    pub second: Linear,
}

impl Ffn {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
    ) -> Self {
        Self {
            first: Linear::new(store, &format!("{name}.0"), in_dim, hidden),
            second: Linear::new(store, &format!("{name}.1"), hidden, out_dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let h = self.first.forward(g, x)?;
        let h = g.gelu(h);
        self.second.forward(g, h)
    }
}

/// Single-head attention with learned query/key/value/output projections
/// and no residual path.
#[derive(Debug, Clone)]
pub struct ProjectedAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl ProjectedAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        query_dim: usize,
        kv_dim: usize,
        hidden: usize,
    ) -> Self {
        Self {
            query: Linear::new(store, &format!("{name}.q"), query_dim, hidden),
            key: Linear::new(store, &format!("{name}.k"), kv_dim, hidden),
            value: Linear::new(store, &format!("{name}.v"), kv_dim, hidden),
            output: Linear::new(store, &format!("{name}.o"), hidden, query_dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, queries: NodeId, context: NodeId) -> Result<NodeId> {
        let q = self.query.forward(g, queries)?;
        let k = self.key.forward(g, context)?;
        let v = self.value.forward(g, context)?;
        let attended = attention(g, q, k, v)?;
        self.output.forward(g, attended)
    }
}

/// Transformer encoder layer: `x + attn(x)` followed by `h + ffn(h)`.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attn: ProjectedAttention,
    pub ffn: Ffn,
}

impl EncoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize) -> Self {
        Self {
            attn: ProjectedAttention::new(store, &format!("{name}.attn"), dim, dim, hidden),
            ffn: Ffn::new(store, &format!("{name}.ffn"), dim, hidden, dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let a = self.attn.forward(g, x, x)?;
        let h = g.add(x, a)?;
        let f = self.ffn.forward(g, h)?;
        g.add(h, f)
    }
}

/// A stack of [`EncoderLayer`]s. Zero layers is the identity.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub layers: Vec<EncoderLayer>,
}

impl Encoder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        num_layers: usize,
        dim: usize,
        hidden: usize,
    ) -> Self {
        let layers = (0..num_layers)
            .map(|i| EncoderLayer::new(store, &format!("{name}.{i}"), dim, hidden))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, g: &mut Graph, mut x: NodeId) -> Result<NodeId> {
        for layer in &self.layers {
            x = layer.forward(g, x)?;
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{ops, Tensor};

    #[test]
    fn graph_attention_matches_kernel() {
        let q = Tensor::from_fn(2, 3, |r, c| (r as f64 - c as f64) * 0.4);
        let k = Tensor::from_fn(4, 3, |r, c| ((r * c) as f64).sin());
        let v = Tensor::from_fn(4, 2, |r, c| (r + 2 * c) as f64);
        let mut g = Graph::new();
        let (qi, ki, vi) = (g.input(q.clone()), g.input(k.clone()), g.input(v.clone()));
        let out = attention(&mut g, qi, ki, vi).unwrap();
        let expected = ops::attention(&q, &k, &v).unwrap();
        for (a, b) in g.value(out).data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_with_zero_input_gives_bias() {
        let mut store = ParamStore::new(3);
        let lin = Linear::new(&mut store, "fc", 4, 2);
        let mut g = Graph::with_params(&store);
        let x = g.input(Tensor::zeros(3, 4));
        let y = lin.forward(&mut g, x).unwrap();
        let bias = store.get("fc.bias").unwrap();
        for r in 0..3 {
            assert_eq!(g.value(y).row(r), bias.row(0));
        }
    }

    #[test]
    fn zero_layer_encoder_is_identity() {
        let mut store = ParamStore::new(0);
        let enc = Encoder::new(&mut store, "enc", 0, 4, 8);
        assert!(store.is_empty());
        let mut g = Graph::with_params(&store);
        let x = g.input(Tensor::filled(2, 4, 1.5));
        let y = enc.forward(&mut g, x).unwrap();
        assert_eq!(x, y);
    }
}
