//! Interaction reasoning: pair-set self-attention, verb classification,
//! the focal interaction loss, the weighted objective and score fusion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{Encoder, Ffn, Graph, NodeId, ParamStore, Tensor};

pub const PREFIX: &str = "irm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReasoningConfig {
    pub repr_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub num_verbs: usize,
}

impl Default for ReasoningConfig {
    fn default() -> Self {
        Self {
            repr_dim: 64,
            hidden_dim: 64,
            layers: 1,
            num_verbs: 6,
        }
    }
}

/// The reasoning encoder followed by the verb classifier.
#[derive(Debug, Clone)]
pub struct ReasoningModule {
    config: ReasoningConfig,
    encoder: Encoder,
    head: Ffn,
}

impl ReasoningModule {
    pub fn new(store: &mut ParamStore, config: ReasoningConfig) -> Result<Self> {
        if config.num_verbs == 0 {
            return Err(Error::Config("at least one verb class is required".into()));
        }
        if config.repr_dim == 0 || config.hidden_dim == 0 {
            return Err(Error::Config(
                "reasoning dimensions must be positive".into(),
            ));
        }
        let encoder = Encoder::new(
            store,
            &format!("{PREFIX}.encoder"),
            config.layers,
            config.repr_dim,
            config.hidden_dim,
        );
        let head = Ffn::new(
            store,
            &format!("{PREFIX}.head"),
            config.repr_dim,
            config.hidden_dim,
            config.num_verbs,
        );
        Ok(Self {
            config,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &ReasoningConfig {
        &self.config
    }

    /// Pairs exchange information through self-attention. An empty pair set
    /// passes through unchanged.
    pub fn reason(&self, g: &mut Graph, pairs: NodeId) -> Result<NodeId> {
        let (n, d) = g.shape(pairs);
        if d != self.config.repr_dim {
            return Err(Error::shape(format!(
                "pair width {d}, expected {}",
                self.config.repr_dim
            )));
        }
        if n == 0 {
            return Ok(pairs);
        }
        self.encoder.forward(g, pairs)
    }

    /// Raw verb logits, one row per pair.
    pub fn classify(&self, g: &mut Graph, reasoned: NodeId) -> Result<NodeId> {
        self.head.forward(g, reasoned)
    }
}

/// Mean focal loss over all (pair, verb) cells.
pub fn hoi_loss(g: &mut Graph, logits: NodeId, targets: &Tensor, gamma: f64) -> Result<NodeId> {
    g.focal_loss(logits, targets, gamma)
}

/// Multi-hot targets: matched candidates inherit their annotation's verbs,
/// everything else is negative.
pub fn verb_targets(
    num_pairs: usize,
    num_verbs: usize,
    assigned: &[(usize, &[usize])],
) -> Result<Tensor> {
    let mut t = Tensor::zeros(num_pairs, num_verbs);
    for &(pair, verbs) in assigned {
        for &v in verbs {
            if pair >= num_pairs || v >= num_verbs {
                return Err(Error::Vocabulary {
                    kind: "verb",
                    id: v,
                });
            }
            t.set(pair, v, 1.0);
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub hoi: f64,
    pub sentence_irm: f64,
    pub word_irm: f64,
    pub sentence_ire: f64,
    pub word_ire: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            hoi: 2.0,
            sentence_irm: 1.0,
            word_irm: 1.0,
            sentence_ire: 0.1,
            word_ire: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in self.named() {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!(
                    "loss weight {name} = {w} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("hoi", self.hoi),
            ("sentence_irm", self.sentence_irm),
            ("word_irm", self.word_irm),
            ("sentence_ire", self.sentence_ire),
            ("word_ire", self.word_ire),
        ]
    }
}

/// Loss components in weight order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub hoi: f64,
    pub sentence_irm: f64,
    pub word_irm: f64,
    pub sentence_ire: f64,
    pub word_ire: f64,
}

/// Weighted sum of the five components, accumulated left to right.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    let parts = [
        (w.hoi, c.hoi),
        (w.sentence_irm, c.sentence_irm),
        (w.word_irm, c.word_irm),
        (w.sentence_ire, c.sentence_ire),
        (w.word_ire, c.word_ire),
    ];
    if let Some((_, v)) = parts.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite loss component {v}")));
    }
    let mut total = w.hoi * c.hoi;
    for (wi, ci) in &parts[1..] {
        if *wi != 0.0 {
            total += wi * ci;
        }
    }
    Ok(total)
}

/// `(human_conf · object_conf)^exponent · verb_scores`.
pub fn compose_scores(
    verb_scores: &[f64],
    human_conf: f64,
    object_conf: f64,
    exponent: f64,
) -> Vec<f64> {
    let m = (human_conf * object_conf).powf(exponent);
    verb_scores.iter().map(|s| m * s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionPrediction {
    pub human_idx: usize,
    pub object_idx: usize,
    pub verb_logits: Vec<f64>,
    pub verb_scores: Vec<f64>,
    pub final_scores: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{grad_check, ops};

    #[test]
    fn logit_zero_gamma_zero_is_ln2() {
        let mut g = Graph::new();
        let z = g.input(Tensor::zeros(2, 3));
        let t = Tensor::from_fn(2, 3, |r, c| ((r + c) % 2) as f64);
        let l = hoi_loss(&mut g, z, &t, 0.0).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_predictions_vanish() {
        let t = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let z = t.map(|v| if v > 0.5 { 40.0 } else { -40.0 });
        let mut g = Graph::new();
        let z = g.input(z);
        let l = hoi_loss(&mut g, z, &t, 0.2).unwrap();
        assert!(g.value(l).item() < 1e-15);
    }

    #[test]
    fn matches_cell_loop() {
        let z = Tensor::from_rows(&[vec![0.3, -1.2, 2.0], vec![-0.4, 0.9, -2.5]]).unwrap();
        let t = Tensor::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let mut oracle = 0.0;
        for r in 0..2 {
            for c in 0..3 {
                let p = 1.0 / (1.0 + (-z.get(r, c)).exp());
                let p = if t.get(r, c) == 1.0 { p } else { 1.0 - p };
                oracle += -(1.0 - p).powf(0.2) * p.ln();
            }
        }
        oracle /= 6.0;
        let mut g = Graph::new();
        let zn = g.input(z.clone());
        let l = hoi_loss(&mut g, zn, &t, 0.2).unwrap();
        assert!((g.value(l).item() - oracle).abs() < 1e-12);
        let err = grad_check(
            move |g: &mut Graph, x: &[NodeId]| hoi_loss(g, x[0], &t, 0.2),
            &[z],
        )
        .unwrap();
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn joint_permutation_invariance() {
        let z = Tensor::from_fn(3, 4, |r, c| ((r * 7 + c * 3) as f64 * 0.37).sin() * 3.0);
        let t = Tensor::from_fn(3, 4, |r, c| ((r + 2 * c) % 3 == 0) as u8 as f64);
        let rp = [2, 0, 1];
        let cp = [3, 1, 0, 2];
        let perm = |x: &Tensor| Tensor::from_fn(3, 4, |r, c| x.get(rp[r], cp[c]));
        let loss = |z: Tensor, t: &Tensor| {
            let mut g = Graph::new();
            let z = g.input(z);
            let l = hoi_loss(&mut g, z, t, 0.2).unwrap();
            g.value(l).item()
        };
        let a = loss(z.clone(), &t);
        let b = loss(perm(&z), &perm(&t));
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn total_loss_examples() {
        let c = LossComponents {
            hoi: 1.0,
            sentence_irm: 2.0,
            word_irm: 3.0,
            sentence_ire: 4.0,
            word_ire: 5.0,
        };
        let ones = LossWeights {
            hoi: 1.0,
            sentence_irm: 1.0,
            word_irm: 1.0,
            sentence_ire: 1.0,
            word_ire: 1.0,
        };
        assert_eq!(total_loss(&c, &ones).unwrap(), 15.0);
        let all1 = LossComponents {
            hoi: 1.0,
            sentence_irm: 1.0,
            word_irm: 1.0,
            sentence_ire: 1.0,
            word_ire: 1.0,
        };
        assert!((total_loss(&all1, &LossWeights::default()).unwrap() - 4.2).abs() < 1e-12);
        let w = LossWeights {
            hoi: 2.0,
            sentence_irm: 0.0,
            word_irm: 0.0,
            sentence_ire: 0.0,
            word_ire: 0.0,
        };
        let c = LossComponents {
            hoi: 0.123_456_789,
            ..c
        };
        assert_eq!(total_loss(&c, &w).unwrap(), 2.0 * 0.123_456_789);
        let bad = LossWeights {
            word_ire: -0.1,
            ..w
        };
        assert!(matches!(total_loss(&c, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn total_loss_is_linear() {
        let w = LossWeights::default();
        let c = LossComponents {
            hoi: 0.7,
            sentence_irm: 0.2,
            word_irm: 0.4,
            sentence_ire: 0.25,
            word_ire: 0.5,
        };
        let base = total_loss(&c, &w).unwrap();
        let doubled = LossComponents { word_irm: 0.8, ..c };
        let inc = total_loss(&doubled, &w).unwrap() - base;
        assert!((inc - w.word_irm * 0.4).abs() < 1e-15);
    }

    #[test]
    fn compose_examples() {
        let s = [0.9, 0.2, 0.5];
        assert_eq!(compose_scores(&s, 1.0, 1.0, 1.0), s.to_vec());
        assert_eq!(compose_scores(&s, 0.3, 0.7, 0.0), s.to_vec());
        assert!((compose_scores(&[0.9], 0.8, 0.5, 1.0)[0] - 0.36).abs() < 1e-15);
        let out = compose_scores(&s, 0.6, 0.9, 1.3);
        assert!(out[0] > out[2] && out[2] > out[1]);
        assert!(out.iter().zip(&s).all(|(f, v)| f <= v));
    }

    fn module(store: &mut ParamStore) -> ReasoningModule {
        ReasoningModule::new(
            store,
            ReasoningConfig {
                repr_dim: 4,
                hidden_dim: 6,
                layers: 1,
                num_verbs: 3,
            },
        )
        .unwrap()
    }

    #[test]
    fn reason_shapes_and_equivariance() {
        let mut store = ParamStore::new(5);
        let m = module(&mut store);
        for n in 0..6 {
            let mut g = Graph::with_params(&store);
            let x = g.input(Tensor::from_fn(n, 4, |r, c| ((r * 5 + c) as f64).cos()));
            let y = m.reason(&mut g, x).unwrap();
            assert_eq!(g.shape(y), (n, 4));
        }
        let x = Tensor::from_fn(4, 4, |r, c| ((r * 5 + c) as f64 * 0.7).sin());
        let p = [3, 1, 0, 2];
        let run = |x: Tensor| {
            let mut g = Graph::with_params(&store);
            let x = g.input(x);
            let y = m.reason(&mut g, x).unwrap();
            g.value(y).clone()
        };
        let y = run(x.clone());
        let yp = run(x.select_rows(&p).unwrap());
        let expect = y.select_rows(&p).unwrap();
        assert!(yp.sub(&expect).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_bias_logits() {
        let mut store = ParamStore::new(2);
        let m = module(&mut store);
        store
            .get_mut("irm.head.1.weight")
            .unwrap()
            .data_mut()
            .fill(0.0);
        let bias = store.get("irm.head.1.bias").unwrap().clone();
        let mut g = Graph::with_params(&store);
        let x = g.input(Tensor::from_fn(3, 4, |r, c| (r + c) as f64));
        let l = m.classify(&mut g, x).unwrap();
        for r in 0..3 {
            assert_eq!(g.value(l).row(r), bias.row(0));
        }
    }

    #[test]
    fn classify_matches_loop() {
        let mut store = ParamStore::new(9);
        let m = module(&mut store);
        let x = Tensor::from_fn(2, 4, |r, c| ((r * 4 + c) as f64 * 0.45).sin());
        let w0 = store.get("irm.head.0.weight").unwrap();
        let b0 = store.get("irm.head.0.bias").unwrap();
        let w1 = store.get("irm.head.1.weight").unwrap();
        let b1 = store.get("irm.head.1.bias").unwrap();
        let mut g = Graph::with_params(&store);
        let xn = g.input(x.clone());
        let l = m.classify(&mut g, xn).unwrap();
        for r in 0..2 {
            let h: Vec<f64> = (0..6)
                .map(|j| {
                    ops::gelu(
                        b0.get(0, j) + (0..4).map(|i| x.get(r, i) * w0.get(i, j)).sum::<f64>(),
                    )
                })
                .collect();
            for v in 0..3 {
                let o = b1.get(0, v) + (0..6).map(|j| h[j] * w1.get(j, v)).sum::<f64>();
                assert!((g.value(l).get(r, v) - o).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn targets_are_multi_hot() {
        let t = verb_targets(3, 4, &[(1, &[0, 2]), (2, &[3])]).unwrap();
        assert_eq!(t.row(0), &[0.0; 4]);
        assert_eq!(t.row(1), &[1.0, 0.0, 1.0, 0.0]);
        assert!(verb_targets(1, 2, &[(0, &[2])]).is_err());
    }
}
