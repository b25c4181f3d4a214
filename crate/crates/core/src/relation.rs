//! Interaction-aware feature re-mining.
//!
//! The low-level map is re-encoded by a small transformer encoder, then each
//! candidate pair pools the encoded cells covered by its human box or its
//! object box. Cells inside the union rectangle but outside both boxes are
//! masked out, so a neighbouring interaction cannot leak into the cue. A
//! global context vector pools the raw map. Context, pair tokens and cue are
//! concatenated and projected into the pair representation.

use serde::{Deserialize, Serialize};

use crate::detection::{cell_mask, BBox, FeatureMap};
use crate::error::{Error, Result};
use crate::primitives::{Encoder, Graph, Linear, NodeId, ParamStore, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelationConfig {
    /// Feature map channels.
    pub channels: usize,
    /// Entity token width; cue and context widths match it.
    pub token_dim: usize,
    /// Pair representation width.
    pub repr_dim: usize,
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    /// Learned row + column embeddings added before the encoder.
    pub positional: bool,
    /// Largest grid side the positional tables cover.
    pub max_grid: usize,
    /// Off for the no-re-mining ablation: no encoder, no cue.
    pub remine: bool,
}

impl Default for RelationConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            token_dim: 32,
            repr_dim: 64,
            hidden_dim: 64,
            encoder_layers: 2,
            positional: true,
            max_grid: 32,
            remine: true,
        }
    }
}

#[derive(Debug, Clone)]
struct Remine {
    encoder: Encoder,
    row_pos: Option<String>,
    col_pos: Option<String>,
    roi_fc: Linear,
}

#[derive(Debug, Clone)]
pub struct RelationEncoder {
    config: RelationConfig,
    remine: Option<Remine>,
    context_fc: Linear,
    fuse_fc: Linear,
}

pub const PREFIX: &str = "ire";

impl RelationEncoder {
    pub fn new(store: &mut ParamStore, config: RelationConfig) -> Result<Self> {
        if config.channels == 0 || config.token_dim == 0 || config.repr_dim == 0 {
            return Err(Error::Config(
                "relation encoder dimensions must be positive".into(),
            ));
        }
        let c = config.channels;
        let dv = config.token_dim;
        let remine = config.remine.then(|| {
            let encoder = Encoder::new(
                store,
                "ire.encoder",
                config.encoder_layers,
                c,
                config.hidden_dim,
            );
            let (row_pos, col_pos) = if config.positional && config.encoder_layers > 0 {
                store.init_uniform("ire.pos.row", config.max_grid, c, c);
                store.init_uniform("ire.pos.col", config.max_grid, c, c);
                (
                    Some("ire.pos.row".to_string()),
                    Some("ire.pos.col".to_string()),
                )
            } else {
                (None, None)
            };
            Remine {
                encoder,
                row_pos,
                col_pos,
                roi_fc: Linear::new(store, "ire.roi_fc", c, dv),
            }
        });
        let context_fc = Linear::new(store, "context_fc", c, dv);
        let fuse_in = dv + 2 * dv + if config.remine { dv } else { 0 };
        let fuse_fc = Linear::new(store, "fuse_fc", fuse_in, config.repr_dim);
        Ok(Self {
            config,
            remine,
            context_fc,
            fuse_fc,
        })
    }

    pub fn config(&self) -> &RelationConfig {
        &self.config
    }

    pub fn remines(&self) -> bool {
        self.remine.is_some()
    }

    /// Re-encodes the `(h·w) × c` map node. Shape is preserved; zero layers
    /// returns the input node itself.
    pub fn encode_map(
        &self,
        g: &mut Graph,
        map: NodeId,
        height: usize,
        width: usize,
    ) -> Result<NodeId> {
        let Some(re) = &self.remine else {
            return Ok(map);
        };
        let (cells, _) = g.shape(map);
        if cells == 0 || cells != height * width {
            return Err(Error::shape(format!(
                "map node has {cells} cells, expected {height}x{width}"
            )));
        }
        if re.encoder.layers.is_empty() {
            return Ok(map);
        }
        let mut x = map;
        if let (Some(rp), Some(cp)) = (&re.row_pos, &re.col_pos) {
            if height > self.config.max_grid || width > self.config.max_grid {
                return Err(Error::shape(format!(
                    "grid {height}x{width} exceeds positional table size {}",
                    self.config.max_grid
                )));
            }
            let rows: Vec<usize> = (0..cells).map(|i| i / width).collect();
            let cols: Vec<usize> = (0..cells).map(|i| i % width).collect();
            let rt = g.param(rp)?;
            let ct = g.param(cp)?;
            let re_rows = g.select_rows(rt, &rows)?;
            let re_cols = g.select_rows(ct, &cols)?;
            let pos = g.add(re_rows, re_cols)?;
            x = g.add(x, pos)?;
        }
        re.encoder.forward(g, x)
    }

    /// Interaction cue for one pair: mean of the cells whose centers lie in
    /// the human box or the object box, then a linear map to the token width.
    pub fn masked_roi(
        &self,
        g: &mut Graph,
        encoded: NodeId,
        height: usize,
        width: usize,
        pair_boxes: &[f64; 8],
    ) -> Result<NodeId> {
        let re = self
            .remine
            .as_ref()
            .ok_or_else(|| Error::Config("masked RoI requested with re-mining disabled".into()))?;
        let pooled = masked_pool(g, encoded, height, width, pair_boxes)?;
        re.roi_fc.forward(g, pooled)
    }

    /// `FC(GAP(x))` over the raw map.
    pub fn global_context(&self, g: &mut Graph, map: NodeId) -> Result<NodeId> {
        let pooled = g.mean_rows(map)?;
        self.context_fc.forward(g, pooled)
    }

    /// `FC(cat(g, s̃, m))` for every pair row. `context` is `1 × Dv`,
    /// `pair_tokens` is `Np × 2Dv`, `cues` is `Np × Dv` when re-mining.
    pub fn fuse_pairs(
        &self,
        g: &mut Graph,
        context: NodeId,
        pair_tokens: NodeId,
        cues: Option<NodeId>,
    ) -> Result<NodeId> {
        let np = g.shape(pair_tokens).0;
        if cues.is_some() != self.remines() {
            return Err(Error::shape(
                "cue presence must match the re-mining setting",
            ));
        }
        let ctx = g.select_rows(context, &vec![0; np])?;
        let mut parts = vec![ctx, pair_tokens];
        parts.extend(cues);
        let cat = g.concat_cols(&parts)?;
        if g.shape(cat).1 != self.fuse_fc.in_dim {
            return Err(Error::shape(format!(
                "fused input width {} vs expected {}",
                g.shape(cat).1,
                self.fuse_fc.in_dim
            )));
        }
        self.fuse_fc.forward(g, cat)
    }

    /// Full visual branch for one image: pair representations `Np × Dl` and,
    /// when re-mining, the stacked cues `Np × Dv`.
    pub fn forward(
        &self,
        g: &mut Graph,
        image: &FeatureMap,
        pair_tokens: &Tensor,
        pair_boxes: &[[f64; 8]],
    ) -> Result<(NodeId, Option<NodeId>)> {
        let map = g.input(image.grid.clone());
        let context = self.global_context(g, map)?;
        let tokens = g.input(pair_tokens.clone());
        let cues = if self.remines() && !pair_boxes.is_empty() {
            let encoded = self.encode_map(g, map, image.height, image.width)?;
            let rows = pair_boxes
                .iter()
                .map(|b| self.masked_roi(g, encoded, image.height, image.width, b))
                .collect::<Result<Vec<_>>>()?;
            Some(g.concat_rows(&rows)?)
        } else if self.remines() {
            Some(g.input(Tensor::zeros(0, self.config.token_dim)))
        } else {
            None
        };
        let fused = self.fuse_pairs(g, context, tokens, cues)?;
        Ok((fused, cues))
    }
}

/// Cells covered by the human or object box of `pair_boxes`.
pub fn pair_cells(height: usize, width: usize, pair_boxes: &[f64; 8]) -> Result<Vec<usize>> {
    let h = BBox::new(pair_boxes[0], pair_boxes[1], pair_boxes[2], pair_boxes[3])?;
    let o = BBox::new(pair_boxes[4], pair_boxes[5], pair_boxes[6], pair_boxes[7])?;
    let cells: Vec<usize> = cell_mask(height, width, &[h, o])
        .into_iter()
        .enumerate()
        .filter_map(|(i, on)| on.then_some(i))
        .collect();
    if cells.is_empty() {
        return Err(Error::DegenerateRegion(format!(
            "pair region covers no cell center of the {height}x{width} grid"
        )));
    }
    Ok(cells)
}

/// Masked GAP without the projection. Unselected cells never enter the graph
/// path, so their gradient is exactly zero.
pub fn masked_pool(
    g: &mut Graph,
    map: NodeId,
    height: usize,
    width: usize,
    pair_boxes: &[f64; 8],
) -> Result<NodeId> {
    let cells = pair_cells(height, width, pair_boxes)?;
    let region = g.select_rows(map, &cells)?;
    g.mean_rows(region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::ops;

    fn small() -> RelationConfig {
        RelationConfig {
            channels: 3,
            token_dim: 4,
            repr_dim: 6,
            hidden_dim: 8,
            ..Default::default()
        }
    }

    fn random_map(h: usize, w: usize, c: usize, seed: u64) -> FeatureMap {
        let grid = Tensor::from_fn(h * w, c, |r, k| {
            ((r * 31 + k * 17 + seed as usize * 7) as f64 * 0.37).sin()
        });
        FeatureMap::new(h, w, grid, (1, 1)).unwrap()
    }

    fn pair(h: [f64; 4], o: [f64; 4]) -> [f64; 8] {
        [h[0], h[1], h[2], h[3], o[0], o[1], o[2], o[3]]
    }

    #[test]
    fn full_image_pair_equals_fc_of_gap() {
        let mut store = ParamStore::new(1);
        let enc = RelationEncoder::new(&mut store, small()).unwrap();
        let image = random_map(4, 5, 3, 0);
        let mut g = Graph::with_params(&store);
        let x = g.input(image.grid.clone());
        let full = pair([0.0, 0.0, 1.0, 1.0], [0.0, 0.0, 1.0, 1.0]);
        let cue = enc.masked_roi(&mut g, x, 4, 5, &full).unwrap();
        let w = store.get("ire.roi_fc.weight").unwrap();
        let b = store.get("ire.roi_fc.bias").unwrap();
        let expected = ops::gap(&image.grid, None)
            .unwrap()
            .matmul(w)
            .unwrap()
            .add(b)
            .unwrap();
        for (a, e) in g.value(cue).data().iter().zip(expected.data()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn region_outside_boxes_is_ignored() {
        let (h, w) = (6, 6);
        let boxes = pair([0.0, 0.0, 0.34, 0.34], [0.66, 0.66, 1.0, 1.0]);
        let cells = pair_cells(h, w, &boxes).unwrap();
        let base = Tensor::from_fn(h * w, 2, |r, c| {
            if cells.contains(&r) {
                1.75
            } else {
                (r + c) as f64
            }
        });
        let mut g = Graph::new();
        let x = g.input(base.clone());
        let pooled = masked_pool(&mut g, x, h, w, &boxes).unwrap();
        assert_eq!(g.value(pooled).data(), &[1.75, 1.75]);

        // Perturb the union-rectangle interior outside both boxes.
        let mut perturbed = base;
        for r in 0..h * w {
            if !cells.contains(&r) {
                perturbed.set(r, 0, 1e6);
            }
        }
        let mut g2 = Graph::new();
        let x2 = g2.input(perturbed);
        let pooled2 = masked_pool(&mut g2, x2, h, w, &boxes).unwrap();
        assert_eq!(g.value(pooled).data(), g2.value(pooled2).data());
    }

    #[test]
    fn degenerate_region_is_an_error() {
        let tiny = pair([0.01, 0.01, 0.02, 0.02], [0.03, 0.03, 0.04, 0.04]);
        assert!(matches!(
            pair_cells(4, 4, &tiny),
            Err(Error::DegenerateRegion(_))
        ));
    }

    #[test]
    fn zero_layers_is_identity() {
        let mut store = ParamStore::new(2);
        let enc = RelationEncoder::new(
            &mut store,
            RelationConfig {
                encoder_layers: 0,
                ..small()
            },
        )
        .unwrap();
        let image = random_map(3, 3, 3, 1);
        let mut g = Graph::with_params(&store);
        let x = g.input(image.grid.clone());
        let y = enc.encode_map(&mut g, x, 3, 3).unwrap();
        assert_eq!(g.value(y), &image.grid);
    }

    #[test]
    fn encode_preserves_shape() {
        let mut store = ParamStore::new(3);
        let enc = RelationEncoder::new(&mut store, small()).unwrap();
        for h in 4..=16 {
            for w in [4, 9, 16] {
                let image = random_map(h, w, 3, h as u64);
                let mut g = Graph::with_params(&store);
                let x = g.input(image.grid.clone());
                let y = enc.encode_map(&mut g, x, h, w).unwrap();
                assert_eq!(g.shape(y), (h * w, 3));
                assert!(g.value(y).is_finite());
            }
        }
        let one = random_map(1, 1, 3, 0);
        let mut g = Graph::with_params(&store);
        let x = g.input(one.grid.clone());
        let y = enc.encode_map(&mut g, x, 1, 1).unwrap();
        assert!(g.value(y).is_finite());
    }

    #[test]
    fn fuse_of_zeros_is_bias() {
        let mut store = ParamStore::new(4);
        let enc = RelationEncoder::new(&mut store, small()).unwrap();
        let mut g = Graph::with_params(&store);
        let ctx = g.input(Tensor::zeros(1, 4));
        let tok = g.input(Tensor::zeros(2, 8));
        let cue = g.input(Tensor::zeros(2, 4));
        let h = enc.fuse_pairs(&mut g, ctx, tok, Some(cue)).unwrap();
        let bias = store.get("fuse_fc.bias").unwrap();
        assert_eq!(g.value(h).row(0), bias.row(0));
        assert_eq!(g.value(h).row(1), bias.row(0));
    }

    #[test]
    fn fuse_is_sensitive_to_cue_and_order() {
        let mut store = ParamStore::new(5);
        let enc = RelationEncoder::new(&mut store, small()).unwrap();
        let run = |ctx: Vec<f64>, tok: Vec<f64>, cue: Vec<f64>| {
            let mut g = Graph::with_params(&store);
            let c = g.input(Tensor::row_vector(ctx));
            let t = g.input(Tensor::row_vector(tok));
            let m = g.input(Tensor::row_vector(cue));
            let h = enc.fuse_pairs(&mut g, c, t, Some(m)).unwrap();
            g.value(h).clone()
        };
        let ctx = vec![0.1, -0.2, 0.3, 0.4];
        let tok: Vec<f64> = (0..8).map(|i| i as f64 * 0.1 - 0.3).collect();
        let cue = vec![0.5, 0.6, -0.7, 0.8];
        let base = run(ctx.clone(), tok.clone(), cue.clone());
        let mut cue2 = cue.clone();
        cue2[1] += 0.5;
        assert_ne!(base, run(ctx.clone(), tok.clone(), cue2));
        // Swapping context and cue (same width) changes the output.
        assert_ne!(base, run(cue, tok, ctx));
    }

    #[test]
    fn disabling_remine_shrinks_parameters() {
        let mut with = ParamStore::new(0);
        RelationEncoder::new(&mut with, small()).unwrap();
        let mut without = ParamStore::new(0);
        RelationEncoder::new(
            &mut without,
            RelationConfig {
                remine: false,
                ..small()
            },
        )
        .unwrap();
        assert!(without.num_scalars() < with.num_scalars());
        assert!(without.names_with_prefix(PREFIX).next().is_none());
    }
}
