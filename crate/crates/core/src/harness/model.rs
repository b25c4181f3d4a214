//! End-to-end model: frozen detector and text encoder, trainable relation
//! encoder, alignment heads and reasoning module.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::alignment::{
    match_candidates, AlignmentConfig, AlignmentLosses, CrossModal, MatchedSet,
};
use crate::detection::{
    generate_pairs, Detector, EntityDetectionSet, FeatureMap, HoPair, MockDetector,
};
use crate::error::{Error, Result};
use crate::eval::DetectionRecord;
use crate::primitives::{sigmoid, Graph, NodeId, ParamStore, Tensor};
use crate::reasoning::{
    compose_scores, hoi_loss, verb_targets, InteractionPrediction, LossComponents, ReasoningConfig,
    ReasoningModule,
};
use crate::relation::{RelationConfig, RelationEncoder};
use crate::text::{encode_text, serialize, StubEncoder, TextEncoder, Tokenizer, Vocabulary};

use super::config::{Ablation, RunConfig};
use super::data::SyntheticScene;

/// Everything about one scene that no trainable parameter can change:
/// detections, candidate pairs, text knowledge, matching and targets.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub image_id: u64,
    pub map: FeatureMap,
    pub detections: EntityDetectionSet,
    pub pairs: Vec<HoPair>,
    pub pair_tokens: Tensor,
    pub pair_boxes: Vec<[f64; 8]>,
    pub matched: MatchedSet,
    pub targets: Tensor,
    /// One row per annotation.
    pub cls: Tensor,
    pub words: Tensor,
}

/// Loss nodes of one scene.
#[derive(Debug, Clone, Copy)]
pub struct SceneLosses {
    pub hoi: NodeId,
    pub alignment: AlignmentLosses,
    pub logits: NodeId,
}

/// Per-step outcome of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLoss {
    pub total: f64,
    pub components: LossComponents,
}

#[derive(Debug, Clone)]
pub struct HoiModel {
    config: RunConfig,
    flags: Ablation,
    vocab: Vocabulary,
    detector: MockDetector,
    relation: RelationEncoder,
    alignment: CrossModal,
    reasoning: ReasoningModule,
    tokenizer: Tokenizer,
    text_encoder: StubEncoder,
}

impl HoiModel {
    /// Builds the model and its freshly initialised parameters.
    pub fn new(config: &RunConfig) -> Result<(Self, ParamStore)> {
        config.validate()?;
        let flags = config.flags();
        let m = &config.model;
        let mut store = ParamStore::new(config.seed);
        let relation = RelationEncoder::new(
            &mut store,
            RelationConfig {
                channels: config.data.channels,
                token_dim: m.token_dim,
                repr_dim: m.repr_dim,
                hidden_dim: m.hidden_dim,
                encoder_layers: m.ire_layers,
                positional: m.positional,
                max_grid: config.data.grid.max(1),
                remine: flags.ire,
            },
        )?;
        let alignment = CrossModal::new(
            &mut store,
            AlignmentConfig {
                repr_dim: m.repr_dim,
                cue_dim: m.token_dim,
                hidden_dim: m.hidden_dim,
                self_layers: m.self_attn_layers,
                cross_layers: m.cross_attn_layers,
                align_self_attended: m.align_self_attended,
            },
            flags.ire,
        )?;
        let reasoning = ReasoningModule::new(
            &mut store,
            ReasoningConfig {
                repr_dim: m.repr_dim,
                hidden_dim: m.hidden_dim,
                layers: m.irm_layers,
                num_verbs: config.data.num_verbs,
            },
        )?;
        let vocab = config.data.vocabulary();
        let tokenizer = Tokenizer::new(&vocab);
        let text_encoder = StubEncoder::new(
            tokenizer.vocab_size(),
            m.repr_dim,
            m.max_text_len,
            config.seed,
        );
        let detector = MockDetector::new(config.detector.clone())?;
        Ok((
            Self {
                config: config.clone(),
                flags,
                vocab,
                detector,
                relation,
                alignment,
                reasoning,
                tokenizer,
                text_encoder,
            },
            store,
        ))
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn flags(&self) -> Ablation {
        self.flags
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn detector(&self) -> &MockDetector {
        &self.detector
    }

    pub fn text_encoder(&self) -> &dyn TextEncoder {
        &self.text_encoder
    }

    /// Frozen stages: detection, pairing, text encoding and matching.
    pub fn prepare(&self, scene: &SyntheticScene) -> Result<PreparedScene> {
        let map = scene.feature_map()?;
        let detections = self
            .detector
            .with_instances(&scene.instances, scene.image_id)
            .detect(&map, self.config.model.num_queries)?;
        let pairs = generate_pairs(&detections);
        let dv2 = 2 * self.config.model.token_dim;
        let pair_tokens = if pairs.is_empty() {
            Tensor::zeros(0, dv2)
        } else {
            Tensor::from_rows(
                &pairs
                    .iter()
                    .map(|p| p.pair_tokens.data().to_vec())
                    .collect::<Vec<_>>(),
            )?
        };
        let pair_boxes: Vec<[f64; 8]> = pairs.iter().map(|p| p.pair_boxes).collect();
        let matched = match_candidates(&pairs, &scene.interactions, self.config.loss.match_iou)?;
        let assigned: Vec<(usize, &[usize])> = matched
            .candidate_indices
            .iter()
            .zip(&matched.gt_indices)
            .map(|(&c, &t)| (c, scene.interactions[t].verbs.as_slice()))
            .collect();
        let targets = verb_targets(pairs.len(), self.config.data.num_verbs, &assigned)?;
        let text = serialize(&scene.interactions, &self.vocab)?;
        let knowledge = encode_text(&text, &self.tokenizer, &self.text_encoder)?;
        let cls = knowledge.cls_per_annotation(scene.interactions.len())?;
        Ok(PreparedScene {
            image_id: scene.image_id,
            map,
            detections,
            pairs,
            pair_tokens,
            pair_boxes,
            matched,
            targets,
            cls,
            words: knowledge.word_embeddings,
        })
    }

    /// Pair representations, reasoning outputs and all loss terms of one scene.
    pub fn scene_losses(&self, g: &mut Graph, scene: &PreparedScene) -> Result<SceneLosses> {
        let (fused, cues) =
            self.relation
                .forward(g, &scene.map, &scene.pair_tokens, &scene.pair_boxes)?;
        let reasoned = self.reasoning.reason(g, fused)?;
        let logits = self.reasoning.classify(g, reasoned)?;
        let hoi = if scene.pairs.is_empty() {
            g.input(Tensor::scalar(0.0))
        } else {
            hoi_loss(g, logits, &scene.targets, self.config.loss.gamma)?
        };
        let alignment = if scene.pairs.is_empty() {
            AlignmentLosses::default()
        } else {
            self.alignment.losses(
                g,
                cues,
                reasoned,
                &scene.matched,
                &scene.cls,
                &scene.words,
                self.flags.active_terms(),
            )?
        };
        Ok(SceneLosses {
            hoi,
            alignment,
            logits,
        })
    }

    /// Batch mean of the weighted objective and its parameter gradients.
    /// Gradients of parameters the batch does not reach are zeros.
    pub fn batch_gradients(
        &self,
        store: &ParamStore,
        scenes: &[&PreparedScene],
    ) -> Result<(BatchLoss, BTreeMap<String, Tensor>)> {
        if scenes.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let w = self.config.loss.weights;
        let mut g = Graph::with_params(store);
        let mut per_scene = Vec::with_capacity(scenes.len());
        let mut comp = LossComponents::default();
        let inv = 1.0 / scenes.len() as f64;
        for s in scenes {
            let l = self.scene_losses(&mut g, s)?;
            let mut terms = vec![(w.hoi, l.hoi)];
            comp.hoi += g.value(l.hoi).item() * inv;
            let a = &l.alignment;
            for (wt, node, slot) in [
                (w.sentence_irm, a.sentence_irm, &mut comp.sentence_irm),
                (w.word_irm, a.word_irm, &mut comp.word_irm),
                (w.sentence_ire, a.sentence_ire, &mut comp.sentence_ire),
                (w.word_ire, a.word_ire, &mut comp.word_ire),
            ] {
                if let Some(n) = node {
                    *slot += g.value(n).item() * inv;
                    if wt != 0.0 {
                        terms.push((wt, n));
                    }
                }
            }
            per_scene.push(g.weighted_sum(&terms)?);
        }
        let weighted: Vec<(f64, NodeId)> = per_scene.iter().map(|&n| (inv, n)).collect();
        let total = g.weighted_sum(&weighted)?;
        let loss = BatchLoss {
            total: g.value(total).item(),
            components: comp,
        };
        if !loss.total.is_finite() {
            return Ok((loss, BTreeMap::new()));
        }
        let grads = g.backward(total)?;
        Ok((loss, grads.for_params(store)))
    }

    /// Per-pair verb predictions with detection-confidence fusion.
    pub fn predict(
        &self,
        store: &ParamStore,
        scene: &PreparedScene,
    ) -> Result<Vec<InteractionPrediction>> {
        if scene.pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::with_params(store);
        let (fused, _) =
            self.relation
                .forward(&mut g, &scene.map, &scene.pair_tokens, &scene.pair_boxes)?;
        let reasoned = self.reasoning.reason(&mut g, fused)?;
        let logits = self.reasoning.classify(&mut g, reasoned)?;
        let logits = g.value(logits);
        let conf = &scene.detections.confidences;
        Ok(scene
            .pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let verb_logits = logits.row(i).to_vec();
                let verb_scores: Vec<f64> = verb_logits.iter().map(|&z| sigmoid(z)).collect();
                let final_scores = compose_scores(
                    &verb_scores,
                    conf[p.human_idx],
                    conf[p.object_idx],
                    self.config.loss.score_exponent,
                );
                InteractionPrediction {
                    human_idx: p.human_idx,
                    object_idx: p.object_idx,
                    verb_logits,
                    verb_scores,
                    final_scores,
                }
            })
            .collect())
    }

    /// One detection record per (pair, verb).
    pub fn detection_records(
        &self,
        store: &ParamStore,
        scene: &PreparedScene,
    ) -> Result<Vec<DetectionRecord>> {
        let preds = self.predict(store, scene)?;
        let d = &scene.detections;
        let mut out = Vec::new();
        for p in preds {
            for (verb, &score) in p.final_scores.iter().enumerate() {
                out.push(DetectionRecord {
                    image_id: scene.image_id,
                    human_box: d.boxes[p.human_idx].to_array(),
                    object_box: d.boxes[p.object_idx].to_array(),
                    object_class: d.class_labels[p.object_idx],
                    verb,
                    score,
                });
            }
        }
        Ok(out)
    }
}
