//! Cross-modal alignment and knowledge transfer.
//!
//! Two visual branches are aligned with the annotation text: the re-mined
//! cues (IRE side, `M`) and the reasoning-module outputs (IRM side, `O`).
//! Each branch runs self-attention over all candidates, keeps the rows of
//! candidates matched to ground truth, and is distilled
//!
//! * at word level, towards cross-attention over the image's word rows, and
//! * at sentence level, from the `[CLS]` rows through a small FFN.
//!
//! Losses tagged `_a` belong to the IRE branch, `_m` to the IRM branch.

use serde::{Deserialize, Serialize};

use crate::detection::HoPair;
use crate::error::{Error, Result};
use crate::primitives::{
    Encoder, Ffn, Graph, Linear, NodeId, ParamStore, ProjectedAttention, Tensor,
};
use crate::text::TripletAnnotation;

/// Candidate-to-annotation assignment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchedSet {
    pub candidate_indices: Vec<usize>,
    pub gt_indices: Vec<usize>,
    /// `min(IoU_h, IoU_o)` of each assignment.
    pub scores: Vec<f64>,
}

impl MatchedSet {
    pub fn len(&self) -> usize {
        self.candidate_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidate_indices.is_empty()
    }

    /// GT index assigned to `candidate`, if any.
    pub fn gt_for(&self, candidate: usize) -> Option<usize> {
        self.candidate_indices
            .iter()
            .position(|&c| c == candidate)
            .map(|i| self.gt_indices[i])
    }
}

/// Greedy one-to-one matching. A candidate qualifies for an annotation when
/// both its human and object IoU reach `iou_threshold`; qualifying pairs are
/// taken in descending `min(IoU_h, IoU_o)`, ties by lower candidate index and
/// then lower annotation index.
pub fn match_candidates(
    pairs: &[HoPair],
    gts: &[TripletAnnotation],
    iou_threshold: f64,
) -> Result<MatchedSet> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::Config(format!(
            "IoU threshold {iou_threshold} must lie in (0, 1)"
        )));
    }
    let mut eligible = Vec::new();
    for (c, p) in pairs.iter().enumerate() {
        let (hb, ob) = (p.human_box(), p.object_box());
        for (t, gt) in gts.iter().enumerate() {
            let ih = hb.iou(&gt.human_box);
            let io = ob.iou(&gt.object_box);
            if ih >= iou_threshold && io >= iou_threshold {
                eligible.push((ih.min(io), c, t));
            }
        }
    }
    eligible.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_c = vec![false; pairs.len()];
    let mut used_t = vec![false; gts.len()];
    let mut out = MatchedSet::default();
    for (score, c, t) in eligible {
        if used_c[c] || used_t[t] {
            continue;
        }
        used_c[c] = true;
        used_t[t] = true;
        out.candidate_indices.push(c);
        out.gt_indices.push(t);
        out.scores.push(score);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Re-mined interaction cues.
    Ire,
    /// Reasoning-module outputs.
    Irm,
}

impl Branch {
    pub fn prefix(self) -> &'static str {
        match self {
            Branch::Ire => "cml.ire",
            Branch::Irm => "cml.irm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignmentConfig {
    pub repr_dim: usize,
    pub cue_dim: usize,
    pub hidden_dim: usize,
    pub self_layers: usize,
    pub cross_layers: usize,
    /// Align the self-attended rows (`true`) or the raw branch rows.
    pub align_self_attended: bool,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            repr_dim: 64,
            cue_dim: 32,
            hidden_dim: 64,
            self_layers: 2,
            cross_layers: 1,
            align_self_attended: true,
        }
    }
}

#[derive(Debug, Clone)]
struct BranchModules {
    input_proj: Option<Linear>,
    self_attn: Encoder,
    cross_attn: Vec<ProjectedAttention>,
    ffn_t: Ffn,
}

/// Alignment modules for both branches. The IRE branch exists only when the
/// model re-mines cues.
#[derive(Debug, Clone)]
pub struct CrossModal {
    config: AlignmentConfig,
    ire: Option<BranchModules>,
    irm: BranchModules,
}

/// The four distillation terms; `None` when a term is disabled or not
/// applicable.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlignmentLosses {
    pub sentence_ire: Option<NodeId>,
    pub word_ire: Option<NodeId>,
    pub sentence_irm: Option<NodeId>,
    pub word_irm: Option<NodeId>,
}

/// Which distillation terms to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveTerms {
    pub sentence_ire: bool,
    pub word_ire: bool,
    pub sentence_irm: bool,
    pub word_irm: bool,
}

impl ActiveTerms {
    pub fn all() -> Self {
        Self {
            sentence_ire: true,
            word_ire: true,
            sentence_irm: true,
            word_irm: true,
        }
    }

    pub fn none() -> Self {
        Self {
            sentence_ire: false,
            word_ire: false,
            sentence_irm: false,
            word_irm: false,
        }
    }

    fn any_for(&self, b: Branch) -> bool {
        match b {
            Branch::Ire => self.sentence_ire || self.word_ire,
            Branch::Irm => self.sentence_irm || self.word_irm,
        }
    }
}

impl CrossModal {
    pub fn new(store: &mut ParamStore, config: AlignmentConfig, with_ire: bool) -> Result<Self> {
        if config.repr_dim == 0 || config.hidden_dim == 0 {
            return Err(Error::Config(
                "alignment dimensions must be positive".into(),
            ));
        }
        if config.cross_layers == 0 {
            return Err(Error::Config(
                "at least one cross-attention layer is required".into(),
            ));
        }
        let build = |store: &mut ParamStore, b: Branch, in_dim: Option<usize>| {
            let p = b.prefix();
            let d = config.repr_dim;
            BranchModules {
                input_proj: in_dim.map(|i| Linear::new(store, &format!("{p}.proj"), i, d)),
                self_attn: Encoder::new(
                    store,
                    &format!("{p}.self"),
                    config.self_layers,
                    d,
                    config.hidden_dim,
                ),
                cross_attn: (0..config.cross_layers)
                    .map(|i| {
                        ProjectedAttention::new(
                            store,
                            &format!("{p}.cross.{i}"),
                            d,
                            d,
                            config.hidden_dim,
                        )
                    })
                    .collect(),
                ffn_t: Ffn::new(store, &format!("{p}.ffn_t"), d, config.hidden_dim, d),
            }
        };
        let ire = with_ire.then(|| build(store, Branch::Ire, Some(config.cue_dim)));
        let irm = build(store, Branch::Irm, None);
        Ok(Self { config, ire, irm })
    }

    pub fn config(&self) -> &AlignmentConfig {
        &self.config
    }

    fn branch(&self, b: Branch) -> Result<&BranchModules> {
        match b {
            Branch::Ire => self
                .ire
                .as_ref()
                .ok_or_else(|| Error::Config("IRE alignment branch is not built".into())),
            Branch::Irm => Ok(&self.irm),
        }
    }

    /// Lifts branch rows to the representation width (projects cues).
    pub fn branch_input(&self, g: &mut Graph, b: Branch, x: NodeId) -> Result<NodeId> {
        match &self.branch(b)?.input_proj {
            Some(p) => p.forward(g, x),
            None => Ok(x),
        }
    }

    /// Self-attention layers over all rows of `x`; shape preserved.
    pub fn self_attend(&self, g: &mut Graph, b: Branch, x: NodeId) -> Result<NodeId> {
        let rows = g.shape(x).0;
        if rows == 0 {
            return Ok(x);
        }
        self.branch(b)?.self_attn.forward(g, x)
    }

    /// Cross-attention from visual rows to word rows. The visual query is
    /// detached so the output can act as a distillation target for it.
    pub fn cross_attend(
        &self,
        g: &mut Graph,
        b: Branch,
        visual: NodeId,
        words: NodeId,
    ) -> Result<NodeId> {
        if g.shape(words).0 == 0 {
            return Err(Error::shape("cross-attention needs at least one word row"));
        }
        let mut q = g.detach(visual);
        for layer in &self.branch(b)?.cross_attn {
            q = layer.forward(g, q, words)?;
        }
        Ok(q)
    }

    pub fn sentence_head(&self, g: &mut Graph, b: Branch, x: NodeId) -> Result<NodeId> {
        self.branch(b)?.ffn_t.forward(g, x)
    }

    /// Builds the active distillation terms for one image.
    ///
    /// `cues` are the `Np × Dv` re-mined cues (absent without re-mining),
    /// `reasoned` the `Np × Dl` reasoning outputs. `cls` holds one row per
    /// annotation, `words` every word row of the image's text.
    pub fn losses(
        &self,
        g: &mut Graph,
        cues: Option<NodeId>,
        reasoned: NodeId,
        matched: &MatchedSet,
        cls: &Tensor,
        words: &Tensor,
        active: ActiveTerms,
    ) -> Result<AlignmentLosses> {
        let mut out = AlignmentLosses::default();
        let mut active = active;
        if cues.is_none() || self.ire.is_none() {
            active.sentence_ire = false;
            active.word_ire = false;
        }
        let zero = |g: &mut Graph| g.input(Tensor::scalar(0.0));
        let no_words = words.rows() == 0;

        for b in [Branch::Ire, Branch::Irm] {
            if !active.any_for(b) {
                continue;
            }
            let (want_s, want_w) = match b {
                Branch::Ire => (active.sentence_ire, active.word_ire),
                Branch::Irm => (active.sentence_irm, active.word_irm),
            };
            let (s, w) = if matched.is_empty() {
                (want_s.then(|| zero(g)), want_w.then(|| zero(g)))
            } else {
                let src = match b {
                    Branch::Ire => cues.expect("checked above"),
                    Branch::Irm => reasoned,
                };
                let x = self.branch_input(g, b, src)?;
                let x = if self.config.align_self_attended {
                    self.self_attend(g, b, x)?
                } else {
                    x
                };
                let va = g.select_rows(x, &matched.candidate_indices)?;
                let s = if want_s {
                    let target = g.input(cls.select_rows(&matched.gt_indices)?);
                    let pred = self.sentence_head(g, b, va)?;
                    Some(g.l1(target, pred)?)
                } else {
                    None
                };
                let w = match (want_w, no_words) {
                    (false, _) => None,
                    (true, true) => Some(zero(g)),
                    (true, false) => {
                        let wn = g.input(words.clone());
                        let hat = self.cross_attend(g, b, va, wn)?;
                        Some(g.l1(va, hat)?)
                    }
                };
                (s, w)
            };
            match b {
                Branch::Ire => {
                    out.sentence_ire = s;
                    out.word_ire = w;
                }
                Branch::Irm => {
                    out.sentence_irm = s;
                    out.word_irm = w;
                }
            }
        }
        Ok(out)
    }
}

/// Word-level terms `(L_w^a, L_w^m)` from already-built rows:
/// `l1(M_va, M̂_va)` and `l1(O_va, Ô_va)`. Empty inputs give zeros.
pub fn word_losses(
    g: &mut Graph,
    m_va: NodeId,
    o_va: NodeId,
    m_hat: NodeId,
    o_hat: NodeId,
) -> Result<(NodeId, NodeId)> {
    Ok((g.l1(m_va, m_hat)?, g.l1(o_va, o_hat)?))
}

/// Sentence-level terms `(L_s^a, L_s^m)`: `l1(E_cls, FFN_T¹(M_va))` and
/// `l1(E_cls, FFN_T²(O_va))`.
pub fn sentence_losses(
    g: &mut Graph,
    heads: &CrossModal,
    m_va: NodeId,
    o_va: NodeId,
    cls: &Tensor,
) -> Result<(NodeId, NodeId)> {
    let target = g.input(cls.clone());
    let pm = heads.sentence_head(g, Branch::Ire, m_va)?;
    let po = heads.sentence_head(g, Branch::Irm, o_va)?;
    Ok((g.l1(target, pm)?, g.l1(target, po)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::BBox;

    fn pair(h: [f64; 4], o: [f64; 4]) -> HoPair {
        let mut pb = [0.0; 8];
        pb[..4].copy_from_slice(&h);
        pb[4..].copy_from_slice(&o);
        HoPair {
            human_idx: 0,
            object_idx: 1,
            pair_tokens: Tensor::zeros(1, 2),
            pair_boxes: pb,
        }
    }

    fn gt(h: [f64; 4], o: [f64; 4]) -> TripletAnnotation {
        TripletAnnotation::new(
            BBox::try_from(h).unwrap(),
            BBox::try_from(o).unwrap(),
            1,
            vec![0],
        )
        .unwrap()
    }

    #[test]
    fn exact_boxes_match() {
        let h = [0.1, 0.1, 0.4, 0.9];
        let o = [0.5, 0.5, 0.9, 0.8];
        let m = match_candidates(&[pair(h, o)], &[gt(h, o)], 0.5).unwrap();
        assert_eq!(m.candidate_indices, vec![0]);
        assert_eq!(m.scores, vec![1.0]);
    }

    #[test]
    fn disjoint_boxes_do_not_match() {
        let m = match_candidates(
            &[pair([0.0, 0.0, 0.2, 0.2], [0.0, 0.0, 0.2, 0.2])],
            &[gt([0.5, 0.5, 0.9, 0.9], [0.5, 0.5, 0.9, 0.9])],
            0.5,
        )
        .unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn higher_min_iou_wins() {
        // Horizontal shifts of a 0.5-wide unit box produce exact IoUs.
        let base = [0.2, 0.1, 0.7, 0.9];
        let shifted = |iou: f64| {
            // IoU of same-size boxes shifted by d along x: (w-d)/(w+d)
            let w = 0.5;
            let d = w * (1.0 - iou) / (1.0 + iou);
            [base[0] + d, base[1], base[2] + d, base[3]]
        };
        let g = gt(base, base);
        let a = pair(shifted(0.9), shifted(0.9));
        let b = pair(shifted(0.6), shifted(0.95));
        let m = match_candidates(&[b.clone(), a.clone()], &[g.clone()], 0.5).unwrap();
        assert_eq!(m.candidate_indices, vec![1]);
        assert!((m.scores[0] - 0.9).abs() < 1e-9);
        let m = match_candidates(&[a, b], &[g], 0.5).unwrap();
        assert_eq!(m.candidate_indices, vec![0]);
    }

    #[test]
    fn threshold_is_validated() {
        assert!(match_candidates(&[], &[], 0.0).is_err());
        assert!(match_candidates(&[], &[], 1.0).is_err());
        assert!(match_candidates(&[], &[], 0.5).unwrap().is_empty());
    }

    fn heads(store: &mut ParamStore) -> CrossModal {
        CrossModal::new(
            store,
            AlignmentConfig {
                repr_dim: 4,
                cue_dim: 3,
                hidden_dim: 5,
                ..Default::default()
            },
            true,
        )
        .unwrap()
    }

    #[test]
    fn single_word_gives_identical_rows() {
        let mut store = ParamStore::new(0);
        let cm = heads(&mut store);
        let mut g = Graph::with_params(&store);
        let visual = g.input(Tensor::from_fn(3, 4, |r, c| (r * 4 + c) as f64 * 0.3 - 1.0));
        let word = g.input(Tensor::row_vector(vec![0.2, -0.4, 0.6, 0.1]));
        let out = cm.cross_attend(&mut g, Branch::Irm, visual, word).unwrap();
        let v = g.value(out);
        assert_eq!(v.rows(), 3);
        assert_eq!(v.row(0), v.row(1));
        assert_eq!(v.row(1), v.row(2));
    }

    #[test]
    fn self_attend_single_row_and_shapes() {
        let mut store = ParamStore::new(1);
        let cm = heads(&mut store);
        for k in 1..=8 {
            let mut g = Graph::with_params(&store);
            let x = g.input(Tensor::from_fn(k, 4, |r, c| ((r + 3 * c) as f64).sin()));
            let y = cm.self_attend(&mut g, Branch::Ire, x).unwrap();
            assert_eq!(g.shape(y), (k, 4));
        }
    }

    #[test]
    fn word_losses_vanish_on_equal_inputs() {
        let mut g = Graph::new();
        let a = g.input(Tensor::from_fn(2, 3, |r, c| (r + c) as f64));
        let b = g.input(Tensor::from_fn(2, 3, |r, c| (r * c) as f64));
        let (la, lm) = word_losses(&mut g, a, b, a, b).unwrap();
        assert_eq!(g.value(la).item(), 0.0);
        assert_eq!(g.value(lm).item(), 0.0);
        let e = g.input(Tensor::zeros(0, 3));
        let (la, lm) = word_losses(&mut g, e, e, e, e).unwrap();
        assert_eq!((g.value(la).item(), g.value(lm).item()), (0.0, 0.0));
    }

    #[test]
    fn self_attend_is_permutation_equivariant() {
        let mut store = ParamStore::new(3);
        let cm = heads(&mut store);
        let x = Tensor::from_fn(5, 4, |r, c| ((r * 3 + c) as f64 * 0.77).sin());
        let p = [4, 2, 0, 1, 3];
        let run = |x: Tensor| {
            let mut g = Graph::with_params(&store);
            let n = g.input(x);
            let y = cm.self_attend(&mut g, Branch::Irm, n).unwrap();
            g.value(y).clone()
        };
        let lhs = run(x.select_rows(&p).unwrap());
        let rhs = run(x).select_rows(&p).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn distinct_queries_attend_differently() {
        let mut store = ParamStore::new(4);
        let cm = heads(&mut store);
        let mut g = Graph::with_params(&store);
        let q = g.input(
            Tensor::from_rows(&[vec![3.0, 0.0, 0.0, 0.0], vec![0.0, 3.0, 0.0, 0.0]]).unwrap(),
        );
        let w = g.input(Tensor::from_fn(5, 4, |r, c| {
            ((r * 4 + c) as f64 * 1.3).cos()
        }));
        let y = cm.cross_attend(&mut g, Branch::Irm, q, w).unwrap();
        let v = g.value(y);
        assert_eq!(v.rows(), 2);
        let d: f64 = v
            .row(0)
            .iter()
            .zip(v.row(1))
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(d > 1e-6);
    }

    #[test]
    fn losses_match_loop_oracles() {
        let mut store = ParamStore::new(6);
        let cm = heads(&mut store);
        let m_va = Tensor::from_fn(3, 4, |r, c| ((r * 4 + c) as f64 * 0.31).sin());
        let o_va = Tensor::from_fn(3, 4, |r, c| ((r * 4 + c) as f64 * 0.53).cos());
        let m_hat = Tensor::from_fn(3, 4, |r, c| (r as f64 - c as f64) * 0.2);
        let o_hat = Tensor::from_fn(3, 4, |r, c| (r * c) as f64 * 0.1);
        let cls = Tensor::from_fn(3, 4, |r, c| (r + c) as f64 * 0.05);
        let oracle = |a: &Tensor, b: &Tensor| {
            let mut s = 0.0;
            for r in 0..a.rows() {
                for c in 0..a.cols() {
                    s += (a.get(r, c) - b.get(r, c)).abs();
                }
            }
            s / a.len() as f64
        };
        let mut g = Graph::with_params(&store);
        let (a, b, c, d) = (
            g.input(m_va.clone()),
            g.input(o_va.clone()),
            g.input(m_hat.clone()),
            g.input(o_hat.clone()),
        );
        let (wa, wm) = word_losses(&mut g, a, b, c, d).unwrap();
        assert!((g.value(wa).item() - oracle(&m_va, &m_hat)).abs() < 1e-14);
        assert!((g.value(wm).item() - oracle(&o_va, &o_hat)).abs() < 1e-14);
        let (sa, sm) = sentence_losses(&mut g, &cm, a, b, &cls).unwrap();
        let pm = cm.sentence_head(&mut g, Branch::Ire, a).unwrap();
        let po = cm.sentence_head(&mut g, Branch::Irm, b).unwrap();
        assert!((g.value(sa).item() - oracle(&cls, g.value(pm))).abs() < 1e-14);
        assert!((g.value(sm).item() - oracle(&cls, g.value(po))).abs() < 1e-14);
    }

    #[test]
    fn gradient_reaches_cross_attention_not_query() {
        let mut store = ParamStore::new(8);
        let cm = heads(&mut store);
        let mut g = Graph::with_params(&store);
        let visual = g.input(Tensor::from_fn(2, 4, |r, c| ((r * 4 + c) as f64).sin()));
        let words = g.input(Tensor::from_fn(3, 4, |r, c| {
            ((r * 4 + c) as f64 * 0.4).cos()
        }));
        let hat = cm.cross_attend(&mut g, Branch::Irm, visual, words).unwrap();
        let loss = g.l1(visual, hat).unwrap();
        let grads = g.backward(loss).unwrap();
        let by_name = grads.for_params(&store);
        assert!(by_name["cml.irm.cross.0.v.weight"].max_abs() > 0.0);
        // Words are constants of the graph: their gradient exists but
        // nothing upstream of them is trainable.
        assert!(by_name.keys().all(|k| !k.starts_with("text")));
    }

    #[test]
    fn empty_match_gives_zero_losses() {
        let mut store = ParamStore::new(0);
        let cm = heads(&mut store);
        let mut g = Graph::with_params(&store);
        let cues = g.input(Tensor::from_fn(2, 3, |r, c| (r + c) as f64));
        let reasoned = g.input(Tensor::from_fn(2, 4, |r, c| (r * c) as f64));
        let out = cm
            .losses(
                &mut g,
                Some(cues),
                reasoned,
                &MatchedSet::default(),
                &Tensor::zeros(0, 4),
                &Tensor::zeros(0, 4),
                ActiveTerms::all(),
            )
            .unwrap();
        for l in [
            out.sentence_ire,
            out.word_ire,
            out.sentence_irm,
            out.word_irm,
        ] {
            let l = l.unwrap();
            assert_eq!(g.value(l).item(), 0.0);
            let grads = g.backward(l).unwrap();
            assert!(grads
                .for_params(&store)
                .values()
                .all(|t| t.max_abs() == 0.0));
        }
    }
}
