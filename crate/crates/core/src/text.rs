//! Linguistic knowledge from ground-truth triplets.
//!
//! Every `(pair, verb)` interaction becomes a sub-sentence such as
//! `"human ride bicycle"`. Sub-sentences are encoded one at a time by a
//! frozen [`TextEncoder`], giving one sentence-level `[CLS]` row per
//! interaction and the contextualized word rows of all sub-sentences.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::detection::BBox;
use crate::error::{Error, Result};
use crate::primitives::params::named_rng;
use crate::primitives::{ops, Tensor};

pub const SEP: &str = "[SEP]";
pub const CLS: &str = "[CLS]";
pub const END: &str = "[END]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletAnnotation {
    pub human_box: BBox,
    pub object_box: BBox,
    pub object_class: usize,
    /// Sorted, unique, nonempty.
    pub verbs: Vec<usize>,
}

impl TripletAnnotation {
    pub fn new(
        human_box: BBox,
        object_box: BBox,
        object_class: usize,
        mut verbs: Vec<usize>,
    ) -> Result<Self> {
        verbs.sort_unstable();
        verbs.dedup();
        if verbs.is_empty() {
            return Err(Error::Config(
                "triplet annotation needs at least one verb".into(),
            ));
        }
        Ok(Self {
            human_box,
            object_box,
            object_class,
            verbs,
        })
    }
}

/// Verb and category name tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub verbs: Vec<String>,
    /// Indexed by category id; id 0 is the human category.
    pub objects: Vec<String>,
}

impl Vocabulary {
    pub fn verb(&self, id: usize) -> Result<&str> {
        self.verbs
            .get(id)
            .map(String::as_str)
            .ok_or(Error::Vocabulary { kind: "verb", id })
    }

    pub fn object(&self, id: usize) -> Result<&str> {
        self.objects
            .get(id)
            .map(String::as_str)
            .ok_or(Error::Vocabulary { kind: "object", id })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SerializedText {
    pub sub_sentences: Vec<String>,
    pub joined: String,
    /// `(annotation index, verb id)` of each sub-sentence.
    pub provenance: Vec<(usize, usize)>,
}

impl SerializedText {
    pub fn len(&self) -> usize {
        self.sub_sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sub_sentences.is_empty()
    }
}

/// One `"human <verb> <object>"` sub-sentence per interaction, in annotation
/// order then verb order, joined by `[SEP]`.
pub fn serialize(annotations: &[TripletAnnotation], vocab: &Vocabulary) -> Result<SerializedText> {
    let mut out = SerializedText::default();
    for (i, ann) in annotations.iter().enumerate() {
        let object = vocab.object(ann.object_class)?;
        for &v in &ann.verbs {
            out.sub_sentences
                .push(normalize(&format!("human {} {}", vocab.verb(v)?, object)));
            out.provenance.push((i, v));
        }
    }
    out.joined = out.sub_sentences.join(&format!(" {SEP} "));
    Ok(out)
}

/// Lowercase with single spaces.
pub fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Whitespace tokenizer over a closed vocabulary.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    words: Vec<String>,
    ids: BTreeMap<String, u32>,
}

impl Tokenizer {
    pub fn new(vocab: &Vocabulary) -> Self {
        let mut t = Self {
            words: Vec::new(),
            ids: BTreeMap::new(),
        };
        for w in [CLS, END, SEP, "human"] {
            t.add(w);
        }
        for name in vocab.verbs.iter().chain(&vocab.objects) {
            for w in normalize(name).split(' ') {
                t.add(w);
            }
        }
        t
    }

    fn add(&mut self, w: &str) {
        if !self.ids.contains_key(w) {
            self.ids.insert(w.to_string(), self.words.len() as u32);
            self.words.push(w.to_string());
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.ids.get(word).copied()
    }

    pub fn cls_id(&self) -> u32 {
        0
    }

    pub fn end_id(&self) -> u32 {
        1
    }

    pub fn tokenize(&self, s: &str) -> Result<Vec<u32>> {
        normalize(s)
            .split(' ')
            .filter(|w| !w.is_empty())
            .map(|w| self.id(w).ok_or_else(|| Error::UnknownWord(w.to_string())))
            .collect()
    }

    pub fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| self.words.get(i as usize).map_or("[UNK]", String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Text encoder plug-in contract.
pub trait TextEncoder {
    /// Embedding width.
    fn dim(&self) -> usize;
    /// Longest accepted sequence including the `[CLS]` and `[END]` rows.
    fn max_len(&self) -> usize;
    /// `(len + 2) × dim`: row 0 is the sentence-level `[CLS]` row, rows
    /// `1..=len` the contextualized words, the last row `[END]`.
    fn encode(&self, tokens: &[u32]) -> Result<Tensor>;
}

/// Deterministic frozen encoder: seeded embedding table, sinusoidal
/// positions, one parameter-free self-attention layer with a residual. The
/// `[CLS]` output is the mean of the contextualized word rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StubEncoder {
    table: Tensor,
    max_len: usize,
}

impl StubEncoder {
    pub fn new(vocab_size: usize, dim: usize, max_len: usize, seed: u64) -> Self {
        let mut rng = named_rng(seed, "text.stub.table");
        let table = Tensor::from_fn(vocab_size, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self { table, max_len }
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }

    /// Residual self-attention over the rows of `x`.
    pub fn contextualize(x: &Tensor) -> Result<Tensor> {
        ops::attention(x, x, x)?.add(x)
    }
}

pub fn sinusoidal_position(pos: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let rate = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let a = pos as f64 * rate;
            if i % 2 == 0 {
                a.sin()
            } else {
                a.cos()
            }
        })
        .collect()
}

impl TextEncoder for StubEncoder {
    fn dim(&self) -> usize {
        self.table.cols()
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn encode(&self, tokens: &[u32]) -> Result<Tensor> {
        let len = tokens.len() + 2;
        if len > self.max_len {
            return Err(Error::Length {
                len,
                max: self.max_len,
            });
        }
        let dim = self.dim();
        let mut ids = Vec::with_capacity(len);
        ids.push(0usize);
        for &t in tokens {
            let t = t as usize;
            if t >= self.table.rows() {
                return Err(Error::Vocabulary {
                    kind: "token",
                    id: t,
                });
            }
            ids.push(t);
        }
        ids.push(1);
        let mut x = self.table.select_rows(&ids)?;
        for (p, row) in x.data_mut().chunks_mut(dim).enumerate() {
            for (v, s) in row.iter_mut().zip(sinusoidal_position(p, dim)) {
                *v += s;
            }
        }
        let mut out = Self::contextualize(&x)?;
        if !tokens.is_empty() {
            let words = out.select_rows(&(1..=tokens.len()).collect::<Vec<_>>())?;
            let cls = words.mean_rows()?;
            out.data_mut()[..dim].copy_from_slice(cls.data());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextKnowledge {
    /// One row per interaction, `|T| × Dl`.
    pub cls_embeddings: Tensor,
    /// All word rows of all sub-sentences, `Nw × Dl`.
    pub word_embeddings: Tensor,
    pub word_to_subsentence: Vec<usize>,
    pub provenance: Vec<(usize, usize)>,
}

impl TextKnowledge {
    pub fn num_interactions(&self) -> usize {
        self.cls_embeddings.rows()
    }

    /// Mean `[CLS]` row of each annotation's sub-sentences, `num_annotations × Dl`.
    pub fn cls_per_annotation(&self, num_annotations: usize) -> Result<Tensor> {
        let dim = self.cls_embeddings.cols();
        let mut rows = Vec::with_capacity(num_annotations);
        for a in 0..num_annotations {
            let idx: Vec<usize> = self
                .provenance
                .iter()
                .enumerate()
                .filter_map(|(i, &(ann, _))| (ann == a).then_some(i))
                .collect();
            if idx.is_empty() {
                return Err(Error::shape(format!("annotation {a} has no sub-sentence")));
            }
            rows.push(
                self.cls_embeddings
                    .select_rows(&idx)?
                    .mean_rows()?
                    .into_data(),
            );
        }
        if rows.is_empty() {
            return Ok(Tensor::zeros(0, dim));
        }
        Tensor::from_rows(&rows)
    }
}

/// Encodes each sub-sentence independently.
pub fn encode_text(
    text: &SerializedText,
    tokenizer: &Tokenizer,
    encoder: &dyn TextEncoder,
) -> Result<TextKnowledge> {
    let dim = encoder.dim();
    let mut cls = Vec::new();
    let mut words = Vec::new();
    let mut owner = Vec::new();
    for (i, s) in text.sub_sentences.iter().enumerate() {
        let tokens = tokenizer.tokenize(s)?;
        let out = encoder.encode(&tokens)?;
        if out.shape() != (tokens.len() + 2, dim) {
            return Err(Error::shape(format!(
                "encoder returned {:?} for {} tokens",
                out.shape(),
                tokens.len()
            )));
        }
        cls.push(out.row(0).to_vec());
        for w in 1..=tokens.len() {
            words.push(out.row(w).to_vec());
            owner.push(i);
        }
    }
    let to_tensor = |rows: &[Vec<f64>]| {
        if rows.is_empty() {
            Ok(Tensor::zeros(0, dim))
        } else {
            Tensor::from_rows(rows)
        }
    };
    Ok(TextKnowledge {
        cls_embeddings: to_tensor(&cls)?,
        word_embeddings: to_tensor(&words)?,
        word_to_subsentence: owner,
        provenance: text.provenance.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary {
            verbs: vec!["ride".into(), "hold".into(), "kick".into()],
            objects: vec!["human".into(), "bicycle".into(), "sports ball".into()],
        }
    }

    fn ann(object: usize, verbs: &[usize]) -> TripletAnnotation {
        TripletAnnotation::new(BBox::full(), BBox::full(), object, verbs.to_vec()).unwrap()
    }

    #[test]
    fn single_triplet_sentence() {
        let t = serialize(&[ann(1, &[0])], &vocab()).unwrap();
        assert_eq!(t.sub_sentences, vec!["human ride bicycle"]);
        assert!(!t.joined.contains(SEP));
    }

    #[test]
    fn separators_between_interactions() {
        let t = serialize(&[ann(1, &[0, 1])], &vocab()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.joined.matches(SEP).count(), 1);
        assert_eq!(t.joined, "human ride bicycle [SEP] human hold bicycle");
        let empty = serialize(&[], &vocab()).unwrap();
        assert!(empty.is_empty() && empty.joined.is_empty());
    }

    #[test]
    fn unknown_ids_are_rejected() {
        assert!(matches!(
            serialize(&[ann(9, &[0])], &vocab()),
            Err(Error::Vocabulary { kind: "object", .. })
        ));
        assert!(matches!(
            serialize(&[ann(1, &[7])], &vocab()),
            Err(Error::Vocabulary { kind: "verb", .. })
        ));
        assert!(TripletAnnotation::new(BBox::full(), BBox::full(), 1, vec![]).is_err());
    }

    #[test]
    fn tokenizer_round_trip() {
        let tok = Tokenizer::new(&vocab());
        for s in ["human kick sports ball", "Human  RIDE bicycle"] {
            assert_eq!(tok.detokenize(&tok.tokenize(s).unwrap()), normalize(s));
        }
        assert!(matches!(
            tok.tokenize("human fly kite"),
            Err(Error::UnknownWord(_))
        ));
    }

    #[test]
    fn stub_is_deterministic_and_distinct() {
        let tok = Tokenizer::new(&vocab());
        let a = StubEncoder::new(tok.vocab_size(), 8, 16, 3);
        let b = StubEncoder::new(tok.vocab_size(), 8, 16, 3);
        let ids = tok.tokenize("human ride bicycle").unwrap();
        assert_eq!(a.encode(&ids).unwrap(), b.encode(&ids).unwrap());
        for i in 0..a.table().rows() {
            for j in i + 1..a.table().rows() {
                assert_ne!(a.table().row(i), a.table().row(j));
            }
        }
        assert_eq!(a.encode(&ids).unwrap().shape(), (5, 8));
    }

    #[test]
    fn single_row_attention_weights_self() {
        let x = Tensor::row_vector(vec![0.3, -1.0, 2.0]);
        assert_eq!(StubEncoder::contextualize(&x).unwrap(), x.scale(2.0));
    }

    #[test]
    fn cls_is_mean_of_word_rows() {
        let tok = Tokenizer::new(&vocab());
        let enc = StubEncoder::new(tok.vocab_size(), 6, 16, 1);
        let ids = tok.tokenize("human kick sports ball").unwrap();
        let out = enc.encode(&ids).unwrap();
        for c in 0..6 {
            let mut sum = 0.0;
            for r in 1..=ids.len() {
                sum += out.get(r, c);
            }
            assert!((out.get(0, c) - sum / ids.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_text_shapes() {
        let tok = Tokenizer::new(&vocab());
        let enc = StubEncoder::new(tok.vocab_size(), 6, 16, 1);
        let text = serialize(&[ann(1, &[0, 1]), ann(2, &[2]), ann(1, &[0])], &vocab()).unwrap();
        let k = encode_text(&text, &tok, &enc).unwrap();
        assert_eq!(k.num_interactions(), 4);
        assert_eq!(k.word_embeddings.rows(), 3 + 3 + 4 + 3);
        assert_eq!(
            k.word_to_subsentence,
            vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3]
        );
        // identical sub-sentences give identical rows
        assert_eq!(k.cls_embeddings.row(0), k.cls_embeddings.row(3));
        let per_ann = k.cls_per_annotation(3).unwrap();
        assert_eq!(per_ann.rows(), 3);
        assert_eq!(per_ann.row(1), k.cls_embeddings.row(2));
    }

    #[test]
    fn overlong_sequences_fail() {
        let tok = Tokenizer::new(&vocab());
        let enc = StubEncoder::new(tok.vocab_size(), 4, 4, 0);
        let text = serialize(&[ann(2, &[2])], &vocab()).unwrap();
        assert!(matches!(
            encode_text(&text, &tok, &enc),
            Err(Error::Length { len: 6, max: 4 })
        ));
    }
}
