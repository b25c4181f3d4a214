//! Token similarity probe: how much do detector tokens tell apart humans
//! that stand in the same place but do different things?

use serde::{Deserialize, Serialize};

use crate::detection::{
    BBox, Detector, FeatureMap, Instance, MockDetector, MockDetectorConfig, TokenMode, HUMAN,
};
use crate::error::{Error, Result};
use crate::primitives::Tensor;

use super::data::verb_patterns;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cosine,
    Euclidean,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            _ => Err(Error::Config(format!("unknown metric {s:?}"))),
        }
    }
}

/// `N × N` similarity (cosine) or distance (euclidean) matrix.
pub fn similarity_matrix(tokens: &Tensor, metric: Metric) -> Result<Tensor> {
    let n = tokens.rows();
    if n < 2 {
        return Err(Error::shape(format!(
            "probe needs at least two tokens, got {n}"
        )));
    }
    let norms: Vec<f64> = (0..n)
        .map(|i| tokens.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    if metric == Metric::Cosine {
        if let Some(i) = norms.iter().position(|&v| v == 0.0) {
            return Err(Error::UndefinedSimilarity(format!(
                "token {i} has zero norm"
            )));
        }
    }
    let mut out = Tensor::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let (a, b) = (tokens.row(i), tokens.row(j));
            let v = match metric {
                Metric::Cosine if i == j => 1.0,
                Metric::Cosine => {
                    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norms[i] * norms[j])
                }
                Metric::Euclidean => a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            };
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub a: usize,
    pub b: usize,
    pub value: f64,
    pub box_a: BBox,
    pub box_b: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub metric: Metric,
    pub matrix: Vec<Vec<f64>>,
    /// Human-human pairs, most similar first.
    pub human_pairs: Vec<RankedPair>,
}

impl ProbeReport {
    pub fn most_similar(&self) -> Option<&RankedPair> {
        self.human_pairs.first()
    }

    pub fn least_similar(&self) -> Option<&RankedPair> {
        self.human_pairs.last()
    }
}

/// Similarity matrix over all tokens plus a ranking of the human pairs.
pub fn probe_similarity(
    tokens: &Tensor,
    boxes: &[BBox],
    labels: &[usize],
    metric: Metric,
) -> Result<ProbeReport> {
    if boxes.len() != tokens.rows() || labels.len() != tokens.rows() {
        return Err(Error::shape(
            "tokens, boxes and labels must have equal lengths",
        ));
    }
    let m = similarity_matrix(tokens, metric)?;
    let humans: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == HUMAN).collect();
    let mut human_pairs = Vec::new();
    for (k, &a) in humans.iter().enumerate() {
        for &b in &humans[k + 1..] {
            human_pairs.push(RankedPair {
                a,
                b,
                value: m.get(a, b),
                box_a: boxes[a],
                box_b: boxes[b],
            });
        }
    }
    // Similar first: high cosine, small distance.
    human_pairs.sort_by(|x, y| match metric {
        Metric::Cosine => y.value.total_cmp(&x.value),
        Metric::Euclidean => x.value.total_cmp(&y.value),
    });
    Ok(ProbeReport {
        metric,
        matrix: (0..m.rows()).map(|i| m.row(i).to_vec()).collect(),
        human_pairs,
    })
}

/// Two humans at almost the same place, each with a different action
/// pattern planted in its box, and one object away from both.
pub fn colocated_scene(
    channels: usize,
    grid: usize,
    seed: u64,
) -> Result<(FeatureMap, Vec<Instance>)> {
    let a = BBox::new(0.20, 0.20, 0.55, 0.80)?;
    let b = BBox::new(0.22, 0.21, 0.57, 0.81)?;
    let obj = BBox::new(0.65, 0.55, 0.95, 0.90)?;
    let patterns = verb_patterns(seed, 2, channels);
    let mut grid_t = Tensor::zeros(grid * grid, channels);
    // Left half of the shared region carries action 0, right half action 1.
    for r in 0..grid {
        for c in 0..grid {
            let (x, y) = (
                (c as f64 + 0.5) / grid as f64,
                (r as f64 + 0.5) / grid as f64,
            );
            let p = if a.contains(x, y) && x < 0.38 {
                Some(&patterns[0])
            } else if b.contains(x, y) {
                Some(&patterns[1])
            } else {
                None
            };
            if let Some(p) = p {
                for (k, v) in p.iter().enumerate() {
                    grid_t.set(r * grid + c, k, *v);
                }
            }
        }
    }
    let map = FeatureMap::new(grid, grid, grid_t, (256, 256))?;
    let instances = vec![
        Instance {
            class: HUMAN,
            bbox: a,
        },
        Instance {
            class: HUMAN,
            bbox: b,
        },
        Instance {
            class: 1,
            bbox: obj,
        },
    ];
    Ok((map, instances))
}

/// Probe report of the co-located scene under a detector token mode.
pub fn colocated_probe(mode: TokenMode, metric: Metric, seed: u64) -> Result<ProbeReport> {
    let cfg = MockDetectorConfig {
        token_mode: mode,
        seed,
        ..Default::default()
    };
    let (map, instances) = colocated_scene(cfg.channels, 8, seed)?;
    let det = MockDetector::new(cfg)?;
    let set = det.with_instances(&instances, 0).detect(&map, 16)?;
    probe_similarity(&set.tokens, &set.boxes, &set.class_labels, metric)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_and_orthogonal() {
        let t = Tensor::from_rows(&[
            vec![1.0, 2.0, 0.0],
            vec![1.0, 2.0, 0.0],
            vec![0.0, 0.0, 3.0],
        ])
        .unwrap();
        let c = similarity_matrix(&t, Metric::Cosine).unwrap();
        assert!((c.get(0, 1) - 1.0).abs() < 1e-9);
        assert_eq!(c.get(0, 2), 0.0);
        let e = similarity_matrix(&t, Metric::Euclidean).unwrap();
        assert_eq!(e.get(0, 1), 0.0);
        assert_eq!(c, c.transpose());
        assert!((0..3).all(|i| c.get(i, i) == 1.0));
    }

    #[test]
    fn zero_norm_and_single_token() {
        let t = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            similarity_matrix(&t, Metric::Cosine),
            Err(Error::UndefinedSimilarity(_))
        ));
        assert!(similarity_matrix(&t, Metric::Euclidean).is_ok());
        assert!(similarity_matrix(&Tensor::zeros(1, 2), Metric::Euclidean).is_err());
    }

    #[test]
    fn position_only_tokens_confuse_colocated_humans() {
        let r = colocated_probe(TokenMode::PositionOnly, Metric::Cosine, 0).unwrap();
        assert_eq!(r.human_pairs.len(), 1);
        assert!(r.most_similar().unwrap().value > 0.95);
    }
}
