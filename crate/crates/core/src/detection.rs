//! Entity detection front end: feature maps, normalized boxes, a pluggable
//! detector interface with a ground-truth-driven mock, and human-subject
//! pair enumeration.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::params::named_rng;
use crate::primitives::{ops, Tensor};

/// Category id reserved for people.
pub const HUMAN: usize = 0;

/// Axis-aligned box in normalized image coordinates, `x1 < x2`, `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x1 >= x2 || y1 >= y2 {
            return Err(Error::shape(format!(
                "invalid box [{x1}, {y1}, {x2}, {y2}]"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn full() -> Self {
        Self {
            x1: 0.0,
            y1: 0.0,
            x2: 1.0,
            y2: 1.0,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(&self.to_array(), &other.to_array())
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;
    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Intersection over union of raw corner boxes. Degenerate boxes (such as the
/// null box `[0,0,0,0]`) have zero area and IoU 0 with everything.
pub fn iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let area = |r: &[f64; 4]| (r[2] - r[0]).max(0.0) * (r[3] - r[1]).max(0.0);
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Low-level visual features for one image, stored as `(h·w) × c` with cells
/// in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub grid: Tensor,
    pub image_size: (u32, u32),
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, grid: Tensor, image_size: (u32, u32)) -> Result<Self> {
        if height == 0 || width == 0 || grid.cols() == 0 {
            return Err(Error::shape("feature map must be nonempty"));
        }
        if grid.rows() != height * width {
            return Err(Error::shape(format!(
                "feature grid has {} cells, expected {height}x{width}",
                grid.rows()
            )));
        }
        if !grid.is_finite() {
            return Err(Error::shape("feature map contains non-finite values"));
        }
        Ok(Self {
            height,
            width,
            grid,
            image_size,
        })
    }

    pub fn channels(&self) -> usize {
        self.grid.cols()
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    /// Normalized center of cell `(row, col)`.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) / self.width as f64,
            (row as f64 + 0.5) / self.height as f64,
        )
    }

    /// Cells whose centers fall inside any of `boxes`, edges inclusive.
    pub fn cell_mask(&self, boxes: &[BBox]) -> Vec<bool> {
        cell_mask(self.height, self.width, boxes)
    }
}

pub fn cell_mask(height: usize, width: usize, boxes: &[BBox]) -> Vec<bool> {
    let mut mask = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            let x = (c as f64 + 0.5) / width as f64;
            let y = (r as f64 + 0.5) / height as f64;
            mask.push(boxes.iter().any(|b| b.contains(x, y)));
        }
    }
    mask
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityDetectionSet {
    pub tokens: Tensor,
    pub boxes: Vec<BBox>,
    pub class_scores: Tensor,
    pub class_labels: Vec<usize>,
    pub confidences: Vec<f64>,
}

impl EntityDetectionSet {
    pub fn empty(token_dim: usize, num_classes: usize) -> Self {
        Self {
            tokens: Tensor::zeros(0, token_dim),
            boxes: Vec::new(),
            class_scores: Tensor::zeros(0, num_classes),
            class_labels: Vec::new(),
            confidences: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn token_dim(&self) -> usize {
        self.tokens.cols()
    }

    /// Checks the structural invariants: one row per instance, score rows
    /// summing to one, labels equal to the score argmax.
    pub fn validate(&self) -> Result<()> {
        let n = self.boxes.len();
        if self.tokens.rows() != n
            || self.class_scores.rows() != n
            || self.class_labels.len() != n
            || self.confidences.len() != n
        {
            return Err(Error::shape(
                "detection set fields disagree on instance count",
            ));
        }
        for i in 0..n {
            let row = self.class_scores.row(i);
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(Error::shape(format!(
                    "class scores of instance {i} sum to {total}"
                )));
            }
            let argmax = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
                    if v > best.1 {
                        (j, v)
                    } else {
                        best
                    }
                })
                .0;
            if argmax != self.class_labels[i] {
                return Err(Error::shape(format!(
                    "instance {i}: label is not the score argmax"
                )));
            }
        }
        Ok(())
    }
}

/// One human-subject candidate pair.
#[derive(Debug, Clone, PartialEq)]
pub struct HoPair {
    pub human_idx: usize,
    pub object_idx: usize,
    /// `concat(tokens[h], tokens[o])`, `1 × 2·Dv`.
    pub pair_tokens: Tensor,
    /// Human box then object box.
    pub pair_boxes: [f64; 8],
}

impl HoPair {
    pub fn human_box(&self) -> BBox {
        let b = &self.pair_boxes;
        BBox {
            x1: b[0],
            y1: b[1],
            x2: b[2],
            y2: b[3],
        }
    }

    pub fn object_box(&self) -> BBox {
        let b = &self.pair_boxes;
        BBox {
            x1: b[4],
            y1: b[5],
            x2: b[6],
            y2: b[7],
        }
    }
}

/// All ordered pairs `(h, o)` with `h ≠ o` and a human subject, `h`
/// ascending then `o` ascending.
pub fn generate_pairs(dets: &EntityDetectionSet) -> Vec<HoPair> {
    let n = dets.len();
    let mut pairs = Vec::new();
    for h in (0..n).filter(|&i| dets.class_labels[i] == HUMAN) {
        for o in (0..n).filter(|&o| o != h) {
            let mut pair_boxes = [0.0; 8];
            pair_boxes[..4].copy_from_slice(&dets.boxes[h].to_array());
            pair_boxes[4..].copy_from_slice(&dets.boxes[o].to_array());
            let pair_tokens = Tensor::row_vector(
                dets.tokens
                    .row(h)
                    .iter()
                    .chain(dets.tokens.row(o))
                    .copied()
                    .collect(),
            );
            pairs.push(HoPair {
                human_idx: h,
                object_idx: o,
                pair_tokens,
                pair_boxes,
            });
        }
    }
    pairs
}

/// Detector plug-in contract.
pub trait Detector {
    fn detect(&self, image: &FeatureMap, num_queries: usize) -> Result<EntityDetectionSet>;
}

/// What a mock detector token encodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TokenMode {
    /// Box geometry and class, plus pooled in-box features scaled by the weight.
    Mixed { patch_weight: f64 },
    /// Box geometry and class only.
    PositionOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockDetectorConfig {
    pub token_dim: usize,
    pub num_classes: usize,
    pub channels: usize,
    /// Standard deviation of the (±3σ truncated) Gaussian box jitter.
    pub jitter: f64,
    pub confidence: f64,
    pub confidence_floor: f64,
    pub token_mode: TokenMode,
    pub seed: u64,
}

impl Default for MockDetectorConfig {
    fn default() -> Self {
        Self {
            token_dim: 32,
            num_classes: 5,
            channels: 16,
            jitter: 0.0,
            confidence: 0.9,
            confidence_floor: 0.2,
            token_mode: TokenMode::Mixed { patch_weight: 0.25 },
            seed: 0,
        }
    }
}

/// An instance the mock detector is allowed to see.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub class: usize,
    pub bbox: BBox,
}

const BOX_FREQUENCIES: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
const BOX_FEATURES: usize = 4 * BOX_FREQUENCIES.len() * 2;

/// Stand-in for a frozen transformer detector: reads ground-truth instances,
/// perturbs the boxes, and emits tokens as a fixed function of box, class and
/// the local feature patch.
#[derive(Debug, Clone)]
pub struct MockDetector {
    config: MockDetectorConfig,
    class_embed: Tensor,
    box_proj: Tensor,
    patch_proj: Tensor,
}

impl MockDetector {
    pub fn new(config: MockDetectorConfig) -> Result<Self> {
        if config.num_classes == 0 || config.token_dim == 0 || config.channels == 0 {
            return Err(Error::Config(
                "mock detector dimensions must be positive".into(),
            ));
        }
        let min_conf = if config.num_classes > 1 {
            1.0 / config.num_classes as f64
        } else {
            0.0
        };
        if !(config.confidence > min_conf && config.confidence <= 1.0) {
            return Err(Error::Config(format!(
                "mock confidence {} must lie in ({min_conf}, 1]",
                config.confidence
            )));
        }
        if config.jitter < 0.0 {
            return Err(Error::Config("jitter must be nonnegative".into()));
        }
        let d = config.token_dim;
        let gaussian = |name: &str, rows: usize, cols: usize, scale: f64| {
            let mut rng = named_rng(config.seed, name);
            Tensor::from_fn(rows, cols, |_, _| {
                rng.sample::<f64, _>(StandardNormal) * scale
            })
        };
        Ok(Self {
            class_embed: gaussian("detector.class", config.num_classes, d, 1.0),
            box_proj: gaussian(
                "detector.box",
                BOX_FEATURES,
                d,
                1.0 / (BOX_FEATURES as f64).sqrt(),
            ),
            patch_proj: gaussian(
                "detector.patch",
                config.channels,
                d,
                1.0 / (config.channels as f64).sqrt(),
            ),
            config,
        })
    }

    pub fn config(&self) -> &MockDetectorConfig {
        &self.config
    }

    /// Detector view over one image's instances. `image_seed` drives jitter.
    pub fn with_instances<'a>(
        &'a self,
        instances: &'a [Instance],
        image_seed: u64,
    ) -> GroundTruthDetector<'a> {
        GroundTruthDetector {
            mock: self,
            instances,
            image_seed,
        }
    }

    fn jittered(&self, b: &BBox, rng: &mut impl Rng) -> BBox {
        let sigma = self.config.jitter;
        if sigma == 0.0 {
            return *b;
        }
        let mut draw = || loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 3.0 {
                return z * sigma;
            }
        };
        let mut c = [b.x1 + draw(), b.y1 + draw(), b.x2 + draw(), b.y2 + draw()];
        for v in c.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        // Keep the box valid; collapses only when jitter exceeds the box size.
        const MIN_EXTENT: f64 = 1e-3;
        if c[2] - c[0] < MIN_EXTENT {
            let mid = ((c[0] + c[2]) / 2.0).clamp(MIN_EXTENT / 2.0, 1.0 - MIN_EXTENT / 2.0);
            c[0] = mid - MIN_EXTENT / 2.0;
            c[2] = mid + MIN_EXTENT / 2.0;
        }
        if c[3] - c[1] < MIN_EXTENT {
            let mid = ((c[1] + c[3]) / 2.0).clamp(MIN_EXTENT / 2.0, 1.0 - MIN_EXTENT / 2.0);
            c[1] = mid - MIN_EXTENT / 2.0;
            c[3] = mid + MIN_EXTENT / 2.0;
        }
        BBox {
            x1: c[0],
            y1: c[1],
            x2: c[2],
            y2: c[3],
        }
    }

    fn box_features(b: &BBox) -> Vec<f64> {
        let mut f = Vec::with_capacity(BOX_FEATURES);
        for coord in b.to_array() {
            for freq in BOX_FREQUENCIES {
                let a = std::f64::consts::PI * freq * coord;
                f.push(a.sin());
                f.push(a.cos());
            }
        }
        f
    }

    /// Token for one instance.
    pub fn token(&self, image: &FeatureMap, bbox: &BBox, class: usize) -> Result<Vec<f64>> {
        let geom = Tensor::row_vector(Self::box_features(bbox)).matmul(&self.box_proj)?;
        let mut token: Vec<f64> = geom
            .data()
            .iter()
            .zip(self.class_embed.row(class))
            .map(|(g, c)| g + c)
            .collect();
        if let TokenMode::Mixed { patch_weight } = self.config.token_mode {
            if patch_weight != 0.0 {
                if image.channels() != self.config.channels {
                    return Err(Error::shape(format!(
                        "mock detector expects {} channels, map has {}",
                        self.config.channels,
                        image.channels()
                    )));
                }
                let patch = local_patch(image, bbox)?;
                let proj = patch.matmul(&self.patch_proj)?;
                for (t, p) in token.iter_mut().zip(proj.data()) {
                    *t += patch_weight * p;
                }
            }
        }
        Ok(token)
    }
}

/// Mean feature over cells inside `bbox`, or the cell under its center when
/// the box covers no cell center.
fn local_patch(image: &FeatureMap, bbox: &BBox) -> Result<Tensor> {
    let mask = image.cell_mask(&[*bbox]);
    if mask.iter().any(|&m| m) {
        return ops::gap(&image.grid, Some(&mask));
    }
    let cx = (bbox.x1 + bbox.x2) / 2.0;
    let cy = (bbox.y1 + bbox.y2) / 2.0;
    let col = ((cx * image.width as f64) as usize).min(image.width - 1);
    let row = ((cy * image.height as f64) as usize).min(image.height - 1);
    image.grid.select_rows(&[row * image.width + col])
}

pub struct GroundTruthDetector<'a> {
    mock: &'a MockDetector,
    instances: &'a [Instance],
    image_seed: u64,
}

impl Detector for GroundTruthDetector<'_> {
    fn detect(&self, image: &FeatureMap, num_queries: usize) -> Result<EntityDetectionSet> {
        if num_queries == 0 {
            return Err(Error::Config("num_queries must be at least 1".into()));
        }
        if image.cells() == 0 || image.channels() == 0 {
            return Err(Error::shape("empty feature map"));
        }
        let cfg = &self.mock.config;
        let nc = cfg.num_classes;
        let mut rng = named_rng(
            cfg.seed ^ self.image_seed.rotate_left(17),
            "detector.jitter",
        );

        let mut tokens = Vec::new();
        let mut boxes = Vec::new();
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        let mut confidences = Vec::new();
        for inst in self.instances.iter().take(num_queries) {
            if inst.class >= nc {
                return Err(Error::Vocabulary {
                    kind: "class",
                    id: inst.class,
                });
            }
            let bbox = self.mock.jittered(&inst.bbox, &mut rng);
            let conf = cfg.confidence;
            if conf < cfg.confidence_floor {
                continue;
            }
            tokens.push(self.mock.token(image, &bbox, inst.class)?);
            let rest = if nc > 1 {
                (1.0 - conf) / (nc - 1) as f64
            } else {
                0.0
            };
            scores.push(
                (0..nc)
                    .map(|c| {
                        if c == inst.class {
                            if nc > 1 {
                                conf
                            } else {
                                1.0
                            }
                        } else {
                            rest
                        }
                    })
                    .collect::<Vec<_>>(),
            );
            boxes.push(bbox);
            labels.push(inst.class);
            confidences.push(conf);
        }
        if boxes.is_empty() {
            return Ok(EntityDetectionSet::empty(cfg.token_dim, nc));
        }
        Ok(EntityDetectionSet {
            tokens: Tensor::from_rows(&tokens)?,
            boxes,
            class_scores: Tensor::from_rows(&scores)?,
            class_labels: labels,
            confidences,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: usize, w: usize, c: usize) -> FeatureMap {
        let grid = Tensor::from_fn(h * w, c, |r, k| ((r * 7 + k * 3) as f64 * 0.13).sin());
        FeatureMap::new(h, w, grid, (64, 64)).unwrap()
    }

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn labelled(labels: &[usize]) -> EntityDetectionSet {
        let n = labels.len();
        let scores: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| (0..3).map(|c| if c == l { 0.8 } else { 0.1 }).collect())
            .collect();
        EntityDetectionSet {
            tokens: Tensor::from_fn(n, 2, |r, c| (r * 2 + c) as f64),
            boxes: (0..n)
                .map(|i| bx(0.1 * i as f64, 0.0, 0.1 * i as f64 + 0.1, 0.5))
                .collect(),
            class_scores: Tensor::from_rows(&scores).unwrap(),
            class_labels: labels.to_vec(),
            confidences: vec![0.8; n],
        }
    }

    #[test]
    fn pairs_for_two_humans_and_a_ball() {
        let pairs = generate_pairs(&labelled(&[HUMAN, HUMAN, 2]));
        let idx: Vec<(usize, usize)> = pairs.iter().map(|p| (p.human_idx, p.object_idx)).collect();
        assert_eq!(idx, vec![(0, 1), (0, 2), (1, 0), (1, 2)]);
        assert_eq!(pairs[1].pair_tokens.data(), &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(&pairs[3].pair_boxes[..4], &[0.1, 0.0, 0.2, 0.5]);
    }

    #[test]
    fn no_human_or_no_object_gives_no_pairs() {
        assert!(generate_pairs(&labelled(&[1, 2])).is_empty());
        assert!(generate_pairs(&labelled(&[HUMAN])).is_empty());
        assert!(generate_pairs(&EntityDetectionSet::empty(2, 3)).is_empty());
    }

    #[test]
    fn identity_mode_reproduces_boxes() {
        let mock = MockDetector::new(MockDetectorConfig {
            channels: 4,
            ..Default::default()
        })
        .unwrap();
        let gt = [
            Instance {
                class: HUMAN,
                bbox: bx(0.1, 0.1, 0.5, 0.9),
            },
            Instance {
                class: 3,
                bbox: bx(0.4, 0.5, 0.8, 0.7),
            },
        ];
        let dets = mock
            .with_instances(&gt, 0)
            .detect(&map(8, 8, 4), 10)
            .unwrap();
        dets.validate().unwrap();
        assert_eq!(dets.boxes, vec![gt[0].bbox, gt[1].bbox]);
        assert_eq!(dets.class_labels, vec![HUMAN, 3]);
        assert_eq!(dets.tokens.shape(), (2, 32));

        let capped = mock
            .with_instances(&gt, 0)
            .detect(&map(8, 8, 4), 1)
            .unwrap();
        assert_eq!(capped.len(), 1);
        assert!(mock
            .with_instances(&gt, 0)
            .detect(&map(8, 8, 4), 0)
            .is_err());
    }

    #[test]
    fn no_instances_gives_empty_set() {
        let mock = MockDetector::new(MockDetectorConfig {
            channels: 4,
            ..Default::default()
        })
        .unwrap();
        let dets = mock
            .with_instances(&[], 0)
            .detect(&map(4, 4, 4), 5)
            .unwrap();
        assert!(dets.is_empty());
        dets.validate().unwrap();
    }

    #[test]
    fn confidence_floor_prunes() {
        let mock = MockDetector::new(MockDetectorConfig {
            channels: 4,
            confidence: 0.3,
            confidence_floor: 0.5,
            ..Default::default()
        })
        .unwrap();
        let gt = [Instance {
            class: HUMAN,
            bbox: bx(0.1, 0.1, 0.5, 0.9),
        }];
        assert!(mock
            .with_instances(&gt, 0)
            .detect(&map(4, 4, 4), 5)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn jitter_stays_within_three_sigma() {
        let sigma = 0.02;
        let mock = MockDetector::new(MockDetectorConfig {
            channels: 4,
            jitter: sigma,
            ..Default::default()
        })
        .unwrap();
        let gt = [
            Instance {
                class: HUMAN,
                bbox: bx(0.2, 0.2, 0.6, 0.8),
            },
            Instance {
                class: 1,
                bbox: bx(0.3, 0.1, 0.9, 0.5),
            },
        ];
        let image = map(4, 4, 4);
        let mut sum_sq = 0.0;
        let mut count = 0.0;
        for seed in 0..1000 {
            let dets = mock.with_instances(&gt, seed).detect(&image, 4).unwrap();
            for (d, g) in dets.boxes.iter().zip(&gt) {
                for (a, b) in d.to_array().iter().zip(g.bbox.to_array()) {
                    assert!((a - b).abs() <= 3.0 * sigma + 1e-12);
                    sum_sq += (a - b) * (a - b);
                    count += 1.0;
                }
            }
        }
        let std = (sum_sq / count).sqrt();
        assert!((std - sigma).abs() < 0.1 * sigma, "empirical std {std}");
    }

    #[test]
    fn cell_mask_uses_centers_inclusively() {
        // 4x4 grid: centers at 0.125, 0.375, 0.625, 0.875
        let m = cell_mask(4, 4, &[bx(0.125, 0.0, 0.375, 0.2)]);
        let on: Vec<usize> = m
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i))
            .collect();
        assert_eq!(on, vec![0, 1]);
    }

    #[test]
    fn iou_basics() {
        let a = [0.0, 0.0, 0.5, 0.5];
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &[0.6, 0.6, 0.9, 0.9]), 0.0);
        assert_eq!(iou(&[0.0; 4], &[0.0; 4]), 0.0);
        assert!((iou(&a, &[0.25, 0.0, 0.75, 0.5]) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bbox_rejects_inverted() {
        assert!(BBox::new(0.5, 0.1, 0.4, 0.2).is_err());
        assert!(serde_json::from_str::<BBox>("[0.1,0.1,0.1,0.2]").is_err());
        let b: BBox = serde_json::from_str("[0.1,0.1,0.3,0.2]").unwrap();
        assert_eq!(b.x2, 0.3);
    }

    #[test]
    fn empty_map_is_rejected() {
        assert!(FeatureMap::new(0, 4, Tensor::zeros(0, 3), (1, 1)).is_err());
        assert!(FeatureMap::new(2, 2, Tensor::zeros(3, 3), (1, 1)).is_err());
    }
}
