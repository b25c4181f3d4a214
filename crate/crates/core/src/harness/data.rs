//! Synthetic interaction scenes.
//!
//! Every scene is a small feature grid with a few humans and objects. Each
//! interacting pair carries one to three verbs; every verb owns a fixed
//! random channel pattern that is added to the cells covered by the pair's
//! human box and object box. Scenes are a pure function of `(seed, index)`.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::detection::{cell_mask, BBox, FeatureMap, Instance, HUMAN};
use crate::error::{Error, Result};
use crate::eval::{read_jsonl, write_jsonl, ClassTable, GtRecord};
use crate::primitives::params::named_rng;
use crate::primitives::Tensor;
use crate::text::{TripletAnnotation, Vocabulary};

const VERB_NAMES: [&str; 12] = [
    "hold", "ride", "kick", "carry", "throw", "eat", "watch", "push", "pull", "lift", "catch",
    "wash",
];
const OBJECT_NAMES: [&str; 12] = [
    "ball",
    "bicycle",
    "cup",
    "kite",
    "horse",
    "bottle",
    "chair",
    "dog",
    "book",
    "phone",
    "umbrella",
    "skateboard",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub num_images: usize,
    pub num_verbs: usize,
    /// Object classes besides `person`.
    pub num_objects: usize,
    pub grid: usize,
    pub channels: usize,
    pub signal: f64,
    pub noise: f64,
    /// Relative verb frequencies; uniform when empty.
    pub verb_weights: Vec<f64>,
    pub image_size: u32,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            num_images: 16,
            num_verbs: 3,
            num_objects: 4,
            grid: 8,
            channels: 16,
            signal: 1.0,
            noise: 0.3,
            verb_weights: Vec::new(),
            image_size: 256,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_verbs == 0 || self.num_verbs > VERB_NAMES.len() {
            return Err(Error::Config(format!(
                "num_verbs must lie in 1..={}",
                VERB_NAMES.len()
            )));
        }
        if self.num_objects == 0 || self.num_objects > OBJECT_NAMES.len() {
            return Err(Error::Config(format!(
                "num_objects must lie in 1..={}",
                OBJECT_NAMES.len()
            )));
        }
        if self.grid < 4 || self.channels == 0 {
            return Err(Error::Config(
                "grid must be at least 4 and channels positive".into(),
            ));
        }
        if !self.verb_weights.is_empty()
            && (self.verb_weights.len() != self.num_verbs
                || self.verb_weights.iter().any(|w| !(*w >= 0.0))
                || self.verb_weights.iter().sum::<f64>() <= 0.0)
        {
            return Err(Error::Config(
                "verb_weights must hold num_verbs non-negative values with a positive sum".into(),
            ));
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> Vocabulary {
        let mut objects = vec!["person".to_string()];
        objects.extend(
            OBJECT_NAMES[..self.num_objects]
                .iter()
                .map(|s| s.to_string()),
        );
        Vocabulary {
            verbs: VERB_NAMES[..self.num_verbs]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            objects,
        }
    }

    /// Normalised verb distribution.
    pub fn verb_distribution(&self) -> Vec<f64> {
        let w = if self.verb_weights.is_empty() {
            vec![1.0; self.num_verbs]
        } else {
            self.verb_weights.clone()
        };
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub image_id: u64,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub instances: Vec<Instance>,
    pub interactions: Vec<TripletAnnotation>,
    /// Flattened `(h·w) × c` map.
    pub features: Vec<f64>,
    pub image_size: u32,
}

impl SyntheticScene {
    pub fn feature_map(&self) -> Result<FeatureMap> {
        let grid = Tensor::new(
            self.height * self.width,
            self.channels,
            self.features.clone(),
        )?;
        FeatureMap::new(
            self.height,
            self.width,
            grid,
            (self.image_size, self.image_size),
        )
    }

    pub fn gt_records(&self) -> Vec<GtRecord> {
        self.interactions
            .iter()
            .map(|t| GtRecord {
                image_id: self.image_id,
                human_box: t.human_box.to_array(),
                object_box: t.object_box.to_array(),
                object_class: t.object_class,
                verbs: t.verbs.clone(),
                occluded_object: false,
            })
            .collect()
    }
}

/// One channel pattern per verb, unit RMS, fixed by the seed.
pub fn verb_patterns(seed: u64, num_verbs: usize, channels: usize) -> Vec<Vec<f64>> {
    (0..num_verbs)
        .map(|v| {
            let mut rng = named_rng(seed, &format!("data.pattern.{v}"));
            let p: Vec<f64> = (0..channels).map(|_| rng.sample(StandardNormal)).collect();
            let rms = (p.iter().map(|x| x * x).sum::<f64>() / channels as f64)
                .sqrt()
                .max(1e-12);
            p.into_iter().map(|x| x / rms).collect()
        })
        .collect()
}

fn random_box(rng: &mut impl Rng, near: Option<&BBox>) -> BBox {
    let w = rng.random_range(0.25..0.45);
    let h = rng.random_range(0.25..0.45);
    let (cx, cy) = match near {
        Some(b) => {
            let (bx, by) = ((b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0);
            (
                bx + rng.random_range(-0.3..0.3),
                by + rng.random_range(-0.3..0.3),
            )
        }
        None => (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)),
    };
    let x1 = (cx - w / 2.0).clamp(0.0, 1.0 - w);
    let y1 = (cy - h / 2.0).clamp(0.0, 1.0 - h);
    BBox {
        x1,
        y1,
        x2: x1 + w,
        y2: y1 + h,
    }
}

/// Scene `index` of the dataset drawn with `seed`.
pub fn generate_scene(seed: u64, index: usize, cfg: &DataConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let mut rng = named_rng(seed, &format!("data.scene.{index}"));
    let n_h = rng.random_range(1..=4);
    let n_o = rng.random_range(1..=4);
    let mut instances = Vec::with_capacity(n_h + n_o);
    for _ in 0..n_h {
        instances.push(Instance {
            class: HUMAN,
            bbox: random_box(&mut rng, None),
        });
    }
    let verb_dist =
        WeightedIndex::new(cfg.verb_distribution()).map_err(|e| Error::Config(e.to_string()))?;
    let max_verbs = cfg.num_verbs.min(3);
    let mut interactions = Vec::new();
    for k in 0..n_o {
        let owner = rng.random_range(0..n_h);
        let hb = instances[owner].bbox;
        let class = rng.random_range(1..=cfg.num_objects);
        let ob = random_box(&mut rng, Some(&hb));
        instances.push(Instance { class, bbox: ob });
        // The first object always interacts, so no scene is text-free.
        let n_verbs = if k == 0 {
            rng.random_range(1..=max_verbs)
        } else {
            rng.random_range(0..=max_verbs)
        };
        let mut verbs = Vec::new();
        let mut guard = 0;
        while verbs.len() < n_verbs && guard < 1000 {
            let v = verb_dist.sample(&mut rng);
            if !verbs.contains(&v) {
                verbs.push(v);
            }
            guard += 1;
        }
        if !verbs.is_empty() {
            interactions.push(TripletAnnotation::new(hb, ob, class, verbs)?);
        }
    }

    let cells = cfg.grid * cfg.grid;
    let mut features: Vec<f64> = (0..cells * cfg.channels)
        .map(|_| cfg.noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let patterns = verb_patterns(seed, cfg.num_verbs, cfg.channels);
    for t in &interactions {
        let mask = cell_mask(cfg.grid, cfg.grid, &[t.human_box, t.object_box]);
        for (cell, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
            for &v in &t.verbs {
                for (c, p) in patterns[v].iter().enumerate() {
                    features[cell * cfg.channels + c] += cfg.signal * p;
                }
            }
        }
    }
    Ok(SyntheticScene {
        image_id: index as u64,
        height: cfg.grid,
        width: cfg.grid,
        channels: cfg.channels,
        instances,
        interactions,
        features,
        image_size: cfg.image_size,
    })
}

pub fn generate_dataset(seed: u64, cfg: &DataConfig) -> Result<Dataset> {
    let scenes = (0..cfg.num_images)
        .map(|i| generate_scene(seed, i, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        seed,
        config: cfg.clone(),
        scenes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub seed: u64,
    pub config: DataConfig,
    pub scenes: Vec<SyntheticScene>,
}

/// Per-class training counts and the vocabulary, stored next to the scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub num_images: usize,
    pub vocabulary: Vocabulary,
    pub classes: ClassTable,
}

pub const SCENES_FILE: &str = "scenes.json";
pub const GT_FILE: &str = "gt.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

impl Dataset {
    pub fn vocabulary(&self) -> Vocabulary {
        self.config.vocabulary()
    }

    pub fn gt_records(&self) -> Vec<GtRecord> {
        self.scenes
            .iter()
            .flat_map(SyntheticScene::gt_records)
            .collect()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            seed: self.seed,
            num_images: self.scenes.len(),
            vocabulary: self.vocabulary(),
            classes: ClassTable::from_gts(&self.gt_records()),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(SCENES_FILE), serde_json::to_string(self)?)?;
        let mut gt = Vec::new();
        write_jsonl(&mut gt, &self.gt_records())?;
        std::fs::write(dir.join(GT_FILE), gt)?;
        std::fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&self.manifest())?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SCENES_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read dataset {}: {e}", path.display())))?;
        let d: Dataset = serde_json::from_str(&text)?;
        d.config.validate()?;
        Ok(d)
    }
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&std::fs::read_to_string(
        dir.join(MANIFEST_FILE),
    )?)?)
}

pub fn load_gt(path: &Path) -> Result<Vec<GtRecord>> {
    read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_reproducible() {
        let cfg = DataConfig {
            num_images: 1,
            ..Default::default()
        };
        let a = generate_dataset(0, &cfg).unwrap();
        let b = generate_dataset(0, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = generate_dataset(1, &cfg).unwrap();
        assert_ne!(a.scenes[0].features, c.scenes[0].features);
    }

    #[test]
    fn single_verb() {
        let cfg = DataConfig {
            num_images: 20,
            num_verbs: 1,
            ..Default::default()
        };
        let d = generate_dataset(3, &cfg).unwrap();
        assert!(d
            .scenes
            .iter()
            .flat_map(|s| &s.interactions)
            .all(|t| t.verbs == vec![0]));
    }

    #[test]
    fn scene_shape_limits() {
        let d = generate_dataset(
            7,
            &DataConfig {
                num_images: 50,
                ..Default::default()
            },
        )
        .unwrap();
        for s in &d.scenes {
            let humans = s.instances.iter().filter(|i| i.class == HUMAN).count();
            let objects = s.instances.len() - humans;
            assert!((1..=4).contains(&humans) && (1..=4).contains(&objects));
            assert!(!s.interactions.is_empty());
            for t in &s.interactions {
                assert!((1..=3).contains(&t.verbs.len()));
                assert_ne!(t.object_class, HUMAN);
            }
        }
    }

    #[test]
    fn verb_marginals_follow_weights() {
        let cfg = DataConfig {
            num_images: 100,
            num_verbs: 4,
            verb_weights: vec![4.0, 3.0, 2.0, 1.0],
            ..Default::default()
        };
        let d = generate_dataset(11, &cfg).unwrap();
        let mut counts = vec![0usize; 4];
        for t in d.scenes.iter().flat_map(|s| &s.interactions) {
            for &v in &t.verbs {
                counts[v] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        // Distinct-verb draws flatten the marginal a little, hence a loose band.
        for (c, p) in counts.iter().zip(cfg.verb_distribution()) {
            assert!((*c as f64 / total as f64 - p).abs() <= 0.1, "{counts:?}");
        }
    }

    #[test]
    fn signal_stays_inside_boxes() {
        let cfg = DataConfig {
            num_images: 10,
            noise: 0.0,
            ..Default::default()
        };
        for s in generate_dataset(5, &cfg).unwrap().scenes {
            let boxes: Vec<BBox> = s
                .interactions
                .iter()
                .flat_map(|t| [t.human_box, t.object_box])
                .collect();
            let inside = cell_mask(s.height, s.width, &boxes);
            for (cell, ok) in inside.iter().enumerate() {
                let row = &s.features[cell * s.channels..(cell + 1) * s.channels];
                if !ok {
                    assert!(row.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate_dataset(
            2,
            &DataConfig {
                num_images: 3,
                ..Default::default()
            },
        )
        .unwrap();
        d.save(dir.path()).unwrap();
        assert_eq!(Dataset::load(dir.path()).unwrap(), d);
        let gt = load_gt(&dir.path().join(GT_FILE)).unwrap();
        assert_eq!(gt, d.gt_records());
        assert_eq!(load_manifest(dir.path()).unwrap(), d.manifest());
    }
}
