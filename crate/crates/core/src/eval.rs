//! Interaction AP / mAP.
//!
//! An interaction class is a `(verb, object_class)` pair. Detections and
//! annotations are exchanged as line-delimited JSON. Each annotation record
//! lists all verbs of one human-object pair and contributes one ground-truth
//! instance per verb; a record with no verbs only marks that the object class
//! is present in the image (used by the known-objects setting).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::detection::iou;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    #[default]
    Default,
    KnownObjects,
}

/// Treatment of annotations whose object is occluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// The detection must carry the null box `[0, 0, 0, 0]`.
    S1,
    /// The detection's object box is ignored.
    #[default]
    S2,
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "1" => Ok(Scenario::S1),
            "s2" | "2" => Ok(Scenario::S2),
            _ => Err(Error::Config(format!(
                "unknown scenario {s:?} (expected s1 or s2)"
            ))),
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "default" => Ok(Setting::Default),
            "known_objects" | "ko" => Ok(Setting::KnownObjects),
            _ => Err(Error::Config(format!(
                "unknown setting {s:?} (expected default or known-objects)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub setting: Setting,
    pub scenario: Scenario,
    pub rare_cutoff: usize,
    /// Score classes that have detections but no annotations as AP 0.
    pub include_unannotated: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            setting: Setting::Default,
            scenario: Scenario::S2,
            rare_cutoff: 10,
            include_unannotated: true,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Config(format!(
                "IoU threshold {} must lie in (0, 1)",
                self.iou_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub image_id: u64,
    pub human_box: [f64; 4],
    pub object_box: [f64; 4],
    pub object_class: usize,
    pub verb: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtRecord {
    pub image_id: u64,
    pub human_box: [f64; 4],
    pub object_box: [f64; 4],
    pub object_class: usize,
    pub verbs: Vec<usize>,
    #[serde(default)]
    pub occluded_object: bool,
}

pub type HoiClass = (usize, usize);

/// Training-sample counts per interaction class.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassTable {
    pub counts: Vec<ClassCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub verb: usize,
    pub object_class: usize,
    pub train_count: usize,
}

impl ClassTable {
    pub fn from_gts(gts: &[GtRecord]) -> Self {
        let mut m: BTreeMap<HoiClass, usize> = BTreeMap::new();
        for g in gts {
            for &v in &g.verbs {
                *m.entry((v, g.object_class)).or_default() += 1;
            }
        }
        Self {
            counts: m
                .into_iter()
                .map(|((verb, object_class), train_count)| ClassCount {
                    verb,
                    object_class,
                    train_count,
                })
                .collect(),
        }
    }

    pub fn lookup(&self) -> BTreeMap<HoiClass, usize> {
        self.counts
            .iter()
            .map(|c| ((c.verb, c.object_class), c.train_count))
            .collect()
    }
}

pub fn is_null_box(b: &[f64; 4]) -> bool {
    b.iter().all(|&v| v == 0.0)
}

/// Matching quality of a detection against an annotation, or `None` when
/// the pair is not eligible. Class agreement is checked by the caller.
pub fn pair_overlap(det: &DetectionRecord, gt: &GtRecord, cfg: &EvalConfig) -> Option<f64> {
    let t = cfg.iou_threshold;
    let ih = iou(&det.human_box, &gt.human_box);
    if ih < t {
        return None;
    }
    if gt.occluded_object {
        return match cfg.scenario {
            Scenario::S1 if !is_null_box(&det.object_box) => None,
            _ => Some(ih),
        };
    }
    let io = iou(&det.object_box, &gt.object_box);
    (io >= t).then_some(ih.min(io))
}

/// Rank order: score descending, ties by input position.
pub fn rank(dets: &[&DetectionRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// TP flags for ranked detections of one class. Each detection takes the
/// best-overlapping unmatched annotation (ties by lower index) in its image.
pub fn match_for_eval(
    ranked: &[&DetectionRecord],
    gts: &[&GtRecord],
    cfg: &EvalConfig,
) -> Vec<bool> {
    let mut used = vec![false; gts.len()];
    ranked
        .iter()
        .map(|d| {
            let mut best: Option<(f64, usize)> = None;
            for (j, g) in gts.iter().enumerate() {
                if used[j] || g.image_id != d.image_id {
                    continue;
                }
                if let Some(s) = pair_overlap(d, g, cfg) {
                    if best.is_none_or(|(bs, _)| s > bs) {
                        best = Some((s, j));
                    }
                }
            }
            match best {
                Some((_, j)) => {
                    used[j] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// All-points AP: the precision envelope summed at every true positive,
/// divided by the number of annotations. Zero annotations give 0.
pub fn average_precision(tp: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let (precision, _) = precision_recall(tp, num_gt);
    let mut envelope = precision.clone();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let mut sum = 0.0;
    for (k, &hit) in tp.iter().enumerate() {
        if hit {
            sum += envelope[k];
        }
    }
    sum / num_gt as f64
}

/// Precision and recall after each rank.
pub fn precision_recall(tp: &[bool], num_gt: usize) -> (Vec<f64>, Vec<f64>) {
    let mut hits = 0usize;
    let mut p = Vec::with_capacity(tp.len());
    let mut r = Vec::with_capacity(tp.len());
    for (k, &t) in tp.iter().enumerate() {
        hits += t as usize;
        p.push(hits as f64 / (k + 1) as f64);
        r.push(if num_gt == 0 {
            0.0
        } else {
            hits as f64 / num_gt as f64
        });
    }
    (p, r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub verb: usize,
    pub object_class: usize,
    pub ap: f64,
    pub num_gt: usize,
    pub num_dets: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rare: Option<bool>,
    #[serde(skip)]
    pub precision: Vec<f64>,
    #[serde(skip)]
    pub recall: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub setting: Setting,
    pub scenario: Scenario,
    pub per_class: Vec<ClassResult>,
    pub map_full: f64,
    pub map_rare: Option<f64>,
    pub map_nonrare: Option<f64>,
}

impl EvalResult {
    pub fn per_class_ap(&self) -> BTreeMap<HoiClass, f64> {
        self.per_class
            .iter()
            .map(|c| ((c.verb, c.object_class), c.ap))
            .collect()
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut n = 0usize;
    let mut s = 0.0;
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Dataset-level evaluation. With a class table, every annotated class must
/// appear in it, and rare / non-rare means are reported.
pub fn evaluate(
    dets: &[DetectionRecord],
    gts: &[GtRecord],
    table: Option<&ClassTable>,
    cfg: &EvalConfig,
) -> Result<EvalResult> {
    cfg.validate()?;
    for d in dets {
        if !d.score.is_finite() {
            return Err(Error::Evaluation(format!(
                "non-finite score for image {}",
                d.image_id
            )));
        }
    }
    let counts = table.map(ClassTable::lookup);

    let mut gt_by_class: BTreeMap<HoiClass, Vec<&GtRecord>> = BTreeMap::new();
    let mut objects_in: BTreeMap<usize, BTreeSet<u64>> = BTreeMap::new();
    for g in gts {
        objects_in
            .entry(g.object_class)
            .or_default()
            .insert(g.image_id);
        for &v in &g.verbs {
            gt_by_class.entry((v, g.object_class)).or_default().push(g);
        }
    }
    let mut det_by_class: BTreeMap<HoiClass, Vec<&DetectionRecord>> = BTreeMap::new();
    for d in dets {
        det_by_class
            .entry((d.verb, d.object_class))
            .or_default()
            .push(d);
    }
    if let Some(c) = &counts {
        if let Some(k) = gt_by_class.keys().find(|k| !c.contains_key(k)) {
            return Err(Error::Config(format!(
                "class (verb {}, object {}) is annotated but missing from the class table",
                k.0, k.1
            )));
        }
    }

    let empty = BTreeSet::new();
    let mut results = Vec::new();
    let classes: BTreeSet<HoiClass> = gt_by_class
        .keys()
        .chain(det_by_class.keys())
        .copied()
        .collect();
    for class in classes {
        let pool = |image: u64| match cfg.setting {
            Setting::Default => true,
            Setting::KnownObjects => objects_in.get(&class.1).unwrap_or(&empty).contains(&image),
        };
        let cg: Vec<&GtRecord> = gt_by_class
            .get(&class)
            .into_iter()
            .flatten()
            .copied()
            .filter(|g| pool(g.image_id))
            .collect();
        let cd: Vec<&DetectionRecord> = det_by_class
            .get(&class)
            .into_iter()
            .flatten()
            .copied()
            .filter(|d| pool(d.image_id))
            .collect();
        if cg.is_empty() {
            let known = counts.as_ref().is_none_or(|c| c.contains_key(&class));
            if cd.is_empty() || !cfg.include_unannotated || !known {
                continue;
            }
        }
        let order = rank(&cd);
        let ranked: Vec<&DetectionRecord> = order.iter().map(|&i| cd[i]).collect();
        let tp = match_for_eval(&ranked, &cg, cfg);
        let ap = average_precision(&tp, cg.len());
        let (precision, recall) = precision_recall(&tp, cg.len());
        results.push(ClassResult {
            verb: class.0,
            object_class: class.1,
            ap,
            num_gt: cg.len(),
            num_dets: cd.len(),
            rare: counts
                .as_ref()
                .map(|c| c.get(&class).copied().unwrap_or(0) < cfg.rare_cutoff),
            precision,
            recall,
        });
    }

    let map_full = mean(results.iter().map(|c| c.ap)).unwrap_or(0.0);
    let split = |want: bool| {
        counts.as_ref()?;
        mean(
            results
                .iter()
                .filter(|c| c.rare == Some(want))
                .map(|c| c.ap),
        )
    };
    Ok(EvalResult {
        setting: cfg.setting,
        scenario: cfg.scenario,
        map_rare: split(true),
        map_nonrare: split(false),
        per_class: results,
        map_full,
    })
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(r: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(mut w: impl Write, items: &[T]) -> Result<()> {
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
