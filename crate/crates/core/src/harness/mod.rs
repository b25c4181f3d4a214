//! Synthetic data, configuration, training, inference, probing and report
//! rendering around the model.

pub mod config;
pub mod data;
pub mod model;
pub mod probe;
pub mod report;
pub mod train;

pub use config::{Ablation, RunConfig, Variant};
pub use data::{generate_dataset, generate_scene, DataConfig, Dataset, SyntheticScene};
pub use model::{HoiModel, PreparedScene};
pub use train::{train, Checkpoint, StepMetrics, TrainOutcome};

use crate::error::Result;
use crate::eval::{evaluate, DetectionRecord, EvalConfig, EvalResult};
use crate::primitives::ParamStore;

/// Detection records for every scene of `data`.
pub fn infer(model: &HoiModel, store: &ParamStore, data: &Dataset) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for s in &data.scenes {
        let p = model.prepare(s)?;
        out.extend(model.detection_records(store, &p)?);
    }
    Ok(out)
}

/// Runs inference over `data` and scores it against its own annotations,
/// restricted to the classes of its manifest.
pub fn evaluate_on(
    model: &HoiModel,
    store: &ParamStore,
    data: &Dataset,
    cfg: &EvalConfig,
) -> Result<EvalResult> {
    let dets = infer(model, store, data)?;
    let manifest = data.manifest();
    evaluate(&dets, &data.gt_records(), Some(&manifest.classes), cfg)
}
