//! Training loop: Adam with cosine decay, per-step metrics, checkpoints.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::params::named_rng;
use crate::primitives::{ParamStore, Tensor};
use crate::reasoning::LossComponents;

use super::config::{OptimConfig, RunConfig};
use super::data::Dataset;
use super::model::{HoiModel, PreparedScene};

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: OptimConfig,
    t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(cfg: OptimConfig) -> Self {
        Self {
            cfg,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &BTreeMap<String, Tensor>,
        lr: f64,
    ) -> Result<()> {
        self.t += 1;
        let (b1, b2, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (name, g) in grads {
            let p = store
                .get_mut(name)
                .ok_or_else(|| Error::Config(format!("gradient for unknown parameter {name}")))?;
            if p.shape() != g.shape() {
                return Err(Error::shape(format!(
                    "gradient {name}: {:?} vs {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
            for (((pi, gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Learning rate at `step` of `total` (0-based).
pub fn learning_rate(cfg: &OptimConfig, step: usize, total: usize) -> f64 {
    if !cfg.cosine || total == 0 {
        return cfg.lr;
    }
    0.5 * cfg.lr * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    #[serde(flatten)]
    pub components: LossComponents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub config: RunConfig,
    pub steps: usize,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        // Write then rename so a reader never sees a half-written file.
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read checkpoint {}: {e}", path.display()))
        })?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.config.hash() != ck.config_hash {
            return Err(Error::Config("checkpoint config hash mismatch".into()));
        }
        Ok(ck)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: HoiModel,
    pub checkpoint: Checkpoint,
    pub metrics: Vec<StepMetrics>,
}

/// Written next to the metrics when a loss turns non-finite.
#[derive(Debug, Serialize)]
struct Diagnostic<'a> {
    step: usize,
    lr: f64,
    total: f64,
    components: LossComponents,
    image_ids: Vec<u64>,
    param_max_abs: BTreeMap<&'a str, f64>,
}

/// Trains on `data`. When `out_dir` is given, streams `metrics.jsonl`
/// there, and a `diagnostic.json` dump on a non-finite loss.
pub fn train(config: &RunConfig, data: &Dataset, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let (model, mut store) = HoiModel::new(config)?;
    if data.config.num_verbs != config.data.num_verbs
        || data.config.channels != config.data.channels
        || data.config.num_objects != config.data.num_objects
        || data.config.grid != config.data.grid
    {
        return Err(Error::Config(
            "dataset verbs/objects/channels/grid differ from the run config".into(),
        ));
    }
    let prepared: Vec<PreparedScene> = data
        .scenes
        .iter()
        .map(|s| model.prepare(s))
        .collect::<Result<_>>()?;
    if prepared.is_empty() {
        return Err(Error::Config("dataset has no scenes".into()));
    }
    let total_steps = config.total_steps(prepared.len());
    let batch = config.optim.batch_size.min(prepared.len());
    let mut adam = Adam::new(config.optim.clone());
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut rng = named_rng(config.seed, "train.shuffle");
    let mut cursor = order.len();
    let mut epoch = 0usize;

    let mut log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(std::io::BufWriter::new(std::fs::File::create(
                dir.join("metrics.jsonl"),
            )?))
        }
        None => None,
    };
    let mut metrics = Vec::with_capacity(total_steps);
    for step in 0..total_steps {
        let mut idx = Vec::with_capacity(batch);
        while idx.len() < batch {
            if cursor == order.len() {
                if step > 0 || !idx.is_empty() {
                    epoch += 1;
                }
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let scenes: Vec<&PreparedScene> = idx.iter().map(|&i| &prepared[i]).collect();
        let lr = learning_rate(&config.optim, step, total_steps);
        let (loss, grads) = model.batch_gradients(&store, &scenes)?;
        let m = StepMetrics {
            step,
            epoch,
            lr,
            total: loss.total,
            components: loss.components,
        };
        if let Some(w) = log.as_mut() {
            serde_json::to_writer(&mut *w, &m)?;
            w.write_all(b"\n")?;
        }
        if !loss.total.is_finite() {
            let detail = format!("total {} components {:?}", loss.total, loss.components);
            if let Some(dir) = out_dir {
                let diag = Diagnostic {
                    step,
                    lr,
                    total: loss.total,
                    components: loss.components,
                    image_ids: scenes.iter().map(|s| s.image_id).collect(),
                    param_max_abs: store.iter().map(|(k, v)| (k, v.max_abs())).collect(),
                };
                std::fs::write(
                    dir.join("diagnostic.json"),
                    serde_json::to_string_pretty(&diag)?,
                )?;
            }
            if let Some(w) = log.as_mut() {
                w.flush()?;
            }
            return Err(Error::NonFiniteLoss { step, detail });
        }
        adam.step(&mut store, &grads, lr)?;
        metrics.push(m);
    }
    if let Some(w) = log.as_mut() {
        w.flush()?;
    }
    let checkpoint = Checkpoint {
        config_hash: config.hash(),
        config: config.clone(),
        steps: total_steps,
        params: store,
    };
    if let Some(dir) = out_dir {
        checkpoint.save(&dir.join("checkpoint.json"))?;
    }
    Ok(TrainOutcome {
        model,
        checkpoint,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::data::{generate_dataset, DataConfig};

    fn tiny() -> RunConfig {
        let mut c = RunConfig::default();
        c.model.repr_dim = 16;
        c.model.hidden_dim = 16;
        c.model.token_dim = 8;
        c.detector.token_dim = 8;
        c.optim.batch_size = 2;
        c.data = DataConfig {
            num_images: 3,
            ..Default::default()
        };
        c
    }

    #[test]
    fn zero_steps_keeps_initialisation() {
        let mut c = tiny();
        c.optim.steps = Some(0);
        let data = generate_dataset(0, &c.data).unwrap();
        let out = train(&c, &data, None).unwrap();
        let (_, init) = HoiModel::new(&c).unwrap();
        assert_eq!(out.checkpoint.params, init);
        assert!(out.metrics.is_empty());
    }

    #[test]
    fn hoi_only_leaves_alignment_untouched() {
        let mut c = tiny();
        c.optim.steps = Some(1);
        c.optim.lr = 1e-2;
        c.loss.weights = crate::reasoning::LossWeights {
            hoi: 2.0,
            sentence_irm: 0.0,
            word_irm: 0.0,
            sentence_ire: 0.0,
            word_ire: 0.0,
        };
        let data = generate_dataset(0, &c.data).unwrap();
        let out = train(&c, &data, None).unwrap();
        let (_, init) = HoiModel::new(&c).unwrap();
        for (name, p) in out.checkpoint.params.iter() {
            let before = init.get(name).unwrap();
            if name.starts_with("cml.") {
                assert_eq!(p, before, "{name}");
            }
        }
        assert_ne!(
            out.checkpoint.params.get("irm.head.1.bias"),
            init.get("irm.head.1.bias")
        );
        assert_ne!(
            out.checkpoint.params.get("fuse_fc.weight"),
            init.get("fuse_fc.weight")
        );
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let o = OptimConfig::default();
        assert_eq!(learning_rate(&o, 0, 10), o.lr);
        assert!((learning_rate(&o, 5, 10) - o.lr / 2.0).abs() < 1e-18);
        let flat = OptimConfig { cosine: false, ..o };
        assert_eq!(learning_rate(&flat, 7, 10), flat.lr);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::new(0);
        store.insert("w", Tensor::row_vector(vec![1.0, -1.0]));
        let mut g = BTreeMap::new();
        g.insert("w".to_string(), Tensor::row_vector(vec![0.5, -3.0]));
        let mut a = Adam::new(OptimConfig::default());
        a.step(&mut store, &g, 0.1).unwrap();
        let w = store.get("w").unwrap();
        assert!((w.get(0, 0) - 0.9).abs() < 1e-6);
        assert!((w.get(0, 1) + 0.9).abs() < 1e-6);
    }

    #[test]
    fn checkpoint_round_trip_and_logged_total() {
        let mut c = tiny();
        c.optim.steps = Some(2);
        let dir = tempfile::tempdir().unwrap();
        let data = generate_dataset(0, &c.data).unwrap();
        let out = train(&c, &data, Some(dir.path())).unwrap();
        let ck = Checkpoint::load(&dir.path().join("checkpoint.json")).unwrap();
        assert_eq!(ck, out.checkpoint);
        let log = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
        assert_eq!(log.lines().count(), 2);
        for m in &out.metrics {
            let r = crate::reasoning::total_loss(&m.components, &c.loss.weights).unwrap();
            assert!((r - m.total).abs() <= 1e-9);
        }
    }
}
