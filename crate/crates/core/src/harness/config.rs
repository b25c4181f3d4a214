//! Run configuration (TOML) and ablation switches.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::ActiveTerms;
use crate::detection::MockDetectorConfig;
use crate::error::{Error, Result};
use crate::reasoning::LossWeights;

use super::data::DataConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Entity token width `Dv`.
    pub token_dim: usize,
    /// Pair representation width `Dl`; also the text embedding width.
    pub repr_dim: usize,
    pub hidden_dim: usize,
    pub ire_layers: usize,
    pub irm_layers: usize,
    pub self_attn_layers: usize,
    pub cross_attn_layers: usize,
    pub positional: bool,
    pub align_self_attended: bool,
    pub num_queries: usize,
    pub max_text_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            token_dim: 32,
            repr_dim: 64,
            hidden_dim: 64,
            ire_layers: 2,
            irm_layers: 1,
            self_attn_layers: 2,
            cross_attn_layers: 1,
            positional: true,
            align_self_attended: true,
            num_queries: 16,
            max_text_len: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub gamma: f64,
    /// Kept for configuration compatibility; no term reads it.
    pub beta: f64,
    pub match_iou: f64,
    /// Exponent on `human_conf · object_conf` at inference.
    pub score_exponent: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            gamma: 0.2,
            beta: 0.5,
            match_iou: 0.5,
            score_exponent: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub cosine: bool,
    pub batch_size: usize,
    pub epochs: usize,
    /// Overrides `epochs` when set.
    pub steps: Option<usize>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            cosine: true,
            batch_size: 8,
            epochs: 20,
            steps: None,
        }
    }
}

/// Component switches. `ire` also controls which parameters exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    pub ire: bool,
    pub cross_modal: bool,
    pub word_alignment: bool,
    pub sentence_alignment: bool,
    pub ire_kt: bool,
    pub irm_kt: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Variant::Full.flags()
    }
}

impl Ablation {
    pub fn active_terms(&self) -> ActiveTerms {
        let cm = self.cross_modal;
        ActiveTerms {
            sentence_ire: self.ire && cm && self.sentence_alignment && self.ire_kt,
            word_ire: self.ire && cm && self.word_alignment && self.ire_kt,
            sentence_irm: cm && self.sentence_alignment && self.irm_kt,
            word_irm: cm && self.word_alignment && self.irm_kt,
        }
    }
}

/// Named ablation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    /// No cross-modal learning.
    WithoutCl,
    /// No interaction re-mining.
    WithoutRm,
    WithoutWa,
    WithoutSa,
    WithoutIreKt,
    WithoutIrmKt,
    /// Neither re-mining nor cross-modal learning.
    Plain,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Full,
        Variant::WithoutCl,
        Variant::WithoutRm,
        Variant::WithoutWa,
        Variant::WithoutSa,
        Variant::WithoutIreKt,
        Variant::WithoutIrmKt,
        Variant::Plain,
    ];

    pub fn flags(self) -> Ablation {
        let full = Ablation {
            ire: true,
            cross_modal: true,
            word_alignment: true,
            sentence_alignment: true,
            ire_kt: true,
            irm_kt: true,
        };
        match self {
            Variant::Full => full,
            Variant::WithoutCl => Ablation {
                cross_modal: false,
                ..full
            },
            Variant::WithoutRm => Ablation { ire: false, ..full },
            Variant::WithoutWa => Ablation {
                word_alignment: false,
                ..full
            },
            Variant::WithoutSa => Ablation {
                sentence_alignment: false,
                ..full
            },
            Variant::WithoutIreKt => Ablation {
                ire_kt: false,
                ..full
            },
            Variant::WithoutIrmKt => Ablation {
                irm_kt: false,
                ..full
            },
            Variant::Plain => Ablation {
                ire: false,
                cross_modal: false,
                ..full
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WithoutCl => "without-cl",
            Variant::WithoutRm => "without-rm",
            Variant::WithoutWa => "without-wa",
            Variant::WithoutSa => "without-sa",
            Variant::WithoutIreKt => "without-ire-kt",
            Variant::WithoutIrmKt => "without-irm-kt",
            Variant::Plain => "plain",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub detector: MockDetectorConfig,
    pub data: DataConfig,
    /// When set, replaces `ablation`.
    pub variant: Option<Variant>,
    pub ablation: Ablation,
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn flags(&self) -> Ablation {
        self.variant.map(Variant::flags).unwrap_or(self.ablation)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.token_dim == 0 || m.repr_dim == 0 || m.hidden_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if m.self_attn_layers == 0 || m.cross_attn_layers == 0 {
            return Err(Error::Config(
                "alignment needs at least one self- and cross-attention layer".into(),
            ));
        }
        if m.num_queries == 0 {
            return Err(Error::Config("num_queries must be at least 1".into()));
        }
        self.loss.weights.validate()?;
        if !(self.loss.gamma >= 0.0) || !(self.loss.score_exponent >= 0.0) {
            return Err(Error::Config(
                "gamma and score_exponent must be non-negative".into(),
            ));
        }
        if !(self.loss.match_iou > 0.0 && self.loss.match_iou < 1.0) {
            return Err(Error::Config("match_iou must lie in (0, 1)".into()));
        }
        let o = &self.optim;
        if !(o.lr > 0.0) || o.batch_size == 0 {
            return Err(Error::Config(
                "lr must be positive and batch_size at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
            return Err(Error::Config(
                "Adam betas must lie in [0, 1) and eps be positive".into(),
            ));
        }
        if self.detector.token_dim != m.token_dim {
            return Err(Error::Config(format!(
                "detector.token_dim {} differs from model.token_dim {}",
                self.detector.token_dim, m.token_dim
            )));
        }
        if self.detector.channels != self.data.channels {
            return Err(Error::Config(format!(
                "detector.channels {} differs from data.channels {}",
                self.detector.channels, self.data.channels
            )));
        }
        if self.detector.num_classes != self.data.num_objects + 1 {
            return Err(Error::Config(format!(
                "detector.num_classes must be data.num_objects + 1 ({}), got {}",
                self.data.num_objects + 1,
                self.detector.num_classes
            )));
        }
        self.data.validate()
    }

    /// SHA-256 over the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn total_steps(&self, num_scenes: usize) -> usize {
        self.optim.steps.unwrap_or_else(|| {
            let per_epoch = num_scenes.div_ceil(self.optim.batch_size);
            per_epoch * self.optim.epochs
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = RunConfig::from_toml("[optim]\nlearning_rate = 0.1\n").unwrap_err();
        assert!(e.is_config());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml("seed = 4\nvariant = \"without-wa\"\n[optim]\nsteps = 3\n")
            .unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.optim.steps, Some(3));
        assert!(!c.flags().word_alignment);
        assert_eq!(c.total_steps(16), 3);
    }

    #[test]
    fn negative_weight_is_config_error() {
        let e = RunConfig::from_toml("[loss.weights]\nhoi = -1.0\n").unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn variant_terms() {
        let t = Variant::Full.flags().active_terms();
        assert_eq!(t, ActiveTerms::all());
        assert_eq!(
            Variant::WithoutCl.flags().active_terms(),
            ActiveTerms::none()
        );
        assert_eq!(Variant::Plain.flags().active_terms(), ActiveTerms::none());
        let rm = Variant::WithoutRm.flags().active_terms();
        assert!(!rm.sentence_ire && !rm.word_ire && rm.sentence_irm && rm.word_irm);
        let kt = Variant::WithoutIrmKt.flags().active_terms();
        assert!(kt.sentence_ire && kt.word_ire && !kt.sentence_irm && !kt.word_irm);
        let sa = Variant::WithoutSa.flags().active_terms();
        assert!(!sa.sentence_ire && sa.word_ire && !sa.sentence_irm && sa.word_irm);
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
    }
}
