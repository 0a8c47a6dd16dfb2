use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::losses::SimilarityPrior;
use crate::model::{AnchorConfig, ModelConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Learning-rate multiplier per parameter group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrMultipliers {
    pub backbone: f64,
    pub fixation: f64,
    pub camouflage: f64,
    pub ranking: f64,
}

impl Default for LrMultipliers {
    fn default() -> Self {
        Self { backbone: 1.0, fixation: 1.0, camouflage: 1.0, ranking: 1.0 }
    }
}

impl LrMultipliers {
    pub fn for_param(&self, name: &str) -> f64 {
        match name.split('.').next() {
            Some("backbone") => self.backbone,
            Some("fix") => self.fixation,
            Some("cam") => self.camouflage,
            _ => self.ranking,
        }
    }
}

/// `base + step |m - n|` similarity prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub base: f64,
    pub step: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { base: 0.2, step: 0.1 }
    }
}

/// Everything a training run depends on. Read from and written to TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub input_size: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub seed: u64,
    pub anchor_scales: Vec<f64>,
    pub aspect_ratios: Vec<f64>,
    pub rpn_iou: f64,
    pub detection_iou: f64,
    pub checkpoint_every: usize,
    pub keep_checkpoints: usize,
    /// Horizontal-flip probability per sample.
    pub flip_probability: f64,
    pub adam: AdamConfig,
    pub lr_multipliers: LrMultipliers,
    pub prior: PriorConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            input_size: 352,
            batch_size: 10,
            iterations: 10_000,
            learning_rate: 5e-5,
            lambda: 1.0,
            seed: 0,
            anchor_scales: AnchorConfig::default().scales,
            aspect_ratios: AnchorConfig::default().ratios,
            rpn_iou: 0.7,
            detection_iou: 0.5,
            checkpoint_every: 500,
            keep_checkpoints: 3,
            flip_probability: 0.5,
            adam: AdamConfig::default(),
            lr_multipliers: LrMultipliers::default(),
            prior: PriorConfig::default(),
            model: ModelConfig::desk(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.input_size == 0 || self.batch_size == 0 {
            return bad("input_size and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if self.checkpoint_every == 0 || self.keep_checkpoints == 0 {
            return bad("checkpoint_every and keep_checkpoints must be positive");
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return bad("flip_probability must lie in [0, 1]");
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        let m = &self.lr_multipliers;
        if [m.backbone, m.fixation, m.camouflage, m.ranking].iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return bad("learning-rate multipliers must be non-negative");
        }
        self.similarity_prior()?;
        let model = self.model_config();
        model.validate()?;
        if !self.input_size.is_multiple_of(model.size_divisor()) {
            return Err(Error::Config(format!(
                "input_size {} is not a multiple of {}",
                self.input_size,
                model.size_divisor()
            )));
        }
        Ok(())
    }

    /// Architecture with the run-level anchors, thresholds and seed applied.
    pub fn model_config(&self) -> ModelConfig {
        let mut m = self.model.clone();
        m.anchors = AnchorConfig { scales: self.anchor_scales.clone(), ratios: self.aspect_ratios.clone() };
        m.rpn.positive_iou = self.rpn_iou;
        m.roi.detection_iou = self.detection_iou;
        m.seed = self.seed;
        m
    }

    pub fn similarity_prior(&self) -> Result<SimilarityPrior> {
        SimilarityPrior::affine(self.prior.base, self.prior.step)
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex(&Sha256::digest(&json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
