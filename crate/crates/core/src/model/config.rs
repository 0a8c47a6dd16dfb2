use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which backbone stages the reverse-attention map `1 - F` gates before the
/// camouflage decoder sees them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReverseTarget {
    AllStages,
    FirstStage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    /// Anchor side is `scale * level_stride`.
    pub scales: Vec<f64>,
    /// Height over width.
    pub ratios: Vec<f64>,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self { scales: vec![4.0, 8.0, 16.0], ratios: vec![0.5, 1.0, 2.0] }
    }
}

impl AnchorConfig {
    pub fn per_location(&self) -> usize {
        self.scales.len() * self.ratios.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpnConfig {
    pub positive_iou: f64,
    pub batch_per_image: usize,
    pub positive_fraction: f64,
    pub pre_nms_top_n: usize,
    pub post_nms_top_n_train: usize,
    pub post_nms_top_n_test: usize,
    pub nms_iou: f64,
    pub min_size: f64,
    pub smooth_l1_beta: f64,
}

impl Default for RpnConfig {
    fn default() -> Self {
        Self {
            positive_iou: 0.7,
            batch_per_image: 256,
            positive_fraction: 0.5,
            pre_nms_top_n: 200,
            post_nms_top_n_train: 100,
            post_nms_top_n_test: 50,
            nms_iou: 0.7,
            min_size: 1e-3,
            smooth_l1_beta: 1.0 / 9.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiConfig {
    pub detection_iou: f64,
    pub batch_per_image: usize,
    pub positive_fraction: f64,
    pub pool_size: usize,
    pub mask_size: usize,
    pub sampling_ratio: usize,
    pub fc_dim: usize,
    pub mask_channels: usize,
    /// Box side that maps to `canonical_level` in the level-assignment rule.
    pub canonical_size: f64,
    pub canonical_level: i32,
    pub box_weights: [f64; 4],
    pub smooth_l1_beta: f64,
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub max_detections: usize,
    pub mask_threshold: f64,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            detection_iou: 0.5,
            batch_per_image: 64,
            positive_fraction: 0.25,
            pool_size: 7,
            mask_size: 14,
            sampling_ratio: 2,
            fc_dim: 64,
            mask_channels: 16,
            canonical_size: 224.0,
            canonical_level: 4,
            box_weights: [10.0, 10.0, 5.0, 5.0],
            smooth_l1_beta: 1.0,
            score_threshold: 0.05,
            nms_iou: 0.5,
            max_detections: 20,
            mask_threshold: 0.5,
        }
    }
}

/// Architecture of [`CamRankNet`](super::CamRankNet). Stored inside every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub in_channels: usize,
    /// Stride of the first stage. A power of two; 4 gives strides {4, 8, 16, 32}.
    pub stem_stride: usize,
    pub stage_channels: [usize; 4],
    /// 3x3 convolutions per stage.
    pub stage_depth: usize,
    /// Projection width `C` shared by both decoders.
    pub decoder_channels: usize,
    /// Query/key width of position attention is `C / attention_reduction`.
    pub attention_reduction: usize,
    pub attention_gamma: f64,
    pub aspp_dilations: Vec<usize>,
    pub aspp_growth: usize,
    pub reverse_target: ReverseTarget,
    pub pyramid_channels: usize,
    pub anchors: AnchorConfig,
    pub rpn: RpnConfig,
    pub roi: RoiConfig,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Small CPU-friendly network for 64..352 px inputs.
    pub fn desk() -> Self {
        Self {
            in_channels: 3,
            stem_stride: 4,
            stage_channels: [16, 24, 32, 48],
            stage_depth: 1,
            decoder_channels: 16,
            attention_reduction: 8,
            attention_gamma: 0.1,
            aspp_dilations: vec![3, 6, 12, 18],
            aspp_growth: 8,
            reverse_target: ReverseTarget::AllStages,
            pyramid_channels: 16,
            anchors: AnchorConfig::default(),
            rpn: RpnConfig::default(),
            roi: RoiConfig::default(),
            seed: 0,
        }
    }

    /// Full-width preset: ResNet-50 stage widths and `C = 32`.
    pub fn full() -> Self {
        Self {
            stage_channels: [256, 512, 1024, 2048],
            stage_depth: 3,
            decoder_channels: 32,
            aspp_growth: 32,
            pyramid_channels: 256,
            roi: RoiConfig { fc_dim: 1024, mask_channels: 256, ..RoiConfig::default() },
            ..Self::desk()
        }
    }

    /// Tiny network on 16x16 inputs for finite-difference checks.
    pub fn toy() -> Self {
        Self {
            stem_stride: 1,
            stage_channels: [3, 4, 4, 5],
            decoder_channels: 4,
            attention_reduction: 2,
            aspp_growth: 2,
            pyramid_channels: 3,
            anchors: AnchorConfig { scales: vec![4.0, 8.0], ratios: vec![1.0, 2.0] },
            rpn: RpnConfig { batch_per_image: 32, pre_nms_top_n: 30, post_nms_top_n_train: 8, ..RpnConfig::default() },
            roi: RoiConfig {
                batch_per_image: 8,
                pool_size: 3,
                mask_size: 4,
                fc_dim: 6,
                mask_channels: 3,
                ..RoiConfig::default()
            },
            ..Self::desk()
        }
    }

    /// Total stride of the last stage; input sides must be multiples of it.
    pub fn size_divisor(&self) -> usize {
        self.stem_stride * 8
    }

    pub fn level_strides(&self) -> [usize; 4] {
        let s = self.stem_stride;
        [s, 2 * s, 4 * s, 8 * s]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.in_channels == 0 {
            return bad("in_channels must be positive");
        }
        if !self.stem_stride.is_power_of_two() {
            return bad("stem_stride must be a power of two");
        }
        if self.stage_channels.contains(&0) || self.stage_depth == 0 {
            return bad("stage widths and depth must be positive");
        }
        if self.decoder_channels == 0 || self.attention_reduction == 0 || self.aspp_growth == 0 {
            return bad("decoder widths must be positive");
        }
        if self.aspp_dilations.is_empty() || self.aspp_dilations.contains(&0) {
            return bad("aspp_dilations must be non-empty and positive");
        }
        if self.pyramid_channels == 0 {
            return bad("pyramid_channels must be positive");
        }
        if self.anchors.scales.is_empty()
            || self.anchors.ratios.is_empty()
            || self.anchors.scales.iter().chain(&self.anchors.ratios).any(|&v| !(v > 0.0 && v.is_finite()))
        {
            return bad("anchor scales and ratios must be positive");
        }
        let unit = |v: f64| v > 0.0 && v < 1.0;
        let (rpn, roi) = (&self.rpn, &self.roi);
        if !unit(rpn.positive_iou) || !unit(rpn.nms_iou) || !unit(roi.detection_iou) || !unit(roi.nms_iou) {
            return bad("IoU thresholds must lie in (0, 1)");
        }
        if !unit(rpn.positive_fraction) || !unit(roi.positive_fraction) {
            return bad("positive fractions must lie in (0, 1)");
        }
        if rpn.batch_per_image == 0 || roi.batch_per_image == 0 || rpn.pre_nms_top_n == 0 {
            return bad("sample counts must be positive");
        }
        if roi.pool_size == 0 || roi.mask_size == 0 || roi.sampling_ratio == 0 || roi.fc_dim == 0 {
            return bad("ROI head sizes must be positive");
        }
        if !(0.0..1.0).contains(&roi.score_threshold) || !unit(roi.mask_threshold) {
            return bad("score and mask thresholds must lie in [0, 1)");
        }
        Ok(())
    }
}
