//! Shared structure of the fixation and camouflage decoders.
//!
//! Each stage is projected to `C` channels, refined by dual residual
//! attention and a densely connected dilated pyramid, then the four stages
//! are merged top-down: the coarser result is upsampled, concatenated with
//! the next finer stage and fused by a 3x3 convolution. A 1x1 head at the
//! finest stage gives logits, which are upsampled to the input size and
//! squashed.

use camrank_tensor::{Conv2dSpec, Graph, ParamStore, Var};

use super::attention::{dual_residual_attention, init_dra};
use super::backbone::StageFeatures;
use super::config::ModelConfig;
use super::layers::{conv, conv_relu, Init, POINT, SAME3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Fixation,
    Camouflage,
}

impl Head {
    pub fn prefix(self) -> &'static str {
        match self {
            Head::Fixation => "fix",
            Head::Camouflage => "cam",
        }
    }
}

/// Stage features after the per-stage 3x3 projection to `C` channels.
#[derive(Clone, Copy, Debug)]
pub struct ProjectedFeatures(pub [Var; 4]);

pub(crate) fn init(cfg: &ModelConfig, init: &mut Init, head: Head) {
    let h = head.prefix();
    let c = cfg.decoder_channels;
    for (i, &cin) in cfg.stage_channels.iter().enumerate() {
        init.conv(&format!("{h}.proj{i}"), cin, c, 3, None);
        init_dra(init, &format!("{h}.dra{i}"), c, cfg.attention_reduction, cfg.attention_gamma);
        let mut width = c;
        for j in 0..cfg.aspp_dilations.len() {
            init.conv(&format!("{h}.aspp{i}.branch{j}"), width, cfg.aspp_growth, 3, None);
            width += cfg.aspp_growth;
        }
        init.conv(&format!("{h}.aspp{i}.fuse"), width, c, 1, None);
    }
    for i in 0..3 {
        init.conv(&format!("{h}.merge{i}"), 2 * c, c, 3, None);
    }
    init.conv(&format!("{h}.out"), c, 1, 1, Some(0.01));
}

pub fn project(g: &mut Graph, p: &ParamStore, head: Head, stages: &StageFeatures) -> ProjectedFeatures {
    let h = head.prefix();
    let mut out = stages.0;
    for (i, s) in stages.0.iter().enumerate() {
        out[i] = conv_relu(g, p, &format!("{h}.proj{i}"), *s, SAME3);
    }
    ProjectedFeatures(out)
}

/// Dense atrous pyramid: branch `j` sees the input plus every earlier branch.
pub fn dense_aspp(g: &mut Graph, p: &ParamStore, prefix: &str, dilations: &[usize], x: Var) -> Var {
    let mut feats = vec![x];
    for (j, &d) in dilations.iter().enumerate() {
        let input = if feats.len() == 1 { x } else { g.concat(&feats, 1) };
        let y = conv_relu(g, p, &format!("{prefix}.branch{j}"), input, Conv2dSpec::same(3, d));
        feats.push(y);
    }
    let all = g.concat(&feats, 1);
    conv_relu(g, p, &format!("{prefix}.fuse"), all, POINT)
}

/// Logits `[N, 1, H, W]` at input resolution.
pub fn decode_logits(
    g: &mut Graph,
    p: &ParamStore,
    cfg: &ModelConfig,
    head: Head,
    feats: &ProjectedFeatures,
    out_hw: (usize, usize),
) -> Var {
    let h = head.prefix();
    let mut refined = feats.0;
    for (i, f) in feats.0.iter().enumerate() {
        let a = dual_residual_attention(g, p, &format!("{h}.dra{i}"), *f);
        refined[i] = dense_aspp(g, p, &format!("{h}.aspp{i}"), &cfg.aspp_dilations, a);
    }
    let mut m = refined[3];
    for i in (0..3).rev() {
        let (_, _, fh, fw) = g.value(refined[i]).dims4();
        let up = g.resize_bilinear(m, fh, fw);
        let cat = g.concat(&[refined[i], up], 1);
        m = conv_relu(g, p, &format!("{h}.merge{i}"), cat, SAME3);
    }
    let logits = conv(g, p, &format!("{h}.out"), m, POINT);
    g.resize_bilinear(logits, out_hw.0, out_hw.1)
}

/// Probability map `[N, 1, H, W]` in `[0, 1]`.
pub fn decode(
    g: &mut Graph,
    p: &ParamStore,
    cfg: &ModelConfig,
    head: Head,
    feats: &ProjectedFeatures,
    out_hw: (usize, usize),
) -> Var {
    let logits = decode_logits(g, p, cfg, head, feats, out_hw);
    g.sigmoid(logits)
}
