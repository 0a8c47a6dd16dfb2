use camrank_tensor::{Conv2dSpec, Graph, ParamStore, Var};

use super::config::ModelConfig;
use super::layers::{conv_relu, Init, SAME3};
use crate::error::{Error, Result};

/// Backbone outputs `s1..s4` at strides `stem_stride * {1, 2, 4, 8}`.
#[derive(Clone, Copy, Debug)]
pub struct StageFeatures(pub [Var; 4]);

const DOWN3: Conv2dSpec = Conv2dSpec::new(2, 1, 1);

fn stem_len(cfg: &ModelConfig) -> usize {
    (cfg.stem_stride.trailing_zeros() as usize).max(1)
}

pub(crate) fn init(cfg: &ModelConfig, init: &mut Init) {
    let c0 = cfg.stage_channels[0];
    for i in 0..stem_len(cfg) {
        let cin = if i == 0 { cfg.in_channels } else { c0 };
        init.conv(&format!("backbone.stem{i}"), cin, c0, 3, None);
    }
    let mut cin = c0;
    for (s, &c) in cfg.stage_channels.iter().enumerate() {
        for d in 0..cfg.stage_depth {
            init.conv(&format!("backbone.stage{s}.{d}"), cin, c, 3, None);
            cin = c;
        }
    }
}

/// Runs the staged extractor on `[N, in_channels, H, W]` images.
pub fn extract_features(g: &mut Graph, p: &ParamStore, cfg: &ModelConfig, images: Var) -> Result<StageFeatures> {
    let shape = g.shape(images).to_vec();
    if shape.len() != 4 || shape[1] != cfg.in_channels {
        return Err(Error::invalid(format!("expected [N, {}, H, W] images, got {shape:?}", cfg.in_channels)));
    }
    let div = cfg.size_divisor();
    if shape[2] == 0 || shape[3] == 0 || !shape[2].is_multiple_of(div) || !shape[3].is_multiple_of(div) {
        return Err(Error::invalid(format!(
            "image size {}x{} is not a positive multiple of {div}",
            shape[2], shape[3]
        )));
    }
    let stem_spec = if cfg.stem_stride == 1 { SAME3 } else { DOWN3 };
    let mut x = images;
    for i in 0..stem_len(cfg) {
        x = conv_relu(g, p, &format!("backbone.stem{i}"), x, stem_spec);
    }
    let mut out = [x; 4];
    for s in 0..4 {
        for d in 0..cfg.stage_depth {
            let spec = if s > 0 && d == 0 { DOWN3 } else { SAME3 };
            x = conv_relu(g, p, &format!("backbone.stage{s}.{d}"), x, spec);
        }
        out[s] = x;
    }
    Ok(StageFeatures(out))
}
