use camrank_tensor::{Graph, ParamStore, Var};

use super::backbone::StageFeatures;
use super::config::ModelConfig;
use super::layers::{conv, Init, POINT, SAME3};

/// Fused levels `P1..P4`, finest first, all with `pyramid_channels` channels.
#[derive(Clone, Copy, Debug)]
pub struct PyramidFeatures(pub [Var; 4]);

pub(crate) fn init(cfg: &ModelConfig, init: &mut Init) {
    let c = cfg.pyramid_channels;
    for (i, &cin) in cfg.stage_channels.iter().enumerate() {
        init.conv(&format!("fpn.lateral{i}"), cin, c, 1, None);
        init.conv(&format!("fpn.output{i}"), c, c, 3, None);
    }
}

pub fn build_pyramid(g: &mut Graph, p: &ParamStore, stages: &StageFeatures) -> PyramidFeatures {
    let mut top = conv(g, p, "fpn.lateral3", stages.0[3], POINT);
    let mut merged = [top; 4];
    for i in (0..3).rev() {
        let lat = conv(g, p, &format!("fpn.lateral{i}"), stages.0[i], POINT);
        let (_, _, h, w) = g.value(lat).dims4();
        let up = g.resize_bilinear(top, h, w);
        top = g.add(lat, up);
        merged[i] = top;
    }
    let mut out = merged;
    for i in 0..4 {
        out[i] = conv(g, p, &format!("fpn.output{i}"), merged[i], SAME3);
    }
    PyramidFeatures(out)
}
