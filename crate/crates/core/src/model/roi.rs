//! ROIAlign pooling, the rank/box head and the mask head.

use camrank_tensor::{Graph, ParamStore, RoiAlignSpec, RoiBox, Var};

use super::boxes::{assign_level, BBox};
use super::config::ModelConfig;
use super::layers::{conv, conv_relu, linear, Init, POINT, SAME3};
use super::pyramid::PyramidFeatures;

/// Rank classes: background plus ranks 1..=3.
pub const NUM_RANKS: usize = 4;

pub(crate) fn init(cfg: &ModelConfig, init: &mut Init) {
    let c = cfg.pyramid_channels;
    let r = &cfg.roi;
    init.linear("roi.fc1", c * r.pool_size * r.pool_size, r.fc_dim, None);
    init.linear("roi.fc2", r.fc_dim, r.fc_dim, None);
    init.linear("roi.cls", r.fc_dim, NUM_RANKS, Some(0.01));
    init.linear("roi.box", r.fc_dim, 4, Some(0.001));
    init.conv("roi.mask0", c, r.mask_channels, 3, None);
    init.conv("roi.mask1", r.mask_channels, r.mask_channels, 3, None);
    init.conv("roi.mask_out", r.mask_channels, 1, 1, Some(0.01));
}

/// Pools every `(batch, box)` from its assigned level into `[R, C, s, s]`,
/// keeping the input order.
pub fn pool_rois(g: &mut Graph, cfg: &ModelConfig, pyramid: &PyramidFeatures, rois: &[(usize, BBox)], size: usize) -> Var {
    let strides = cfg.level_strides();
    let levels: Vec<usize> = rois
        .iter()
        .map(|(_, b)| assign_level(b, cfg.roi.canonical_size, cfg.roi.canonical_level, 4))
        .collect();
    let mut parts = Vec::new();
    let mut order = Vec::with_capacity(rois.len());
    for (l, &stride) in strides.iter().enumerate() {
        let members: Vec<usize> = (0..rois.len()).filter(|&i| levels[i] == l).collect();
        if members.is_empty() {
            continue;
        }
        let boxes: Vec<RoiBox> = members
            .iter()
            .map(|&i| {
                let (batch, b) = rois[i];
                RoiBox { batch, x1: b.x1, y1: b.y1, x2: b.x2, y2: b.y2 }
            })
            .collect();
        let spec = RoiAlignSpec { spatial_scale: 1.0 / stride as f64, output: size, sampling_ratio: cfg.roi.sampling_ratio };
        parts.push(g.roi_align(pyramid.0[l], &boxes, spec));
        order.extend(members);
    }
    let grouped = if parts.len() == 1 { parts[0] } else { g.concat(&parts, 0) };
    // row k of `grouped` is roi order[k]; invert to restore input order
    let mut inverse = vec![0; order.len()];
    for (k, &i) in order.iter().enumerate() {
        inverse[i] = k;
    }
    if inverse.iter().enumerate().all(|(i, &k)| i == k) {
        grouped
    } else {
        g.index_select0(grouped, &inverse)
    }
}

/// Two hidden layers, then rank logits `[R, 4]` and class-agnostic box deltas `[R, 4]`.
pub fn box_head(g: &mut Graph, p: &ParamStore, pooled: Var) -> (Var, Var) {
    let r = g.shape(pooled)[0];
    let width: usize = g.shape(pooled)[1..].iter().product();
    let x = g.reshape(pooled, &[r, width]);
    let x = linear(g, p, "roi.fc1", x);
    let x = g.relu(x);
    let x = linear(g, p, "roi.fc2", x);
    let x = g.relu(x);
    (linear(g, p, "roi.cls", x), linear(g, p, "roi.box", x))
}

/// Mask logits `[R, 1, m, m]` from pooled `[R, C, m, m]` features.
pub fn mask_head(g: &mut Graph, p: &ParamStore, pooled: Var) -> Var {
    let x = conv_relu(g, p, "roi.mask0", pooled, SAME3);
    let x = conv_relu(g, p, "roi.mask1", x, SAME3);
    conv(g, p, "roi.mask_out", x, POINT)
}
