use camrank_tensor::{Graph, ParamStore, Tensor, Var};

use super::boxes::{anchor_shapes, grid_anchors, nms, BBox, BoxCoder};
use super::config::ModelConfig;
use super::layers::{conv, conv_relu, Init, POINT, SAME3};
use super::pyramid::PyramidFeatures;

/// RPN outputs for one pyramid level: objectness logits `[N, A, h, w]` and
/// deltas `[N, 4A, h, w]` (channel `4a + k` is coordinate `k` of anchor `a`).
#[derive(Clone, Copy, Debug)]
pub struct RpnLevel {
    pub objectness: Var,
    pub deltas: Var,
}

/// Candidate box from the proposal stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proposal {
    pub bbox: BBox,
    pub objectness: f64,
}

pub const RPN_CODER: BoxCoder = BoxCoder::new([1.0; 4]);

pub(crate) fn init(cfg: &ModelConfig, init: &mut Init) {
    let c = cfg.pyramid_channels;
    let a = cfg.anchors.per_location();
    init.conv("rpn.conv", c, c, 3, Some(0.01));
    init.conv("rpn.cls", c, a, 1, Some(0.01));
    init.conv("rpn.reg", c, 4 * a, 1, Some(0.01));
}

/// Shared head applied to every level.
pub fn rpn_forward(g: &mut Graph, p: &ParamStore, pyramid: &PyramidFeatures) -> Vec<RpnLevel> {
    pyramid
        .0
        .iter()
        .map(|&x| {
            let h = conv_relu(g, p, "rpn.conv", x, SAME3);
            RpnLevel { objectness: conv(g, p, "rpn.cls", h, POINT), deltas: conv(g, p, "rpn.reg", h, POINT) }
        })
        .collect()
}

/// Anchors per level for an `h x w` input, each in `(anchor, y, x)` order.
pub fn level_anchors(cfg: &ModelConfig, h: usize, w: usize) -> Vec<Vec<BBox>> {
    cfg.level_strides()
        .iter()
        .map(|&s| {
            let shapes = anchor_shapes(&cfg.anchors.scales, &cfg.anchors.ratios, s);
            grid_anchors(h / s, w / s, s, &shapes)
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scores, decodes, clips and suppresses anchors of one image.
///
/// `levels` holds `(objectness, deltas)` tensors shaped like [`RpnLevel`].
/// Each level contributes at most `pre_nms_top_n` candidates; after NMS the
/// `top_n` highest-scoring proposals are returned, best first.
pub fn generate_proposals(
    cfg: &ModelConfig,
    levels: &[(&Tensor, &Tensor)],
    anchors: &[Vec<BBox>],
    image: usize,
    image_hw: (usize, usize),
    top_n: usize,
) -> Vec<Proposal> {
    let mut boxes = Vec::new();
    let mut scores = Vec::new();
    for ((obj, del), anchors) in levels.iter().zip(anchors) {
        let (_, a, h, w) = obj.dims4();
        let hw = h * w;
        let logits = &obj.data()[image * a * hw..(image + 1) * a * hw];
        let deltas = &del.data()[image * 4 * a * hw..(image + 1) * 4 * a * hw];
        let mut order: Vec<usize> = (0..logits.len()).collect();
        order.sort_by(|&i, &j| logits[j].total_cmp(&logits[i]).then(i.cmp(&j)));
        order.truncate(cfg.rpn.pre_nms_top_n);
        for j in order {
            let (ai, pos) = (j / hw, j % hw);
            let d = [0, 1, 2, 3].map(|k| deltas[(4 * ai + k) * hw + pos]);
            let b = RPN_CODER.decode(&anchors[j], &d).clip(image_hw.0, image_hw.1);
            if b.width() >= cfg.rpn.min_size && b.height() >= cfg.rpn.min_size {
                boxes.push(b);
                scores.push(sigmoid(logits[j]));
            }
        }
    }
    let mut keep = nms(&boxes, &scores, cfg.rpn.nms_iou);
    keep.truncate(top_n);
    keep.into_iter().map(|i| Proposal { bbox: boxes[i], objectness: scores[i] }).collect()
}
