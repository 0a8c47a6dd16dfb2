//! Label assignment and sampling for the two detection stages.

use camrank_tensor::{roi_align, RoiAlignSpec, RoiBox, Tensor};
use rand::seq::index::sample;
use rand::Rng;

use super::boxes::{iou, BBox, BoxCoder};
use super::rpn::{Proposal, RPN_CODER};
use crate::grid::Mask;

/// Ground-truth instance: box, rank in `{1, 2, 3}` and full-image mask.
#[derive(Clone, Debug, PartialEq)]
pub struct GtInstance {
    pub bbox: BBox,
    pub rank: u8,
    pub mask: Mask,
}

/// Outcome of matching one box against the ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProposalMatch {
    /// Best-overlapping ground truth, if any overlaps at all.
    pub gt: Option<usize>,
    pub iou: f64,
    /// Positive for the proposal stage (`iou >= iou_pos`).
    pub rpn_positive: bool,
    /// Positive for the detection stage (`iou >= iou_det`).
    pub detection_positive: bool,
}

/// Matches every box to its best ground truth and applies both thresholds.
pub fn match_proposals(boxes: &[BBox], gts: &[BBox], iou_pos: f64, iou_det: f64) -> Vec<ProposalMatch> {
    boxes
        .iter()
        .map(|b| {
            let (gt, best) = best_match(b, gts);
            ProposalMatch { gt, iou: best, rpn_positive: best >= iou_pos, detection_positive: best >= iou_det }
        })
        .collect()
}

fn best_match(b: &BBox, gts: &[BBox]) -> (Option<usize>, f64) {
    let mut best = (None, 0.0);
    for (k, g) in gts.iter().enumerate() {
        let v = iou(b, g);
        if v > best.1 {
            best = (Some(k), v);
        }
    }
    best
}

/// Anchor labels: `Some(gt)` for positives, `None` for negatives.
///
/// An anchor is positive when its best IoU reaches `iou_pos`, or when it is
/// (one of) the highest-overlap anchors of some ground truth, so every
/// instance gets at least one positive.
pub fn label_anchors(anchors: &[BBox], gts: &[BBox], iou_pos: f64) -> Vec<Option<usize>> {
    let mut labels: Vec<Option<usize>> = Vec::with_capacity(anchors.len());
    let mut best_per_gt = vec![0.0f64; gts.len()];
    let mut ious = vec![0.0f64; anchors.len() * gts.len()];
    for (i, a) in anchors.iter().enumerate() {
        let mut best = (None, 0.0);
        for (k, g) in gts.iter().enumerate() {
            let v = iou(a, g);
            ious[i * gts.len() + k] = v;
            best_per_gt[k] = best_per_gt[k].max(v);
            if v > best.1 {
                best = (Some(k), v);
            }
        }
        labels.push(if best.1 >= iou_pos { best.0 } else { None });
    }
    for (k, &top) in best_per_gt.iter().enumerate() {
        if top <= 0.0 {
            continue;
        }
        for (i, label) in labels.iter_mut().enumerate() {
            if label.is_none() && ious[i * gts.len() + k] == top {
                *label = Some(k);
            }
        }
    }
    labels
}

/// Draws up to `batch` indices with at most `fraction * batch` positives;
/// negatives fill the rest. Returned indices are sorted.
pub fn sample_balanced<R: Rng>(positive: &[bool], batch: usize, fraction: f64, rng: &mut R) -> Vec<usize> {
    let pos: Vec<usize> = (0..positive.len()).filter(|&i| positive[i]).collect();
    let neg: Vec<usize> = (0..positive.len()).filter(|&i| !positive[i]).collect();
    let n_pos = pos.len().min((batch as f64 * fraction) as usize);
    let n_neg = neg.len().min(batch - n_pos);
    let mut out: Vec<usize> = sample(rng, pos.len(), n_pos).iter().map(|k| pos[k]).collect();
    out.extend(sample(rng, neg.len(), n_neg).iter().map(|k| neg[k]));
    out.sort_unstable();
    out
}

/// Sampled anchors of one image. Indices run over all levels concatenated.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RpnSample {
    pub anchors: Vec<usize>,
    /// Objectness target per sampled anchor.
    pub positive: Vec<bool>,
    /// Regression target per sampled anchor (positives only).
    pub deltas: Vec<Option<[f64; 4]>>,
}

pub fn sample_rpn<R: Rng>(
    anchors: &[BBox],
    gts: &[GtInstance],
    iou_pos: f64,
    batch: usize,
    fraction: f64,
    rng: &mut R,
) -> RpnSample {
    let gt_boxes: Vec<BBox> = gts.iter().map(|g| g.bbox).collect();
    let labels = label_anchors(anchors, &gt_boxes, iou_pos);
    let positive: Vec<bool> = labels.iter().map(Option::is_some).collect();
    let chosen = sample_balanced(&positive, batch, fraction, rng);
    RpnSample {
        positive: chosen.iter().map(|&i| positive[i]).collect(),
        deltas: chosen.iter().map(|&i| labels[i].map(|k| RPN_CODER.encode(&anchors[i], &gt_boxes[k]))).collect(),
        anchors: chosen,
    }
}

/// One sampled region for the detection stage.
#[derive(Clone, Debug, PartialEq)]
pub struct RoiSample {
    pub batch: usize,
    pub bbox: BBox,
    /// Rank class, 0 for background.
    pub label: usize,
    pub deltas: Option<[f64; 4]>,
    /// Binary `mask_size x mask_size` target, row-major (positives only).
    pub mask: Option<Vec<f64>>,
}

/// Binary mask target: the instance mask bilinearly pooled over `b` and
/// thresholded at 0.5.
pub fn mask_target(mask: &Mask, b: &BBox, size: usize) -> Vec<f64> {
    let (h, w) = mask.dims();
    let t = Tensor::new(&[1, 1, h, w], mask.data().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect());
    let roi = RoiBox { batch: 0, x1: b.x1, y1: b.y1, x2: b.x2, y2: b.y2 };
    let pooled = roi_align(&t, &[roi], RoiAlignSpec { spatial_scale: 1.0, output: size, sampling_ratio: 2 });
    pooled.data().iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect()
}

/// Labels proposals (plus the ground-truth boxes themselves) of one image at
/// `iou_det` and samples `batch` of them at the given positive fraction.
#[allow(clippy::too_many_arguments)]
pub fn sample_rois<R: Rng>(
    image: usize,
    proposals: &[Proposal],
    gts: &[GtInstance],
    iou_det: f64,
    batch: usize,
    fraction: f64,
    coder: &BoxCoder,
    mask_size: usize,
    rng: &mut R,
) -> Vec<RoiSample> {
    let gt_boxes: Vec<BBox> = gts.iter().map(|g| g.bbox).collect();
    let mut boxes: Vec<BBox> = proposals.iter().map(|p| p.bbox).collect();
    boxes.extend(&gt_boxes);
    let matches = match_proposals(&boxes, &gt_boxes, iou_det, iou_det);
    let positive: Vec<bool> = matches.iter().map(|m| m.detection_positive).collect();
    sample_balanced(&positive, batch, fraction, rng)
        .into_iter()
        .map(|i| {
            let b = boxes[i];
            match matches[i].gt.filter(|_| positive[i]) {
                Some(k) => RoiSample {
                    batch: image,
                    bbox: b,
                    label: gts[k].rank as usize,
                    deltas: Some(coder.encode(&b, &gt_boxes[k])),
                    mask: Some(mask_target(&gts[k].mask, &b, mask_size)),
                },
                None => RoiSample { batch: image, bbox: b, label: 0, deltas: None, mask: None },
            }
        })
        .collect()
}

/// Everything the ranking losses need for one batch, fixed before the heads run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTargets {
    pub rpn: Vec<RpnSample>,
    pub rois: Vec<RoiSample>,
}
