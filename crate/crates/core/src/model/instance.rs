use serde::Serialize;

use super::boxes::BBox;
use crate::grid::{Grid, Mask};

/// A finished detection of the ranking branch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceProposal {
    /// Refined, clipped box.
    pub bbox: BBox,
    pub objectness: f64,
    pub rank_logits: [f64; 4],
    pub box_deltas: [f64; 4],
    /// Softmax probability of `rank`.
    pub score: f64,
    /// Argmax rank; 0 means background.
    pub rank: u8,
    /// Mask probabilities over the box, `mask_size x mask_size`.
    #[serde(skip)]
    pub mask: Grid<f64>,
}

pub fn softmax4(logits: &[f64; 4]) -> [f64; 4] {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// First index of the largest logit.
pub fn argmax4(logits: &[f64; 4]) -> usize {
    let mut best = 0;
    for i in 1..4 {
        if logits[i] > logits[best] {
            best = i;
        }
    }
    best
}

impl InstanceProposal {
    /// The box mask resampled onto an `h x w` image and thresholded.
    pub fn binary_mask(&self, h: usize, w: usize, threshold: f64) -> Mask {
        paste_mask(&self.mask, &self.bbox, h, w, threshold)
    }
}

/// Bilinearly resamples a box-relative probability grid onto the image and
/// keeps pixels whose value reaches `threshold`. Pixels outside the box are 0.
pub fn paste_mask(mask: &Grid<f64>, b: &BBox, h: usize, w: usize, threshold: f64) -> Mask {
    let (mh, mw) = mask.dims();
    let (bw, bh) = (b.width(), b.height());
    let mut out = Mask::filled(h, w, false);
    if bw <= 0.0 || bh <= 0.0 || mh == 0 || mw == 0 {
        return out;
    }
    let r0 = b.y1.floor().max(0.0) as usize;
    let r1 = (b.y2.ceil().max(0.0) as usize).min(h);
    let c0 = b.x1.floor().max(0.0) as usize;
    let c1 = (b.x2.ceil().max(0.0) as usize).min(w);
    let sample = |v: f64, n: usize| {
        let v = v.clamp(0.0, (n - 1) as f64);
        let i0 = v.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, v - i0 as f64)
    };
    for r in r0..r1 {
        let y = r as f64 + 0.5;
        if y < b.y1 || y > b.y2 {
            continue;
        }
        let (y0, y1, fy) = sample((y - b.y1) / bh * mh as f64 - 0.5, mh);
        for c in c0..c1 {
            let x = c as f64 + 0.5;
            if x < b.x1 || x > b.x2 {
                continue;
            }
            let (x0, x1, fx) = sample((x - b.x1) / bw * mw as f64 - 0.5, mw);
            let top = mask.get(y0, x0) * (1.0 - fx) + mask.get(y0, x1) * fx;
            let bot = mask.get(y1, x0) * (1.0 - fx) + mask.get(y1, x1) * fx;
            if top * (1.0 - fy) + bot * fy >= threshold {
                out.set(r, c, true);
            }
        }
    }
    out
}
