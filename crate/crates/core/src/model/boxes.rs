//! Axis-aligned boxes, IoU, NMS, anchors and the delta parameterisation.

use serde::{Deserialize, Serialize};

use crate::grid::Mask;

/// Box in input-pixel coordinates; `x2`/`y2` are exclusive edges, so a box
/// covering pixel columns `0..10` is `[0, 10)` with width 10.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
    }

    /// Tight box around the foreground of `mask`, or `None` if it is empty.
    pub fn enclosing(mask: &Mask) -> Option<Self> {
        let (h, w) = mask.dims();
        let (mut r0, mut r1, mut c0, mut c1) = (h, 0, w, 0);
        for r in 0..h {
            for c in 0..w {
                if mask.get(r, c) {
                    r0 = r0.min(r);
                    r1 = r1.max(r + 1);
                    c0 = c0.min(c);
                    c1 = c1.max(c + 1);
                }
            }
        }
        (r1 > 0).then(|| Self::new(c0 as f64, r0 as f64, c1 as f64, r1 as f64))
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    pub fn clip(&self, h: usize, w: usize) -> Self {
        let (w, h) = (w as f64, h as f64);
        Self::new(self.x1.clamp(0.0, w), self.y1.clamp(0.0, h), self.x2.clamp(0.0, w), self.y2.clamp(0.0, h))
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(self, other)
    }
}

/// Intersection over union. Boxes without area have IoU 0 with everything.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy non-maximum suppression. Returns kept indices in descending score
/// order; ties keep the lower index first.
pub fn nms(boxes: &[BBox], scores: &[f64], iou_threshold: f64) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len());
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = Vec::new();
    let mut dead = vec![false; boxes.len()];
    for (pos, &i) in order.iter().enumerate() {
        if dead[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[pos + 1..] {
            if !dead[j] && iou(&boxes[i], &boxes[j]) > iou_threshold {
                dead[j] = true;
            }
        }
    }
    keep
}

/// `(width, height)` of each anchor on a level, scales outer and ratios inner.
pub fn anchor_shapes(scales: &[f64], ratios: &[f64], stride: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(scales.len() * ratios.len());
    for &s in scales {
        let side = s * stride as f64;
        for &r in ratios {
            out.push((side / r.sqrt(), side * r.sqrt()));
        }
    }
    out
}

/// Anchors on an `h x w` level, in `(anchor, y, x)` order to match the
/// channel-major layout of the RPN outputs.
pub fn grid_anchors(h: usize, w: usize, stride: usize, shapes: &[(f64, f64)]) -> Vec<BBox> {
    let s = stride as f64;
    let mut out = Vec::with_capacity(shapes.len() * h * w);
    for &(aw, ah) in shapes {
        for y in 0..h {
            for x in 0..w {
                out.push(BBox::from_center((x as f64 + 0.5) * s, (y as f64 + 0.5) * s, aw, ah));
            }
        }
    }
    out
}

/// Delta encoding `(dx, dy, dw, dh)` relative to a reference box, scaled by
/// per-coordinate weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxCoder {
    pub weights: [f64; 4],
}

/// Upper bound on decoded log-size deltas.
const MAX_LOG_SCALE: f64 = 4.135_166_556_742_356; // ln(1000 / 16)

impl BoxCoder {
    pub const fn new(weights: [f64; 4]) -> Self {
        Self { weights }
    }

    pub fn encode(&self, reference: &BBox, target: &BBox) -> [f64; 4] {
        let (rw, rh) = (reference.width(), reference.height());
        let (rx, ry) = reference.center();
        let (tx, ty) = target.center();
        let [wx, wy, ww, wh] = self.weights;
        [
            wx * (tx - rx) / rw,
            wy * (ty - ry) / rh,
            ww * (target.width() / rw).ln(),
            wh * (target.height() / rh).ln(),
        ]
    }

    pub fn decode(&self, reference: &BBox, deltas: &[f64; 4]) -> BBox {
        let (rw, rh) = (reference.width(), reference.height());
        let (rx, ry) = reference.center();
        let [wx, wy, ww, wh] = self.weights;
        let dw = (deltas[2] / ww).min(MAX_LOG_SCALE);
        let dh = (deltas[3] / wh).min(MAX_LOG_SCALE);
        BBox::from_center(rx + deltas[0] / wx * rw, ry + deltas[1] / wy * rh, rw * dw.exp(), rh * dh.exp())
    }
}

/// Pyramid level (0-based, finest first) for a box, from the canonical-size
/// rule `k = floor(k0 + log2(sqrt(wh) / canonical))` clamped to the levels.
pub fn assign_level(b: &BBox, canonical_size: f64, canonical_level: i32, n_levels: usize) -> usize {
    let side = b.area().sqrt().max(1e-6);
    let k = (canonical_level as f64 + (side / canonical_size).log2()).floor() as i32;
    let lo = 2;
    let hi = lo + n_levels as i32 - 1;
    (k.clamp(lo, hi) - lo) as usize
}
