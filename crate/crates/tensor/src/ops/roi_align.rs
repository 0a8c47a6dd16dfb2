use crate::exec;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Box in input-image pixel coordinates attached to a batch index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoiBox {
    pub batch: usize,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

/// Bilinear pooling geometry shared by the forward and backward passes.
#[derive(Clone, Copy, Debug)]
pub struct RoiAlignSpec {
    /// Feature-map pixels per input pixel (`1 / stride`).
    pub spatial_scale: f64,
    pub output: usize,
    pub sampling_ratio: usize,
}

/// Per-bin list of `(flat_pixel, weight)` taps, already divided by the sample count.
type BinTaps = Vec<Vec<(usize, f64)>>;

fn bilinear_taps(y: f64, x: f64, h: usize, w: usize, weight: f64, out: &mut Vec<(usize, f64)>) {
    if y < -1.0 || y > h as f64 || x < -1.0 || x > w as f64 {
        return;
    }
    let (mut y, mut x) = (y.max(0.0), x.max(0.0));
    let mut y0 = y.floor() as usize;
    let mut x0 = x.floor() as usize;
    let y1;
    let x1;
    if y0 >= h - 1 {
        y0 = h - 1;
        y1 = h - 1;
        y = y0 as f64;
    } else {
        y1 = y0 + 1;
    }
    if x0 >= w - 1 {
        x0 = w - 1;
        x1 = w - 1;
        x = x0 as f64;
    } else {
        x1 = x0 + 1;
    }
    let (ly, lx) = (y - y0 as f64, x - x0 as f64);
    let (hy, hx) = (1.0 - ly, 1.0 - lx);
    out.push((y0 * w + x0, weight * hy * hx));
    out.push((y0 * w + x1, weight * hy * lx));
    out.push((y1 * w + x0, weight * ly * hx));
    out.push((y1 * w + x1, weight * ly * lx));
}

fn roi_taps(roi: &RoiBox, spec: &RoiAlignSpec, h: usize, w: usize) -> BinTaps {
    // half-pixel aligned box
    let sx = roi.x1 * spec.spatial_scale - 0.5;
    let sy = roi.y1 * spec.spatial_scale - 0.5;
    let rw = (roi.x2 - roi.x1) * spec.spatial_scale;
    let rh = (roi.y2 - roi.y1) * spec.spatial_scale;
    let p = spec.output;
    let (bw, bh) = (rw / p as f64, rh / p as f64);
    let gy = if spec.sampling_ratio > 0 { spec.sampling_ratio } else { (rh / p as f64).ceil().max(1.0) as usize };
    let gx = if spec.sampling_ratio > 0 { spec.sampling_ratio } else { (rw / p as f64).ceil().max(1.0) as usize };
    let inv = 1.0 / (gy * gx) as f64;
    let mut bins = Vec::with_capacity(p * p);
    for ph in 0..p {
        for pw in 0..p {
            let mut t = Vec::with_capacity(4 * gy * gx);
            for iy in 0..gy {
                let y = sy + ph as f64 * bh + (iy as f64 + 0.5) * bh / gy as f64;
                for ix in 0..gx {
                    let x = sx + pw as f64 * bw + (ix as f64 + 0.5) * bw / gx as f64;
                    bilinear_taps(y, x, h, w, inv, &mut t);
                }
            }
            bins.push(t);
        }
    }
    bins
}

/// ROIAlign over `features [N, C, H, W]` producing `[R, C, P, P]`. Not recorded on any graph.
pub fn roi_align(features: &Tensor, rois: &[RoiBox], spec: RoiAlignSpec) -> Tensor {
    let (n, c, h, w) = features.dims4();
    let p = spec.output;
    let mut y = Tensor::zeros(&[rois.len(), c, p, p]);
    let fv = features.data();
    exec::for_each_chunk(y.data_mut(), c * p * p, |r, out| {
        let roi = &rois[r];
        assert!(roi.batch < n, "roi batch index {} out of range", roi.batch);
        let bins = roi_taps(roi, &spec, h, w);
        for ch in 0..c {
            let plane = &fv[(roi.batch * c + ch) * h * w..(roi.batch * c + ch + 1) * h * w];
            for (b, taps) in bins.iter().enumerate() {
                out[ch * p * p + b] = taps.iter().map(|&(i, wt)| wt * plane[i]).sum();
            }
        }
    });
    y
}

impl Graph {
    /// Differentiable ROIAlign with respect to the feature map.
    pub fn roi_align(&mut self, features: Var, rois: &[RoiBox], spec: RoiAlignSpec) -> Var {
        let y = roi_align(self.value(features), rois, spec);
        let rois = rois.to_vec();
        self.op(
            y,
            &[features],
            Box::new(move |g, p, _| {
                let (_, c, h, w) = p[0].dims4();
                let pp = spec.output * spec.output;
                let all_bins: Vec<BinTaps> = exec::map_slice(&rois, |r| roi_taps(r, &spec, h, w));
                let mut gf = Tensor::zeros(p[0].shape());
                let gv = g.data();
                exec::for_each_chunk(gf.data_mut(), h * w, |plane_idx, dst| {
                    let (b, ch) = (plane_idx / c, plane_idx % c);
                    for (r, roi) in rois.iter().enumerate() {
                        if roi.batch != b {
                            continue;
                        }
                        let src = &gv[(r * c + ch) * pp..(r * c + ch + 1) * pp];
                        for (bin, taps) in all_bins[r].iter().enumerate() {
                            for &(i, wt) in taps {
                                dst[i] += wt * src[bin];
                            }
                        }
                    }
                });
                vec![gf]
            }),
        )
    }
}
