use camrank_tensor::{Graph, Tensor, Var};

use crate::error::{Error, Result};
use crate::grid::DenseMap;

/// Clamp for the logarithms of the probability-space BCE.
pub const BCE_EPS: f64 = 1e-12;

/// Mean pixelwise BCE between probabilities and soft targets.
pub fn fixation_loss_var(g: &mut Graph, pred: Var, target: &Tensor) -> Var {
    let bce = g.bce_prob(pred, target, BCE_EPS);
    g.mean(bce)
}

fn as_tensor(m: &DenseMap) -> Tensor {
    let (h, w) = m.dims();
    Tensor::new(&[1, 1, h, w], m.data().to_vec())
}

pub fn fixation_loss(pred: &DenseMap, gt: &DenseMap) -> Result<f64> {
    pred.check_same_dims(gt, "fixation_loss")?;
    if gt.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("fixation target must lie in [0, 1]"));
    }
    let mut g = Graph::new();
    let p = g.constant(as_tensor(pred));
    let l = fixation_loss_var(&mut g, p, &as_tensor(gt));
    Ok(g.scalar(l))
}

/// Odd local-mean window: 31 at 352 px, scaled with the larger side, at least 3.
pub fn structure_window(h: usize, w: usize) -> usize {
    let side = h.max(w) as f64;
    let half = (15.0 * side / 352.0).round() as usize;
    (2 * half + 1).max(3)
}

/// `1 + 5 |mean_k(gt) - gt|` for every pixel of an `h x w` map, where the
/// local mean averages only the pixels inside the image.
pub fn edge_weights(gt: &[f64], h: usize, w: usize, k: usize) -> Vec<f64> {
    assert_eq!(gt.len(), h * w);
    let r = (k / 2) as isize;
    // summed-area table with a zero border
    let mut sat = vec![0.0; (h + 1) * (w + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * (w + 1) + x + 1] =
                gt[y * w + x] + sat[y * (w + 1) + x + 1] + sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
        }
    }
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize) as usize;
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (y0, y1) = (clampi(y as isize - r, h), clampi(y as isize + r + 1, h));
            let (x0, x1) = (clampi(x as isize - r, w), clampi(x as isize + r + 1, w));
            let s = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0] + sat[y0 * (w + 1) + x0];
            let mean = s / ((y1 - y0) * (x1 - x0)) as f64;
            out.push(1.0 + 5.0 * (mean - gt[y * w + x]).abs());
        }
    }
    out
}

/// Edge-weighted BCE plus edge-weighted IoU, each computed per image and
/// averaged over the batch. `pred` and `target` are `[N, 1, H, W]`.
pub fn structure_loss_var(g: &mut Graph, pred: Var, target: &Tensor, k: usize) -> Var {
    let (n, c, h, w) = target.dims4();
    assert_eq!(c, 1, "structure loss expects one channel");
    assert_eq!(g.shape(pred), target.shape(), "structure loss shape mismatch");
    let hw = h * w;
    let mut weights = Vec::with_capacity(n * hw);
    for b in 0..n {
        weights.extend(edge_weights(&target.data()[b * hw..(b + 1) * hw], h, w, k));
    }
    let wt = Tensor::new(target.shape(), weights);
    let tw = wt.zip_map(target, |a, b| a * b);
    let inv_wsum = Tensor::new(&[n, 1], (0..n).map(|b| 1.0 / wt.data()[b * hw..(b + 1) * hw].iter().sum::<f64>()).collect());
    let tw_sum_plus1 = Tensor::new(&[n, 1], (0..n).map(|b| tw.data()[b * hw..(b + 1) * hw].iter().sum::<f64>() + 1.0).collect());

    let wt = g.constant(wt);
    let tw = g.constant(tw);
    let inv_wsum = g.constant(inv_wsum);
    let tw_sum_plus1 = g.constant(tw_sum_plus1);

    let bce = g.bce_prob(pred, target, super::BCE_EPS);
    let wbce = g.mul(bce, wt);
    let wbce = g.sum_spatial(wbce);
    let wbce = g.mul(wbce, inv_wsum);

    let pt = g.mul(pred, tw);
    let inter = g.sum_spatial(pt);
    let pw = g.mul(pred, wt);
    let pw = g.sum_spatial(pw);
    // union - inter + 1 = sum(p w) + sum(t w) - inter + 1
    let den = g.sub(pw, inter);
    let den = g.add(den, tw_sum_plus1);
    let num = g.affine(inter, 1.0, 1.0);
    let ratio = g.div(num, den);
    let wiou = g.one_minus(ratio);

    let per_image = g.add(wbce, wiou);
    g.mean(per_image)
}

pub fn structure_loss_with_window(pred: &DenseMap, gt: &DenseMap, k: usize) -> Result<f64> {
    pred.check_same_dims(gt, "structure_loss")?;
    if !gt.is_binary() {
        return Err(Error::invalid("structure loss needs a binary target"));
    }
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::invalid(format!("window must be odd and positive, got {k}")));
    }
    let mut g = Graph::new();
    let p = g.constant(as_tensor(pred));
    let l = structure_loss_var(&mut g, p, &as_tensor(gt), k);
    Ok(g.scalar(l))
}

pub fn structure_loss(pred: &DenseMap, gt: &DenseMap) -> Result<f64> {
    let (h, w) = gt.dims();
    structure_loss_with_window(pred, gt, structure_window(h, w))
}

/// `l_f + lambda * l_c`.
pub fn joint_loss(l_f: f64, l_c: f64, lambda: f64) -> f64 {
    l_f + lambda * l_c
}
