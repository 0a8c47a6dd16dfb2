//! Threshold-ladder F and E measures and the structure measure.

use crate::error::{Error, Result};
use crate::grid::DenseMap;

/// Default β² for the F-measure.
pub const BETA_SQ: f64 = 0.3;

/// Number of binarisation thresholds in the ladder.
pub const N_THRESHOLDS: usize = 255;

const EPS: f64 = f64::EPSILON;

/// Thresholds `k / 256` for `k = 1..=255`; a pixel is foreground when `p >= t`.
pub fn threshold_ladder() -> Vec<f64> {
    (1..=N_THRESHOLDS).map(|k| k as f64 / 256.0).collect()
}

fn check_pair(pred: &DenseMap, gt: &DenseMap, what: &'static str) -> Result<()> {
    pred.check_same_dims(gt, what)?;
    if pred.data().is_empty() {
        return Err(Error::EmptySample);
    }
    if !gt.is_binary() {
        return Err(Error::invalid(format!("{what}: ground truth must be binary")));
    }
    Ok(())
}

/// Per-threshold confusion counts. `p >= k/256` is equivalent to
/// `floor(256 p) >= k` because scaling by 256 is exact, so one histogram
/// pass gives every threshold.
struct Ladder {
    /// `fg_at[k]`: gt-foreground pixels predicted foreground at threshold k.
    fg_at: Vec<u64>,
    bg_at: Vec<u64>,
    n_fg: u64,
    n: u64,
}

impl Ladder {
    fn new(pred: &DenseMap, gt: &DenseMap) -> Self {
        let mut hist_fg = [0u64; 256];
        let mut hist_bg = [0u64; 256];
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            let bin = ((p * 256.0).floor() as usize).min(255);
            if g == 1.0 {
                hist_fg[bin] += 1;
            } else {
                hist_bg[bin] += 1;
            }
        }
        let mut fg_at = vec![0; 256];
        let mut bg_at = vec![0; 256];
        let (mut cf, mut cb) = (0, 0);
        for k in (1..256).rev() {
            cf += hist_fg[k];
            cb += hist_bg[k];
            fg_at[k] = cf;
            bg_at[k] = cb;
        }
        let n_fg = hist_fg.iter().sum();
        Self { fg_at, bg_at, n_fg, n: pred.data().len() as u64 }
    }
}

pub(crate) fn f_from_counts(tp: u64, fp: u64, n_fg: u64, beta_sq: f64) -> f64 {
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if n_fg == 0 { 0.0 } else { tp as f64 / n_fg as f64 };
    let denom = beta_sq * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta_sq) * precision * recall / denom
    }
}

/// F-measure averaged over the threshold ladder.
pub fn mean_f_measure(pred: &DenseMap, gt: &DenseMap, beta_sq: f64) -> Result<f64> {
    check_pair(pred, gt, "mean F-measure")?;
    if !(beta_sq > 0.0 && beta_sq.is_finite()) {
        return Err(Error::invalid("beta^2 must be positive"));
    }
    let l = Ladder::new(pred, gt);
    let total: f64 = (1..=N_THRESHOLDS).map(|k| f_from_counts(l.fg_at[k], l.bg_at[k], l.n_fg, beta_sq)).sum();
    Ok(total / N_THRESHOLDS as f64)
}

pub(crate) fn e_from_counts(tp: u64, fp: u64, n_fg: u64, n: u64) -> f64 {
    let nf = n as f64;
    if n_fg == 0 {
        // enhanced = 1 - FM
        return (n - tp - fp) as f64 / nf;
    }
    if n_fg == n {
        return tp as f64 / nf;
    }
    let fn_ = n_fg - tp;
    let tn = n - n_fg - fp;
    let mean_fm = (tp + fp) as f64 / nf;
    let mean_gt = n_fg as f64 / nf;
    let enhanced = |fm: f64, g: f64| {
        let (df, dg) = (fm - mean_fm, g - mean_gt);
        let align = 2.0 * df * dg / (df * df + dg * dg + EPS);
        (align + 1.0) * (align + 1.0) / 4.0
    };
    let sum = tp as f64 * enhanced(1.0, 1.0)
        + fp as f64 * enhanced(1.0, 0.0)
        + fn_ as f64 * enhanced(0.0, 1.0)
        + tn as f64 * enhanced(0.0, 0.0);
    sum / nf
}

/// Enhanced-alignment measure averaged over the threshold ladder.
pub fn mean_e_measure(pred: &DenseMap, gt: &DenseMap) -> Result<f64> {
    check_pair(pred, gt, "mean E-measure")?;
    let l = Ladder::new(pred, gt);
    let total: f64 = (1..=N_THRESHOLDS).map(|k| e_from_counts(l.fg_at[k], l.bg_at[k], l.n_fg, l.n)).sum();
    Ok(total / N_THRESHOLDS as f64)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = if n > 1 { values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    (mean, var.sqrt(), n)
}

fn object_score(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (x, sigma, n) = mean_std(values);
    if n == 0 {
        return 0.0;
    }
    2.0 * x / (x * x + 1.0 + sigma + EPS)
}

/// Object-aware structural similarity.
pub fn s_object(pred: &DenseMap, gt: &DenseMap) -> Result<f64> {
    check_pair(pred, gt, "S-measure")?;
    let (p, g) = (pred.data(), gt.data());
    let fg = p.iter().zip(g).filter(|(_, &g)| g == 1.0).map(|(&p, _)| p);
    let bg = p.iter().zip(g).filter(|(_, &g)| g == 0.0).map(|(&p, _)| 1.0 - p);
    let u = g.iter().sum::<f64>() / g.len() as f64;
    Ok(u * object_score(fg) + (1.0 - u) * object_score(bg))
}

/// SSIM-style similarity of one quadrant, given as `(pred, gt)` value pairs.
fn quadrant_ssim(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let x = pairs.iter().map(|v| v.0).sum::<f64>() / n;
    let y = pairs.iter().map(|v| v.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(p, g) in pairs {
        sxx += (p - x) * (p - x);
        syy += (g - y) * (g - y);
        sxy += (p - x) * (g - y);
    }
    let d = n - 1.0 + EPS;
    let (sxx, syy, sxy) = (sxx / d, syy / d, sxy / d);
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sxx + syy);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Region-aware structural similarity: the maps are split into four blocks
/// at the (rounded, 1-based) gt centroid and block scores are area-weighted.
pub fn s_region(pred: &DenseMap, gt: &DenseMap) -> Result<f64> {
    check_pair(pred, gt, "S-measure")?;
    let (h, w) = gt.dims();
    let g = gt.data();
    let total: f64 = g.iter().sum();
    let (cx, cy) = if total == 0.0 {
        ((w as f64 / 2.0).round() as usize, (h as f64 / 2.0).round() as usize)
    } else {
        let (mut sx, mut sy) = (0.0, 0.0);
        for r in 0..h {
            for c in 0..w {
                let v = g[r * w + c];
                sx += v * (c + 1) as f64;
                sy += v * (r + 1) as f64;
            }
        }
        ((sx / total).round() as usize, (sy / total).round() as usize)
    };
    let area = (h * w) as f64;
    let blocks = [(0, cy, 0, cx), (0, cy, cx, w), (cy, h, 0, cx), (cy, h, cx, w)];
    let mut q = 0.0;
    let mut used_weight = 0.0;
    for (i, &(r0, r1, c0, c1)) in blocks.iter().enumerate() {
        let weight = if i < 3 {
            ((r1 - r0) * (c1 - c0)) as f64 / area
        } else {
            1.0 - used_weight
        };
        used_weight += weight;
        if r1 <= r0 || c1 <= c0 {
            continue;
        }
        let pairs: Vec<(f64, f64)> = (r0..r1)
            .flat_map(|r| (c0..c1).map(move |c| r * w + c))
            .map(|i| (pred.data()[i], g[i]))
            .collect();
        q += weight * quadrant_ssim(&pairs);
    }
    Ok(q)
}

/// Structure measure `alpha * S_object + (1 - alpha) * S_region`, clamped at
/// zero. An all-background gt scores `1 - mean(pred)`, an all-foreground gt
/// scores `mean(pred)`.
pub fn s_measure(pred: &DenseMap, gt: &DenseMap, alpha: f64) -> Result<f64> {
    check_pair(pred, gt, "S-measure")?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("S-measure alpha {alpha} outside [0, 1]")));
    }
    let n = gt.data().len() as f64;
    let y = gt.data().iter().sum::<f64>() / n;
    let x = pred.data().iter().sum::<f64>() / n;
    if y == 0.0 {
        return Ok(1.0 - x);
    }
    if y == 1.0 {
        return Ok(x);
    }
    let q = alpha * s_object(pred, gt)? + (1.0 - alpha) * s_region(pred, gt)?;
    Ok(q.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: usize, w: usize, v: Vec<f64>) -> DenseMap {
        DenseMap::probability(h, w, v).unwrap()
    }

    #[test]
    fn ladder_shape() {
        let t = threshold_ladder();
        assert_eq!(t.len(), 255);
        assert!(t[0] > 0.0 && t[254] < 1.0);
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let gt = map(3, 3, vec![0., 1., 1., 0., 1., 0., 0., 0., 0.]);
        assert_eq!(mean_f_measure(&gt, &gt, BETA_SQ).unwrap(), 1.0);
        assert!((mean_e_measure(&gt, &gt).unwrap() - 1.0).abs() < 1e-12);
        assert!((s_measure(&gt, &gt, 0.5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_prediction_has_zero_f() {
        let gt = map(2, 2, vec![1., 0., 0., 0.]);
        let pred = map(2, 2, vec![0.0; 4]);
        assert_eq!(mean_f_measure(&pred, &gt, BETA_SQ).unwrap(), 0.0);
    }

    #[test]
    fn flipped_checkerboard_has_zero_f() {
        let gt = map(4, 4, (0..16).map(|i| ((i / 4 + i % 4) % 2) as f64).collect());
        let pred = map(4, 4, gt.data().iter().map(|v| 1.0 - v).collect());
        assert_eq!(mean_f_measure(&pred, &gt, BETA_SQ).unwrap(), 0.0);
        assert!(mean_e_measure(&pred, &gt).unwrap() < 1e-12);
    }

    #[test]
    fn degenerate_gt_uses_mean() {
        let pred = map(2, 2, vec![0.5; 4]);
        let ones = map(2, 2, vec![1.0; 4]);
        let zeros = map(2, 2, vec![0.0; 4]);
        assert_eq!(s_measure(&pred, &ones, 0.5).unwrap(), 0.5);
        assert_eq!(s_measure(&pred, &zeros, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn non_binary_gt_rejected() {
        let g = map(1, 2, vec![0.5, 1.0]);
        assert!(mean_f_measure(&g, &g, BETA_SQ).is_err());
        assert!(s_measure(&g, &g, 0.5).is_err());
    }
}
