//! Fixation-prediction metrics: distribution similarities, NSS and the AUC family.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::emd::emd;
use crate::error::{Error, Result};
use crate::grid::DenseMap;

/// Regulariser added to both distributions before the KL divergence.
pub const KLD_EPS: f64 = 1e-12;

/// Set of fixated pixels of one image, deduplicated and sorted row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixationPoints {
    h: usize,
    w: usize,
    /// `(row, col)` pairs.
    points: Vec<(usize, usize)>,
}

impl FixationPoints {
    pub fn new(h: usize, w: usize, points: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut points: Vec<_> = points.into_iter().collect();
        if let Some(&(r, c)) = points.iter().find(|&&(r, c)| r >= h || c >= w) {
            return Err(Error::invalid(format!("fixation ({r}, {c}) outside {h}x{w} map")));
        }
        points.sort_unstable();
        points.dedup();
        Ok(Self { h, w, points })
    }

    /// Pixels where `density > threshold`.
    pub fn from_density(density: &DenseMap, threshold: f64) -> Self {
        let (h, w) = density.dims();
        let points = (0..h * w).filter(|&i| density.data()[i] > threshold).map(|i| (i / w, i % w)).collect();
        Self { h, w, points }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn flat(&self) -> impl Iterator<Item = usize> + '_ {
        self.points.iter().map(|&(r, c)| r * self.w + c)
    }

    /// Maps the points onto an `h x w` grid by proportional scaling.
    pub fn rescaled(&self, h: usize, w: usize) -> Self {
        if (h, w) == (self.h, self.w) {
            return self.clone();
        }
        let pts = self.points.iter().map(|&(r, c)| (r * h / self.h, c * w / self.w));
        Self::new(h, w, pts).expect("scaled points stay in range")
    }

    /// Union of several point sets on an `h x w` grid.
    pub fn union<'a>(h: usize, w: usize, sets: impl IntoIterator<Item = &'a FixationPoints>) -> Self {
        let pts: Vec<_> = sets.into_iter().flat_map(|s| s.rescaled(h, w).points).collect();
        Self::new(h, w, pts).expect("rescaled points stay in range")
    }
}

fn check_density_pair(pred: &DenseMap, gt: &DenseMap, what: &'static str) -> Result<()> {
    pred.check_same_dims(gt, what)?;
    if pred.data().is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(())
}

fn check_points(pred: &DenseMap, pts: &FixationPoints, what: &str) -> Result<()> {
    if pts.is_empty() {
        return Err(Error::invalid(format!("{what} needs at least one fixation point")));
    }
    if pts.dims() != pred.dims() {
        return Err(Error::ShapeMismatch { what: "fixation points", left: pred.dims(), right: pts.dims() });
    }
    Ok(())
}

/// Scales a nonnegative map to sum 1; an all-zero map becomes uniform.
pub(crate) fn to_distribution(values: &[f64]) -> Vec<f64> {
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        values.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / values.len() as f64; values.len()]
    }
}

fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Histogram intersection of the two maps as distributions.
pub fn sim(pred: &DenseMap, gt: &DenseMap) -> Result<f64> {
    check_density_pair(pred, gt, "SIM")?;
    let (p, q) = (to_distribution(pred.data()), to_distribution(gt.data()));
    Ok(p.iter().zip(&q).map(|(a, b)| a.min(*b)).sum())
}

/// Pearson correlation; 0 when either map is constant.
pub fn cc(pred: &DenseMap, gt: &DenseMap) -> Result<f64> {
    check_density_pair(pred, gt, "CC")?;
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(pred.data()) || constant(gt.data()) {
        return Ok(0.0);
    }
    let n = pred.data().len() as f64;
    let mp = pred.data().iter().sum::<f64>() / n;
    let mg = gt.data().iter().sum::<f64>() / n;
    let (mut spp, mut sgg, mut spg) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        spp += (p - mp) * (p - mp);
        sgg += (g - mg) * (g - mg);
        spg += (p - mp) * (g - mg);
    }
    if spp == 0.0 || sgg == 0.0 {
        return Ok(0.0);
    }
    Ok((spg / (spp.sqrt() * sgg.sqrt())).clamp(-1.0, 1.0))
}

/// `KL(gt || pred)` after adding [`KLD_EPS`] to both distributions and renormalising.
pub fn kld(pred: &DenseMap, gt: &DenseMap) -> Result<f64> {
    check_density_pair(pred, gt, "KLD")?;
    let reg = |v: &[f64]| {
        let d = to_distribution(v);
        let total = 1.0 + KLD_EPS * d.len() as f64;
        d.into_iter().map(|x| (x + KLD_EPS) / total).collect::<Vec<_>>()
    };
    let (p, q) = (reg(pred.data()), reg(gt.data()));
    let d: f64 = p.iter().zip(&q).map(|(p, q)| q * (q / p).ln()).sum();
    Ok(d.max(0.0))
}

/// Mean of the z-scored prediction (sample standard deviation) at the fixations.
pub fn nss(pred: &DenseMap, points: &FixationPoints) -> Result<f64> {
    check_points(pred, points, "NSS")?;
    let v = pred.data();
    if v.iter().all(|&x| x == v[0]) {
        return Ok(0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    if var == 0.0 {
        return Ok(0.0);
    }
    let std = var.sqrt();
    Ok(points.flat().map(|i| (v[i] - mean) / std).sum::<f64>() / points.len() as f64)
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0).sum()
}

/// Number of entries `>= t` in a descending-sorted slice.
fn count_at_least(desc: &[f64], t: f64) -> usize {
    desc.partition_point(|&v| v >= t)
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    v
}

/// AUC with one threshold per distinct fixated value: at threshold `t` the
/// true-positive rate is the share of fixations `>= t` and the
/// false-positive rate the share of non-fixated pixels `>= t`. Without ties
/// this is the classic Judd curve; tied fixations share one ROC point.
pub fn auc_judd(pred: &DenseMap, points: &FixationPoints) -> Result<f64> {
    check_points(pred, points, "AUC-Judd")?;
    let s = pred.data();
    let n_fix = points.len();
    let n_pix = s.len();
    if n_pix == n_fix {
        return Err(Error::invalid("AUC-Judd needs at least one non-fixated pixel"));
    }
    let mut fixated = vec![false; n_pix];
    for i in points.flat() {
        fixated[i] = true;
    }
    let fix_desc = sorted_desc(points.flat().map(|i| s[i]).collect());
    let neg_desc = sorted_desc((0..n_pix).filter(|&i| !fixated[i]).map(|i| s[i]).collect());
    let mut tp = vec![0.0];
    let mut fp = vec![0.0];
    let mut k = 0;
    while k < n_fix {
        let t = fix_desc[k];
        while k < n_fix && fix_desc[k] == t {
            k += 1;
        }
        tp.push(k as f64 / n_fix as f64);
        fp.push(count_at_least(&neg_desc, t) as f64 / (n_pix - n_fix) as f64);
    }
    tp.push(1.0);
    fp.push(1.0);
    Ok(trapezoid(&fp, &tp))
}

/// AUC of positive against negative saliency values with a fixed threshold
/// ladder `0, step, 2 step, ...` up to the largest value.
pub fn auc_from_negatives(pos: &[f64], neg: &[f64], step: f64) -> f64 {
    let top = pos.iter().chain(neg).copied().fold(0.0, f64::max);
    let n_steps = (top / step + 1e-10).floor() as usize;
    let pos_desc = sorted_desc(pos.to_vec());
    let neg_desc = sorted_desc(neg.to_vec());
    let mut tp = vec![0.0];
    let mut fp = vec![0.0];
    for k in (0..=n_steps).rev() {
        let t = k as f64 * step;
        tp.push(count_at_least(&pos_desc, t) as f64 / pos.len() as f64);
        fp.push(count_at_least(&neg_desc, t) as f64 / neg.len() as f64);
    }
    tp.push(1.0);
    fp.push(1.0);
    trapezoid(&fp, &tp)
}

/// Borji AUC: negatives are uniformly sampled pixels, one per fixation,
/// averaged over `n_splits` seeded draws.
pub fn auc_borji(pred: &DenseMap, points: &FixationPoints, n_splits: usize, step: f64, seed: u64) -> Result<f64> {
    check_points(pred, points, "AUC-Borji")?;
    if n_splits == 0 {
        return Err(Error::invalid("AUC-Borji needs at least one split"));
    }
    let s = min_max_normalize(pred.data());
    let pos: Vec<f64> = points.flat().map(|i| s[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..n_splits {
        let neg: Vec<f64> = (0..pos.len()).map(|_| s[rng.random_range(0..s.len())]).collect();
        total += auc_from_negatives(&pos, &neg, step);
    }
    Ok(total / n_splits as f64)
}

/// Shuffled AUC: negatives are drawn without replacement from fixations of
/// other images. `None` when `others` is empty.
pub fn auc_shuffled(
    pred: &DenseMap,
    points: &FixationPoints,
    others: &FixationPoints,
    n_splits: usize,
    step: f64,
    seed: u64,
) -> Result<Option<f64>> {
    check_points(pred, points, "sAUC")?;
    if others.is_empty() {
        return Ok(None);
    }
    if n_splits == 0 {
        return Err(Error::invalid("sAUC needs at least one split"));
    }
    let others = others.rescaled(pred.dims().0, pred.dims().1);
    let s = min_max_normalize(pred.data());
    let pos: Vec<f64> = points.flat().map(|i| s[i]).collect();
    let pool: Vec<usize> = others.flat().collect();
    let n_neg = pos.len().min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..n_splits {
        let neg: Vec<f64> = sample(&mut rng, pool.len(), n_neg).iter().map(|j| s[pool[j]]).collect();
        total += auc_from_negatives(&pos, &neg, step);
    }
    Ok(Some(total / n_splits as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixationOptions {
    pub n_shuffles: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for FixationOptions {
    fn default() -> Self {
        Self { n_shuffles: 100, step: 0.1, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixationMetrics {
    pub sim: f64,
    pub cc: f64,
    pub emd: f64,
    pub kld: f64,
    pub nss: f64,
    pub auc_j: f64,
    pub auc_b: f64,
    /// Absent when no other image contributes negatives.
    pub sauc: Option<f64>,
}

/// All eight fixation metrics of one prediction.
pub fn fixation_metrics(
    pred: &DenseMap,
    gt_density: &DenseMap,
    gt_points: &FixationPoints,
    others: &FixationPoints,
    opts: FixationOptions,
) -> Result<FixationMetrics> {
    Ok(FixationMetrics {
        sim: sim(pred, gt_density)?,
        cc: cc(pred, gt_density)?,
        emd: emd(pred, gt_density)?,
        kld: kld(pred, gt_density)?,
        nss: nss(pred, gt_points)?,
        auc_j: auc_judd(pred, gt_points)?,
        auc_b: auc_borji(pred, gt_points, opts.n_shuffles, opts.step, opts.seed)?,
        sauc: auc_shuffled(pred, gt_points, others, opts.n_shuffles, opts.step, opts.seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn density(h: usize, w: usize, v: Vec<f64>) -> DenseMap {
        DenseMap::density(h, w, v).unwrap()
    }

    #[test]
    fn identical_maps() {
        let m = density(3, 3, vec![0.0, 1.0, 2.0, 0.5, 0.0, 3.0, 1.0, 1.0, 0.0]);
        assert!((sim(&m, &m).unwrap() - 1.0).abs() < 1e-12);
        assert!((cc(&m, &m).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(kld(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn uniform_prediction_has_zero_nss() {
        let m = density(4, 4, vec![0.3; 16]);
        let pts = FixationPoints::new(4, 4, [(1, 2)]).unwrap();
        assert_eq!(nss(&m, &pts).unwrap(), 0.0);
    }

    #[test]
    fn judd_perfect_and_uniform() {
        let mut v = vec![0.0; 16];
        v[5] = 1.0;
        let m = density(4, 4, v);
        let pts = FixationPoints::new(4, 4, [(1, 1)]).unwrap();
        assert_eq!(auc_judd(&m, &pts).unwrap(), 1.0);
        let flat = density(4, 4, vec![0.5; 16]);
        // every pixel ties with the fixation, the curve is the diagonal
        assert!((auc_judd(&flat, &pts).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn points_are_deduplicated_and_checked() {
        let p = FixationPoints::new(2, 2, [(1, 1), (0, 0), (1, 1)]).unwrap();
        assert_eq!(p.points(), &[(0, 0), (1, 1)]);
        assert!(FixationPoints::new(2, 2, [(2, 0)]).is_err());
    }

    #[test]
    fn shuffled_auc_without_others_is_absent() {
        let m = density(2, 2, vec![0.0, 1.0, 0.0, 0.0]);
        let pts = FixationPoints::new(2, 2, [(0, 1)]).unwrap();
        let none = FixationPoints::new(2, 2, []).unwrap();
        assert_eq!(auc_shuffled(&m, &pts, &none, 10, 0.1, 1).unwrap(), None);
    }

    #[test]
    fn empty_points_rejected() {
        let m = density(2, 2, vec![0.0, 1.0, 0.0, 0.0]);
        let none = FixationPoints::new(2, 2, []).unwrap();
        assert!(nss(&m, &none).is_err());
        assert!(auc_judd(&m, &none).is_err());
    }
}
