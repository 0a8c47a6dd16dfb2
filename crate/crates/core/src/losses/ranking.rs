use camrank_tensor::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 4x4 penalty matrix; entry `(m, n)` weights the loss of predicting rank `m`
/// when the truth is rank `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPrior {
    matrix: [[f64; 4]; 4],
}

impl Default for SimilarityPrior {
    /// `0.2 + 0.1 |m - n|`.
    fn default() -> Self {
        Self::affine(0.2, 0.1).expect("positive defaults")
    }
}

impl SimilarityPrior {
    pub fn new(matrix: [[f64; 4]; 4]) -> Result<Self> {
        if matrix.iter().flatten().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("similarity prior entries must be positive and finite"));
        }
        Ok(Self { matrix })
    }

    /// `base + step |m - n|`.
    pub fn affine(base: f64, step: f64) -> Result<Self> {
        let mut matrix = [[0.0; 4]; 4];
        for (m, row) in matrix.iter_mut().enumerate() {
            for (n, v) in row.iter_mut().enumerate() {
                *v = base + step * m.abs_diff(n) as f64;
            }
        }
        Self::new(matrix)
    }

    /// All ones: plain cross-entropy.
    pub fn uniform() -> Self {
        Self { matrix: [[1.0; 4]; 4] }
    }

    pub fn get(&self, predicted: usize, truth: usize) -> f64 {
        self.matrix[predicted][truth]
    }

    pub fn matrix(&self) -> &[[f64; 4]; 4] {
        &self.matrix
    }

    /// For each true rank, the weight never decreases with rank distance.
    pub fn is_distance_monotone(&self) -> bool {
        (0..4usize).all(|n| {
            (0..4usize).all(|m| (0..4usize).all(|m2| m.abs_diff(n) <= m2.abs_diff(n) || self.get(m, n) >= self.get(m2, n)))
        })
    }
}

/// Mean over rows of `CE(logits_r, gt_r) * S_p(argmax logits_r, gt_r)` for
/// `[R, 4]` logits. `R = 0` gives a constant 0.
pub fn weighted_rank_loss_var(g: &mut Graph, logits: Var, gt: &[usize], prior: &SimilarityPrior) -> Var {
    let r = gt.len();
    assert_eq!(g.shape(logits), &[r, 4], "rank logits must be [R, 4]");
    if r == 0 {
        return g.constant(Tensor::scalar(0.0));
    }
    let lv = g.value(logits);
    let weights: Vec<f64> = (0..r)
        .map(|i| {
            let row: [f64; 4] = lv.data()[4 * i..4 * i + 4].try_into().expect("row of 4");
            prior.get(crate::model::argmax4(&row), gt[i])
        })
        .collect();
    let idx: Vec<usize> = gt.iter().enumerate().map(|(i, &k)| 4 * i + k).collect();
    let ls = g.log_softmax_rows(logits);
    let picked = g.gather(ls, &idx);
    let w = g.constant(Tensor::new(&[r], weights));
    let weighted = g.mul(picked, w);
    let total = g.sum(weighted);
    g.scale(total, -1.0 / r as f64)
}

pub fn weighted_rank_loss(logits: &[[f64; 4]], gt: &[u8], prior: &SimilarityPrior) -> Result<f64> {
    if logits.len() != gt.len() {
        return Err(Error::invalid("one ground-truth rank per ROI is required"));
    }
    if let Some(bad) = gt.iter().find(|&&k| k > 3) {
        return Err(Error::invalid(format!("rank {bad} is outside 0..=3")));
    }
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(&[logits.len(), 4], logits.iter().flatten().copied().collect()));
    let gt: Vec<usize> = gt.iter().map(|&k| k as usize).collect();
    let l = weighted_rank_loss_var(&mut g, x, &gt, prior);
    Ok(g.scalar(l))
}

/// Proposal-stage outputs gathered at the sampled anchors.
#[derive(Clone, Debug)]
pub struct RpnTerms {
    /// Objectness logits `[S]` of all sampled anchors.
    pub logits: Option<Var>,
    pub labels: Vec<f64>,
    /// Deltas `[P, 4]` of the positive sampled anchors.
    pub deltas: Option<Var>,
    pub delta_targets: Vec<[f64; 4]>,
    pub beta: f64,
}

/// Detection-stage outputs at the sampled ROIs.
#[derive(Clone, Debug)]
pub struct RoiTerms {
    /// Rank logits `[R, 4]`.
    pub logits: Option<Var>,
    pub labels: Vec<usize>,
    /// Deltas `[P, 4]` of the positive ROIs.
    pub deltas: Option<Var>,
    pub delta_targets: Vec<[f64; 4]>,
    pub beta: f64,
    /// Mask logits `[P, 1, m, m]` of the positive ROIs.
    pub mask_logits: Option<Var>,
    /// Binary targets, `P * m * m` values.
    pub mask_targets: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct RankingLosses {
    pub l_rpn: Var,
    pub l_rank: Var,
    pub l_mask: Var,
    pub l_total: Var,
}

/// Sum of smooth-L1 over `[P, 4]` deltas, divided by `denom`.
fn box_loss(g: &mut Graph, deltas: Option<Var>, targets: &[[f64; 4]], beta: f64, denom: usize) -> Option<Var> {
    let d = deltas.filter(|_| !targets.is_empty())?;
    let t = Tensor::new(&[targets.len(), 4], targets.iter().flatten().copied().collect());
    let l = g.smooth_l1(d, &t, beta);
    let s = g.sum(l);
    Some(g.scale(s, 1.0 / denom.max(1) as f64))
}

fn zero(g: &mut Graph) -> Var {
    g.constant(Tensor::scalar(0.0))
}

fn sum_present(g: &mut Graph, a: Option<Var>, b: Option<Var>) -> Var {
    match (a, b) {
        (Some(a), Some(b)) => g.add(a, b),
        (Some(v), None) | (None, Some(v)) => v,
        (None, None) => zero(g),
    }
}

/// `L_rpn + L_rank + L_mask`.
///
/// * `L_rpn`: mean objectness BCE over sampled anchors plus smooth-L1 on the
///   positive anchors, normalised by the number of sampled anchors.
/// * `L_rank`: prior-weighted rank cross-entropy plus smooth-L1 on positive
///   ROI deltas, normalised by the number of sampled ROIs.
/// * `L_mask`: mean per-pixel BCE over the positive ROIs, 0 without any.
pub fn ranking_total_loss(g: &mut Graph, rpn: &RpnTerms, roi: &RoiTerms, prior: &SimilarityPrior) -> RankingLosses {
    let n_anchor = rpn.labels.len();
    let cls = rpn.logits.filter(|_| n_anchor > 0).map(|x| {
        let t = Tensor::new(&[n_anchor], rpn.labels.clone());
        let l = g.bce_with_logits(x, &t);
        g.mean(l)
    });
    let reg = box_loss(g, rpn.deltas, &rpn.delta_targets, rpn.beta, n_anchor);
    let l_rpn = sum_present(g, cls, reg);

    let n_roi = roi.labels.len();
    let rank = roi.logits.filter(|_| n_roi > 0).map(|x| weighted_rank_loss_var(g, x, &roi.labels, prior));
    let reg = box_loss(g, roi.deltas, &roi.delta_targets, roi.beta, n_roi);
    let l_rank = sum_present(g, rank, reg);

    let l_mask = match roi.mask_logits {
        Some(m) if !roi.mask_targets.is_empty() => {
            let t = Tensor::new(g.shape(m), roi.mask_targets.clone());
            let l = g.bce_with_logits(m, &t);
            g.mean(l)
        }
        _ => zero(g),
    };
    let l_total = g.add_scalars(&[l_rpn, l_rank, l_mask]);
    RankingLosses { l_rpn, l_rank, l_mask, l_total }
}
