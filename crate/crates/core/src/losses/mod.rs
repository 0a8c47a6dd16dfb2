//! Training objectives.
//!
//! Every loss has a graph form (taking [`Var`]s, used in training and the
//! gradient checks) and, where it makes sense, a plain form on maps or
//! slices that builds a throwaway graph.

mod dense;
mod ranking;

pub use dense::{
    edge_weights, fixation_loss, fixation_loss_var, joint_loss, structure_loss, structure_loss_var,
    structure_loss_with_window, structure_window, BCE_EPS,
};
pub use ranking::{
    ranking_total_loss, weighted_rank_loss, weighted_rank_loss_var, RankingLosses, RoiTerms, RpnTerms,
    SimilarityPrior,
};

use camrank_tensor::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

/// Scalar loss components of one iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_f: f64,
    pub l_c: f64,
    pub lambda: f64,
    pub l_fc: f64,
    pub l_rpn: f64,
    pub l_rank: f64,
    pub l_mask: f64,
    pub l_total: f64,
    /// `l_fc + l_total`, the quantity that is minimised.
    pub objective: f64,
}

impl LossReport {
    /// Both additive identities, compared bit for bit.
    pub fn identities_hold(&self) -> bool {
        self.l_fc.to_bits() == (self.l_f + self.lambda * self.l_c).to_bits()
            && self.l_total.to_bits() == (self.l_rpn + self.l_rank + self.l_mask).to_bits()
            && self.objective.to_bits() == (self.l_fc + self.l_total).to_bits()
    }

    /// Name of the first non-finite component, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        [
            ("L_f", self.l_f),
            ("L_c", self.l_c),
            ("L_fc", self.l_fc),
            ("L_rpn", self.l_rpn),
            ("L_rank", self.l_rank),
            ("L_mask", self.l_mask),
            ("L_total", self.l_total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Graph nodes of every component; `objective` is the backward root.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub l_f: Var,
    pub l_c: Var,
    pub lambda: f64,
    pub l_fc: Var,
    pub ranking: RankingLosses,
    pub objective: Var,
}

impl LossVars {
    pub fn report(&self, g: &Graph) -> LossReport {
        LossReport {
            l_f: g.scalar(self.l_f),
            l_c: g.scalar(self.l_c),
            lambda: self.lambda,
            l_fc: g.scalar(self.l_fc),
            l_rpn: g.scalar(self.ranking.l_rpn),
            l_rank: g.scalar(self.ranking.l_rank),
            l_mask: g.scalar(self.ranking.l_mask),
            l_total: g.scalar(self.ranking.l_total),
            objective: g.scalar(self.objective),
        }
    }
}

/// Dense predictions `[N, 1, H, W]` with their targets.
pub struct DenseTerms<'a> {
    pub fixation: Var,
    pub fixation_gt: &'a Tensor,
    pub segmentation: Var,
    pub segmentation_gt: &'a Tensor,
    /// Local-mean window of the structure loss.
    pub window: usize,
}

/// `L_f + lambda * L_c + L_rpn + L_rank + L_mask`.
pub fn joint_objective(
    g: &mut Graph,
    dense: &DenseTerms,
    rpn: &RpnTerms,
    roi: &RoiTerms,
    prior: &SimilarityPrior,
    lambda: f64,
) -> LossVars {
    let l_f = fixation_loss_var(g, dense.fixation, dense.fixation_gt);
    let l_c = structure_loss_var(g, dense.segmentation, dense.segmentation_gt, dense.window);
    let weighted = g.scale(l_c, lambda);
    let l_fc = g.add(l_f, weighted);
    let ranking = ranking_total_loss(g, rpn, roi, prior);
    let objective = g.add(l_fc, ranking.l_total);
    LossVars { l_f, l_c, lambda, l_fc, ranking, objective }
}
