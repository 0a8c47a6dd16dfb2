//! Evaluation metrics for segmentation, rank and fixation maps.

mod emd;
mod fixation;
mod scorer;
mod segmentation;

pub use emd::{emd, emd_exact, transport_cost, EMD_EXACT_LIMIT};
pub use fixation::{
    auc_borji, auc_from_negatives, auc_judd, auc_shuffled, cc, fixation_metrics, kld, nss, sim, FixationMetrics,
    FixationOptions, FixationPoints, KLD_EPS,
};
pub use scorer::{score_batch, ImageScores, MetricValues, ScoreInput, ScoreOptions};
pub use segmentation::{
    mean_e_measure, mean_f_measure, s_measure, s_object, s_region, threshold_ladder, BETA_SQ, N_THRESHOLDS,
};

use crate::error::{Error, Result};
use crate::grid::{validate_rank_map, DenseMap, RankMap};

/// Mean absolute difference between two probability maps.
pub fn mae(pred: &DenseMap, gt: &DenseMap) -> Result<f64> {
    pred.check_same_dims(gt, "mae")?;
    if pred.data().is_empty() {
        return Err(Error::EmptySample);
    }
    let sum: f64 = pred.data().iter().zip(gt.data()).map(|(p, g)| (p - g).abs()).sum();
    Ok(sum / pred.data().len() as f64)
}

/// Predicted and ground-truth rank maps of equal size.
#[derive(Clone, Debug, PartialEq)]
pub struct RankMapPair {
    pred: RankMap,
    gt: RankMap,
}

impl RankMapPair {
    pub fn new(pred: RankMap, gt: RankMap) -> Result<Self> {
        pred.check_same_dims(&gt, "rank maps")?;
        validate_rank_map(&pred)?;
        validate_rank_map(&gt)?;
        if pred.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(Self { pred, gt })
    }

    pub fn pred(&self) -> &RankMap {
        &self.pred
    }

    pub fn gt(&self) -> &RankMap {
        &self.gt
    }
}

/// Mean per-pixel absolute rank difference.
pub fn r_mae(pair: &RankMapPair) -> f64 {
    let total: u64 = pair
        .pred
        .data()
        .iter()
        .zip(pair.gt.data())
        .map(|(&p, &g)| u64::from(p.abs_diff(g)))
        .sum();
    total as f64 / pair.pred.len() as f64
}
