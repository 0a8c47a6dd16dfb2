//! Scoring a batch of images with every applicable metric.

use camrank_tensor::exec;
use serde::{Deserialize, Serialize};

use super::fixation::{fixation_metrics, FixationOptions, FixationPoints};
use super::segmentation::{mean_e_measure, mean_f_measure, s_measure, BETA_SQ};
use super::{mae, r_mae, RankMapPair};
use crate::error::Result;
use crate::grid::DenseMap;

/// Predictions and labels of one image. Absent layers are skipped and the
/// matching metrics reported as `None`.
#[derive(Clone, Debug)]
pub struct ScoreInput {
    pub id: String,
    /// `(prediction, binary gt)`.
    pub seg: Option<(DenseMap, DenseMap)>,
    pub rank: Option<RankMapPair>,
    /// `(prediction, gt density, gt fixations)`.
    pub fixation: Option<(DenseMap, DenseMap, FixationPoints)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub beta_sq: f64,
    pub alpha: f64,
    pub fixation: FixationOptions,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self { beta_sq: BETA_SQ, alpha: 0.5, fixation: FixationOptions::default() }
    }
}

/// One value per metric; `None` when the layer it needs is missing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub mae: Option<f64>,
    pub mean_f: Option<f64>,
    pub mean_e: Option<f64>,
    pub s_alpha: Option<f64>,
    pub r_mae: Option<f64>,
    /// MAE between the foreground unions (rank > 0) of the two rank maps.
    pub rank_union_mae: Option<f64>,
    pub sim: Option<f64>,
    pub cc: Option<f64>,
    pub emd: Option<f64>,
    pub kld: Option<f64>,
    pub nss: Option<f64>,
    pub auc_j: Option<f64>,
    pub auc_b: Option<f64>,
    pub sauc: Option<f64>,
}

impl MetricValues {
    fn fields_mut(&mut self) -> [&mut Option<f64>; 14] {
        [
            &mut self.mae,
            &mut self.mean_f,
            &mut self.mean_e,
            &mut self.s_alpha,
            &mut self.r_mae,
            &mut self.rank_union_mae,
            &mut self.sim,
            &mut self.cc,
            &mut self.emd,
            &mut self.kld,
            &mut self.nss,
            &mut self.auc_j,
            &mut self.auc_b,
            &mut self.sauc,
        ]
    }

    /// Per-metric arithmetic mean over the images that report it.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a MetricValues>) -> MetricValues {
        let mut sums = [0.0; 14];
        let mut counts = [0usize; 14];
        for item in items {
            let mut item = *item;
            for (k, v) in item.fields_mut().into_iter().enumerate() {
                if let Some(v) = *v {
                    sums[k] += v;
                    counts[k] += 1;
                }
            }
        }
        let mut out = MetricValues::default();
        for (k, slot) in out.fields_mut().into_iter().enumerate() {
            *slot = (counts[k] > 0).then(|| sums[k] / counts[k] as f64);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScores {
    pub id: String,
    #[serde(flatten)]
    pub values: MetricValues,
}

fn score_one(input: &ScoreInput, others: &FixationPoints, opts: ScoreOptions, seed: u64) -> Result<ImageScores> {
    let mut v = MetricValues::default();
    if let Some((pred, gt)) = &input.seg {
        v.mae = Some(mae(pred, gt)?);
        v.mean_f = Some(mean_f_measure(pred, gt, opts.beta_sq)?);
        v.mean_e = Some(mean_e_measure(pred, gt)?);
        v.s_alpha = Some(s_measure(pred, gt, opts.alpha)?);
    }
    if let Some(pair) = &input.rank {
        v.r_mae = Some(r_mae(pair));
        let (h, w) = pair.gt().dims();
        let fg = |m: &crate::grid::RankMap| {
            DenseMap::probability(h, w, m.data().iter().map(|&r| f64::from(u8::from(r > 0))).collect())
        };
        v.rank_union_mae = Some(mae(&fg(pair.pred())?, &fg(pair.gt())?)?);
    }
    if let Some((pred, density, points)) = &input.fixation {
        let fo = FixationOptions { seed, ..opts.fixation };
        let m = fixation_metrics(pred, density, points, others, fo)?;
        v.sim = Some(m.sim);
        v.cc = Some(m.cc);
        v.emd = Some(m.emd);
        v.kld = Some(m.kld);
        v.nss = Some(m.nss);
        v.auc_j = Some(m.auc_j);
        v.auc_b = Some(m.auc_b);
        v.sauc = m.sauc;
    }
    Ok(ImageScores { id: input.id.clone(), values: v })
}

/// Scores every image, in parallel when the `parallel` feature is on.
/// Shuffled-AUC negatives for image `i` come from the fixations of all other
/// images in the batch; its random stream is seeded with `seed + i`.
pub fn score_batch(inputs: &[ScoreInput], opts: ScoreOptions) -> Result<Vec<ImageScores>> {
    let jobs: Vec<usize> = (0..inputs.len()).collect();
    let results = exec::map_slice(&jobs, |&i| {
        let others = match &inputs[i].fixation {
            Some((pred, _, _)) => {
                let (h, w) = pred.dims();
                FixationPoints::union(
                    h,
                    w,
                    inputs.iter().enumerate().filter(|&(j, _)| j != i).filter_map(|(_, x)| x.fixation.as_ref().map(|f| &f.2)),
                )
            }
            None => FixationPoints::new(0, 0, []).expect("empty set"),
        };
        score_one(&inputs[i], &others, opts, opts.fixation.seed.wrapping_add(i as u64))
    });
    results.into_iter().collect()
}
