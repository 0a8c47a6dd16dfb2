use std::path::{Path, PathBuf};

use camrank_tensor::{resize_bilinear, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::hex;
use crate::data::{load_layers, DatasetManifest, LabelLayers};
use crate::error::{Error, Result};
use crate::grid::{DenseMap, Grid, RankMap};
use crate::imageio::{self, RgbPlanes};
use crate::metrics::{score_batch, FixationPoints, ImageScores, MetricValues, RankMapPair, ScoreInput, ScoreOptions};
use crate::model::{checkpoint, BBox, CamRankNet, InstanceProposal};

/// Density above which a ground-truth pixel counts as a fixation.
pub const FIXATION_THRESHOLD: f64 = 0.5;

/// Everything a predictor returns for one image, at the image's own size.
#[derive(Clone, Debug)]
pub struct PredictedMaps {
    pub fixation: DenseMap,
    pub segmentation: DenseMap,
    pub rank: RankMap,
    pub instances: Vec<InstanceProposal>,
}

/// Identifies the run that produced a report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    /// SHA-256 of the architecture config, hex.
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    /// Checkpoint file name and SHA-256 of its bytes.
    pub checkpoint: Option<String>,
    pub checkpoint_sha256: Option<String>,
    pub iteration: Option<usize>,
}

pub trait Predictor: Sync {
    fn predict(&self, layers: &LabelLayers) -> Result<PredictedMaps>;

    fn metadata(&self) -> RunMetadata;
}

/// Copies the ground truth; scores perfectly wherever a layer exists.
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn predict(&self, layers: &LabelLayers) -> Result<PredictedMaps> {
        let (h, w) = (layers.image.h, layers.image.w);
        let fixation = match &layers.fix_gt {
            Some(f) => DenseMap::probability(h, w, f.data().to_vec())?,
            None => DenseMap::probability(h, w, vec![0.0; h * w])?,
        };
        let seg = match &layers.seg_gt {
            Some(m) => m.data().iter().map(|&v| f64::from(u8::from(v))).collect(),
            None => vec![0.0; h * w],
        };
        Ok(PredictedMaps {
            fixation,
            segmentation: DenseMap::probability(h, w, seg)?,
            rank: layers.rank_gt.clone().unwrap_or_else(|| RankMap::filled(h, w, 0)),
            instances: Vec::new(),
        })
    }

    fn metadata(&self) -> RunMetadata {
        RunMetadata::default()
    }
}

/// Predicts nothing anywhere: all-zero maps and no instances.
pub struct BackgroundPredictor;

impl Predictor for BackgroundPredictor {
    fn predict(&self, layers: &LabelLayers) -> Result<PredictedMaps> {
        let (h, w) = (layers.image.h, layers.image.w);
        Ok(PredictedMaps {
            fixation: DenseMap::probability(h, w, vec![0.0; h * w])?,
            segmentation: DenseMap::probability(h, w, vec![0.0; h * w])?,
            rank: RankMap::filled(h, w, 0),
            instances: Vec::new(),
        })
    }

    fn metadata(&self) -> RunMetadata {
        RunMetadata::default()
    }
}

/// A trained network. Inputs are resized to `size x size`, or to the
/// nearest multiple of the size divisor when `size` is `None`, and outputs
/// are mapped back to the image's own size.
pub struct NetPredictor {
    net: CamRankNet,
    size: Option<usize>,
    metadata: RunMetadata,
}

impl NetPredictor {
    pub fn new(net: CamRankNet, size: Option<usize>) -> Result<Self> {
        if let Some(s) = size {
            if s == 0 || s % net.config().size_divisor() != 0 {
                return Err(Error::Config(format!("input size {s} is not a multiple of {}", net.config().size_divisor())));
            }
        }
        let cfg_json = serde_json::to_vec(net.config())?;
        let metadata = RunMetadata {
            config_hash: Some(hex(&Sha256::digest(&cfg_json))),
            seed: Some(net.config().seed),
            ..RunMetadata::default()
        };
        Ok(Self { net, size, metadata })
    }

    pub fn from_checkpoint(path: &Path, size: Option<usize>) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (net, iteration) = checkpoint::from_bytes(&bytes)?;
        let mut p = Self::new(net, size)?;
        p.metadata.checkpoint = path.file_name().map(|n| n.to_string_lossy().into_owned());
        p.metadata.checkpoint_sha256 = Some(hex(&Sha256::digest(&bytes)));
        p.metadata.iteration = Some(iteration);
        Ok(p)
    }

    pub fn net(&self) -> &CamRankNet {
        &self.net
    }

    fn network_size(&self, h: usize, w: usize) -> (usize, usize) {
        if let Some(s) = self.size {
            return (s, s);
        }
        let d = self.net.config().size_divisor();
        let round = |v: usize| (((v + d / 2) / d) * d).max(d);
        (round(h), round(w))
    }

    pub fn predict_image(&self, image: &RgbPlanes) -> Result<PredictedMaps> {
        let (h, w) = (image.h, image.w);
        let (nh, nw) = self.network_size(h, w);
        let input = resize_bilinear(&Tensor::new(&[1, 3, h, w], image.data.clone()), nh, nw);
        let pred = self.net.predict(&input)?.pop().expect("one image in, one prediction out");
        let back = |m: &DenseMap| -> Result<DenseMap> {
            let t = resize_bilinear(&Tensor::new(&[1, 1, nh, nw], m.data().to_vec()), h, w);
            DenseMap::probability(h, w, t.into_data().into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
        };
        let (sy, sx) = (h as f64 / nh as f64, w as f64 / nw as f64);
        let instances: Vec<InstanceProposal> = pred
            .instances
            .into_iter()
            .map(|mut i| {
                let b = i.bbox;
                i.bbox = BBox::new(b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy);
                i
            })
            .collect();
        let threshold = self.net.config().roi.mask_threshold;
        Ok(PredictedMaps {
            fixation: back(&pred.fixation)?,
            segmentation: back(&pred.segmentation)?,
            rank: rank_map_from_instances(&instances, (h, w), threshold),
            instances,
        })
    }
}

impl Predictor for NetPredictor {
    fn predict(&self, layers: &LabelLayers) -> Result<PredictedMaps> {
        self.predict_image(&layers.image)
    }

    fn metadata(&self) -> RunMetadata {
        self.metadata.clone()
    }
}

/// Paints each instance's binarised mask with its rank. Where instances
/// overlap the higher score wins; equal scores keep the earlier instance.
pub fn rank_map_from_instances(instances: &[InstanceProposal], (h, w): (usize, usize), threshold: f64) -> RankMap {
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by(|&a, &b| instances[b].score.total_cmp(&instances[a].score));
    let mut out = RankMap::filled(h, w, 0);
    let mut painted = Grid::filled(h, w, false);
    for i in order {
        let inst = &instances[i];
        if inst.rank == 0 {
            continue;
        }
        let mask = inst.binary_mask(h, w, threshold);
        for (k, &m) in mask.data().iter().enumerate() {
            if m && !painted.data()[k] {
                painted.data_mut()[k] = true;
                out.data_mut()[k] = inst.rank;
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: RunMetadata,
    pub per_image: Vec<ImageScores>,
    /// Per-metric mean over the images where the metric is present.
    pub aggregate: MetricValues,
}

impl EvalReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        imageio::write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        imageio::read_json(path)
    }
}

fn score_input(layers: &LabelLayers, pred: PredictedMaps) -> Result<ScoreInput> {
    let (h, w) = (layers.image.h, layers.image.w);
    let seg = match &layers.seg_gt {
        Some(m) => {
            let gt = DenseMap::probability(h, w, m.data().iter().map(|&v| f64::from(u8::from(v))).collect())?;
            Some((pred.segmentation, gt))
        }
        None => None,
    };
    let rank = match &layers.rank_gt {
        Some(gt) => Some(RankMapPair::new(pred.rank, gt.clone())?),
        None => None,
    };
    let fixation = match &layers.fix_gt {
        Some(f) => {
            let density = DenseMap::density(h, w, f.data().to_vec())?;
            let points = FixationPoints::from_density(&density, FIXATION_THRESHOLD);
            (!points.is_empty()).then_some((pred.fixation, density, points))
        }
        None => None,
    };
    Ok(ScoreInput { id: layers.id.clone(), seg, rank, fixation })
}

/// Predicts and scores every manifest entry. Metrics whose label layer is
/// missing are reported as absent.
pub fn evaluate(predictor: &dyn Predictor, manifest: &DatasetManifest, opts: ScoreOptions) -> Result<EvalReport> {
    let mut inputs = Vec::with_capacity(manifest.entries.len());
    for id in &manifest.entries {
        let layers = load_layers(manifest, id)?;
        let pred = predictor.predict(&layers)?;
        inputs.push(score_input(&layers, pred)?);
    }
    let per_image = score_batch(&inputs, opts)?;
    let aggregate = MetricValues::mean(per_image.iter().map(|s| &s.values));
    Ok(EvalReport { metadata: predictor.metadata(), per_image, aggregate })
}

/// Which layer a directory of PNG maps holds, for [`score_dirs`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoredLayer {
    /// Grayscale predictions against binary ground truth.
    Segmentation,
    /// Literal rank values 0..=3 on both sides.
    Rank,
    /// Grayscale predictions against fixation density maps.
    Fixation,
}

/// Scores every `<id>.png` of `pred_dir` against `gt_dir/<id>.png`.
pub fn score_dirs(pred_dir: &Path, gt_dir: &Path, layer: ScoredLayer, opts: ScoreOptions) -> Result<EvalReport> {
    let preds = imageio::list_files(pred_dir, "png")?;
    if preds.is_empty() {
        return Err(Error::invalid(format!("no .png maps in {}", pred_dir.display())));
    }
    let mut inputs = Vec::with_capacity(preds.len());
    for path in preds {
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let gt_path = gt_dir.join(format!("{id}.png"));
        if !gt_path.is_file() {
            return Err(Error::MissingLayer { id, layer: "gt", path: gt_path });
        }
        let mut input = ScoreInput { id: id.clone(), seg: None, rank: None, fixation: None };
        match layer {
            ScoredLayer::Segmentation => {
                let pred = imageio::read_unit_map(&path)?;
                let gt = imageio::read_gray(&gt_path)?;
                let (h, w) = gt.dims();
                let gt = DenseMap::probability(h, w, gt.data().iter().map(|&v| f64::from(u8::from(v > 127))).collect())?;
                let (ph, pw) = pred.dims();
                input.seg = Some((DenseMap::probability(ph, pw, pred.into_data())?, gt));
            }
            ScoredLayer::Rank => {
                input.rank = Some(RankMapPair::new(imageio::read_gray(&path)?, imageio::read_gray(&gt_path)?)?);
            }
            ScoredLayer::Fixation => {
                let pred = imageio::read_unit_map(&path)?;
                let gt = imageio::read_unit_map(&gt_path)?;
                let (h, w) = gt.dims();
                let density = DenseMap::density(h, w, gt.into_data())?;
                let points = FixationPoints::from_density(&density, FIXATION_THRESHOLD);
                if points.is_empty() {
                    return Err(Error::Validation {
                        id,
                        layer: "fix",
                        reason: format!("no pixel above the fixation threshold {FIXATION_THRESHOLD}"),
                    });
                }
                let (ph, pw) = pred.dims();
                input.fixation = Some((DenseMap::probability(ph, pw, pred.into_data())?, density, points));
            }
        }
        inputs.push(input);
    }
    let per_image = score_batch(&inputs, opts)?;
    let aggregate = MetricValues::mean(per_image.iter().map(|s| &s.values));
    Ok(EvalReport { metadata: RunMetadata::default(), per_image, aggregate })
}

/// Files written by [`infer`] for one image.
#[derive(Clone, Debug)]
pub struct InferOutput {
    pub id: String,
    pub fixation: PathBuf,
    pub segmentation: PathBuf,
    pub rank: PathBuf,
    pub instances: PathBuf,
}

/// Runs the network on every `.png`/`.jpg` in `input` (or on `input` itself
/// when it is a file) and writes `fixation/`, `segmentation/`, `rank/` and
/// `instances/` under `out`.
pub fn infer(predictor: &NetPredictor, input: &Path, out: &Path) -> Result<Vec<InferOutput>> {
    let files = if input.is_dir() {
        let mut f = imageio::list_files(input, "png")?;
        f.extend(imageio::list_files(input, "jpg")?);
        f.sort();
        f
    } else {
        vec![input.to_path_buf()]
    };
    for dir in ["fixation", "segmentation", "rank", "instances"] {
        imageio::create_dir(&out.join(dir))?;
    }
    let mut written = Vec::with_capacity(files.len());
    for file in files {
        let id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| Error::invalid(format!("{} has no file name", file.display())))?;
        let pred = predictor.predict_image(&imageio::read_rgb(&file)?)?;
        let o = InferOutput {
            fixation: out.join("fixation").join(format!("{id}.png")),
            segmentation: out.join("segmentation").join(format!("{id}.png")),
            rank: out.join("rank").join(format!("{id}.png")),
            instances: out.join("instances").join(format!("{id}.json")),
            id,
        };
        imageio::write_unit_map(&o.fixation, pred.fixation.grid())?;
        imageio::write_unit_map(&o.segmentation, pred.segmentation.grid())?;
        imageio::write_gray(&o.rank, &pred.rank)?;
        imageio::write_json(&o.instances, &pred.instances)?;
        written.push(o);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proposal(bbox: BBox, rank: u8, score: f64) -> InstanceProposal {
        InstanceProposal {
            bbox,
            objectness: 1.0,
            rank_logits: [0.0; 4],
            box_deltas: [0.0; 4],
            score,
            rank,
            mask: Grid::filled(4, 4, 1.0),
        }
    }

    #[test]
    fn empty_proposals_give_background() {
        assert!(rank_map_from_instances(&[], (5, 6), 0.5).data().iter().all(|&v| v == 0));
    }

    #[test]
    fn full_box_mask_paints_the_box() {
        let m = rank_map_from_instances(&[proposal(BBox::new(1.0, 2.0, 4.0, 5.0), 2, 0.8)], (8, 8), 0.5);
        for r in 0..8 {
            for c in 0..8 {
                let inside = (2..5).contains(&r) && (1..4).contains(&c);
                assert_eq!(m.get(r, c), if inside { 2 } else { 0 }, "({r}, {c})");
            }
        }
    }

    #[test]
    fn higher_score_wins_the_overlap() {
        let a = proposal(BBox::new(0.0, 0.0, 4.0, 4.0), 1, 0.9);
        let b = proposal(BBox::new(2.0, 2.0, 6.0, 6.0), 3, 0.6);
        for order in [vec![a.clone(), b.clone()], vec![b, a]] {
            let m = rank_map_from_instances(&order, (6, 6), 0.5);
            assert_eq!(m.get(3, 3), 1);
            assert_eq!(m.get(5, 5), 3);
            assert_eq!(m.get(0, 0), 1);
        }
    }
}
