use camrank_tensor::{Graph, ParamStore, Tensor, Var};
use rand::Rng;

use super::attention::reverse_gate;
use super::backbone::{self, extract_features, StageFeatures};
use super::boxes::{nms, BBox, BoxCoder};
use super::config::{ModelConfig, ReverseTarget};
use super::decoder::{self, decode, project, Head};
use super::instance::{argmax4, softmax4, InstanceProposal};
use super::layers::Init;
use super::pyramid::{self, build_pyramid, PyramidFeatures};
use super::roi::{self, box_head, mask_head, pool_rois};
use super::rpn::{self, generate_proposals, level_anchors, rpn_forward, Proposal, RpnLevel};
use super::targets::{sample_rois, sample_rpn, GtInstance, TrainTargets};
use crate::error::{Error, Result};
use crate::grid::{DenseMap, Grid};
use crate::losses::{RoiTerms, RpnTerms};

/// Backbone, fixation and camouflage decoders, and the ranking branch.
#[derive(Clone, Debug)]
pub struct CamRankNet {
    config: ModelConfig,
    params: ParamStore,
}

/// Graph nodes of one forward pass over a batch.
#[derive(Clone, Debug)]
pub struct Forward {
    pub stages: StageFeatures,
    /// Stage features gated by `1 - F`.
    pub guided: StageFeatures,
    /// Fixation map `F`, `[N, 1, H, W]`.
    pub fixation: Var,
    /// Segmentation map `S`, `[N, 1, H, W]`.
    pub segmentation: Var,
    pub pyramid: PyramidFeatures,
    pub rpn: Vec<RpnLevel>,
    /// Anchors per level, shared by every image.
    pub anchors: Vec<Vec<BBox>>,
    pub image_hw: (usize, usize),
    pub batch: usize,
}

/// Inference output for one image.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub fixation: DenseMap,
    pub segmentation: DenseMap,
    /// Detections sorted by descending score.
    pub instances: Vec<InstanceProposal>,
}

fn init_params(cfg: &ModelConfig) -> ParamStore {
    let mut store = ParamStore::new();
    let mut init = Init::new(&mut store, cfg.seed);
    backbone::init(cfg, &mut init);
    decoder::init(cfg, &mut init, Head::Fixation);
    decoder::init(cfg, &mut init, Head::Camouflage);
    pyramid::init(cfg, &mut init);
    rpn::init(cfg, &mut init);
    roi::init(cfg, &mut init);
    store
}

impl CamRankNet {
    /// Fresh network with weights drawn from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config);
        Ok(Self { config, params })
    }

    /// Wraps loaded weights after checking them against the architecture.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let expected = init_params(&config);
        if expected.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, t) in expected.iter() {
            let got = params.get(name).ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if got.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn box_coder(&self) -> BoxCoder {
        BoxCoder::new(self.config.roi.box_weights)
    }

    /// Dense maps and ranking-branch features for `[N, C, H, W]` images.
    pub fn forward(&self, g: &mut Graph, images: Var) -> Result<Forward> {
        let (p, cfg) = (&self.params, &self.config);
        let stages = extract_features(g, p, cfg, images)?;
        let (n, _, h, w) = g.value(images).dims4();
        let fix_feats = project(g, p, Head::Fixation, &stages);
        let fixation = decode(g, p, cfg, Head::Fixation, &fix_feats, (h, w));
        let mut guided = stages;
        for (i, s) in stages.0.iter().enumerate() {
            if i == 0 || cfg.reverse_target == ReverseTarget::AllStages {
                guided.0[i] = reverse_gate(g, *s, fixation);
            }
        }
        let cam_feats = project(g, p, Head::Camouflage, &guided);
        let segmentation = decode(g, p, cfg, Head::Camouflage, &cam_feats, (h, w));
        let pyramid = build_pyramid(g, p, &stages);
        let rpn = rpn_forward(g, p, &pyramid);
        Ok(Forward {
            stages,
            guided,
            fixation,
            segmentation,
            pyramid,
            rpn,
            anchors: level_anchors(cfg, h, w),
            image_hw: (h, w),
            batch: n,
        })
    }

    /// Proposal-stage boxes of one image, best first.
    pub fn proposals(&self, g: &Graph, fwd: &Forward, image: usize, top_n: usize) -> Vec<Proposal> {
        let levels: Vec<(&Tensor, &Tensor)> = fwd.rpn.iter().map(|l| (g.value(l.objectness), g.value(l.deltas))).collect();
        generate_proposals(&self.config, &levels, &fwd.anchors, image, fwd.image_hw, top_n)
    }

    /// Samples anchors and ROIs for every image. Proposals come from the
    /// current RPN outputs (no gradient flows through them) plus the
    /// ground-truth boxes.
    pub fn sample_targets<R: Rng>(&self, g: &Graph, fwd: &Forward, gts: &[Vec<GtInstance>], rng: &mut R) -> TrainTargets {
        assert_eq!(gts.len(), fwd.batch, "one instance list per image");
        let cfg = &self.config;
        let all_anchors: Vec<BBox> = fwd.anchors.iter().flatten().copied().collect();
        let coder = self.box_coder();
        let mut targets = TrainTargets::default();
        for (n, inst) in gts.iter().enumerate() {
            targets.rpn.push(sample_rpn(
                &all_anchors,
                inst,
                cfg.rpn.positive_iou,
                cfg.rpn.batch_per_image,
                cfg.rpn.positive_fraction,
                rng,
            ));
            let props = self.proposals(g, fwd, n, cfg.rpn.post_nms_top_n_train);
            targets.rois.extend(sample_rois(
                n,
                &props,
                inst,
                cfg.roi.detection_iou,
                cfg.roi.batch_per_image,
                cfg.roi.positive_fraction,
                &coder,
                cfg.roi.mask_size,
                rng,
            ));
        }
        targets
    }

    /// Runs the heads on fixed targets and gathers everything the ranking
    /// losses need.
    pub fn ranking_terms(&self, g: &mut Graph, fwd: &Forward, targets: &TrainTargets) -> (RpnTerms, RoiTerms) {
        (self.rpn_terms(g, fwd, targets), self.roi_terms(g, fwd, targets))
    }

    fn rpn_terms(&self, g: &mut Graph, fwd: &Forward, targets: &TrainTargets) -> RpnTerms {
        let mut offsets = vec![0];
        for a in &fwd.anchors {
            offsets.push(offsets.last().unwrap() + a.len());
        }
        let mut logits = Vec::new();
        let mut deltas = Vec::new();
        let mut labels = Vec::new();
        let mut delta_targets = Vec::new();
        for (l, level) in fwd.rpn.iter().enumerate() {
            let (_, a, h, w) = g.value(level.objectness).dims4();
            let hw = h * w;
            let mut obj_idx = Vec::new();
            let mut del_idx = Vec::new();
            for (n, s) in targets.rpn.iter().enumerate() {
                for (k, &j) in s.anchors.iter().enumerate() {
                    if j < offsets[l] || j >= offsets[l + 1] {
                        continue;
                    }
                    let local = j - offsets[l];
                    obj_idx.push(n * a * hw + local);
                    labels.push(if s.positive[k] { 1.0 } else { 0.0 });
                    if let Some(t) = s.deltas[k] {
                        let (ai, pos) = (local / hw, local % hw);
                        del_idx.extend((0..4).map(|c| n * 4 * a * hw + (4 * ai + c) * hw + pos));
                        delta_targets.push(t);
                    }
                }
            }
            if !obj_idx.is_empty() {
                logits.push(g.gather(level.objectness, &obj_idx));
            }
            if !del_idx.is_empty() {
                deltas.push(g.gather(level.deltas, &del_idx));
            }
        }
        let logits = concat_nonempty(g, &logits);
        let deltas = concat_nonempty(g, &deltas).map(|d| g.reshape(d, &[delta_targets.len(), 4]));
        RpnTerms { logits, labels, deltas, delta_targets, beta: self.config.rpn.smooth_l1_beta }
    }

    fn roi_terms(&self, g: &mut Graph, fwd: &Forward, targets: &TrainTargets) -> RoiTerms {
        let cfg = &self.config;
        let mut terms = RoiTerms {
            logits: None,
            labels: targets.rois.iter().map(|r| r.label).collect(),
            deltas: None,
            delta_targets: Vec::new(),
            beta: cfg.roi.smooth_l1_beta,
            mask_logits: None,
            mask_targets: Vec::new(),
        };
        if targets.rois.is_empty() {
            return terms;
        }
        let rois: Vec<(usize, BBox)> = targets.rois.iter().map(|r| (r.batch, r.bbox)).collect();
        let pooled = pool_rois(g, cfg, &fwd.pyramid, &rois, cfg.roi.pool_size);
        let (cls, deltas) = box_head(g, &self.params, pooled);
        terms.logits = Some(cls);
        let pos: Vec<usize> = (0..rois.len()).filter(|&i| targets.rois[i].deltas.is_some()).collect();
        if pos.is_empty() {
            return terms;
        }
        terms.deltas = Some(g.index_select0(deltas, &pos));
        terms.delta_targets = pos.iter().map(|&i| targets.rois[i].deltas.expect("positive")).collect();
        let pos_rois: Vec<(usize, BBox)> = pos.iter().map(|&i| rois[i]).collect();
        let pooled = pool_rois(g, cfg, &fwd.pyramid, &pos_rois, cfg.roi.mask_size);
        terms.mask_logits = Some(mask_head(g, &self.params, pooled));
        terms.mask_targets = pos.iter().flat_map(|&i| targets.rois[i].mask.clone().expect("positive")).collect();
        terms
    }

    /// Scores, refines, suppresses and masks the proposals of one image.
    pub fn detect(&self, g: &mut Graph, fwd: &Forward, image: usize) -> Vec<InstanceProposal> {
        let cfg = &self.config;
        let props = self.proposals(g, fwd, image, cfg.rpn.post_nms_top_n_test);
        if props.is_empty() {
            return Vec::new();
        }
        let rois: Vec<(usize, BBox)> = props.iter().map(|p| (image, p.bbox)).collect();
        let pooled = pool_rois(g, cfg, &fwd.pyramid, &rois, cfg.roi.pool_size);
        let (cls, deltas) = box_head(g, &self.params, pooled);
        let (cls, deltas) = (g.value(cls), g.value(deltas));
        let coder = self.box_coder();
        let (h, w) = fwd.image_hw;
        let mut found = Vec::new();
        for (i, p) in props.iter().enumerate() {
            let logits: [f64; 4] = cls.data()[4 * i..4 * i + 4].try_into().expect("4 logits");
            let rank = argmax4(&logits);
            let score = softmax4(&logits)[rank];
            if rank == 0 || score <= cfg.roi.score_threshold {
                continue;
            }
            let d: [f64; 4] = deltas.data()[4 * i..4 * i + 4].try_into().expect("4 deltas");
            let bbox = coder.decode(&p.bbox, &d).clip(h, w);
            if bbox.width() < 1e-3 || bbox.height() < 1e-3 {
                continue;
            }
            found.push(InstanceProposal {
                bbox,
                objectness: p.objectness,
                rank_logits: logits,
                box_deltas: d,
                score,
                rank: rank as u8,
                mask: Grid::filled(0, 0, 0.0),
            });
        }
        let boxes: Vec<BBox> = found.iter().map(|d| d.bbox).collect();
        let scores: Vec<f64> = found.iter().map(|d| d.score).collect();
        let mut keep = nms(&boxes, &scores, cfg.roi.nms_iou);
        keep.truncate(cfg.roi.max_detections);
        let mut kept: Vec<InstanceProposal> = keep.into_iter().map(|i| found[i].clone()).collect();
        if kept.is_empty() {
            return kept;
        }
        let m = cfg.roi.mask_size;
        let rois: Vec<(usize, BBox)> = kept.iter().map(|d| (image, d.bbox)).collect();
        let pooled = pool_rois(g, cfg, &fwd.pyramid, &rois, m);
        let logits = mask_head(g, &self.params, pooled);
        let probs = g.sigmoid(logits);
        let probs = g.value(probs);
        for (k, d) in kept.iter_mut().enumerate() {
            d.mask = Grid::new(m, m, probs.data()[k * m * m..(k + 1) * m * m].to_vec()).expect("mask grid");
        }
        kept
    }

    /// Full inference on `[N, C, H, W]` images.
    pub fn predict(&self, images: &Tensor) -> Result<Vec<Prediction>> {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        let fwd = self.forward(&mut g, x)?;
        let (h, w) = fwd.image_hw;
        let hw = h * w;
        let mut out = Vec::with_capacity(fwd.batch);
        for n in 0..fwd.batch {
            let f = g.value(fwd.fixation).data()[n * hw..(n + 1) * hw].to_vec();
            let s = g.value(fwd.segmentation).data()[n * hw..(n + 1) * hw].to_vec();
            let instances = self.detect(&mut g, &fwd, n);
            out.push(Prediction {
                fixation: DenseMap::probability(h, w, f)?,
                segmentation: DenseMap::probability(h, w, s)?,
                instances,
            });
        }
        Ok(out)
    }
}

fn concat_nonempty(g: &mut Graph, parts: &[Var]) -> Option<Var> {
    match parts.len() {
        0 => None,
        1 => Some(parts[0]),
        _ => Some(g.concat(parts, 0)),
    }
}
