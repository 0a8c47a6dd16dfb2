//! Central finite differences against the graph's analytic gradients.

use camrank::data::{collate, synthesize_sample, Batch, DifficultySpec};
use camrank::losses::{
    fixation_loss_var, joint_objective, structure_loss_var, structure_window, weighted_rank_loss_var, DenseTerms,
    SimilarityPrior,
};
use camrank::model::{CamRankNet, ModelConfig, TrainTargets};
use camrank_tensor::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
pub const FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default)]
pub struct Comparison {
    pub checked: usize,
    pub worst: f64,
}

impl Comparison {
    fn add(&mut self, analytic: f64, numeric: f64) {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
        self.checked += 1;
        self.worst = self.worst.max(err);
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.worst <= TOLERANCE
    }
}

/// Checks every coordinate of one input of `loss`.
pub fn check_input(input: &Tensor, loss: impl Fn(&mut Graph, Var) -> Var) -> Comparison {
    let mut g = Graph::new();
    let x = g.leaf(input.clone());
    let l = loss(&mut g, x);
    let grads = g.backward(l);
    let analytic = grads.get(x).expect("input reaches the loss").clone();
    let eval = |t: Tensor| {
        let mut g = Graph::new();
        let x = g.constant(t);
        let l = loss(&mut g, x);
        g.scalar(l)
    };
    let mut cmp = Comparison::default();
    for k in 0..input.numel() {
        let mut plus = input.clone();
        plus.data_mut()[k] += STEP;
        let mut minus = input.clone();
        minus.data_mut()[k] -= STEP;
        cmp.add(analytic.data()[k], (eval(plus) - eval(minus)) / (2.0 * STEP));
    }
    cmp
}

fn unit_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

fn binary_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect())
}

pub fn fixation_loss_check() -> Comparison {
    let pred = unit_tensor(&[2, 1, 6, 6], 1, 0.05, 0.95);
    let gt = unit_tensor(&[2, 1, 6, 6], 2, 0.0, 1.0);
    check_input(&pred, |g, x| fixation_loss_var(g, x, &gt))
}

pub fn structure_loss_check() -> Comparison {
    let pred = unit_tensor(&[2, 1, 7, 6], 3, 0.05, 0.95);
    let gt = binary_tensor(&[2, 1, 7, 6], 4);
    check_input(&pred, |g, x| structure_loss_var(g, x, &gt, 3))
}

pub fn weighted_rank_loss_check() -> Comparison {
    // distinct logits keep the argmax, and with it the prior weight, fixed under the step
    let logits = unit_tensor(&[6, 4], 5, -2.0, 2.0);
    let gt = [0, 1, 2, 3, 2, 1];
    check_input(&logits, |g, x| weighted_rank_loss_var(g, x, &gt, &SimilarityPrior::default()))
}

/// 16x16 scenes for the toy model.
pub fn toy_batch() -> Batch {
    let spec = DifficultySpec { max_instances: 2, ..DifficultySpec::default() };
    let samples: Vec<_> = (0..2).map(|i| synthesize_sample(11, i, 16, &spec).expect("toy scene")).collect();
    collate(&samples.iter().collect::<Vec<_>>()).expect("equal sizes")
}

fn joint_value(net: &CamRankNet, batch: &Batch, targets: &TrainTargets, want_grads: bool) -> (f64, Option<Vec<Option<Tensor>>>) {
    let mut g = Graph::new();
    let x = g.constant(batch.images.clone());
    let fwd = net.forward(&mut g, x).expect("toy forward");
    let (rpn, roi) = net.ranking_terms(&mut g, &fwd, targets);
    let (h, w) = fwd.image_hw;
    let dense = DenseTerms {
        fixation: fwd.fixation,
        fixation_gt: &batch.fix,
        segmentation: fwd.segmentation,
        segmentation_gt: &batch.seg,
        window: structure_window(h, w),
    };
    let losses = joint_objective(&mut g, &dense, &rpn, &roi, &SimilarityPrior::default(), 1.0);
    let grads = want_grads.then(|| g.backward(losses.objective).for_params(net.params()));
    (g.scalar(losses.objective), grads)
}

/// Full objective of the toy model with the anchor and ROI samples frozen,
/// checked at `per_tensor` random coordinates of every parameter tensor.
pub fn joint_loss_check(per_tensor: usize) -> Comparison {
    let batch = toy_batch();
    let mut net = CamRankNet::new(ModelConfig::toy()).expect("toy model");
    let targets = {
        let mut g = Graph::new();
        let x = g.constant(batch.images.clone());
        let fwd = net.forward(&mut g, x).expect("toy forward");
        net.sample_targets(&g, &fwd, &batch.instances, &mut ChaCha8Rng::seed_from_u64(3))
    };
    let (_, grads) = joint_value(&net, &batch, &targets, true);
    let grads = grads.expect("requested");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut cmp = Comparison::default();
    for i in 0..net.params().len() {
        let Some(grad) = &grads[i] else { continue };
        let n = grad.numel();
        for _ in 0..per_tensor.min(n) {
            let k = rng.random_range(0..n);
            let orig = net.params().tensor(i).data()[k];
            net.params_mut().tensor_mut(i).data_mut()[k] = orig + STEP;
            let (plus, _) = joint_value(&net, &batch, &targets, false);
            net.params_mut().tensor_mut(i).data_mut()[k] = orig - STEP;
            let (minus, _) = joint_value(&net, &batch, &targets, false);
            net.params_mut().tensor_mut(i).data_mut()[k] = orig;
            cmp.add(grad.data()[k], (plus - minus) / (2.0 * STEP));
        }
    }
    cmp
}
