mod common;

use camrank::model::boxes::{anchor_shapes, grid_anchors};
use camrank::model::checkpoint;
use camrank::model::{
    channel_attention, dual_residual_attention, extract_features, generate_proposals, iou, nms, position_attention,
    reverse_attention, BBox, CamRankNet, ModelConfig,
};
use camrank::Error;
use camrank_tensor::{Graph, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + b.abs())
}

#[test]
fn stage_resolutions_follow_the_stride_pattern() {
    let cfg = ModelConfig::desk();
    let net = CamRankNet::new(cfg.clone()).unwrap();
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 3, 64, 64]));
    let f = extract_features(&mut g, net.params(), &cfg, x).unwrap();
    let dims: Vec<_> = f.0.iter().map(|&v| g.value(v).dims4()).collect();
    let expect: Vec<_> = [16, 8, 4, 2].iter().zip(cfg.stage_channels).map(|(&s, c)| (1, c, s, s)).collect();
    assert_eq!(dims, expect);
    assert!(f.0.iter().all(|&v| g.value(v).all_finite()));

    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 3, 48, 64]));
    assert!(extract_features(&mut g, net.params(), &cfg, x).is_err());
}

#[test]
fn zero_gammas_make_attention_the_identity() {
    let cfg = ModelConfig::toy();
    let mut net = CamRankNet::new(cfg).unwrap();
    let names: Vec<String> = net.params().iter().map(|(n, _)| n.to_string()).filter(|n| n.contains("gamma")).collect();
    assert!(!names.is_empty());
    let prefix = names[0].rsplit_once('.').unwrap().0.to_string();
    for n in &names {
        let i = net.params().index_of(n).unwrap();
        net.params_mut().tensor_mut(i).data_mut().fill(0.0);
    }
    let c = net.params().get(&format!("{prefix}.value.weight")).unwrap().shape()[0];
    let x = random(&[2, c, 4, 4], 1, -1.0, 1.0);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let y = dual_residual_attention(&mut g, net.params(), &prefix, xv);
    assert_eq!(g.value(y).data(), x.data());
}

fn pointwise(store: &mut ParamStore, name: &str, cout: usize, cin: usize, weight: Vec<f64>) {
    store.insert(format!("{name}.weight"), Tensor::new(&[cout, cin, 1, 1], weight));
    store.insert(format!("{name}.bias"), Tensor::zeros(&[cout]));
}

#[test]
fn position_attention_by_hand() {
    // one channel, two pixels with values 1 and 2; q = k = v = x
    let mut p = ParamStore::new();
    for n in ["a.query", "a.key", "a.value"] {
        pointwise(&mut p, n, 1, 1, vec![1.0]);
    }
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(&[1, 1, 1, 2], vec![1.0, 2.0]));
    let y = position_attention(&mut g, &p, "a", x);
    let e = f64::exp;
    let row0 = (e(1.0) * 1.0 + e(2.0) * 2.0) / (e(1.0) + e(2.0));
    let row1 = (e(2.0) * 1.0 + e(4.0) * 2.0) / (e(2.0) + e(4.0));
    let out = g.value(y).data();
    assert!(close(out[0], row0) && close(out[1], row1), "{out:?}");
}

#[test]
fn channel_attention_by_hand() {
    // channels [1, 0] and [0, 1]: the Gram matrix is the identity
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(&[1, 2, 1, 2], vec![1.0, 0.0, 0.0, 1.0]));
    let y = channel_attention(&mut g, x);
    let s = 1.0 / (1.0 + std::f64::consts::E);
    let hi = 1.0 - s;
    let out = g.value(y).data();
    for (a, b) in out.iter().zip([hi, s, s, hi]) {
        assert!(close(*a, b), "{out:?}");
    }
}

#[test]
fn reverse_attention_gates() {
    let stages = [random(&[2, 3, 8, 8], 1, -2.0, 2.0), random(&[2, 5, 2, 2], 2, -2.0, 2.0)];
    let ones = reverse_attention(&stages, &Tensor::full(&[2, 1, 16, 16], 1.0)).unwrap();
    assert!(ones.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    let zeros = reverse_attention(&stages, &Tensor::zeros(&[2, 1, 16, 16])).unwrap();
    for (a, b) in zeros.iter().zip(&stages) {
        assert_eq!(a.data(), b.data());
    }
    assert!(reverse_attention(&stages, &Tensor::full(&[2, 1, 16, 16], 1.5)).is_err());
}

#[test]
fn half_fixation_map_halves_the_stage() {
    let f = Tensor::from_fn(&[1, 1, 8, 8], |i| if i % 8 < 4 { 1.0 } else { 0.0 });
    let out = reverse_attention(&[Tensor::full(&[1, 2, 4, 4], 1.0)], &f).unwrap();
    let expect: Vec<f64> = (0..32).map(|i| if i % 4 < 2 { 0.0 } else { 1.0 }).collect();
    assert_eq!(out[0].data(), &expect[..]);
}

#[test]
fn reverse_attention_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..20 {
        let stage = random(&[1, 3, 4, 6], seed, -3.0, 3.0);
        let lo = random(&[1, 1, 8, 12], 100 + seed, 0.0, 1.0);
        let hi = Tensor::new(lo.shape(), lo.data().iter().map(|v| (v + rng.random_range(0.0..0.5)).min(1.0)).collect());
        let a = reverse_attention(std::slice::from_ref(&stage), &lo).unwrap();
        let b = reverse_attention(std::slice::from_ref(&stage), &hi).unwrap();
        for (x, y) in a[0].data().iter().zip(b[0].data()) {
            assert!(y.abs() <= x.abs() + 1e-15);
        }
    }
}

#[test]
fn zero_regression_returns_the_anchors() {
    let mut cfg = ModelConfig::toy();
    cfg.anchors.scales = vec![2.0];
    cfg.anchors.ratios = vec![1.0];
    cfg.rpn.pre_nms_top_n = 1000;
    let (h, w) = (4, 4);
    let stride = 4;
    let anchors = vec![grid_anchors(h, w, stride, &anchor_shapes(&cfg.anchors.scales, &cfg.anchors.ratios, stride))];
    let obj = Tensor::from_fn(&[1, 1, h, w], |i| i as f64 / 10.0);
    let del = Tensor::zeros(&[1, 4, h, w]);
    let props = generate_proposals(&cfg, &[(&obj, &del)], &anchors, 0, (16, 16), 1000);
    assert_eq!(props.len(), h * w);
    let mut expect: Vec<BBox> = anchors[0].iter().map(|a| a.clip(16, 16)).collect();
    expect.reverse();
    assert_eq!(props.iter().map(|p| p.bbox).collect::<Vec<_>>(), expect);
    assert!(props.windows(2).all(|p| p[0].objectness >= p[1].objectness));
}

#[test]
fn nms_survivors_do_not_overlap() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let n = rng.random_range(1..30);
        let boxes: Vec<BBox> = (0..n)
            .map(|_| {
                let (x, y) = (rng.random_range(0.0..20.0), rng.random_range(0.0..20.0));
                BBox::new(x, y, x + rng.random_range(1.0..10.0), y + rng.random_range(1.0..10.0))
            })
            .collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let keep = nms(&boxes, &scores, 0.5);
        for (i, &a) in keep.iter().enumerate() {
            for &b in &keep[i + 1..] {
                assert!(iou(&boxes[a], &boxes[b]) <= 0.5);
                assert!(scores[a] >= scores[b]);
            }
        }
        for j in 0..n {
            assert!(keep.contains(&j) || keep.iter().any(|&k| iou(&boxes[k], &boxes[j]) > 0.5));
        }
    }
}

#[test]
fn predictions_are_full_size_bounded_and_deterministic() {
    let net = CamRankNet::new(ModelConfig::toy()).unwrap();
    let x = random(&[2, 3, 16, 24], 3, 0.0, 1.0);
    let a = net.predict(&x).unwrap();
    let b = net.predict(&x).unwrap();
    assert_eq!(a.len(), 2);
    for (p, q) in a.iter().zip(&b) {
        for m in [&p.fixation, &p.segmentation] {
            assert_eq!(m.dims(), (16, 24));
            assert!(m.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(p.fixation.data(), q.fixation.data());
        assert_eq!(p.segmentation.data(), q.segmentation.data());
        assert_eq!(p.instances.len(), q.instances.len());
    }
}

#[test]
fn every_parameter_gets_a_gradient() {
    use camrank::losses::{joint_objective, structure_window, DenseTerms, SimilarityPrior};
    let batch = common::gradcheck::toy_batch();
    let net = CamRankNet::new(ModelConfig::toy()).unwrap();
    let mut g = Graph::new();
    let x = g.constant(batch.images.clone());
    let fwd = net.forward(&mut g, x).unwrap();
    let targets = net.sample_targets(&g, &fwd, &batch.instances, &mut ChaCha8Rng::seed_from_u64(1));
    let (rpn, roi) = net.ranking_terms(&mut g, &fwd, &targets);
    let dense = DenseTerms {
        fixation: fwd.fixation,
        fixation_gt: &batch.fix,
        segmentation: fwd.segmentation,
        segmentation_gt: &batch.seg,
        window: structure_window(16, 16),
    };
    let l = joint_objective(&mut g, &dense, &rpn, &roi, &SimilarityPrior::default(), 1.0);
    let grads = g.backward(l.objective).for_params(net.params());
    for ((name, _), grad) in net.params().iter().zip(&grads) {
        let grad = grad.as_ref().unwrap_or_else(|| panic!("{name} has no gradient"));
        assert!(grad.data().iter().any(|&v| v != 0.0), "{name} has an all-zero gradient");
        assert!(grad.all_finite(), "{name}");
    }
}

#[test]
fn checkpoints_round_trip() {
    let net = CamRankNet::new(ModelConfig::toy()).unwrap();
    let bytes = checkpoint::to_bytes(&net, 17).unwrap();
    let (back, iter) = checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(iter, 17);
    assert_eq!(back.config(), net.config());
    for ((na, a), (nb, b)) in back.params().iter().zip(net.params().iter()) {
        assert_eq!((na, a.shape(), a.data()), (nb, b.shape(), b.data()));
    }
    let mut bad = bytes.clone();
    bad[0] ^= 1;
    assert!(matches!(checkpoint::from_bytes(&bad), Err(Error::Checkpoint(_))));
    assert!(checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
}
