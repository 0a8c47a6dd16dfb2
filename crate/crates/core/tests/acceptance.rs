//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Run with `cargo test -p camrank --test acceptance`.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use camrank::annotation::{
    instance_delay, observer_delay, quantize_ranks, DetectionDelayTable, FixationSession, GazePoint, InstanceMask,
    RankThresholds,
};
use camrank::data::{synthesize, DifficultySpec};
use camrank::grid::Grid;
use camrank::losses::{weighted_rank_loss, SimilarityPrior};
use camrank::metrics::{r_mae, RankMapPair, ScoreOptions};
use camrank::model::{iou, match_proposals, reverse_attention, BBox};
use camrank::pipeline::{
    evaluate, read_log, smoothed, train, NetPredictor, TrainConfig, LOG_FILE, SMOOTHING_WINDOW,
};
use camrank_tensor::Tensor;
use common::gradcheck;
use common::runs::{corpus, tiny_config};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.1?}, limit {limit:?}"))
}

fn metric_oracles() -> Outcome {
    let t = Instant::now();
    let results = common::oracle_sweep(200);
    for r in &results {
        ensure(r.ok(), || format!("{} off by {:e} (tolerance {:e})", r.metric, r.max_err, r.tol))?;
    }
    within(t.elapsed(), Duration::from_secs(120))?;
    let worst = results.iter().map(|r| r.max_err).fold(0.0, f64::max);
    Ok(format!("{} metrics x 200 grids, worst {worst:.1e}, {:.1?}", results.len(), t.elapsed()))
}

fn ranks(h: usize, w: usize, v: &[u8]) -> Grid<u8> {
    Grid::new(h, w, v.to_vec()).unwrap()
}

fn r_mae_of(h: usize, w: usize, pred: &[u8], gt: &[u8]) -> f64 {
    r_mae(&RankMapPair::new(ranks(h, w, pred), ranks(h, w, gt)).unwrap())
}

fn r_mae_fixtures() -> Outcome {
    let two = r_mae_of(2, 2, &[0, 2, 2, 2], &[0, 1, 2, 3]);
    ensure(two == 0.5, || format!("2x2 fixture gave {two}"))?;
    ensure(r_mae_of(2, 2, &[0, 1, 2, 3], &[0, 1, 2, 3]) == 0.0, || "identity is not 0".into())?;

    // 4x4: a rank-3 block, a rank-1 block, background elsewhere
    #[rustfmt::skip]
    let gt = [
        3, 3, 0, 0,
        3, 3, 0, 0,
        0, 0, 1, 1,
        0, 0, 1, 1,
    ];
    #[rustfmt::skip]
    let pred = [
        3, 2, 0, 0,
        1, 3, 0, 2,
        0, 0, 1, 3,
        0, 0, 0, 1,
    ];
    // |3-2| + |3-1| + |0-2| + |1-3| + |1-0| = 8 over 16 pixels
    let four = r_mae_of(4, 4, &pred, &gt);
    ensure(four == 0.5, || format!("4x4 fixture gave {four}"))?;

    // the easiest instance predicted as the hardest versus as the median rank
    let as_hardest: Vec<u8> = gt.iter().map(|&r| if r == 3 { 1 } else { r }).collect();
    let as_median: Vec<u8> = gt.iter().map(|&r| if r == 3 { 2 } else { r }).collect();
    let (hard, mid) = (r_mae_of(4, 4, &as_hardest, &gt), r_mae_of(4, 4, &as_median, &gt));
    ensure(hard == 0.5 && mid == 0.25, || format!("ordering fixture gave {hard} and {mid}"))?;
    ensure(hard > mid, || "ordering property violated".into())?;
    let single = r_mae_of(1, 1, &[1], &[3]);
    ensure(single == 2.0, || format!("single pixel gave {single}"))?;
    Ok(format!("2x2 {two}, 4x4 {four}, hardest {hard} > median {mid}"))
}

fn session(obs: &str, delays: &[f64], on: (f64, f64)) -> FixationSession {
    let t0 = 10.0;
    let pts = delays.iter().map(|&d| GazePoint { t: t0 + d, x: on.0, y: on.1 }).collect();
    FixationSession::new(obs, "img", t0, pts).unwrap()
}

fn annotation_fixtures() -> Outcome {
    // 8x8 image, instance in the top-left 4x4 block; (6, 6) is off the instance
    let mask = Grid::from_fn(8, 8, |r, c| r < 4 && c < 4);
    let inst = InstanceMask::new("a", "img", mask).unwrap();
    let on = (1.0, 2.0);
    let off = (6.0, 6.0);

    // per-observer median
    let odd = observer_delay(&session("o", &[1.0, 3.0, 9.0], on), &inst).unwrap();
    ensure(odd == Some(3.0), || format!("odd median gave {odd:?}"))?;
    let even = observer_delay(&session("o", &[2.0, 4.0], on), &inst).unwrap();
    ensure(even == Some(3.0), || format!("even median gave {even:?}"))?;
    let none = observer_delay(&session("o", &[1.0, 2.0], off), &inst).unwrap();
    ensure(none.is_none(), || format!("off-instance fixations gave {none:?}"))?;

    // per-instance: 4 of 6 missing is missed, 3 of 6 is not
    let six = |missing: usize, delays: &[f64]| -> Vec<FixationSession> {
        let mut v: Vec<_> = (0..missing).map(|j| session(&format!("m{j}"), &[1.0], off)).collect();
        v.extend(delays.iter().enumerate().map(|(j, &d)| session(&format!("s{j}"), &[d], on)));
        v
    };
    let missed = instance_delay(&six(4, &[1.0, 2.0]), &inst, 10.0).unwrap();
    ensure(missed == 1.0, || format!("missed instance gave {missed}"))?;
    let same = instance_delay(&six(0, &[2.0; 6]), &inst, 10.0).unwrap();
    ensure(same == 0.2, || format!("identical delays gave {same}"))?;
    let dropped = instance_delay(&six(2, &[1.0, 2.0, 3.0, 4.0]), &inst, 10.0).unwrap();
    ensure(dropped == 0.25, || format!("drop-then-median gave {dropped}"))?;
    let tie = instance_delay(&six(3, &[1.0, 5.0, 3.0]), &inst, 10.0).unwrap();
    ensure(tie == 0.3, || format!("exactly half missing gave {tie}"))?;
    ensure(instance_delay(&six(0, &[1.0]), &inst, 0.0).is_err(), || "zero normalizer accepted".into())?;

    // thresholds and painting
    let th = RankThresholds::default();
    let got: Vec<u8> = [1.0, 0.0, 0.1, 0.5, 0.9].iter().map(|&d| th.rank_for(d)).collect();
    ensure(got == [1, 3, 3, 2, 1], || format!("quantisation gave {got:?}"))?;
    let masks = [
        InstanceMask::new("a", "img", Grid::from_fn(4, 4, |r, _| r == 0)).unwrap(),
        InstanceMask::new("b", "img", Grid::from_fn(4, 4, |r, _| r == 3)).unwrap(),
    ];
    let sessions = [
        session("x", &[1.0], (1.0, 0.0)),
        session("y", &[1.0], (2.0, 0.0)),
        FixationSession::new("z", "img", 10.0, vec![GazePoint { t: 19.0, x: 0.0, y: 3.0 }]).unwrap(),
    ];
    let table = DetectionDelayTable::build(&sessions, &masks, 10.0, 0).unwrap();
    let ann = quantize_ranks(&table, &masks, th).unwrap();
    // a: found by two of three at 0.1 -> rank 3; b: missed by two of three -> rank 1
    let expect = [3, 3, 3, 3, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
    ensure(ann.rank_map.data() == expect, || format!("rank map {:?}", ann.rank_map.data()))?;
    Ok(format!("medians 3/3, missed {missed}, drop-then-median {dropped}, tie {tie}"))
}

fn prior_constants() -> Outcome {
    let p = SimilarityPrior::default();
    ensure(p.get(2, 0) == 0.4, || format!("S_p(2,0) = {}", p.get(2, 0)))?;
    ensure((0..4).all(|i| p.get(i, i) > 0.0), || "non-positive diagonal".into())?;
    ensure(p.is_distance_monotone(), || "not distance monotone".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..10);
        let logits: Vec<[f64; 4]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-6.0..6.0))).collect();
        let gt: Vec<u8> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let ce: f64 = logits
            .iter()
            .zip(&gt)
            .map(|(l, &k)| {
                let z: f64 = l.iter().map(|v| v.exp()).sum();
                z.ln() - l[k as usize]
            })
            .sum::<f64>()
            / n as f64;
        let got = weighted_rank_loss(&logits, &gt, &SimilarityPrior::uniform()).map_err(|e| e.to_string())?;
        worst = worst.max((got - ce).abs());
    }
    ensure(worst <= 1e-12, || format!("uniform prior differs from CE by {worst:e}"))?;
    Ok(format!("S_p(2,0) = 0.4, uniform-prior CE gap {worst:.1e}"))
}

fn gradient_checks() -> Outcome {
    let t = Instant::now();
    let mut parts = Vec::new();
    for (name, cmp) in [
        ("fixation", gradcheck::fixation_loss_check()),
        ("structure", gradcheck::structure_loss_check()),
        ("weighted_rank", gradcheck::weighted_rank_loss_check()),
        ("joint", gradcheck::joint_loss_check(3)),
    ] {
        ensure(cmp.passed(), || format!("{name}: worst relative error {:e} over {}", cmp.worst, cmp.checked))?;
        parts.push(format!("{name} {:.1e}/{}", cmp.worst, cmp.checked));
    }
    within(t.elapsed(), Duration::from_secs(300))?;
    Ok(format!("{}, {:.1?}", parts.join(", "), t.elapsed()))
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

fn reverse_attention_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let stages = [random_tensor(&[2, 4, 8, 8], &mut rng, -3.0, 3.0), random_tensor(&[2, 6, 3, 5], &mut rng, -3.0, 3.0)];
    let err = |e: camrank::Error| e.to_string();
    let ones = reverse_attention(&stages, &Tensor::full(&[2, 1, 16, 16], 1.0)).map_err(err)?;
    ensure(ones.iter().all(|t| t.data().iter().all(|&v| v == 0.0)), || "F = 1 left nonzero features".into())?;
    let zeros = reverse_attention(&stages, &Tensor::zeros(&[2, 1, 16, 16])).map_err(err)?;
    ensure(zeros.iter().zip(&stages).all(|(a, b)| a.data() == b.data()), || "F = 0 is not the identity".into())?;
    let mut cases = 0;
    for _ in 0..50 {
        let stage = random_tensor(&[1, 3, 4, 6], &mut rng, -3.0, 3.0);
        let lo = random_tensor(&[1, 1, 8, 12], &mut rng, 0.0, 1.0);
        let hi = Tensor::new(lo.shape(), lo.data().iter().map(|v| (v + rng.random_range(0.0..0.5)).min(1.0)).collect());
        let a = reverse_attention(std::slice::from_ref(&stage), &lo).map_err(err)?;
        let b = reverse_attention(std::slice::from_ref(&stage), &hi).map_err(err)?;
        for (x, y) in a[0].data().iter().zip(b[0].data()) {
            ensure(y.abs() <= x.abs(), || format!("raising F grew a feature from {x} to {y}"))?;
            cases += 1;
        }
    }
    Ok(format!("F=1 -> 0, F=0 -> identity, {cases} monotone comparisons"))
}

fn loss_identities() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m = corpus(&dir.path().join("data"), 4, 32);
    let cfg = tiny_config(8);
    let run = dir.path().join("run");
    let out = train(&cfg, &m, &run).map_err(|e| e.to_string())?;
    let logged = read_log(&run.join(LOG_FILE)).map_err(|e| e.to_string())?;
    ensure(logged == out.log && logged.len() == 8, || "log on disk differs from the run".into())?;
    for r in &logged {
        let rep = r.report();
        ensure(rep.lambda == 1.0, || format!("lambda {}", rep.lambda))?;
        ensure(rep.identities_hold(), || format!("identity broken at iteration {}: {rep:?}", r.iter))?;
    }
    Ok(format!("{} logged reports, bit-exact", logged.len()))
}

fn overfit() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m = synthesize(7, 5, 64, &DifficultySpec::default(), &dir.path().join("data")).map_err(|e| e.to_string())?;
    let mut cfg = TrainConfig {
        input_size: 64,
        batch_size: 5,
        iterations: 300,
        learning_rate: 3e-3,
        seed: 7,
        checkpoint_every: 300,
        ..TrainConfig::default()
    };
    cfg.model.stem_stride = 2;
    let out = train(&cfg, &m, &dir.path().join("run")).map_err(|e| e.to_string())?;
    let obj: Vec<f64> = out.log.iter().map(|r| r.objective).collect();
    let sm = smoothed(&obj, SMOOTHING_WINDOW);
    let (first, last) = (sm[0], sm[sm.len() - 1]);
    let p = NetPredictor::new(out.net, Some(64)).map_err(|e| e.to_string())?;
    let report = evaluate(&p, &m, ScoreOptions::default()).map_err(|e| e.to_string())?;
    let s = report.aggregate.s_alpha.unwrap_or(f64::NAN);
    let rm = report.aggregate.r_mae.unwrap_or(f64::NAN);
    let summary = format!(
        "loss {first:.3} -> {last:.3} ({:.1}%), S {s:.3}, r_MAE {rm:.3}, {:.0?}",
        100.0 * last / first,
        t.elapsed()
    );
    ensure(last < 0.1 * first, || format!("smoothed loss not below 10% of initial: {summary}"))?;
    ensure(s > 0.9, || format!("S-measure too low: {summary}"))?;
    ensure(rm < 0.1, || format!("r_MAE too high: {summary}"))?;
    within(t.elapsed(), Duration::from_secs(600))?;
    Ok(summary)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m = corpus(&dir.path().join("data"), 3, 32);
    let cfg = tiny_config(4);
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = train(&cfg, &m, &out_dir).map_err(|e| e.to_string())?;
        let p = NetPredictor::from_checkpoint(out.checkpoints.last().unwrap(), Some(32)).map_err(|e| e.to_string())?;
        let report = evaluate(&p, &m, ScoreOptions::default()).map_err(|e| e.to_string())?;
        report.write(&out_dir.join("eval.json")).map_err(|e| e.to_string())?;
        let read = |f: &str| fs::read(out_dir.join(f)).map_err(|e| e.to_string());
        bytes.push((read(LOG_FILE)?, read("eval.json")?));
    }
    ensure(bytes[0].0 == bytes[1].0, || "training logs differ".into())?;
    ensure(bytes[0].1 == bytes[1].1, || "evaluation reports differ".into())?;
    Ok(format!("log {} B and report {} B identical", bytes[0].0.len(), bytes[0].1.len()))
}

fn detection_geometry() -> Outcome {
    let a = BBox::new(0.0, 0.0, 10.0, 10.0);
    let fixtures = [
        (BBox::new(20.0, 20.0, 30.0, 30.0), 0.0),
        (a, 1.0),
        (BBox::new(5.0, 0.0, 15.0, 10.0), 1.0 / 3.0),
    ];
    for (b, want) in fixtures {
        let got = iou(&a, &b);
        ensure(got == want, || format!("IoU {b:?} gave {got}, want {want}"))?;
    }
    // overlaps 0.8, 0.6, 1/3 against the ground truth
    let gt = [a];
    let boxes = [BBox::new(0.0, 0.0, 10.0, 8.0), BBox::new(0.0, 0.0, 10.0, 6.0), BBox::new(5.0, 0.0, 15.0, 10.0)];
    let m = match_proposals(&boxes, &gt, 0.7, 0.5);
    let flags: Vec<(bool, bool)> = m.iter().map(|p| (p.rpn_positive, p.detection_positive)).collect();
    ensure(flags == [(true, true), (false, true), (false, false)], || format!("gating gave {flags:?}"))?;
    let edge = match_proposals(&[BBox::new(0.0, 0.0, 10.0, 7.0), BBox::new(0.0, 0.0, 10.0, 5.0)], &gt, 0.7, 0.5);
    ensure(edge[0].rpn_positive && edge[1].detection_positive && !edge[1].rpn_positive, || {
        "threshold boundaries are not inclusive".into()
    })?;
    Ok("IoU 0 / 1 / 1/3 exact, 0.7 and 0.5 gates".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("metric-oracle equivalence", metric_oracles),
        ("r_MAE exactness", r_mae_fixtures),
        ("annotation pipeline", annotation_fixtures),
        ("similarity-prior constants", prior_constants),
        ("gradient checks", gradient_checks),
        ("reverse-attention invariants", reverse_attention_invariants),
        ("loss identities", loss_identities),
        ("overfit smoke test", overfit),
        ("determinism", determinism),
        ("detection geometry", detection_geometry),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
