#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;
pub mod runs;

use camrank::grid::Grid;
use camrank::metrics::{self, FixationPoints, RankMapPair};
use camrank::DenseMap;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub h: usize,
    pub w: usize,
    pub pred: Vec<f64>,
    pub gt: Vec<f64>,
    pub density: Vec<f64>,
    /// Flat indices of fixated pixels, sorted and unique, fewer than `h * w`.
    pub points: Vec<usize>,
    pub rank_pred: Vec<u8>,
    pub rank_gt: Vec<u8>,
}

/// Random grid pair up to 8x8. Some cases quantise the prediction to
/// multiples of 1/8 so ties and exact threshold hits are exercised, and some
/// have all-background or all-foreground ground truth.
pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = loop {
        let h = rng.random_range(1..=8);
        let w = rng.random_range(1..=8);
        if h * w >= 2 {
            break (h, w);
        }
    };
    let n = h * w;
    let quantised = rng.random_bool(0.3);
    let pred: Vec<f64> = (0..n)
        .map(|_| {
            let v: f64 = rng.random();
            if quantised { (v * 8.0).floor() / 8.0 } else { v }
        })
        .collect();
    let gt: Vec<f64> = match rng.random_range(0..10) {
        0 => vec![0.0; n],
        1 => vec![1.0; n],
        _ => {
            let p: f64 = rng.random_range(0.2..0.8);
            (0..n).map(|_| if rng.random_bool(p) { 1.0 } else { 0.0 }).collect()
        }
    };
    let density: Vec<f64> =
        (0..n).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..2.0) }).collect();
    let k = rng.random_range(1..n);
    let mut points: Vec<usize> = sample(&mut rng, n, k).into_vec();
    points.sort_unstable();
    let rank_pred = (0..n).map(|_| rng.random_range(0..=3)).collect();
    let rank_gt = (0..n).map(|_| rng.random_range(0..=3)).collect();
    Case { h, w, pred, gt, density, points, rank_pred, rank_gt }
}

impl Case {
    pub fn pred_map(&self) -> DenseMap {
        DenseMap::probability(self.h, self.w, self.pred.clone()).unwrap()
    }
    pub fn gt_map(&self) -> DenseMap {
        DenseMap::probability(self.h, self.w, self.gt.clone()).unwrap()
    }
    pub fn density_map(&self) -> DenseMap {
        DenseMap::density(self.h, self.w, self.density.clone()).unwrap()
    }
    pub fn fixations(&self) -> FixationPoints {
        FixationPoints::new(self.h, self.w, self.points.iter().map(|&i| (i / self.w, i % self.w))).unwrap()
    }
    pub fn rank_pair(&self) -> RankMapPair {
        RankMapPair::new(
            Grid::new(self.h, self.w, self.rank_pred.clone()).unwrap(),
            Grid::new(self.h, self.w, self.rank_gt.clone()).unwrap(),
        )
        .unwrap()
    }
}

fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        v.iter().map(|x| (x - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; v.len()]
    }
}

pub struct OracleResult {
    pub metric: &'static str,
    pub cases: usize,
    pub max_err: f64,
    pub tol: f64,
}

impl OracleResult {
    pub fn ok(&self) -> bool {
        self.max_err <= self.tol
    }
}

/// Runs every metric against its oracle on `n` random cases and reports the
/// worst absolute difference per metric.
pub fn oracle_sweep(n: u64) -> Vec<OracleResult> {
    const TOL: f64 = 1e-9;
    let names: [(&'static str, f64); 17] = [
        ("mae", TOL),
        ("r_mae", TOL),
        ("mean_f", TOL),
        ("mean_e", TOL),
        ("s_measure", TOL),
        ("s_object", TOL),
        ("s_region", TOL),
        ("sim", TOL),
        ("cc", TOL),
        ("kld", TOL),
        ("nss", TOL),
        ("auc_j", TOL),
        ("auc_b", TOL),
        ("sauc", TOL),
        ("emd", 1e-6),
        ("emd_pred_vs_density", 1e-6),
        ("fixation_metrics", TOL),
    ];
    let mut worst = [0.0f64; 17];
    let mut bump = |k: usize, a: f64, b: f64| {
        let e = (a - b).abs();
        worst[k] = if e.is_nan() { f64::INFINITY } else { worst[k].max(e) };
    };
    let opts = metrics::FixationOptions { n_shuffles: 5, step: 0.1, seed: 0 };
    for seed in 0..n {
        let c = random_case(seed);
        let (p, g, d) = (c.pred_map(), c.gt_map(), c.density_map());
        let fix = c.fixations();
        bump(0, metrics::mae(&p, &g).unwrap(), oracles::mae(&c.pred, &c.gt));
        bump(1, metrics::r_mae(&c.rank_pair()), oracles::r_mae(&c.rank_pred, &c.rank_gt));
        bump(2, metrics::mean_f_measure(&p, &g, 0.3).unwrap(), oracles::mean_f(&c.pred, &c.gt, 0.3));
        bump(3, metrics::mean_e_measure(&p, &g).unwrap(), oracles::mean_e(&c.pred, &c.gt));
        bump(4, metrics::s_measure(&p, &g, 0.5).unwrap(), oracles::s_measure(c.h, c.w, &c.pred, &c.gt, 0.5));
        bump(5, metrics::s_object(&p, &g).unwrap(), oracles::s_object(&c.pred, &c.gt));
        bump(6, metrics::s_region(&p, &g).unwrap(), oracles::s_region(c.h, c.w, &c.pred, &c.gt));
        bump(7, metrics::sim(&p, &d).unwrap(), oracles::sim(&c.pred, &c.density));
        bump(8, metrics::cc(&p, &d).unwrap(), oracles::cc(&c.pred, &c.density));
        bump(9, metrics::kld(&p, &d).unwrap(), oracles::kld(&c.pred, &c.density));
        bump(10, metrics::nss(&p, &fix).unwrap(), oracles::nss(&c.pred, &c.points));
        bump(11, metrics::auc_judd(&p, &fix).unwrap(), oracles::auc_judd(&c.pred, &c.points));

        let s = min_max(&c.pred);
        let pos: Vec<f64> = c.points.iter().map(|&i| s[i]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = 0.0;
        for _ in 0..opts.n_shuffles {
            let neg: Vec<f64> = (0..pos.len()).map(|_| s[rng.random_range(0..s.len())]).collect();
            acc += oracles::auc_ladder(&pos, &neg, 0.1);
        }
        bump(12, metrics::auc_borji(&p, &fix, opts.n_shuffles, 0.1, seed).unwrap(), acc / opts.n_shuffles as f64);

        // other image: the complement of this one's fixations
        let other_idx: Vec<usize> = (0..c.h * c.w).filter(|i| !c.points.contains(i)).collect();
        let others = FixationPoints::new(c.h, c.w, other_idx.iter().map(|&i| (i / c.w, i % c.w))).unwrap();
        let n_neg = pos.len().min(other_idx.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = 0.0;
        for _ in 0..opts.n_shuffles {
            let neg: Vec<f64> = sample(&mut rng, other_idx.len(), n_neg).iter().map(|j| s[other_idx[j]]).collect();
            acc += oracles::auc_ladder(&pos, &neg, 0.1);
        }
        let sauc = metrics::auc_shuffled(&p, &fix, &others, opts.n_shuffles, 0.1, seed).unwrap().unwrap();
        bump(13, sauc, acc / opts.n_shuffles as f64);

        bump(14, metrics::emd(&d, &p).unwrap(), oracles::emd(c.h, c.w, &c.density, &c.pred));
        // pred against a sparse map exercises zero-mass removal on one side
        bump(15, metrics::emd(&p, &d).unwrap(), oracles::emd(c.h, c.w, &c.pred, &c.density));

        let all = metrics::fixation_metrics(&p, &d, &fix, &others, metrics::FixationOptions { seed, ..opts }).unwrap();
        bump(16, all.nss, oracles::nss(&c.pred, &c.points));
        bump(16, all.sim, oracles::sim(&c.pred, &c.density));
    }
    names
        .iter()
        .zip(worst)
        .map(|(&(metric, tol), max_err)| OracleResult { metric, cases: n as usize, max_err, tol })
        .collect()
}
