//! Seeded toy scenes: a textured background with one to three embedded
//! shapes whose colour offset from the background sets their rank.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_sample, DatasetManifest, Instance, Sample, Split};
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask, RankMap};
use crate::imageio::{self, RgbPlanes};
use crate::model::BBox;

/// Colour offset between shape and background for ranks 1, 2 and 3.
pub const RANK_CONTRAST: [f64; 3] = [0.12, 0.25, 0.45];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DifficultySpec {
    /// Relative frequency of ranks 1, 2 and 3.
    pub rank_weights: [f64; 3],
    /// At most this many shapes per scene (1..=3).
    pub max_instances: usize,
    /// Fixation blob sigma as a fraction of the image width.
    pub fixation_sigma: f64,
    /// Per-pixel noise standard deviation.
    pub noise: f64,
}

impl Default for DifficultySpec {
    fn default() -> Self {
        Self { rank_weights: [1.0; 3], max_instances: 3, fixation_sigma: 1.0 / 32.0, noise: 0.02 }
    }
}

impl DifficultySpec {
    /// Every shape gets `rank`.
    pub fn only(rank: u8) -> Result<Self> {
        if !(1..=3).contains(&rank) {
            return Err(Error::invalid(format!("rank {rank} outside 1..=3")));
        }
        let mut rank_weights = [0.0; 3];
        rank_weights[rank as usize - 1] = 1.0;
        Ok(Self { rank_weights, ..Self::default() })
    }

    fn validate(&self) -> Result<()> {
        if self.rank_weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) || self.rank_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("rank weights must be non-negative with a positive sum"));
        }
        if !(1..=3).contains(&self.max_instances) {
            return Err(Error::invalid("max_instances must be 1, 2 or 3"));
        }
        if !(self.fixation_sigma > 0.0) || !(self.noise >= 0.0) {
            return Err(Error::invalid("fixation_sigma must be positive and noise non-negative"));
        }
        Ok(())
    }

    fn draw_rank<R: Rng>(&self, rng: &mut R) -> u8 {
        let total: f64 = self.rank_weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (i, &w) in self.rank_weights.iter().enumerate() {
            if u < w {
                return i as u8 + 1;
            }
            u -= w;
        }
        self.rank_weights.iter().rposition(|&w| w > 0.0).expect("positive weight") as u8 + 1
    }
}

struct Shape {
    ellipse: bool,
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
}

impl Shape {
    fn contains(&self, r: usize, c: usize) -> bool {
        let dy = (r as f64 + 0.5 - self.cy) / self.ry;
        let dx = (c as f64 + 0.5 - self.cx) / self.rx;
        if self.ellipse {
            dx * dx + dy * dy <= 1.0
        } else {
            dx.abs() <= 1.0 && dy.abs() <= 1.0
        }
    }

    fn overlaps(&self, other: &Shape, margin: f64) -> bool {
        (self.cx - other.cx).abs() < self.rx + other.rx + margin && (self.cy - other.cy).abs() < self.ry + other.ry + margin
    }
}

/// Scene `index` of the corpus generated from `seed`.
pub fn synthesize_sample(seed: u64, index: usize, size: usize, spec: &DifficultySpec) -> Result<Sample> {
    spec.validate()?;
    if size < 16 {
        return Err(Error::invalid("scenes must be at least 16 px"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let (h, w) = (size, size);
    let s = size as f64;
    let noise = Normal::new(0.0, spec.noise.max(1e-300)).expect("finite noise");

    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.35..0.65));
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.random_range(1.0..4.0), rng.random_range(1.0..4.0), rng.random_range(0.0..TAU)))
        .collect();
    let texture = |r: usize, c: usize| {
        waves
            .iter()
            .map(|&(fy, fx, ph)| 0.03 * (TAU * (fy * r as f64 + fx * c as f64) / s + ph).sin())
            .sum::<f64>()
    };

    let n_shapes = rng.random_range(1..=spec.max_instances);
    let mut shapes: Vec<Shape> = Vec::new();
    for _ in 0..n_shapes {
        for _attempt in 0..200 {
            let ry = rng.random_range(0.09 * s..0.18 * s);
            let rx = rng.random_range(0.09 * s..0.18 * s);
            let cy = rng.random_range(ry + 1.0..s - ry - 1.0);
            let cx = rng.random_range(rx + 1.0..s - rx - 1.0);
            let shape = Shape { ellipse: rng.random_bool(0.5), cy, cx, ry, rx };
            if shapes.iter().all(|o| !shape.overlaps(o, 2.0)) {
                shapes.push(shape);
                break;
            }
        }
    }

    let mut image = vec![0.0; 3 * h * w];
    for r in 0..h {
        for c in 0..w {
            let t = texture(r, c);
            for ch in 0..3 {
                image[(ch * h + r) * w + c] = base[ch] + t;
            }
        }
    }
    let mut seg_gt = Mask::filled(h, w, false);
    let mut rank_gt = RankMap::filled(h, w, 0);
    let mut fix = vec![0.0; h * w];
    let sigma = spec.fixation_sigma * w as f64;
    let mut instances = Vec::new();
    for (k, shape) in shapes.iter().enumerate() {
        let rank = spec.draw_rank(&mut rng);
        let contrast = RANK_CONTRAST[rank as usize - 1];
        // push each channel away from mid-grey so the offset survives clamping
        let raw: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.3..1.0));
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dir: [f64; 3] = std::array::from_fn(|ch| raw[ch] / norm * if base[ch] > 0.5 { -1.0 } else { 1.0 });
        // the most conspicuous part: a spot with twice the offset
        let spot_r = (shape.ry.min(shape.rx) / 3.0).max(1.5);
        let spot_y = shape.cy + rng.random_range(-0.4..0.4) * shape.ry;
        let spot_x = shape.cx + rng.random_range(-0.4..0.4) * shape.rx;
        let mask = Mask::from_fn(h, w, |r, c| shape.contains(r, c));
        for r in 0..h {
            for c in 0..w {
                if !mask.get(r, c) {
                    continue;
                }
                let (dy, dx) = (r as f64 + 0.5 - spot_y, c as f64 + 0.5 - spot_x);
                let gain = if dy * dy + dx * dx <= spot_r * spot_r { 2.0 } else { 1.0 };
                for ch in 0..3 {
                    image[(ch * h + r) * w + c] += gain * contrast * dir[ch];
                }
                seg_gt.set(r, c, true);
                rank_gt.set(r, c, rank);
            }
        }
        for r in 0..h {
            for c in 0..w {
                let (dy, dx) = (r as f64 + 0.5 - spot_y, c as f64 + 0.5 - spot_x);
                fix[r * w + c] += (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
            }
        }
        let bbox = BBox::enclosing(&mask).expect("shapes cover at least one pixel");
        instances.push(Instance { id: k.to_string(), bbox, rank, mask });
    }
    for v in image.iter_mut() {
        *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
    }
    let peak = fix.iter().cloned().fold(0.0, f64::max);
    let fix_gt = Grid::new(h, w, fix.into_iter().map(|v| if peak > 0.0 { v / peak } else { 0.0 }).collect())?;
    let sample = Sample {
        id: format!("{index:04}"),
        image: RgbPlanes { h, w, data: image },
        seg_gt,
        fix_gt,
        rank_gt,
        instances,
    };
    sample.validate()?;
    Ok(sample)
}

/// Writes `n` scenes and a manifest under `out`.
pub fn synthesize(seed: u64, n: usize, size: usize, spec: &DifficultySpec, out: &Path) -> Result<DatasetManifest> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if size == 0 || !size.is_multiple_of(32) {
        return Err(Error::invalid(format!("size {size} is not a positive multiple of 32")));
    }
    imageio::create_dir(out)?;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let sample = synthesize_sample(seed, i, size, spec)?;
        write_sample(out, &sample)?;
        entries.push(sample.id);
    }
    let manifest = DatasetManifest { root: out.to_path_buf(), split: Split::Train, entries, seed };
    manifest.write()?;
    Ok(manifest)
}
