//! Corpus layout, loading with validation, batching, and the synthetic generator.
//!
//! A corpus directory holds
//!
//! ```text
//! manifest.json
//! images/<id>.png            RGB (a .jpg is accepted too)
//! gt/<id>.png                binary segmentation, 0 or 255
//! fix/<id>.png               fixation density scaled to 0..=255
//! rank/<id>.png              literal rank values 0..=3
//! instances/<id>.json        [{ id, rank, bbox, mask }]
//! instances/<id>_<k>.png     one binary mask per instance
//! ```

mod synth;

pub use synth::{synthesize, synthesize_sample, DifficultySpec, RANK_CONTRAST};

use std::path::{Path, PathBuf};

use camrank_tensor::{resize_bilinear, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{validate_rank_map, Grid, Mask, RankMap, MAX_RANK};
use crate::imageio::{self, RgbPlanes};
use crate::model::{BBox, GtInstance};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Directory the manifest was read from; not stored.
    #[serde(skip)]
    pub root: PathBuf,
    pub split: Split,
    pub entries: Vec<String>,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn read(root: &Path) -> Result<Self> {
        let mut m: DatasetManifest = imageio::read_json(&root.join(MANIFEST_FILE))?;
        m.root = root.to_path_buf();
        m.validate()?;
        Ok(m)
    }

    pub fn write(&self) -> Result<()> {
        self.validate()?;
        imageio::write_json(&self.root.join(MANIFEST_FILE), self)
    }

    fn validate(&self) -> Result<()> {
        let mut ids = self.entries.clone();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate sample id `{}` in manifest", w[0])));
        }
        Ok(())
    }

    /// Checks that every entry resolves to all its layer files.
    pub fn check_files(&self) -> Result<()> {
        for id in &self.entries {
            image_path(&self.root, id)?;
            for (layer, path) in layer_paths(&self.root, id) {
                if !path.is_file() {
                    return Err(Error::MissingLayer { id: id.clone(), layer, path });
                }
            }
        }
        Ok(())
    }
}

/// One annotated instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub id: String,
    pub bbox: BBox,
    pub rank: u8,
    pub mask: Mask,
}

impl Instance {
    pub fn to_gt(&self) -> GtInstance {
        GtInstance { bbox: self.bbox, rank: self.rank, mask: self.mask.clone() }
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    id: String,
    rank: u8,
    bbox: [f64; 4],
    mask: String,
}

/// Image with all three annotation layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: RgbPlanes,
    pub seg_gt: Mask,
    /// Fixation density scaled to `[0, 1]`.
    pub fix_gt: Grid<f64>,
    pub rank_gt: RankMap,
    pub instances: Vec<Instance>,
}

fn check(id: &str, layer: &'static str, ok: bool, reason: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Validation { id: id.to_string(), layer, reason: reason() })
    }
}

impl Sample {
    pub fn dims(&self) -> (usize, usize) {
        self.seg_gt.dims()
    }

    /// Checks shapes, rank values, and consistency between instances,
    /// segmentation and rank layers.
    pub fn validate(&self) -> Result<()> {
        let id = self.id.as_str();
        let (h, w) = self.dims();
        check(id, "image", (self.image.h, self.image.w) == (h, w), || "size differs from gt".into())?;
        check(id, "fix", self.fix_gt.dims() == (h, w), || "size differs from gt".into())?;
        check(id, "fix", self.fix_gt.data().iter().all(|v| (0.0..=1.0).contains(v)), || "values outside [0, 1]".into())?;
        check(id, "rank", self.rank_gt.dims() == (h, w), || "size differs from gt".into())?;
        if let Some(v) = self.rank_gt.data().iter().find(|&&v| v > MAX_RANK) {
            return check(id, "rank", false, || format!("value {v} outside 0..=3"));
        }
        let mut owner: Vec<Option<u8>> = vec![None; h * w];
        for inst in &self.instances {
            check(id, "instances", inst.mask.dims() == (h, w), || format!("mask of `{}` has the wrong size", inst.id))?;
            check(id, "instances", (1..=MAX_RANK).contains(&inst.rank), || {
                format!("instance `{}` has rank {}", inst.id, inst.rank)
            })?;
            for (i, &m) in inst.mask.data().iter().enumerate() {
                if !m {
                    continue;
                }
                check(id, "instances", self.seg_gt.data()[i], || {
                    format!("instance `{}` overlaps background of gt", inst.id)
                })?;
                check(id, "instances", owner[i].is_none(), || format!("instance `{}` overlaps another instance", inst.id))?;
                check(id, "rank", self.rank_gt.data()[i] == inst.rank, || {
                    format!("rank map disagrees with instance `{}`", inst.id)
                })?;
                owner[i] = Some(inst.rank);
            }
        }
        for (i, &r) in self.rank_gt.data().iter().enumerate() {
            check(id, "rank", r == 0 || owner[i].is_some(), || "ranked pixel outside every instance".into())?;
        }
        Ok(())
    }

    /// Mirror image of every layer.
    pub fn flipped(&self) -> Self {
        let (_, w) = self.dims();
        let w = w as f64;
        Self {
            id: self.id.clone(),
            image: self.image.flip_horizontal(),
            seg_gt: self.seg_gt.flip_horizontal(),
            fix_gt: self.fix_gt.flip_horizontal(),
            rank_gt: self.rank_gt.flip_horizontal(),
            instances: self
                .instances
                .iter()
                .map(|i| Instance {
                    id: i.id.clone(),
                    bbox: BBox::new(w - i.bbox.x2, i.bbox.y1, w - i.bbox.x1, i.bbox.y2),
                    rank: i.rank,
                    mask: i.mask.flip_horizontal(),
                })
                .collect(),
        }
    }

    /// Rescales to `h x w`: bilinear for the image and fixation map,
    /// nearest for label layers. Instances that vanish are dropped.
    pub fn resized(&self, h: usize, w: usize) -> Self {
        if self.dims() == (h, w) {
            return self.clone();
        }
        let (sh, sw) = self.dims();
        let img = resize_bilinear(&Tensor::new(&[1, 3, sh, sw], self.image.data.clone()), h, w);
        let fix = resize_bilinear(&Tensor::new(&[1, 1, sh, sw], self.fix_gt.data().to_vec()), h, w);
        let nearest = |r: usize, c: usize| ((r * sh) / h, (c * sw) / w);
        let pick = |g: &RankMap| Grid::from_fn(h, w, |r, c| {
            let (y, x) = nearest(r, c);
            g.get(y, x)
        });
        let pick_mask = |g: &Mask| Grid::from_fn(h, w, |r, c| {
            let (y, x) = nearest(r, c);
            g.get(y, x)
        });
        Self {
            id: self.id.clone(),
            image: RgbPlanes { h, w, data: img.into_data() },
            seg_gt: pick_mask(&self.seg_gt),
            fix_gt: Grid::new(h, w, fix.into_data().into_iter().map(|v| v.clamp(0.0, 1.0)).collect()).expect("dims"),
            rank_gt: pick(&self.rank_gt),
            instances: self
                .instances
                .iter()
                .filter_map(|i| {
                    let mask = pick_mask(&i.mask);
                    BBox::enclosing(&mask).map(|bbox| Instance { id: i.id.clone(), bbox, rank: i.rank, mask })
                })
                .collect(),
        }
    }
}

fn image_path(root: &Path, id: &str) -> Result<PathBuf> {
    let png = root.join("images").join(format!("{id}.png"));
    if png.is_file() {
        return Ok(png);
    }
    let jpg = root.join("images").join(format!("{id}.jpg"));
    if jpg.is_file() {
        return Ok(jpg);
    }
    Err(Error::MissingLayer { id: id.to_string(), layer: "image", path: png })
}

fn layer_paths(root: &Path, id: &str) -> [(&'static str, PathBuf); 4] {
    [
        ("gt", root.join("gt").join(format!("{id}.png"))),
        ("fix", root.join("fix").join(format!("{id}.png"))),
        ("rank", root.join("rank").join(format!("{id}.png"))),
        ("instances", root.join("instances").join(format!("{id}.json"))),
    ]
}

fn require(id: &str, layer: &'static str, path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingLayer { id: id.to_string(), layer, path })
    }
}

/// Reads and validates one sample, resizing it to `size` when given.
pub fn load_sample(manifest: &DatasetManifest, id: &str, size: Option<(usize, usize)>) -> Result<Sample> {
    if !manifest.entries.iter().any(|e| e == id) {
        return Err(Error::invalid(format!("`{id}` is not in the manifest")));
    }
    let root = &manifest.root;
    let [gt, fix, rank, inst] = layer_paths(root, id);
    let image = imageio::read_rgb(&image_path(root, id)?)?;
    let seg_gt = imageio::read_gray(&require(id, gt.0, gt.1)?)?.map(|v| v > 127);
    let fix_gt = imageio::read_unit_map(&require(id, fix.0, fix.1)?)?;
    let rank_gt = imageio::read_gray(&require(id, rank.0, rank.1)?)?;
    let records: Vec<InstanceRecord> = imageio::read_json(&require(id, inst.0, inst.1)?)?;
    let mut instances = Vec::with_capacity(records.len());
    for r in records {
        let path = require(id, "instances", root.join("instances").join(&r.mask))?;
        let [x1, y1, x2, y2] = r.bbox;
        instances.push(Instance {
            id: r.id,
            bbox: BBox::new(x1, y1, x2, y2),
            rank: r.rank,
            mask: imageio::read_gray(&path)?.map(|v| v > 127),
        });
    }
    let sample = Sample { id: id.to_string(), image, seg_gt, fix_gt, rank_gt, instances };
    sample.validate()?;
    Ok(match size {
        Some((h, w)) => sample.resized(h, w),
        None => sample,
    })
}

/// Image plus whichever label layers exist; used by evaluation, which marks
/// the metrics of a missing layer absent instead of failing.
#[derive(Clone, Debug)]
pub struct LabelLayers {
    pub id: String,
    pub image: RgbPlanes,
    pub seg_gt: Option<Mask>,
    pub fix_gt: Option<Grid<f64>>,
    pub rank_gt: Option<RankMap>,
}

pub fn load_layers(manifest: &DatasetManifest, id: &str) -> Result<LabelLayers> {
    let root = &manifest.root;
    let image = imageio::read_rgb(&image_path(root, id)?)?;
    let [gt, fix, rank, _] = layer_paths(root, id);
    let dims = (image.h, image.w);
    let check = |layer: &'static str, got: (usize, usize)| {
        if got == dims {
            Ok(())
        } else {
            Err(Error::Validation {
                id: id.to_string(),
                layer,
                reason: format!("{}x{} does not match the {}x{} image", got.0, got.1, dims.0, dims.1),
            })
        }
    };
    let seg_gt = match gt.1.is_file() {
        true => Some(imageio::read_gray(&gt.1)?.map(|v| v > 127)),
        false => None,
    };
    let fix_gt = match fix.1.is_file() {
        true => Some(imageio::read_unit_map(&fix.1)?),
        false => None,
    };
    let rank_gt = match rank.1.is_file() {
        true => Some(imageio::read_gray(&rank.1)?),
        false => None,
    };
    if let Some(m) = &seg_gt {
        check("gt", m.dims())?;
    }
    if let Some(m) = &fix_gt {
        check("fix", m.dims())?;
    }
    if let Some(m) = &rank_gt {
        check("rank", m.dims())?;
        validate_rank_map(m).map_err(|e| Error::Validation { id: id.to_string(), layer: "rank", reason: e.to_string() })?;
    }
    Ok(LabelLayers { id: id.to_string(), image, seg_gt, fix_gt, rank_gt })
}

/// Writes every layer of `sample` under `root`.
pub fn write_sample(root: &Path, sample: &Sample) -> Result<()> {
    sample.validate()?;
    for dir in ["images", "gt", "fix", "rank", "instances"] {
        imageio::create_dir(&root.join(dir))?;
    }
    let id = &sample.id;
    imageio::write_rgb(&root.join("images").join(format!("{id}.png")), &sample.image)?;
    imageio::write_gray(&root.join("gt").join(format!("{id}.png")), &sample.seg_gt.map(|m| if m { 255 } else { 0 }))?;
    imageio::write_unit_map(&root.join("fix").join(format!("{id}.png")), &sample.fix_gt)?;
    imageio::write_gray(&root.join("rank").join(format!("{id}.png")), &sample.rank_gt)?;
    let mut records = Vec::new();
    for inst in &sample.instances {
        let file = format!("{id}_{}.png", inst.id);
        imageio::write_gray(&root.join("instances").join(&file), &inst.mask.map(|m| if m { 255 } else { 0 }))?;
        let b = inst.bbox;
        records.push(InstanceRecord { id: inst.id.clone(), rank: inst.rank, bbox: [b.x1, b.y1, b.x2, b.y2], mask: file });
    }
    imageio::write_json(&root.join("instances").join(format!("{id}.json")), &records)
}

/// Sample order for one epoch; a pure function of `(seed, epoch)`.
pub fn shuffle_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Stacked network inputs and targets.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[N, 3, H, W]`.
    pub images: Tensor,
    /// `[N, 1, H, W]`, 0 or 1.
    pub seg: Tensor,
    /// `[N, 1, H, W]` in `[0, 1]`.
    pub fix: Tensor,
    pub instances: Vec<Vec<GtInstance>>,
}

/// Stacks samples of equal size.
pub fn collate(samples: &[&Sample]) -> Result<Batch> {
    let first = samples.first().ok_or_else(|| Error::invalid("empty batch"))?;
    let (h, w) = first.dims();
    let mut images = Vec::with_capacity(samples.len() * 3 * h * w);
    let mut seg = Vec::with_capacity(samples.len() * h * w);
    let mut fix = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        if s.dims() != (h, w) {
            return Err(Error::invalid(format!("sample `{}` has a different size", s.id)));
        }
        images.extend_from_slice(&s.image.data);
        seg.extend(s.seg_gt.data().iter().map(|&m| if m { 1.0 } else { 0.0 }));
        fix.extend_from_slice(s.fix_gt.data());
    }
    let n = samples.len();
    Ok(Batch {
        images: Tensor::new(&[n, 3, h, w], images),
        seg: Tensor::new(&[n, 1, h, w], seg),
        fix: Tensor::new(&[n, 1, h, w], fix),
        instances: samples.iter().map(|s| s.instances.iter().map(Instance::to_gt).collect()).collect(),
    })
}
