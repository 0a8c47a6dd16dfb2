//! File formats for the annotation tool: session CSVs, per-instance mask
//! PNGs, and the rank-map PNG plus JSON sidecar.
//!
//! A session CSV looks like
//!
//! ```text
//! observer_id,image_id,t0
//! obs1,img7,0.0
//! t,x,y
//! 0.004,120,88
//! ...
//! ```
//!
//! The `t,x,y` header line is optional.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    default_normalizer, quantize_ranks, DetectionDelayTable, FixationSession, GazePoint, InstanceMask,
    RankAnnotation, RankThresholds,
};
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::imageio::{create_dir, list_files, read_gray, write_gray, write_json};

fn parse_f64(field: &str, what: &str, path: &Path) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("{}: cannot parse {what} from `{field}`", path.display())))
}

pub fn read_session_csv(path: &Path) -> Result<FixationSession> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::invalid(format!("{}: {other:?}", path.display())),
        })?;
    let mut records = reader.records();
    let header = records.next().ok_or_else(|| Error::invalid(format!("{}: empty file", path.display())))??;
    let names: Vec<&str> = header.iter().collect();
    if names != ["observer_id", "image_id", "t0"] {
        return Err(Error::invalid(format!(
            "{}: expected header `observer_id,image_id,t0`, got `{}`",
            path.display(),
            names.join(",")
        )));
    }
    let meta = records
        .next()
        .ok_or_else(|| Error::invalid(format!("{}: missing session line", path.display())))??;
    if meta.len() != 3 {
        return Err(Error::invalid(format!("{}: session line needs 3 fields", path.display())));
    }
    let t0 = parse_f64(&meta[2], "t0", path)?;

    let mut points = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        if i == 0 && rec.iter().collect::<Vec<_>>() == ["t", "x", "y"] {
            continue;
        }
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 3 {
            return Err(Error::invalid(format!("{}: gaze rows need 3 fields (t,x,y)", path.display())));
        }
        points.push(GazePoint {
            t: parse_f64(&rec[0], "t", path)?,
            x: parse_f64(&rec[1], "x", path)?,
            y: parse_f64(&rec[2], "y", path)?,
        });
    }
    FixationSession::new(&meta[0], &meta[1], t0, points)
}

/// Writes a session in the format read by [`read_session_csv`].
pub fn write_session_csv(path: &Path, session: &FixationSession) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    w.write_record(["observer_id", "image_id", "t0"])?;
    w.write_record([session.observer_id(), session.image_id(), &session.t0().to_string()])?;
    w.write_record(["t", "x", "y"])?;
    for p in session.points() {
        w.write_record([p.t.to_string(), p.x.to_string(), p.y.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads every `<image_id>_<instance_id>.png` in `dir`. The split happens at
/// the last underscore, so image ids may contain underscores.
pub fn read_instance_masks(dir: &Path) -> Result<Vec<InstanceMask>> {
    let mut out = Vec::new();
    for path in list_files(dir, "png")? {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let (image_id, instance_id) = stem.rsplit_once('_').ok_or_else(|| {
            Error::invalid(format!("{}: mask name must be <image_id>_<instance_id>.png", path.display()))
        })?;
        let gray = read_gray(&path)?;
        let mask: Mask = gray.map(|v| v != 0);
        out.push(InstanceMask::new(instance_id, image_id, mask)?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub delay: f64,
    pub rank: u8,
}

/// Writes `<out>/<image_id>.png` (literal rank values) and `<out>/<image_id>.json`.
pub fn write_annotation(
    out: &Path,
    image_id: &str,
    table: &DetectionDelayTable,
    annotation: &RankAnnotation,
) -> Result<PathBuf> {
    create_dir(out)?;
    let png = out.join(format!("{image_id}.png"));
    write_gray(&png, &annotation.rank_map)?;
    let sidecar: BTreeMap<&str, SidecarEntry> = annotation
        .instance_ranks
        .iter()
        .map(|(id, &rank)| {
            let delay = table.delay(id).unwrap_or(1.0);
            (id.as_str(), SidecarEntry { delay, rank })
        })
        .collect();
    write_json(&out.join(format!("{image_id}.json")), &sidecar)?;
    Ok(png)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[derive(Default)]
pub struct AnnotateOptions {
    pub thresholds: RankThresholds,
    /// Fixed normaliser in seconds; per-image maximum session duration when absent.
    pub normalizer: Option<f64>,
    /// Chebyshev radius for the point-in-mask test.
    pub tolerance: usize,
}


/// Runs the whole annotation tool over a sessions directory (`*.csv`) and a
/// masks directory, writing one rank map per image that has masks.
/// Returns the image ids written.
pub fn annotate_dirs(sessions_dir: &Path, masks_dir: &Path, out: &Path, opts: AnnotateOptions) -> Result<Vec<String>> {
    let mut sessions: BTreeMap<String, Vec<FixationSession>> = BTreeMap::new();
    for path in list_files(sessions_dir, "csv")? {
        let s = read_session_csv(&path)?;
        sessions.entry(s.image_id().to_string()).or_default().push(s);
    }
    let mut masks: BTreeMap<String, Vec<InstanceMask>> = BTreeMap::new();
    for m in read_instance_masks(masks_dir)? {
        masks.entry(m.image_id().to_string()).or_default().push(m);
    }
    let mut written = Vec::new();
    for (image_id, instances) in &masks {
        let image_sessions = sessions
            .get(image_id)
            .ok_or_else(|| Error::invalid(format!("no fixation sessions for image `{image_id}`")))?;
        let normalizer = match opts.normalizer {
            Some(n) => n,
            None => default_normalizer(image_sessions)?,
        };
        let table = DetectionDelayTable::build(image_sessions, instances, normalizer, opts.tolerance)?;
        let annotation = quantize_ranks(&table, instances, opts.thresholds)?;
        write_annotation(out, image_id, &table, &annotation)?;
        written.push(image_id.clone());
    }
    Ok(written)
}
