//! Detection delays and camouflage ranks from multi-observer fixation logs.
//!
//! Each observer's delay towards an instance is the median time (relative to
//! the session start) of their fixation points landing on the instance. The
//! instance delay is the median across observers after discarding observers
//! who never fixated it, unless strictly more than half of them missed it,
//! in which case the instance is treated as maximally hard (delay 1 after
//! normalisation). Normalised delays are then cut into ranks 1 (hardest),
//! 2 and 3 (easiest).

mod io;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Mask, RankMap};

pub use io::{
    annotate_dirs, read_instance_masks, read_session_csv, write_annotation, write_session_csv, AnnotateOptions,
    SidecarEntry,
};

/// One gaze sample: time in seconds, pixel column `x`, pixel row `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazePoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Eye-tracker log for one observer viewing one image.
#[derive(Clone, Debug, PartialEq)]
pub struct FixationSession {
    observer_id: String,
    image_id: String,
    t0: f64,
    points: Vec<GazePoint>,
}

impl FixationSession {
    pub fn new(
        observer_id: impl Into<String>,
        image_id: impl Into<String>,
        t0: f64,
        points: Vec<GazePoint>,
    ) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::invalid("session start time is not finite"));
        }
        let mut prev = t0;
        for p in &points {
            if !(p.t.is_finite() && p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::invalid("non-finite gaze sample"));
            }
            if p.t < prev {
                return Err(Error::invalid(format!(
                    "gaze samples must be time-ordered and not precede t0 (t = {} after {prev})",
                    p.t
                )));
            }
            prev = p.t;
        }
        Ok(Self { observer_id: observer_id.into(), image_id: image_id.into(), t0, points })
    }

    pub fn observer_id(&self) -> &str {
        &self.observer_id
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn points(&self) -> &[GazePoint] {
        &self.points
    }

    /// Time from `t0` to the last sample.
    pub fn duration(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.t - self.t0)
    }

    pub fn check_bounds(&self, h: usize, w: usize) -> Result<()> {
        for p in &self.points {
            if p.x < 0.0 || p.y < 0.0 || p.x >= w as f64 || p.y >= h as f64 {
                return Err(Error::invalid(format!(
                    "gaze point ({}, {}) of observer `{}` outside {w}x{h} image `{}`",
                    p.x, p.y, self.observer_id, self.image_id
                )));
            }
        }
        Ok(())
    }
}

/// Binary mask of one annotated instance.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceMask {
    instance_id: String,
    image_id: String,
    mask: Mask,
}

impl InstanceMask {
    pub fn new(instance_id: impl Into<String>, image_id: impl Into<String>, mask: Mask) -> Result<Self> {
        let instance_id = instance_id.into();
        if !mask.data().iter().any(|&m| m) {
            return Err(Error::invalid(format!("instance `{instance_id}` has an empty mask")));
        }
        Ok(Self { instance_id, image_id: image_id.into(), mask })
    }

    pub fn instance_id(&self) -> &str {
        &self.instance_id
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    /// Point-in-mask test on the pixel containing `(x, y)`, optionally
    /// accepting any mask pixel within a Chebyshev radius `tolerance`.
    pub fn contains(&self, x: f64, y: f64, tolerance: usize) -> bool {
        let (h, w) = self.mask.dims();
        if x < 0.0 || y < 0.0 {
            return false;
        }
        let (c, r) = (x.floor() as usize, y.floor() as usize);
        if r >= h || c >= w {
            return false;
        }
        if tolerance == 0 {
            return self.mask.get(r, c);
        }
        let (r0, r1) = (r.saturating_sub(tolerance), (r + tolerance).min(h - 1));
        let (c0, c1) = (c.saturating_sub(tolerance), (c + tolerance).min(w - 1));
        (r0..=r1).any(|rr| (c0..=c1).any(|cc| self.mask.get(rr, cc)))
    }
}

/// Median of an unordered sample: middle element for odd length, mean of
/// the two middle elements for even length.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Median fixation time of one observer on one instance, or `None` if no
/// fixation landed on it.
pub fn observer_delay(session: &FixationSession, inst: &InstanceMask) -> Result<Option<f64>> {
    observer_delay_with_tolerance(session, inst, 0)
}

pub fn observer_delay_with_tolerance(
    session: &FixationSession,
    inst: &InstanceMask,
    tolerance: usize,
) -> Result<Option<f64>> {
    if session.image_id != inst.image_id {
        return Err(Error::invalid(format!(
            "session for image `{}` used with instance of image `{}`",
            session.image_id, inst.image_id
        )));
    }
    let offsets: Vec<f64> = session
        .points
        .iter()
        .filter(|p| inst.contains(p.x, p.y, tolerance))
        .map(|p| p.t - session.t0)
        .collect();
    if offsets.is_empty() {
        Ok(None)
    } else {
        median(&offsets).map(Some)
    }
}

/// Combines per-observer delays into one normalised instance delay.
pub fn aggregate_delays(per_observer: &[Option<f64>], normalizer: f64) -> Result<f64> {
    if !(normalizer > 0.0 && normalizer.is_finite()) {
        return Err(Error::invalid(format!("normalizer must be positive, got {normalizer}")));
    }
    if per_observer.is_empty() {
        return Err(Error::invalid("at least one observer is required"));
    }
    let seen: Vec<f64> = per_observer.iter().flatten().copied().collect();
    let missed = per_observer.len() - seen.len();
    // strictly more than half missed -> hard sample
    if 2 * missed > per_observer.len() {
        return Ok(1.0);
    }
    Ok((median(&seen)? / normalizer).clamp(0.0, 1.0))
}

pub fn instance_delay(sessions: &[FixationSession], inst: &InstanceMask, normalizer: f64) -> Result<f64> {
    instance_delay_with_tolerance(sessions, inst, normalizer, 0).map(|e| e.delay)
}

pub fn instance_delay_with_tolerance(
    sessions: &[FixationSession],
    inst: &InstanceMask,
    normalizer: f64,
    tolerance: usize,
) -> Result<DelayEntry> {
    let per_observer = sessions
        .iter()
        .map(|s| observer_delay_with_tolerance(s, inst, tolerance))
        .collect::<Result<Vec<_>>>()?;
    let delay = aggregate_delays(&per_observer, normalizer)?;
    Ok(DelayEntry { per_observer, delay })
}

/// Longest session, used as the default normalisation budget.
pub fn default_normalizer(sessions: &[FixationSession]) -> Result<f64> {
    let budget = sessions.iter().map(FixationSession::duration).fold(0.0, f64::max);
    if budget > 0.0 {
        Ok(budget)
    } else {
        Err(Error::invalid("cannot derive a normalizer: every session has zero duration"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayEntry {
    /// One slot per observer; `None` where the observer never fixated the instance.
    pub per_observer: Vec<Option<f64>>,
    /// Normalised delay in `[0, 1]`.
    pub delay: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionDelayTable {
    pub entries: BTreeMap<String, DelayEntry>,
}

impl DetectionDelayTable {
    pub fn build(
        sessions: &[FixationSession],
        instances: &[InstanceMask],
        normalizer: f64,
        tolerance: usize,
    ) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for inst in instances {
            let (h, w) = inst.mask().dims();
            for s in sessions {
                s.check_bounds(h, w)?;
            }
            let e = instance_delay_with_tolerance(sessions, inst, normalizer, tolerance)?;
            entries.insert(inst.instance_id().to_string(), e);
        }
        Ok(Self { entries })
    }

    pub fn delay(&self, instance_id: &str) -> Option<f64> {
        self.entries.get(instance_id).map(|e| e.delay)
    }
}

/// Cut points on the normalised delay: `delay > high` is rank 1,
/// `low < delay <= high` rank 2, `delay <= low` rank 3.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankThresholds {
    low: f64,
    high: f64,
}

impl RankThresholds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(0.0 < low && low < high && high < 1.0) {
            return Err(Error::invalid(format!(
                "rank thresholds must satisfy 0 < low < high < 1, got ({low}, {high})"
            )));
        }
        Ok(Self { low, high })
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn rank_for(&self, delay: f64) -> u8 {
        if delay > self.high {
            1
        } else if delay > self.low {
            2
        } else {
            3
        }
    }
}

impl Default for RankThresholds {
    fn default() -> Self {
        Self { low: 1.0 / 3.0, high: 2.0 / 3.0 }
    }
}

/// Per-pixel rank map plus the rank of every instance.
#[derive(Clone, Debug, PartialEq)]
pub struct RankAnnotation {
    pub rank_map: RankMap,
    pub instance_ranks: BTreeMap<String, u8>,
}

/// Paints every instance of `table` with its quantised rank; background stays 0.
pub fn quantize_ranks(
    table: &DetectionDelayTable,
    instances: &[InstanceMask],
    thresholds: RankThresholds,
) -> Result<RankAnnotation> {
    let first = instances.first().ok_or_else(|| Error::invalid("no instances to rank"))?;
    let (h, w) = first.mask().dims();
    let mut rank_map = RankMap::filled(h, w, 0);
    let mut instance_ranks = BTreeMap::new();
    for inst in instances {
        inst.mask().check_same_dims(first.mask(), "instance masks")?;
        let delay = table
            .delay(inst.instance_id())
            .ok_or_else(|| Error::invalid(format!("no delay for instance `{}`", inst.instance_id())))?;
        let rank = thresholds.rank_for(delay);
        for (dst, &m) in rank_map.data_mut().iter_mut().zip(inst.mask().data()) {
            if m {
                if *dst != 0 {
                    return Err(Error::invalid(format!(
                        "instance `{}` overlaps another instance",
                        inst.instance_id()
                    )));
                }
                *dst = rank;
            }
        }
        instance_ranks.insert(inst.instance_id().to_string(), rank);
    }
    Ok(RankAnnotation { rank_map, instance_ranks })
}
