//! Camouflage localisation, segmentation and ranking.
//!
//! * [`annotation`] turns eye-tracker sessions and instance masks into rank maps.
//! * [`metrics`] scores segmentation, fixation and rank predictions.
//! * [`model`] holds the joint network and its ranking branch.
//! * [`losses`] has every training objective.
//! * [`data`] reads and writes corpora and generates synthetic ones.
//! * [`pipeline`] trains, evaluates and runs inference.

pub mod annotation;
pub mod data;
pub mod error;
pub mod grid;
pub mod imageio;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod pipeline;

pub use error::{Error, Result};
pub use grid::{DenseMap, Grid, MapKind, Mask, RankMap};
