//! Row-major 2-D grids used for maps, masks and rank annotations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    h: usize,
    w: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::invalid(format!(
                "grid {h}x{w} needs {} values, got {}",
                h * w,
                data.len()
            )));
        }
        Ok(Self { h, w, data })
    }

    pub fn filled(h: usize, w: usize, value: T) -> Self {
        Self { h, w, data: vec![value; h * w] }
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                data.push(f(r, c));
            }
        }
        Self { h, w, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.w + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.w + c] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid { h: self.h, w: self.w, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Errors unless `other` has the same dimensions.
    pub fn check_same_dims<U>(&self, other: &Grid<U>, what: &'static str) -> Result<()> {
        if (self.h, self.w) != (other.h, other.w) {
            return Err(Error::ShapeMismatch { what, left: (self.h, self.w), right: (other.h, other.w) });
        }
        Ok(())
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.h, self.w, |r, c| self.get(r, self.w - 1 - c))
    }
}

/// Binary mask.
pub type Mask = Grid<bool>;

/// Integer rank grid with values in `{0, 1, 2, 3}`.
pub type RankMap = Grid<u8>;

pub const MAX_RANK: u8 = 3;

/// What range a [`DenseMap`] is allowed to cover.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapKind {
    /// Every entry in `[0, 1]`.
    Probability,
    /// Every entry `>= 0`.
    Density,
}

/// Real-valued map whose range is validated on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMap {
    grid: Grid<f64>,
    kind: MapKind,
}

impl DenseMap {
    pub fn new(grid: Grid<f64>, kind: MapKind) -> Result<Self> {
        let ok = match kind {
            MapKind::Probability => grid.data().iter().all(|&v| (0.0..=1.0).contains(&v)),
            MapKind::Density => grid.data().iter().all(|&v| v >= 0.0 && v.is_finite()),
        };
        if !ok {
            return Err(Error::invalid(format!("values out of range for a {kind:?} map")));
        }
        Ok(Self { grid, kind })
    }

    pub fn probability(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(Grid::new(h, w, data)?, MapKind::Probability)
    }

    pub fn density(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(Grid::new(h, w, data)?, MapKind::Density)
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.grid
    }

    pub fn into_grid(self) -> Grid<f64> {
        self.grid
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    pub fn data(&self) -> &[f64] {
        self.grid.data()
    }

    pub fn check_same_dims(&self, other: &DenseMap, what: &'static str) -> Result<()> {
        self.grid.check_same_dims(&other.grid, what)
    }

    /// True if every value is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.data().iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

pub fn validate_rank_map(map: &RankMap) -> Result<()> {
    if let Some(v) = map.data().iter().find(|&&v| v > MAX_RANK) {
        return Err(Error::invalid(format!("rank value {v} outside 0..=3")));
    }
    Ok(())
}
