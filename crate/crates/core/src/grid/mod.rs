//! Raster containers and per-pixel primitives.

mod color;
mod distance;

pub use color::{delta_e_2000, rgb_to_lab, rgb_to_lab_grid, Lab};
pub use distance::distance_transform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 2-D raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Input(format!(
                "raster data has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    /// Value at signed coordinates, `None` outside the raster.
    #[inline]
    pub fn checked(&self, row: i64, col: i64) -> Option<&T> {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            None
        } else {
            Some(self.get(row as usize, col as usize))
        }
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Grid<U> {
        Grid { width: self.width, height: self.height, data: self.data.iter().map(f).collect() }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.dims() == other.dims()
    }
}

/// Vessel likelihood, 0..=255.
pub type LikelihoodGrid = Grid<u8>;
pub type BinaryGrid = Grid<bool>;
pub type DistanceGrid = Grid<f64>;
pub type LabGrid = Grid<Lab>;
pub type RgbGrid = Grid<[u8; 3]>;

impl BinaryGrid {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn union(&self, other: &BinaryGrid) -> BinaryGrid {
        assert!(self.same_dims(other), "union of rasters with different sizes");
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect(),
        }
    }

    /// Coordinates of true pixels in row-major order.
    pub fn true_pixels(&self) -> Vec<Pixel> {
        let mut out = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                if *self.get(r, c) {
                    out.push(Pixel::new(r, c));
                }
            }
        }
        out
    }
}

/// `true` where `value >= t`.
#[must_use]
pub fn threshold(grid: &LikelihoodGrid, t: u8) -> BinaryGrid {
    grid.map(|&v| v >= t)
}

/// Integer pixel coordinate, ordered by (row, col).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub row: u32,
    pub col: u32,
}

impl Pixel {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row: row as u32, col: col as u32 }
    }

    pub fn is_8_adjacent(&self, other: &Pixel) -> bool {
        let dr = (self.row as i64 - other.row as i64).abs();
        let dc = (self.col as i64 - other.col as i64).abs();
        dr <= 1 && dc <= 1 && (dr + dc) > 0
    }

    pub fn dist(&self, other: &Pixel) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        (dr * dr + dc * dc).sqrt()
    }
}

/// The eight neighbour offsets in clockwise order starting north.
pub const NEIGHBORS_8: [(i64, i64); 8] =
    [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

/// Hard artery/vein class of a pixel or node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvLabel {
    Background,
    Artery,
    Vein,
}

impl AvLabel {
    pub fn index(self) -> usize {
        match self {
            AvLabel::Background => 0,
            AvLabel::Artery => 1,
            AvLabel::Vein => 2,
        }
    }

    pub fn from_index(i: usize) -> Self {
        match i {
            1 => AvLabel::Artery,
            2 => AvLabel::Vein,
            _ => AvLabel::Background,
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            AvLabel::Artery => AvLabel::Vein,
            AvLabel::Vein => AvLabel::Artery,
            AvLabel::Background => AvLabel::Background,
        }
    }

    /// Canonical display color: red artery, blue vein, black background.
    pub fn rgb(self) -> [u8; 3] {
        match self {
            AvLabel::Background => [0, 0, 0],
            AvLabel::Artery => [255, 0, 0],
            AvLabel::Vein => [0, 0, 255],
        }
    }

    pub fn is_vessel(self) -> bool {
        self != AvLabel::Background
    }
}

/// Per-pixel (background, artery, vein) probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AvPriorGrid {
    probs: Grid<[f64; 3]>,
}

impl AvPriorGrid {
    /// Builds a prior from probability triples; each triple is renormalized.
    pub fn from_probs(probs: Grid<[f64; 3]>) -> Result<Self> {
        let mut probs = probs;
        for p in probs.data_mut() {
            if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Input("prior probabilities must be finite and non-negative".into()));
            }
            let s: f64 = p.iter().sum();
            if s <= 0.0 {
                *p = [1.0, 0.0, 0.0];
            } else {
                for v in p.iter_mut() {
                    *v /= s;
                }
            }
        }
        Ok(Self { probs })
    }

    pub fn from_labels(labels: &Grid<AvLabel>) -> Self {
        let probs = labels.map(|l| {
            let mut p = [0.0; 3];
            p[l.index()] = 1.0;
            p
        });
        Self { probs }
    }

    /// Decodes an RGB raster: red = artery, blue = vein, green = background.
    ///
    /// Pure red, blue and black pixels are hard labels; anything else is read
    /// as a probability triple scaled to 0..=255.
    pub fn from_rgb(rgb: &RgbGrid) -> Self {
        let probs = rgb.map(|&[r, g, b]| {
            let (a, bg, v) = (r as f64, g as f64, b as f64);
            let s = a + bg + v;
            if s == 0.0 {
                [1.0, 0.0, 0.0]
            } else {
                [bg / s, a / s, v / s]
            }
        });
        Self { probs }
    }

    pub fn to_rgb(&self) -> RgbGrid {
        self.probs.map(|p| {
            let q = |x: f64| (x * 255.0).round().clamp(0.0, 255.0) as u8;
            [q(p[1]), q(p[0]), q(p[2])]
        })
    }

    pub fn width(&self) -> usize {
        self.probs.width()
    }

    pub fn height(&self) -> usize {
        self.probs.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.probs.dims()
    }

    pub fn probs(&self, row: usize, col: usize) -> [f64; 3] {
        *self.probs.get(row, col)
    }

    /// Argmax class; ties resolve toward the lower class index.
    pub fn label(&self, row: usize, col: usize) -> AvLabel {
        let p = self.probs.get(row, col);
        let mut best = 0;
        for k in 1..3 {
            if p[k] > p[best] {
                best = k;
            }
        }
        AvLabel::from_index(best)
    }

    pub fn labels(&self) -> Grid<AvLabel> {
        Grid::from_fn(self.width(), self.height(), |r, c| self.label(r, c))
    }
}

/// Fails with an input error unless all sizes match the first.
pub fn check_same_dims(named: &[(&str, (usize, usize))]) -> Result<()> {
    if let Some((first_name, first)) = named.first() {
        for (name, dims) in &named[1..] {
            if dims != first {
                return Err(Error::Input(format!(
                    "{} is {}x{} but {} is {}x{}",
                    name, dims.0, dims.1, first_name, first.0, first.1
                )));
            }
        }
    }
    Ok(())
}
