//! Scenes and depth images as row-major grids.

use crate::error::{Result, SimError};

/// Dense row-major grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SimError::domain(
                "grid",
                format!("payload length {} != {rows} x {cols}", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }
}

impl<T> Grid<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.cols + col]
    }

    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.cols + col]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Iterate `(row, col, &value)` in row-major order.
    pub fn enumerate(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let cols = self.cols;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (i / cols, i % cols, v))
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Ground truth for a simulation: per-pixel range and reflectivity with a
/// mask for pixels that return nothing (sky, specular dropouts).
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    range_m: Grid<f64>,
    reflectivity: Grid<f64>,
    invalid: Grid<bool>,
}

impl Scene {
    pub fn new(range_m: Grid<f64>, reflectivity: Grid<f64>, invalid: Grid<bool>) -> Result<Self> {
        if !range_m.same_shape(&reflectivity) || !range_m.same_shape(&invalid) {
            return Err(SimError::DimensionMismatch {
                context: "scene grids".into(),
                left_rows: range_m.rows(),
                left_cols: range_m.cols(),
                right_rows: reflectivity.rows(),
                right_cols: reflectivity.cols(),
            });
        }
        for (r, c, &inv) in invalid.enumerate() {
            if inv {
                continue;
            }
            let range = *range_m.get(r, c);
            if !(range > 0.0) || !range.is_finite() {
                return Err(SimError::domain(
                    format!("scene.range[{r}][{c}]"),
                    format!("valid pixels need range > 0, got {range}"),
                ));
            }
            let gamma = *reflectivity.get(r, c);
            if !(0.0..=1.0).contains(&gamma) {
                return Err(SimError::domain(
                    format!("scene.reflectivity[{r}][{c}]"),
                    format!("must be in [0, 1], got {gamma}"),
                ));
            }
        }
        Ok(Self {
            range_m,
            reflectivity,
            invalid,
        })
    }

    /// Uniform scene: every pixel at the same range and reflectivity.
    pub fn uniform(rows: usize, cols: usize, range_m: f64, reflectivity: f64) -> Result<Self> {
        Self::new(
            Grid::filled(rows, cols, range_m),
            Grid::filled(rows, cols, reflectivity),
            Grid::filled(rows, cols, false),
        )
    }

    /// Flat backplane with a row of raised square posts, one per entry of
    /// `post_heights_m`, posts protruding toward the sensor. Returns the
    /// scene and the pixel footprint of each post.
    pub fn resolution_target(
        rows: usize,
        cols: usize,
        backplane_range_m: f64,
        post_heights_m: &[f64],
        reflectivity: f64,
        post_size_px: usize,
    ) -> Result<(Self, Vec<PostFootprint>)> {
        let n = post_heights_m.len();
        if n == 0 {
            return Scene::uniform(rows, cols, backplane_range_m, reflectivity)
                .map(|s| (s, Vec::new()));
        }
        let pitch = cols / n;
        if pitch < post_size_px + 1 || rows < post_size_px + 2 {
            return Err(SimError::domain(
                "resolution_target",
                format!("{rows}x{cols} too small for {n} posts of {post_size_px} px"),
            ));
        }
        let mut range = Grid::filled(rows, cols, backplane_range_m);
        let top = (rows - post_size_px) / 2;
        let mut footprints = Vec::with_capacity(n);
        for (i, &h) in post_heights_m.iter().enumerate() {
            let left = i * pitch + (pitch - post_size_px) / 2;
            for r in top..top + post_size_px {
                for c in left..left + post_size_px {
                    *range.get_mut(r, c) = backplane_range_m - h;
                }
            }
            footprints.push(PostFootprint {
                height_m: h,
                row0: top,
                col0: left,
                size_px: post_size_px,
            });
        }
        let scene = Scene::new(
            range,
            Grid::filled(rows, cols, reflectivity),
            Grid::filled(rows, cols, false),
        )?;
        Ok((scene, footprints))
    }

    pub fn rows(&self) -> usize {
        self.range_m.rows()
    }

    pub fn cols(&self) -> usize {
        self.range_m.cols()
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        !*self.invalid.get(row, col)
    }

    pub fn range_m(&self, row: usize, col: usize) -> f64 {
        *self.range_m.get(row, col)
    }

    pub fn reflectivity(&self, row: usize, col: usize) -> f64 {
        *self.reflectivity.get(row, col)
    }

    pub fn range_map(&self) -> &Grid<f64> {
        &self.range_m
    }

    pub fn reflectivity_map(&self) -> &Grid<f64> {
        &self.reflectivity
    }

    pub fn invalid_mask(&self) -> &Grid<bool> {
        &self.invalid
    }
}

/// Where a post of the resolution target sits in the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostFootprint {
    pub height_m: f64,
    pub row0: usize,
    pub col0: usize,
    pub size_px: usize,
}

impl PostFootprint {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row0
            && row < self.row0 + self.size_px
            && col >= self.col0
            && col < self.col0 + self.size_px
    }
}

/// Why a pixel carries no depth estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PixelStatus {
    Valid = 0,
    /// Scene marked the pixel as returning nothing.
    NoReturn = 1,
    /// Zero information: the bound diverges, no depth can be assigned.
    NotEstimable = 2,
    /// The pixel histogram contained no photons.
    EmptyHistogram = 3,
    /// Radiometry or model construction failed for this pixel.
    ModelError = 4,
}

impl PixelStatus {
    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => PixelStatus::Valid,
            1 => PixelStatus::NoReturn,
            2 => PixelStatus::NotEstimable,
            3 => PixelStatus::EmptyHistogram,
            4 => PixelStatus::ModelError,
            other => {
                return Err(SimError::domain(
                    "pixel_status",
                    format!("unknown status code {other}"),
                ))
            }
        })
    }
}

/// Which generation regime produced an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageMode {
    Crb,
    Histogram,
}

/// Reproducibility record attached to every generated image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub mode: ImageMode,
    pub seed: u64,
    pub config_digest: u64,
}

/// Estimated (or noised ground-truth) depth per pixel, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    depths_m: Grid<f64>,
    status: Grid<PixelStatus>,
    pub provenance: Provenance,
}

impl DepthImage {
    pub fn new(depths_m: Grid<f64>, status: Grid<PixelStatus>, provenance: Provenance) -> Result<Self> {
        if !depths_m.same_shape(&status) {
            return Err(SimError::DimensionMismatch {
                context: "depth image grids".into(),
                left_rows: depths_m.rows(),
                left_cols: depths_m.cols(),
                right_rows: status.rows(),
                right_cols: status.cols(),
            });
        }
        for (r, c, &s) in status.enumerate() {
            if s == PixelStatus::Valid && !depths_m.get(r, c).is_finite() {
                return Err(SimError::domain(
                    format!("depth[{r}][{c}]"),
                    "valid pixels must hold finite depths",
                ));
            }
        }
        Ok(Self {
            depths_m,
            status,
            provenance,
        })
    }

    pub fn rows(&self) -> usize {
        self.depths_m.rows()
    }

    pub fn cols(&self) -> usize {
        self.depths_m.cols()
    }

    /// Unit tag of the depth values.
    pub fn units(&self) -> &'static str {
        "m"
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        *self.status.get(row, col) == PixelStatus::Valid
    }

    pub fn depth_m(&self, row: usize, col: usize) -> f64 {
        *self.depths_m.get(row, col)
    }

    pub fn status(&self, row: usize, col: usize) -> PixelStatus {
        *self.status.get(row, col)
    }

    pub fn depth_map(&self) -> &Grid<f64> {
        &self.depths_m
    }

    pub fn status_map(&self) -> &Grid<PixelStatus> {
        &self.status
    }

    pub fn n_valid(&self) -> usize {
        self.status
            .as_slice()
            .iter()
            .filter(|&&s| s == PixelStatus::Valid)
            .count()
    }

    /// Depths of valid pixels in row-major order.
    pub fn valid_depths(&self) -> impl Iterator<Item = f64> + '_ {
        self.depths_m
            .as_slice()
            .iter()
            .zip(self.status.as_slice())
            .filter(|(_, &s)| s == PixelStatus::Valid)
            .map(|(&d, _)| d)
    }
}
