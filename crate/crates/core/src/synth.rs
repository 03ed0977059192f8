//! Synthetic corpora: sampled parameters, perturbed skeletons, keypoint heatmaps
//! and salt-and-pepper corruption.

use std::f64::consts::{PI, TAU};

use nalgebra::Matrix2xX;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{project_shape, Keypoints2D, ParamVector};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_NOISE, STREAM_SAMPLE};
use crate::skeleton::{compose_skeleton, diagonal_length, BaseShapeSet, Shape3D};

/// Maximum number of draws before [`sample_params`] gives up.
pub const MAX_REJECTION_TRIES: usize = 100;

/// Heatmap raster and its mapping to normalized image coordinates.
///
/// Cell `(row, col)` is centred at `x = (col + ½ − W/2)·cell`, `y = (H/2 − row − ½)·cell`,
/// so rows run top to bottom and image `y` points up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
}

impl Default for HeatmapGrid {
    fn default() -> Self {
        Self {
            width: 40,
            height: 30,
            cell_size: 0.05,
        }
    }
}

impl HeatmapGrid {
    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5 - self.width as f64 / 2.0) * self.cell_size,
            (self.height as f64 / 2.0 - row as f64 - 0.5) * self.cell_size,
        )
    }

    /// Continuous (row, col) position of an image point, in cell units.
    pub fn to_cell(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.height as f64 / 2.0 - 0.5 - y / self.cell_size,
            x / self.cell_size + self.width as f64 / 2.0 - 0.5,
        )
    }

    /// True when the point lies inside the raster with `margin` cells to spare.
    pub fn contains(&self, x: f64, y: f64, margin: f64) -> bool {
        let half_w = self.width as f64 / 2.0 - margin;
        let half_h = self.height as f64 / 2.0 - margin;
        (x / self.cell_size).abs() <= half_w && (y / self.cell_size).abs() <= half_h
    }
}

/// `N` heatmap channels stored channel-major, each row-major `H × W`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    pub grid: HeatmapGrid,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl HeatmapStack {
    pub fn zeros(grid: HeatmapGrid, channels: usize) -> Self {
        Self {
            grid,
            channels,
            data: vec![0.0; channels * grid.cells()],
        }
    }

    pub fn from_data(grid: HeatmapGrid, channels: usize, data: Vec<f32>) -> Result<Self> {
        let expected = channels * grid.cells();
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "heatmap data",
                expected,
                got: data.len(),
            });
        }
        Ok(Self { grid, channels, data })
    }

    pub fn channel(&self, i: usize) -> &[f32] {
        let c = self.grid.cells();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[channel * self.grid.cells() + row * self.grid.width + col]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Closed interval for uniform sampling. `lo == hi` always yields `lo`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..self.hi)
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Everything that determines a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Range for every free structural weight.
    pub alpha: Range,
    pub azimuth: Range,
    pub elevation: Range,
    pub tilt: Range,
    pub t_x: Range,
    pub t_y: Range,
    pub t_z: Range,
    pub inv_f: Range,
    /// Perturbation standard deviation as a fraction of the shape's diagonal.
    pub perturbation: f64,
    /// Heatmap blob standard deviation, in cells.
    pub heatmap_sigma: f64,
    /// Salt-and-pepper level applied to generated heatmaps.
    pub noise: f64,
    /// Reject draws whose keypoints leave the heatmap raster.
    pub require_in_view: bool,
    pub grid: HeatmapGrid,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            alpha: Range::new(-1.0, 1.0),
            azimuth: Range::new(0.0, TAU),
            elevation: Range::new(-PI / 6.0, PI / 3.0),
            tilt: Range::new(-PI / 12.0, PI / 12.0),
            t_x: Range::new(-0.2, 0.2),
            t_y: Range::new(-0.2, 0.2),
            t_z: Range::new(-0.2, 0.2),
            inv_f: Range::new(0.0, 0.8),
            perturbation: 0.01,
            heatmap_sigma: 1.5,
            noise: 0.0,
            require_in_view: true,
            grid: HeatmapGrid::default(),
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("alpha", self.alpha),
            ("azimuth", self.azimuth),
            ("elevation", self.elevation),
            ("tilt", self.tilt),
            ("t_x", self.t_x),
            ("t_y", self.t_y),
            ("t_z", self.t_z),
            ("inv_f", self.inv_f),
        ];
        for (name, r) in ranges {
            if !(r.lo <= r.hi) || !r.lo.is_finite() || !r.hi.is_finite() {
                return Err(Error::InvalidConfig(format!("range `{name}` is empty")));
            }
        }
        if self.inv_f.lo < 0.0 {
            return Err(Error::InvalidConfig("inv_f range must be nonnegative".into()));
        }
        if !(self.perturbation >= 0.0) {
            return Err(Error::InvalidConfig("perturbation ratio must be >= 0".into()));
        }
        if !(self.heatmap_sigma > 0.0) {
            return Err(Error::InvalidConfig("heatmap sigma must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidConfig("noise level must lie in [0, 1]".into()));
        }
        if self.grid.width == 0 || self.grid.height == 0 || !(self.grid.cell_size > 0.0) {
            return Err(Error::InvalidConfig("heatmap grid must be nonempty".into()));
        }
        Ok(())
    }
}

/// One synthetic training/testing case.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub heatmaps: HeatmapStack,
    pub s_true: ParamVector,
    /// Perturbed skeleton in the object frame.
    pub y_true: Shape3D,
    /// Projection of `y_true` under the camera of `s_true`.
    pub x_true: Keypoints2D,
}

fn draw_params<R: Rng + ?Sized>(cfg: &SamplerConfig, num_bases: usize, rng: &mut R) -> ParamVector {
    ParamVector {
        alpha_free: (1..num_bases).map(|_| cfg.alpha.sample(rng)).collect(),
        azimuth: cfg.azimuth.sample(rng),
        elevation: cfg.elevation.sample(rng),
        tilt: cfg.tilt.sample(rng),
        t: [cfg.t_x.sample(rng), cfg.t_y.sample(rng), cfg.t_z.sample(rng)],
        inv_f: cfg.inv_f.sample(rng),
    }
}

fn in_view(cfg: &SamplerConfig, x: &Keypoints2D) -> bool {
    !cfg.require_in_view
        || x.coords
            .column_iter()
            .all(|c| cfg.grid.contains(c[0], c[1], 0.5))
}

/// Draws a parameter vector uniformly from the configured ranges, rejecting draws
/// whose mean-weighted skeleton falls behind the camera (or out of view, when
/// `require_in_view` is set).
pub fn sample_params<R: Rng + ?Sized>(
    cfg: &SamplerConfig,
    bases: &BaseShapeSet,
    rng: &mut R,
) -> Result<ParamVector> {
    for _ in 0..MAX_REJECTION_TRIES {
        let s = draw_params(cfg, bases.num_bases(), rng);
        if let Ok(x) = crate::camera::project_skeleton(&s, bases) {
            if in_view(cfg, &x) {
                return Ok(s);
            }
        }
    }
    Err(Error::RejectionExhausted(MAX_REJECTION_TRIES))
}

/// Adds i.i.d. Gaussian offsets with std `ratio · diagonal_length(y)` to every coordinate.
pub fn perturb_shape<R: Rng + ?Sized>(y: &Shape3D, ratio: f64, rng: &mut R) -> Result<Shape3D> {
    let sigma = ratio * diagonal_length(y)?;
    if sigma == 0.0 {
        return Ok(y.clone());
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidConfig(format!("perturbation: {e}")))?;
    let mut coords = y.coords.clone();
    for v in coords.iter_mut() {
        *v += normal.sample(rng);
    }
    Ok(Shape3D { coords })
}

/// Renders one Gaussian blob per keypoint: `exp(−d² / 2σ²)` with `d` in cells.
pub fn render_heatmaps(x: &Keypoints2D, sigma: f64, grid: HeatmapGrid) -> HeatmapStack {
    let mut stack = HeatmapStack::zeros(grid, x.len());
    let cells = grid.cells();
    let inv = 1.0 / (2.0 * sigma * sigma);
    for (i, c) in x.coords.column_iter().enumerate() {
        if !x.visible[i] {
            continue;
        }
        let (kr, kc) = grid.to_cell(c[0], c[1]);
        let channel = &mut stack.data[i * cells..(i + 1) * cells];
        for row in 0..grid.height {
            let dr = row as f64 - kr;
            for col in 0..grid.width {
                let dc = col as f64 - kc;
                channel[row * grid.width + col] = (-(dr * dr + dc * dc) * inv).exp() as f32;
            }
        }
    }
    stack
}

/// Replaces each cell with 0 (probability `p/2`) or 1 (probability `p/2`).
pub fn corrupt_salt_pepper<R: Rng + ?Sized>(h: &HeatmapStack, p: f64, rng: &mut R) -> HeatmapStack {
    let mut out = h.clone();
    corrupt_in_place(&mut out.data, p, rng);
    out
}

pub(crate) fn corrupt_in_place<R: Rng + ?Sized>(data: &mut [f32], p: f64, rng: &mut R) {
    if p <= 0.0 {
        return;
    }
    let half = p / 2.0;
    for v in data.iter_mut() {
        let u: f64 = rng.random();
        if u < half {
            *v = 0.0;
        } else if u < p {
            *v = 1.0;
        }
    }
}

/// Per-channel argmax decoded to the winning cell's centre. Ties go to the lowest
/// row-major index, so an all-zero channel decodes to cell (0, 0).
pub fn argmax_keypoints(h: &HeatmapStack) -> Keypoints2D {
    let mut coords = Matrix2xX::zeros(h.channels);
    for i in 0..h.channels {
        let channel = h.channel(i);
        let mut best = 0;
        for (j, v) in channel.iter().enumerate() {
            if *v > channel[best] {
                best = j;
            }
        }
        let (x, y) = h.grid.cell_center(best / h.grid.width, best % h.grid.width);
        coords[(0, i)] = x;
        coords[(1, i)] = y;
    }
    Keypoints2D::new(coords)
}

/// Generates sample `index` of the corpus defined by `cfg`.
pub fn generate_sample(cfg: &SamplerConfig, bases: &BaseShapeSet, index: u64) -> Result<SynthSample> {
    let mut rng = stream_rng(cfg.seed, STREAM_SAMPLE, index);
    for _ in 0..MAX_REJECTION_TRIES {
        let s = sample_params(cfg, bases, &mut rng)?;
        let (alpha, cam) = s.decode()?;
        let y = compose_skeleton(&alpha, bases)?;
        let y = perturb_shape(&y, cfg.perturbation, &mut rng)?;
        let Ok(x) = project_shape(&y, &cam) else {
            continue;
        };
        if !in_view(cfg, &x) {
            continue;
        }
        let mut heatmaps = render_heatmaps(&x, cfg.heatmap_sigma, cfg.grid);
        if cfg.noise > 0.0 {
            let mut noise_rng = stream_rng(cfg.seed, STREAM_NOISE, index);
            corrupt_in_place(&mut heatmaps.data, cfg.noise, &mut noise_rng);
        }
        return Ok(SynthSample {
            heatmaps,
            s_true: s,
            y_true: y,
            x_true: x,
        });
    }
    Err(Error::RejectionExhausted(MAX_REJECTION_TRIES))
}

/// `count` independent samples; sample `i` depends only on `(cfg, i)`.
pub fn generate_dataset(cfg: &SamplerConfig, bases: &BaseShapeSet, count: usize) -> Result<Vec<SynthSample>> {
    cfg.validate()?;
    if count == 0 {
        return Err(Error::EmptyInput("dataset sample count"));
    }
    (0..count as u64)
        .into_par_iter()
        .map(|i| generate_sample(cfg, bases, i))
        .collect()
}
