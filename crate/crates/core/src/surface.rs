//! Rough-bore slice geometry.
//!
//! A [`SurfaceSlice`] is a binary material/void grid of one radial-axial
//! section: rows run along the axis (z), columns run outward in radius (r),
//! and column 0 sits on the bore side. Material lies to the right of the
//! rough bore wall; the outer edge (last column) is smooth.
//!
//! Synthetic bores come from [`generate_profile`] + [`rasterize`]: Gaussian
//! white noise from a seeded `ChaCha8Rng` is smoothed with a Gaussian kernel
//! whose standard deviation is the correlation length, then rescaled so the
//! sample RMS about the mean equals the requested amplitude exactly.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, GrayImage};
use crate::seed;

/// Nano-CT pixel pitch the pipeline is built around, in µm.
pub const DEFAULT_PIXEL_PITCH: f64 = 3.0;

/// Smallest grid the FE mesh and the statistics accept.
pub const MIN_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoughnessParams {
    /// µm
    pub rms_amplitude: f64,
    /// µm
    pub correlation_length: f64,
    /// Distance of the mean surface from column 0, µm.
    pub mean_bore_offset: f64,
    pub seed: u64,
}

impl Default for RoughnessParams {
    fn default() -> Self {
        Self {
            rms_amplitude: 10.0,
            correlation_length: 30.0,
            mean_bore_offset: 60.0,
            seed: 0,
        }
    }
}

impl RoughnessParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rms_amplitude >= 0.0 && self.rms_amplitude.is_finite()) {
            return Err(Error::Parameter(format!(
                "rms_amplitude must be >= 0, got {}",
                self.rms_amplitude
            )));
        }
        if !(self.correlation_length > 0.0 && self.correlation_length.is_finite()) {
            return Err(Error::Parameter(format!(
                "correlation_length must be > 0, got {}",
                self.correlation_length
            )));
        }
        if !self.mean_bore_offset.is_finite() {
            return Err(Error::Parameter("mean_bore_offset must be finite".into()));
        }
        Ok(())
    }
}

/// Where a slice came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceMeta {
    pub seed: Option<u64>,
    pub generator: Option<RoughnessParams>,
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSlice {
    rows: usize,
    cols: usize,
    /// Row-major, `true` = material.
    mask: Vec<bool>,
    pixel_pitch: f64,
    r_inner_nominal: f64,
    pub meta: SliceMeta,
}

impl SurfaceSlice {
    pub fn new(
        rows: usize,
        cols: usize,
        mask: Vec<bool>,
        pixel_pitch: f64,
        r_inner_nominal: f64,
        meta: SliceMeta,
    ) -> Result<Self> {
        if rows < MIN_DIM || cols < MIN_DIM {
            return Err(Error::Geometry(format!(
                "slice is {rows}x{cols}, minimum is {MIN_DIM}x{MIN_DIM}"
            )));
        }
        if mask.len() != rows * cols {
            return Err(Error::Shape(format!(
                "mask has {} pixels, expected {rows}x{cols}",
                mask.len()
            )));
        }
        if !(pixel_pitch > 0.0 && pixel_pitch.is_finite()) {
            return Err(Error::Parameter(format!(
                "pixel_pitch must be > 0, got {pixel_pitch}"
            )));
        }
        if !(r_inner_nominal >= 0.0 && r_inner_nominal.is_finite()) {
            return Err(Error::Parameter(format!(
                "r_inner_nominal must be >= 0, got {r_inner_nominal}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            mask,
            pixel_pitch,
            r_inner_nominal,
            meta,
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        pixel_pitch: f64,
        r_inner_nominal: f64,
        mut material: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut mask = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                mask.push(material(i, j));
            }
        }
        Self::new(rows, cols, mask, pixel_pitch, r_inner_nominal, SliceMeta::default())
    }

    /// Fully material rectangle (a smooth hollow cylinder wall in axisymmetric mode).
    pub fn solid(rows: usize, cols: usize, pixel_pitch: f64, r_inner_nominal: f64) -> Result<Self> {
        Self::from_fn(rows, cols, pixel_pitch, r_inner_nominal, |_, _| true)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    pub fn r_inner_nominal(&self) -> f64 {
        self.r_inner_nominal
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn is_material(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.cols + col]
    }

    pub fn material_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Radial coordinate of a pixel center, µm.
    #[inline]
    pub fn r_center(&self, col: usize) -> f64 {
        self.r_inner_nominal + (col as f64 + 0.5) * self.pixel_pitch
    }

    /// Axial coordinate of a pixel center, µm.
    #[inline]
    pub fn z_center(&self, row: usize) -> f64 {
        (row as f64 + 0.5) * self.pixel_pitch
    }

    /// Outer radius of the slice, µm.
    pub fn r_outer(&self) -> f64 {
        self.r_inner_nominal + self.cols as f64 * self.pixel_pitch
    }

    /// Number of void pixels in the run starting at column 0 of `row`.
    pub fn bore_depth_pixels(&self, row: usize) -> usize {
        let line = &self.mask[row * self.cols..(row + 1) * self.cols];
        line.iter().take_while(|&&m| !m).count()
    }

    /// Mean depth of the bore wall from column 0 over all rows, µm.
    pub fn mean_bore_depth(&self) -> f64 {
        let total: usize = (0..self.rows).map(|i| self.bore_depth_pixels(i)).sum();
        total as f64 / self.rows as f64 * self.pixel_pitch
    }

    /// Every axial position carries material, so the load path is not severed.
    pub fn check_load_path(&self) -> Result<()> {
        for i in 0..self.rows {
            if self.bore_depth_pixels(i) == self.cols {
                return Err(Error::Geometry(format!(
                    "row {i} has no material: net section severed"
                )));
            }
        }
        Ok(())
    }

    /// Slice reflected about its axial midplane.
    pub fn mirrored_axial(&self) -> Self {
        let mut mask = Vec::with_capacity(self.mask.len());
        for i in (0..self.rows).rev() {
            mask.extend_from_slice(&self.mask[i * self.cols..(i + 1) * self.cols]);
        }
        Self {
            mask,
            ..self.clone()
        }
    }

    /// Rows `start..start + len` as a new slice.
    pub fn crop_rows(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.rows {
            return Err(Error::Shape(format!(
                "row crop {start}..{} exceeds {} rows",
                start + len,
                self.rows
            )));
        }
        Self::new(
            len,
            self.cols,
            self.mask[start * self.cols..(start + len) * self.cols].to_vec(),
            self.pixel_pitch,
            self.r_inner_nominal,
            self.meta.clone(),
        )
    }

    /// SHA-256 over the geometry (dimensions, pitch, radius, mask).
    pub fn digest(&self) -> String {
        let mut bytes = Vec::with_capacity(self.mask.len() + 32);
        bytes.extend_from_slice(&(self.rows as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.cols as u64).to_le_bytes());
        bytes.extend_from_slice(&self.pixel_pitch.to_le_bytes());
        bytes.extend_from_slice(&self.r_inner_nominal.to_le_bytes());
        bytes.extend(self.mask.iter().map(|&m| u8::from(m)));
        io::sha256_hex(&bytes)
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.cols,
            height: self.rows,
            data: self.mask.iter().map(|&m| if m { 255 } else { 0 }).collect(),
        }
    }
}

/// Grid dimensions `(rows, cols)` covering an axial × radial extent in µm.
/// Partial pixels round up.
pub fn grid_dims(axial_um: f64, radial_um: f64, pixel_pitch: f64) -> (usize, usize) {
    let n = |len: f64| (len / pixel_pitch - 1e-9).ceil().max(0.0) as usize;
    (n(axial_um), n(radial_um))
}

/// Bore-wall height per axial pixel (µm from column 0).
pub fn generate_profile(params: &RoughnessParams, n_axial: usize, pixel_pitch: f64) -> Result<Vec<f64>> {
    params.validate()?;
    if n_axial < MIN_DIM {
        return Err(Error::Parameter(format!(
            "n_axial must be >= {MIN_DIM}, got {n_axial}"
        )));
    }
    if !(pixel_pitch > 0.0 && pixel_pitch.is_finite()) {
        return Err(Error::Parameter(format!("pixel_pitch must be > 0, got {pixel_pitch}")));
    }
    if params.rms_amplitude == 0.0 {
        return Ok(vec![params.mean_bore_offset; n_axial]);
    }

    let mut rng = seed::rng(params.seed);
    let noise: Vec<f64> = (0..n_axial).map(|_| StandardNormal.sample(&mut rng)).collect();

    // periodic convolution with a truncated Gaussian (4 sigma)
    let sigma = params.correlation_length / pixel_pitch;
    let half = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let n = n_axial as isize;
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            kernel
                .iter()
                .zip(-half..=half)
                .map(|(w, k)| w * noise[(i + k).rem_euclid(n) as usize])
                .sum()
        })
        .collect();

    let mean = smooth.iter().sum::<f64>() / n_axial as f64;
    let rms = (smooth.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / n_axial as f64).sqrt();
    if rms == 0.0 {
        return Ok(vec![params.mean_bore_offset; n_axial]);
    }
    let gain = params.rms_amplitude / rms;
    Ok(smooth
        .into_iter()
        .map(|h| params.mean_bore_offset + (h - mean) * gain)
        .collect())
}

/// Pixel `(i, j)` is void iff its radial center lies below `profile[i]`.
pub fn rasterize(
    profile: &[f64],
    width_pixels: usize,
    pixel_pitch: f64,
    r_inner_nominal: f64,
) -> Result<SurfaceSlice> {
    let width_um = width_pixels as f64 * pixel_pitch;
    if let Some(&h) = profile.iter().find(|h| !h.is_finite() || **h >= width_um) {
        return Err(Error::Geometry(format!(
            "profile height {h} µm does not fit in {width_pixels} px × {pixel_pitch} µm"
        )));
    }
    SurfaceSlice::from_fn(profile.len(), width_pixels, pixel_pitch, r_inner_nominal, |i, j| {
        (j as f64 + 0.5) * pixel_pitch >= profile[i]
    })
}

/// `generate_profile` + `rasterize`, recording the generator in the slice metadata.
pub fn generate_slice(
    params: &RoughnessParams,
    rows: usize,
    cols: usize,
    pixel_pitch: f64,
    r_inner_nominal: f64,
) -> Result<SurfaceSlice> {
    let profile = generate_profile(params, rows, pixel_pitch)?;
    let mut slice = rasterize(&profile, cols, pixel_pitch, r_inner_nominal)?;
    slice.meta = SliceMeta {
        seed: Some(params.seed),
        generator: Some(*params),
        source: None,
    };
    Ok(slice)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SliceSidecar {
    rows: usize,
    cols: usize,
    pixel_pitch_um: f64,
    r_inner_nominal_um: f64,
    seed: Option<u64>,
    generator: Option<RoughnessParams>,
    source: Option<String>,
}

/// Writes `<name>.pgm` (255 = material, 0 = void) and `<name>.meta.json`.
pub fn save_slice(slice: &SurfaceSlice, path: &Path) -> Result<()> {
    io::write_pgm(path, &slice.to_image())?;
    let side = SliceSidecar {
        rows: slice.rows,
        cols: slice.cols,
        pixel_pitch_um: slice.pixel_pitch,
        r_inner_nominal_um: slice.r_inner_nominal,
        seed: slice.meta.seed,
        generator: slice.meta.generator,
        source: slice.meta.source.clone(),
    };
    io::write_json(&io::sidecar_path(path), &side)
}

pub fn load_slice(path: &Path) -> Result<SurfaceSlice> {
    let img = io::read_pgm(path)?;
    let side_path = io::sidecar_path(path);
    if !side_path.exists() {
        return Err(Error::Format(format!(
            "missing sidecar {}",
            side_path.display()
        )));
    }
    let side: SliceSidecar = io::read_json(&side_path)?;
    if side.rows != img.height || side.cols != img.width {
        return Err(Error::Format(format!(
            "sidecar says {}x{}, image is {}x{}",
            side.rows, side.cols, img.height, img.width
        )));
    }
    let mask = img.data.iter().map(|&v| v >= 128).collect();
    SurfaceSlice::new(
        side.rows,
        side.cols,
        mask,
        side.pixel_pitch_um,
        side.r_inner_nominal_um,
        SliceMeta {
            seed: side.seed,
            generator: side.generator,
            source: side.source,
        },
    )
}
