use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnalysisMode, SolveTiming};
use crate::error::{Error, Result};
use crate::io::{self, FloatImage};
use crate::scalar::Scalar;
use crate::surface::SurfaceSlice;

/// Per-pixel stress concentration factor aligned to a [`SurfaceSlice`].
/// Void pixels hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct KtField<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
    pub sigma_nominal: f64,
    pub mode: AnalysisMode,
    pub pixel_pitch: f64,
    pub r_inner_nominal: f64,
    /// [`SurfaceSlice::digest`] of the source geometry.
    pub slice_digest: String,
}

impl<T: Scalar> KtField<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<T>,
        sigma_nominal: f64,
        mode: AnalysisMode,
        pixel_pitch: f64,
        r_inner_nominal: f64,
        slice_digest: String,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "field has {} values, expected {rows}x{cols}",
                values.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            sigma_nominal,
            mode,
            pixel_pitch,
            r_inner_nominal,
            slice_digest,
        })
    }

    /// Field over `slice` with values from `kt(row, col)` on material and NaN on void.
    pub fn from_slice_fn(slice: &SurfaceSlice, mode: AnalysisMode, mut kt: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(slice.rows() * slice.cols());
        for i in 0..slice.rows() {
            for j in 0..slice.cols() {
                values.push(if slice.is_material(i, j) { kt(i, j) } else { T::nan() });
            }
        }
        Self {
            rows: slice.rows(),
            cols: slice.cols(),
            values,
            sigma_nominal: 1.0,
            mode,
            pixel_pitch: slice.pixel_pitch(),
            r_inner_nominal: slice.r_inner_nominal(),
            slice_digest: slice.digest(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn raw(&self) -> &[T] {
        &self.values
    }

    /// K_t at a pixel, `None` on void.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<T> {
        let v = self.values[row * self.cols + col];
        (!v.is_nan()).then_some(v)
    }

    /// Material-pixel values in row-major order.
    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.values.iter().copied().filter(|v| !v.is_nan())
    }

    pub fn max(&self) -> Option<T> {
        self.values().fold(None, |m, v| Some(m.map_or(v, |m: T| m.max(v))))
    }

    pub fn check_aligned(&self, slice: &SurfaceSlice) -> Result<()> {
        if self.rows != slice.rows() || self.cols != slice.cols() {
            return Err(Error::Shape(format!(
                "field is {}x{}, slice is {}x{}",
                self.rows,
                self.cols,
                slice.rows(),
                slice.cols()
            )));
        }
        Ok(())
    }

    /// Same field in another scalar type.
    pub fn cast<U: Scalar>(&self) -> KtField<U> {
        KtField {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
            sigma_nominal: self.sigma_nominal,
            mode: self.mode,
            pixel_pitch: self.pixel_pitch,
            r_inner_nominal: self.r_inner_nominal,
            slice_digest: self.slice_digest.clone(),
        }
    }

    /// Rows `start..start + len`.
    pub fn crop_rows(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.rows {
            return Err(Error::Shape("row crop out of range".into()));
        }
        Ok(Self {
            rows: len,
            values: self.values[start * self.cols..(start + len) * self.cols].to_vec(),
            ..self.clone()
        })
    }

    pub fn to_image(&self) -> FloatImage {
        FloatImage {
            width: self.cols,
            height: self.rows,
            data: self.values.iter().map(|v| v.as_f64() as f32).collect(),
        }
    }
}

/// JSON sidecar written next to a field's PFM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSidecar {
    pub rows: usize,
    pub cols: usize,
    pub sigma_nominal: f64,
    pub mode: AnalysisMode,
    pub pixel_pitch_um: f64,
    pub r_inner_nominal_um: f64,
    pub slice_digest: String,
    /// `"fem"` or `"surrogate"`.
    pub source: String,
    pub config_hash: Option<String>,
    pub timing: Option<SolveTiming>,
}

impl FieldSidecar {
    pub fn for_field<T: Scalar>(field: &KtField<T>, source: &str) -> Self {
        Self {
            rows: field.rows,
            cols: field.cols,
            sigma_nominal: field.sigma_nominal,
            mode: field.mode,
            pixel_pitch_um: field.pixel_pitch,
            r_inner_nominal_um: field.r_inner_nominal,
            slice_digest: field.slice_digest.clone(),
            source: source.to_string(),
            config_hash: None,
            timing: None,
        }
    }
}

/// Writes `<name>.pfm` (little-endian `Pf`, NaN on void) and `<name>.field.json`.
pub fn save_field<T: Scalar>(field: &KtField<T>, sidecar: &FieldSidecar, path: &Path) -> Result<()> {
    if sidecar.rows != field.rows || sidecar.cols != field.cols {
        return Err(Error::Shape("sidecar dimensions differ from the field".into()));
    }
    io::write_pfm(path, &field.to_image())?;
    io::write_json(&io::field_sidecar_path(path), sidecar)
}

pub fn load_field_sidecar(path: &Path) -> Result<FieldSidecar> {
    let side = io::field_sidecar_path(path);
    if !side.exists() {
        return Err(Error::Format(format!("missing sidecar {}", side.display())));
    }
    io::read_json(&side)
}

pub fn load_field<T: Scalar>(path: &Path) -> Result<KtField<T>> {
    let img = io::read_pfm(path)?;
    let side = load_field_sidecar(path)?;
    if side.rows != img.height || side.cols != img.width {
        return Err(Error::Format(format!(
            "sidecar says {}x{}, image is {}x{}",
            side.rows, side.cols, img.height, img.width
        )));
    }
    KtField::new(
        side.rows,
        side.cols,
        img.data.into_iter().map(T::of_f32).collect(),
        side.sigma_nominal,
        side.mode,
        side.pixel_pitch_um,
        side.r_inner_nominal_um,
        side.slice_digest,
    )
}
