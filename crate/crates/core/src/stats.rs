//! Volume-weighted exceedance curves over K_t fields.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{AnalysisMode, KtField};
use crate::scalar::Scalar;
use crate::surface::SurfaceSlice;

/// Fraction of material volume with K_t strictly above each threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceCurve {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
    /// Physical volume of all material pixels (µm³ axisymmetric, µm² per
    /// unit thickness in plane stress).
    pub total_volume: f64,
}

/// `0.0, 0.05, ..., 5.0`.
pub fn default_thresholds() -> Vec<f64> {
    thresholds_from(0.0)
}

/// Default grid restricted to values `>= min`.
pub fn thresholds_from(min: f64) -> Vec<f64> {
    (0..=100)
        .map(|k| k as f64 / 20.0)
        .filter(|&t| t >= min - 1e-12)
        .collect()
}

pub fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::Parameter("threshold list is empty".into()));
    }
    if thresholds.iter().any(|t| !t.is_finite()) {
        return Err(Error::Parameter("thresholds must be finite".into()));
    }
    if thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("thresholds must be strictly ascending".into()));
    }
    Ok(())
}

/// Relative volume weight of a pixel in `col`: `r_center` when axisymmetric
/// (the common `2π·area` factor cancels in fractions), 1 in plane stress.
#[inline]
pub fn volume_weight(slice: &SurfaceSlice, col: usize, mode: AnalysisMode) -> f64 {
    match mode {
        AnalysisMode::Axisymmetric => slice.r_center(col),
        AnalysisMode::PlaneStress => 1.0,
    }
}

/// Physical factor turning a weight from [`volume_weight`] into a volume.
#[inline]
pub fn volume_factor(slice: &SurfaceSlice, mode: AnalysisMode) -> f64 {
    let area = slice.pixel_pitch() * slice.pixel_pitch();
    match mode {
        AnalysisMode::Axisymmetric => 2.0 * std::f64::consts::PI * area,
        AnalysisMode::PlaneStress => area,
    }
}

/// Physical volume of one pixel in `col`.
pub fn pixel_volume(slice: &SurfaceSlice, col: usize, mode: AnalysisMode) -> f64 {
    volume_weight(slice, col, mode) * volume_factor(slice, mode)
}

fn check_aligned<T: Scalar>(field: &KtField<T>, slice: &SurfaceSlice) -> Result<()> {
    field.check_aligned(slice)?;
    for i in 0..slice.rows() {
        for j in 0..slice.cols() {
            if slice.is_material(i, j) != field.get(i, j).is_some() {
                return Err(Error::Shape(format!(
                    "field and slice disagree on material at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

pub fn exceedance<T: Scalar>(
    field: &KtField<T>,
    slice: &SurfaceSlice,
    thresholds: &[f64],
    mode: AnalysisMode,
) -> Result<ExceedanceCurve> {
    check_thresholds(thresholds)?;
    check_aligned(field, slice)?;
    let mut samples = Vec::with_capacity(slice.material_count());
    for i in 0..slice.rows() {
        for j in 0..slice.cols() {
            if let Some(v) = field.get(i, j) {
                samples.push((v.as_f64(), volume_weight(slice, j, mode)));
            }
        }
    }
    let total: f64 = samples.iter().map(|s| s.1).sum();
    // each threshold sums its own subset in scan order, so a value never
    // depends on which other thresholds are on the grid
    let fractions = thresholds
        .iter()
        .map(|&t| {
            if total == 0.0 {
                return 0.0;
            }
            let above: f64 = samples.iter().filter(|s| s.0 > t).fold(0.0, |acc, s| acc + s.1);
            above / total
        })
        .collect();
    Ok(ExceedanceCurve {
        thresholds: thresholds.to_vec(),
        fractions,
        total_volume: total * volume_factor(slice, mode),
    })
}

impl ExceedanceCurve {
    /// Step interpolation: the fraction at the largest grid threshold `<= t`
    /// (the first fraction below the grid).
    pub fn at(&self, t: f64) -> f64 {
        let k = self.thresholds.partition_point(|&x| x <= t);
        self.fractions[k.saturating_sub(1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveGap {
    pub max_gap: f64,
    /// Trapezoidal integral of `|a − b|` over the threshold span.
    pub area: f64,
}

/// Compares two curves on the union of their threshold grids.
pub fn compare_curves(a: &ExceedanceCurve, b: &ExceedanceCurve) -> Result<CurveGap> {
    if a.thresholds.is_empty() || b.thresholds.is_empty() {
        return Err(Error::Parameter("cannot compare empty curves".into()));
    }
    let grid: Vec<f64> = if a.thresholds == b.thresholds {
        a.thresholds.clone()
    } else {
        let mut g: Vec<f64> = a.thresholds.iter().chain(&b.thresholds).copied().collect();
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    };
    let diff: Vec<f64> = grid.iter().map(|&t| (a.at(t) - b.at(t)).abs()).collect();
    let max_gap = diff.iter().copied().fold(0.0, f64::max);
    let area = grid
        .windows(2)
        .zip(diff.windows(2))
        .map(|(t, d)| 0.5 * (d[0] + d[1]) * (t[1] - t[0]))
        .sum();
    Ok(CurveGap { max_gap, area })
}

#[derive(Serialize, Deserialize)]
struct CurveRow {
    threshold: f64,
    fraction: f64,
}

/// Two-column CSV `threshold,fraction`.
pub fn write_curve_csv(path: &Path, curve: &ExceedanceCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (&threshold, &fraction) in curve.thresholds.iter().zip(&curve.fractions) {
        w.serialize(CurveRow { threshold, fraction })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a curve written by [`write_curve_csv`]. The CSV carries no volume,
/// so `total_volume` is NaN.
pub fn read_curve_csv(path: &Path) -> Result<ExceedanceCurve> {
    let mut r = csv::Reader::from_path(path)?;
    let mut curve = ExceedanceCurve {
        thresholds: Vec::new(),
        fractions: Vec::new(),
        total_volume: f64::NAN,
    };
    for row in r.deserialize() {
        let row: CurveRow = row?;
        curve.thresholds.push(row.threshold);
        curve.fractions.push(row.fraction);
    }
    check_thresholds(&curve.thresholds)?;
    if curve.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Format("fractions must lie in [0, 1]".into()));
    }
    Ok(curve)
}
