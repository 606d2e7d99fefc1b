//! Low-cycle-fatigue life from stressed-volume features.
//!
//! Basquin law on the effective stress `σ_a · K_t,eff` with a weakest-link
//! volume factor:
//!
//! ```text
//! N = C · (σ_a · K_t,eff)^(−b) · (max(V, V_floor) / V_ref)^(−1/m)
//! ```
//!
//! This is a stand-in lifing model; calibrate it on coupon data before use.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cluster::StressedVolumeFeatures;
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCondition {
    pub nominal_stress_amplitude: f64,
    pub stress_ratio: f64,
    /// Grouping tag only.
    pub temperature: String,
}

impl TestCondition {
    pub fn validate(&self) -> Result<()> {
        if !(self.nominal_stress_amplitude > 0.0 && self.nominal_stress_amplitude.is_finite()) {
            return Err(Error::Parameter(format!(
                "stress amplitude must be > 0, got {}",
                self.nominal_stress_amplitude
            )));
        }
        if !(-1.0..1.0).contains(&self.stress_ratio) {
            return Err(Error::Parameter(format!(
                "stress ratio must be in [-1, 1), got {}",
                self.stress_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifeModelParams {
    pub c: f64,
    pub b: f64,
    pub m: f64,
    pub v_ref: f64,
    pub kt_eff_quantile: f64,
}

impl Default for LifeModelParams {
    fn default() -> Self {
        Self {
            c: 1e12,
            b: 3.0,
            m: 10.0,
            v_ref: 1e4,
            kt_eff_quantile: 0.95,
        }
    }
}

impl LifeModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("C", self.c), ("b", self.b), ("m", self.m), ("V_ref", self.v_ref)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.kt_eff_quantile > 0.0 && self.kt_eff_quantile <= 1.0) {
            return Err(Error::Parameter(format!(
                "kt_eff_quantile must be in (0, 1], got {}",
                self.kt_eff_quantile
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifePrediction {
    pub cycles_to_failure: f64,
    /// `[N / 2, 2 N]`.
    pub scatter_band: [f64; 2],
    pub inputs_hash: String,
}

fn check_features(f: &StressedVolumeFeatures) -> Result<()> {
    let vals = [
        f.total_stressed_volume,
        f.p95_cluster_volume,
        f.number_density,
        f.max_kt,
        f.kt_eff,
        f.volume_floor,
    ];
    if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Parameter("features must be finite and non-negative".into()));
    }
    if !(f.kt_eff > 0.0 && f.volume_floor > 0.0) {
        return Err(Error::Parameter("kt_eff and volume_floor must be positive".into()));
    }
    Ok(())
}

/// Effective stress and stressed volume entering the model.
fn drivers(f: &StressedVolumeFeatures, c: &TestCondition) -> (f64, f64) {
    (
        c.nominal_stress_amplitude * f.kt_eff,
        f.total_stressed_volume.max(f.volume_floor),
    )
}

pub fn predict_life(features: &StressedVolumeFeatures, condition: &TestCondition, params: &LifeModelParams) -> Result<LifePrediction> {
    params.validate()?;
    condition.validate()?;
    check_features(features)?;
    if (features.kt_eff_quantile - params.kt_eff_quantile).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "features use K_t quantile {}, model expects {}",
            features.kt_eff_quantile, params.kt_eff_quantile
        )));
    }
    let (s_eff, v) = drivers(features, condition);
    let n = params.c * s_eff.powf(-params.b) * (v / params.v_ref).powf(-1.0 / params.m);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Parameter(format!("predicted life is not a positive number: {n}")));
    }
    let text = serde_json::to_string(&(features, condition, params))?;
    Ok(LifePrediction {
        cycles_to_failure: n,
        scatter_band: [n / 2.0, n * 2.0],
        inputs_hash: io::sha256_hex(text.as_bytes()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupon {
    pub coupon_id: String,
    pub condition: TestCondition,
    pub features: StressedVolumeFeatures,
    pub observed_cycles: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouponFit {
    pub coupon_id: String,
    pub observed_cycles: f64,
    pub predicted_cycles: f64,
    /// `ln(observed / predicted)`.
    pub log_residual: f64,
    pub in_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: LifeModelParams,
    pub residual_rms: f64,
    /// Largest `|Xᵀ r|` over the regressors, relative to `‖X‖·‖r‖`.
    pub normal_equation_residual: f64,
    pub band_fraction: f64,
    pub coupons: Vec<CouponFit>,
}

/// Least-squares fit of `ln N = ln C − b ln σ_eff − (1/m) ln(V / V_ref)`
/// with `V_ref` and the K_t quantile held fixed.
pub fn calibrate(coupons: &[Coupon], v_ref: f64, kt_eff_quantile: f64) -> Result<Calibration> {
    if coupons.len() < 4 {
        return Err(Error::Precondition(format!(
            "calibration needs at least 4 labelled coupons, got {}",
            coupons.len()
        )));
    }
    let mut levels: Vec<f64> = coupons.iter().map(|c| c.condition.nominal_stress_amplitude).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() < 2 {
        return Err(Error::Precondition("calibration needs at least 2 stress levels".into()));
    }
    if !(v_ref > 0.0 && v_ref.is_finite()) {
        return Err(Error::Parameter(format!("V_ref must be positive, got {v_ref}")));
    }
    let n = coupons.len();
    let mut x = DMatrix::<f64>::zeros(n, 3);
    let mut y = DVector::<f64>::zeros(n);
    for (k, c) in coupons.iter().enumerate() {
        c.condition.validate()?;
        check_features(&c.features)?;
        if (c.features.kt_eff_quantile - kt_eff_quantile).abs() > 1e-12 {
            return Err(Error::Precondition(format!(
                "coupon {} uses K_t quantile {}, expected {kt_eff_quantile}",
                c.coupon_id, c.features.kt_eff_quantile
            )));
        }
        let obs = c
            .observed_cycles
            .ok_or_else(|| Error::Precondition(format!("coupon {} has no observed life", c.coupon_id)))?;
        if !(obs > 0.0 && obs.is_finite()) {
            return Err(Error::Parameter(format!("coupon {} observed life must be > 0", c.coupon_id)));
        }
        let (s_eff, v) = drivers(&c.features, &c.condition);
        x[(k, 0)] = 1.0;
        x[(k, 1)] = -s_eff.ln();
        x[(k, 2)] = -(v / v_ref).ln();
        y[k] = obs.ln();
    }

    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::Calibration(
            "design matrix is rank deficient: coupons do not vary enough in stress and stressed volume".into(),
        ));
    }
    let theta = svd
        .solve(&y, 1e-12 * smax)
        .map_err(|e| Error::Calibration(e.to_string()))?;
    let (ln_c, b, inv_m) = (theta[0], theta[1], theta[2]);
    if !(b > 0.0 && inv_m > 0.0) {
        return Err(Error::Calibration(format!(
            "fitted exponents are not positive (b = {b}, 1/m = {inv_m})"
        )));
    }
    let params = LifeModelParams {
        c: ln_c.exp(),
        b,
        m: 1.0 / inv_m,
        v_ref,
        kt_eff_quantile,
    };
    params.validate()?;

    let fitted = &x * &theta;
    let r = &y - &fitted;
    let xtr = x.transpose() * &r;
    let scale = x.norm() * r.norm();
    let normal_equation_residual = if scale > 0.0 { xtr.amax() / scale } else { 0.0 };
    let fits: Vec<CouponFit> = coupons
        .iter()
        .zip(r.iter().zip(fitted.iter()))
        .map(|(c, (&res, &fit))| {
            let obs = c.observed_cycles.expect("checked above");
            CouponFit {
                coupon_id: c.coupon_id.clone(),
                observed_cycles: obs,
                predicted_cycles: fit.exp(),
                log_residual: res,
                in_band: res.abs() <= std::f64::consts::LN_2,
            }
        })
        .collect();
    let band_fraction = fits.iter().filter(|f| f.in_band).count() as f64 / n as f64;
    Ok(Calibration {
        params,
        residual_rms: (r.norm_squared() / n as f64).sqrt(),
        normal_equation_residual,
        band_fraction,
        coupons: fits,
    })
}

/// Whether `observed` lies within a factor of two of `predicted`.
pub fn in_band(observed: f64, predicted: f64) -> bool {
    (observed / predicted).ln().abs() <= std::f64::consts::LN_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CouponRow {
    coupon_id: String,
    sigma_a: f64,
    stress_ratio: f64,
    temperature: String,
    total_stressed_volume: f64,
    p95_cluster_volume: f64,
    number_density: f64,
    max_kt: f64,
    kt_eff: f64,
    kt_eff_quantile: f64,
    volume_floor: f64,
    observed_n: Option<f64>,
    predicted_n: Option<f64>,
}

/// Coupon table with an optional prediction column.
pub fn write_coupons_csv(path: &Path, coupons: &[Coupon], predicted: Option<&[f64]>) -> Result<()> {
    if predicted.is_some_and(|p| p.len() != coupons.len()) {
        return Err(Error::Shape("one prediction per coupon expected".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    for (k, c) in coupons.iter().enumerate() {
        let f = &c.features;
        w.serialize(CouponRow {
            coupon_id: c.coupon_id.clone(),
            sigma_a: c.condition.nominal_stress_amplitude,
            stress_ratio: c.condition.stress_ratio,
            temperature: c.condition.temperature.clone(),
            total_stressed_volume: f.total_stressed_volume,
            p95_cluster_volume: f.p95_cluster_volume,
            number_density: f.number_density,
            max_kt: f.max_kt,
            kt_eff: f.kt_eff,
            kt_eff_quantile: f.kt_eff_quantile,
            volume_floor: f.volume_floor,
            observed_n: c.observed_cycles,
            predicted_n: predicted.map(|p| p[k]),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a coupon table; the prediction column, if any, is returned alongside.
pub fn read_coupons_csv(path: &Path) -> Result<(Vec<Coupon>, Vec<Option<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let mut coupons = Vec::new();
    let mut predicted = Vec::new();
    for row in r.deserialize() {
        let row: CouponRow = row?;
        coupons.push(Coupon {
            coupon_id: row.coupon_id,
            condition: TestCondition {
                nominal_stress_amplitude: row.sigma_a,
                stress_ratio: row.stress_ratio,
                temperature: row.temperature,
            },
            features: StressedVolumeFeatures {
                total_stressed_volume: row.total_stressed_volume,
                p95_cluster_volume: row.p95_cluster_volume,
                number_density: row.number_density,
                max_kt: row.max_kt,
                kt_eff: row.kt_eff,
                kt_eff_quantile: row.kt_eff_quantile,
                volume_floor: row.volume_floor,
            },
            observed_cycles: row.observed_n,
        });
        predicted.push(row.predicted_n);
    }
    Ok((coupons, predicted))
}
