//! Adam training loop, batch gradients and held-out metrics.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, DatasetConfig, Sample, Split};
use super::network::{masked_mse, Architecture, Gradients};
use super::SurrogateModel;
use crate::error::{Error, Result};
use crate::fem::KtField;
use crate::scalar::Scalar;
use crate::seed;
use crate::stats::{self, ExceedanceCurve};
use crate::surface::{SliceMeta, SurfaceSlice};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 8,
            epochs: 300,
            patience: Some(40),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0) {
            return Err(Error::Config("Adam constants must satisfy 0 <= beta < 1, eps > 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epoch count must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean masked MSE (K_t²) over the epoch's batches, before each update.
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    /// True when the dataset has no validation samples and checkpoints were
    /// selected on the training loss.
    pub validation_on_train: bool,
    pub n_train: usize,
    pub n_val: usize,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

fn target<T: Scalar>(model: &SurrogateModel<T>, s: &Sample) -> Vec<T> {
    s.kt.iter()
        .map(|&v| {
            if v.is_finite() {
                model.normalize_target(T::of_f32(v))
            } else {
                T::zero()
            }
        })
        .collect()
}

fn check_sample<T: Scalar>(model: &SurrogateModel<T>, s: &Sample) -> Result<()> {
    let p = model.patch_size();
    if s.rows != p || s.cols != p || s.mask.len() != p * p || s.kt.len() != p * p {
        return Err(Error::Shape(format!(
            "sample {} is {}x{}, model patch is {p}x{p}",
            s.id, s.rows, s.cols
        )));
    }
    Ok(())
}

/// Masked MSE of one sample in K_t² units.
pub fn sample_loss<T: Scalar>(model: &SurrogateModel<T>, s: &Sample) -> Result<f64> {
    check_sample(model, s)?;
    let pred = model.network.forward(&model.encode(&s.mask)?)?;
    let (loss, _) = masked_mse(&pred, &target(model, s), &s.mask);
    Ok(loss.as_f64() * model.normalization.output_scale.powi(2))
}

fn mean_loss<T: Scalar>(model: &SurrogateModel<T>, samples: &[&Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| sample_loss(model, s))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / samples.len() as f64)
}

/// Mean loss over `batch` (K_t² units) and the gradient of the mean
/// normalized-unit loss. Samples run in parallel; the reduction runs in
/// batch order, so the result does not depend on the thread count.
pub fn batch_gradient<T: Scalar>(model: &SurrogateModel<T>, batch: &[&Sample]) -> Result<(f64, Gradients<T>)> {
    if batch.is_empty() {
        return Err(Error::Training("empty batch".into()));
    }
    let per_sample: Vec<(T, Gradients<T>)> = batch
        .par_iter()
        .map(|s| {
            check_sample(model, s)?;
            let trace = model.network.forward_trace(&model.encode(&s.mask)?)?;
            let (loss, d_out) = masked_mse(trace.acts.last().expect("output"), &target(model, s), &s.mask);
            let mut g = Gradients::zeros_like(&model.network);
            model.network.backward(&trace, &d_out, &mut g);
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;
    let mut total = Gradients::zeros_like(&model.network);
    let mut loss = T::zero();
    for (l, g) in &per_sample {
        loss += *l;
        total.add_assign(g);
    }
    let inv = T::one() / T::of(batch.len() as f64);
    total.scale(inv);
    Ok(((loss * inv).as_f64() * model.normalization.output_scale.powi(2), total))
}

struct Adam<T> {
    m: Gradients<T>,
    v: Gradients<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(model: &SurrogateModel<T>) -> Self {
        Self {
            m: Gradients::zeros_like(&model.network),
            v: Gradients::zeros_like(&model.network),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut SurrogateModel<T>, g: &Gradients<T>, c: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let one = T::one();
        let step = T::of(c.learning_rate * (1.0 - c.beta2.powi(self.t)).sqrt() / (1.0 - c.beta1.powi(self.t)));
        let eps = T::of(c.epsilon);
        for (l, layer) in model.network.layers.iter_mut().enumerate() {
            let (gl, ml, vl) = (&g.layers[l], &mut self.m.layers[l], &mut self.v.layers[l]);
            let params = layer.weight.iter_mut().chain(layer.bias.iter_mut());
            let grads = gl.weight.iter().chain(&gl.bias);
            let ms = ml.weight.iter_mut().chain(ml.bias.iter_mut());
            let vs = vl.weight.iter_mut().chain(vl.bias.iter_mut());
            for (((p, &gi), m), v) in params.zip(grads).zip(ms).zip(vs) {
                *m = b1 * *m + (one - b1) * gi;
                *v = b2 * *v + (one - b2) * gi * gi;
                *p -= step * *m / (v.sqrt() + eps);
            }
        }
    }
}

/// Output normalization from the training targets: mean and standard
/// deviation of K_t over material pixels (scale floored at 1e-3).
fn output_normalization(samples: &[&Sample]) -> (f64, f64) {
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for s in samples {
        for &v in s.kt.iter().filter(|v| v.is_finite()) {
            let v = f64::from(v);
            n += 1;
            sum += v;
            sq += v * v;
        }
    }
    if n == 0 {
        return (0.0, 1.0);
    }
    let mean = sum / n as f64;
    let var = (sq / n as f64 - mean * mean).max(0.0);
    (mean, var.sqrt().max(1e-3))
}

/// Train a fresh model on the dataset's training split and return the
/// checkpoint with the lowest validation loss.
pub fn train(dataset: &Dataset, arch: &Architecture, config: &TrainConfig) -> Result<(SurrogateModel<f32>, TrainReport)> {
    config.validate()?;
    let train_set = dataset.split(Split::Train);
    if train_set.is_empty() {
        return Err(Error::Training("dataset has no training samples".into()));
    }
    if train_set.len() < config.batch_size {
        return Err(Error::Training(format!(
            "{} training samples is fewer than the batch size {}",
            train_set.len(),
            config.batch_size
        )));
    }
    let mut val_set = dataset.split(Split::Val);
    let validation_on_train = val_set.is_empty();
    if validation_on_train {
        val_set = train_set.clone();
    }

    let mut model = SurrogateModel::<f32>::new(arch, config.seed)?;
    let (offset, scale) = output_normalization(&train_set);
    model.normalization.output_offset = offset;
    model.normalization.output_scale = scale;
    model.training_meta.dataset_hash = dataset.hash.clone();
    model.training_meta.pixel_pitch_um = dataset.manifest.config.pixel_pitch_um;
    model.training_meta.mode = dataset.manifest.config.solve.mode;
    for s in &train_set {
        check_sample(&model, s)?;
    }

    let initial_train_loss = mean_loss(&model, &train_set)?;
    let initial_val_loss = mean_loss(&model, &val_set)?;
    let mut best = (initial_val_loss, 0, model.network.clone());
    let mut adam = Adam::new(&model);
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        let t0 = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut seed::rng(seed::derive_seed(config.seed, "train-shuffle", epoch as u64)));
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&k| train_set[k]).collect();
            let (loss, grads) = batch_gradient(&model, &batch)?;
            if !loss.is_finite() || !grads.is_finite() {
                let ids: Vec<usize> = batch.iter().map(|s| s.id).collect();
                let last = history.last().map(|h: &EpochStats| h.train_loss);
                return Err(Error::Training(format!(
                    "non-finite loss or gradient at epoch {epoch}, batch {b} (samples {ids:?}); \
                     batch loss {loss}, previous epoch loss {last:?}, learning rate {}",
                    config.learning_rate
                )));
            }
            epoch_loss += loss * batch.len() as f64;
            adam.step(&mut model, &grads, config);
        }
        let val_loss = mean_loss(&model, &val_set)?;
        history.push(EpochStats {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            val_loss,
            wall_time_s: t0.elapsed().as_secs_f64(),
        });
        log::info!("epoch {epoch}: train {:.4e} val {val_loss:.4e}", epoch_loss / train_set.len() as f64);
        if val_loss < best.0 || !best.0.is_finite() {
            best = (val_loss, epoch, model.network.clone());
        }
        if let Some(p) = config.patience {
            if epoch - best.1 >= p {
                break;
            }
        }
    }

    model.network = best.2;
    let meta = &mut model.training_meta;
    meta.epochs_run = history.len();
    meta.best_epoch = best.1;
    meta.final_train_loss = history.last().map(|h| h.train_loss);
    meta.best_val_loss = Some(best.0).filter(|v| v.is_finite());
    model.validate()?;
    let report = TrainReport {
        initial_train_loss,
        initial_val_loss,
        validation_on_train,
        n_train: train_set.len(),
        n_val: if validation_on_train { 0 } else { val_set.len() },
        best_epoch: best.1,
        history,
    };
    Ok((model, report))
}

/// Held-out accuracy against FE labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_patches: usize,
    /// Material pixels with FE K_t >= 0.5, where relative error is measured.
    pub n_pixels: usize,
    pub mean_relative_error: f64,
    pub max_relative_error: f64,
    pub fraction_over_5_percent: f64,
    pub mean_absolute_error: f64,
    /// Largest exceedance-fraction gap of the volume-pooled curves.
    pub exceedance_gap_pooled: f64,
    /// Largest exceedance-fraction gap over individual patches.
    pub exceedance_gap_worst: f64,
}

/// Relative K_t error is taken over material pixels whose FE value is at
/// least 0.5; exceedance curves use the default threshold grid.
pub fn evaluate<T: Scalar>(model: &SurrogateModel<T>, samples: &[&Sample], geometry: &DatasetConfig) -> Result<Metrics> {
    let thresholds = stats::default_thresholds();
    let mode = model.training_meta.mode;
    let per: Vec<(Vec<f64>, f64, ExceedanceCurve, ExceedanceCurve)> = samples
        .par_iter()
        .map(|s| {
            check_sample(model, s)?;
            let pred = model.forward(&s.mask)?;
            let slice = SurfaceSlice::new(
                s.rows,
                s.cols,
                s.mask.clone(),
                geometry.pixel_pitch_um,
                geometry.r_inner_nominal_um,
                SliceMeta::default(),
            )?;
            let fe = KtField::from_slice_fn(&slice, mode, |i, j| f64::from(s.kt[i * s.cols + j]));
            let sm = KtField::from_slice_fn(&slice, mode, |i, j| pred[i * s.cols + j].as_f64());
            let mut rel = Vec::new();
            let mut abs = 0.0;
            for k in 0..s.mask.len() {
                if s.mask[k] {
                    let (f, p) = (f64::from(s.kt[k]), pred[k].as_f64());
                    abs += (p - f).abs();
                    if f >= 0.5 {
                        rel.push((p - f).abs() / f);
                    }
                }
            }
            let a = stats::exceedance(&fe, &slice, &thresholds, mode)?;
            let b = stats::exceedance(&sm, &slice, &thresholds, mode)?;
            Ok((rel, abs, a, b))
        })
        .collect::<Result<_>>()?;

    let rel: Vec<f64> = per.iter().flat_map(|p| p.0.iter().copied()).collect();
    let n_material: usize = samples.iter().map(|s| s.mask.iter().filter(|&&m| m).count()).sum();
    let mut worst: f64 = 0.0;
    let mut pooled_fe = vec![0.0; thresholds.len()];
    let mut pooled_sm = vec![0.0; thresholds.len()];
    let mut volume = 0.0;
    for (_, _, a, b) in &per {
        worst = worst.max(stats::compare_curves(a, b)?.max_gap);
        for k in 0..thresholds.len() {
            pooled_fe[k] += a.fractions[k] * a.total_volume;
            pooled_sm[k] += b.fractions[k] * b.total_volume;
        }
        volume += a.total_volume;
    }
    let pooled_gap = if volume > 0.0 {
        pooled_fe
            .iter()
            .zip(&pooled_sm)
            .map(|(a, b)| (a - b).abs() / volume)
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let nan_if_empty = |v: f64, n: usize| if n == 0 { f64::NAN } else { v };
    Ok(Metrics {
        n_patches: samples.len(),
        n_pixels: rel.len(),
        mean_relative_error: nan_if_empty(rel.iter().sum::<f64>() / rel.len().max(1) as f64, rel.len()),
        max_relative_error: nan_if_empty(rel.iter().copied().fold(0.0, f64::max), rel.len()),
        fraction_over_5_percent: nan_if_empty(
            rel.iter().filter(|&&e| e > 0.05).count() as f64 / rel.len().max(1) as f64,
            rel.len(),
        ),
        mean_absolute_error: nan_if_empty(per.iter().map(|p| p.1).sum::<f64>() / n_material.max(1) as f64, n_material),
        exceedance_gap_pooled: pooled_gap,
        exceedance_gap_worst: worst,
    })
}
