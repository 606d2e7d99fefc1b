//! Convolutional encoder-decoder surrogate for the FE K_t map.
//!
//! A mask patch (±1 for material/void, optionally with a signed-distance
//! channel) passes through stride-2 3×3 convolutions down to a small
//! bottleneck and back up through stride-2 transposed convolutions, with no
//! skip connections. Hidden layers use ReLU, the output is linear and is
//! de-normalized to K_t.

mod dataset;
mod kernels;
mod model_io;
mod network;
mod tiling;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::AnalysisMode;
use crate::scalar::Scalar;

pub use dataset::{
    assign_split, load_dataset, make_dataset, read_manifest, Dataset, DatasetConfig, DatasetSummary, Manifest,
    ManifestEntry, FailedSample, ParamRange, Sample, Split, SplitFractions, solve_sample, MANIFEST_FILE,
};
pub use model_io::{decode_model, encode_model, load_model, save_model, MAGIC, VERSION};
pub use network::{masked_mse, Architecture, Gradients, Layer, LayerGrad, LayerKind, LayerShape, Network, Trace};
pub use tiling::{predict_large, tile_overlap, tile_starts, TILE_OVERLAP};
pub use train::{
    batch_gradient, evaluate, sample_loss, train, EpochStats, Metrics, TrainConfig, TrainReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    /// Input value is `(mask − input_offset) / input_scale`, mask ∈ {0, 1}.
    pub input_offset: f64,
    pub input_scale: f64,
    /// K_t = output · output_scale + output_offset.
    pub output_offset: f64,
    pub output_scale: f64,
    /// Signed distance (pixels) is divided by this when the second channel is on.
    pub sdf_scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            input_offset: 0.5,
            input_scale: 0.5,
            output_offset: 0.0,
            output_scale: 1.0,
            sdf_scale: 16.0,
        }
    }
}

impl Normalization {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.input_offset, self.output_offset].iter().all(|v| v.is_finite())
            && [self.input_scale, self.output_scale, self.sdf_scale]
                .iter()
                .all(|v| v.is_finite() && *v > 0.0);
        if !ok {
            return Err(Error::Shape("normalization constants must be finite with positive scales".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub dataset_hash: String,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub final_train_loss: Option<f64>,
    pub best_val_loss: Option<f64>,
    /// Pixel pitch of the training patches, µm.
    pub pixel_pitch_um: f64,
    /// Analysis mode of the FE labels.
    pub mode: AnalysisMode,
}

impl Default for TrainingMeta {
    fn default() -> Self {
        Self {
            dataset_hash: String::new(),
            seed: 0,
            epochs_run: 0,
            best_epoch: 0,
            final_train_loss: None,
            best_val_loss: None,
            pixel_pitch_um: crate::surface::DEFAULT_PIXEL_PITCH,
            mode: AnalysisMode::Axisymmetric,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel<T> {
    pub network: Network<T>,
    pub normalization: Normalization,
    pub training_meta: TrainingMeta,
}

impl<T: Scalar> SurrogateModel<T> {
    pub fn new(arch: &Architecture, seed: u64) -> Result<Self> {
        Ok(Self {
            network: Network::init(arch, seed)?,
            normalization: Normalization::default(),
            training_meta: TrainingMeta {
                seed,
                ..TrainingMeta::default()
            },
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.network.arch
    }

    pub fn patch_size(&self) -> usize {
        self.network.arch.patch_size
    }

    /// Network input for a `patch × patch` mask.
    pub fn encode(&self, mask: &[bool]) -> Result<Vec<T>> {
        let p = self.patch_size();
        if mask.len() != p * p {
            return Err(Error::Shape(format!(
                "mask patch has {} pixels, model expects {p}x{p}",
                mask.len()
            )));
        }
        let n = &self.normalization;
        let mut x: Vec<T> = mask
            .iter()
            .map(|&m| T::of((f64::from(u8::from(m)) - n.input_offset) / n.input_scale))
            .collect();
        if self.network.arch.input_channels == 2 {
            let cap = 2.0;
            x.extend(
                signed_distance(mask, p, p)
                    .into_iter()
                    .map(|d| T::of((d / n.sdf_scale).clamp(-cap, cap))),
            );
        }
        Ok(x)
    }

    /// K_t prediction for a mask patch; values on void pixels are unspecified.
    pub fn forward(&self, mask: &[bool]) -> Result<Vec<T>> {
        let y = self.network.forward(&self.encode(mask)?)?;
        Ok(self.denormalize(y))
    }

    pub fn denormalize(&self, y: Vec<T>) -> Vec<T> {
        let (s, o) = (
            T::of(self.normalization.output_scale),
            T::of(self.normalization.output_offset),
        );
        y.into_iter().map(|v| v * s + o).collect()
    }

    pub fn normalize_target(&self, kt: T) -> T {
        (kt - T::of(self.normalization.output_offset)) / T::of(self.normalization.output_scale)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.normalization.validate()
    }

    pub fn cast<U: Scalar>(&self) -> SurrogateModel<U> {
        SurrogateModel {
            network: self.network.cast(),
            normalization: self.normalization,
            training_meta: self.training_meta.clone(),
        }
    }
}

/// Chamfer (3-4) signed distance in pixels: positive inside material,
/// negative in void, measured to the nearest pixel of the other phase.
/// A phase absent from the grid is treated as infinitely far and capped at
/// `rows + cols`.
pub fn signed_distance(mask: &[bool], rows: usize, cols: usize) -> Vec<f64> {
    let to_void = chamfer(mask, rows, cols, false);
    let to_material = chamfer(mask, rows, cols, true);
    mask.iter()
        .enumerate()
        .map(|(k, &m)| if m { to_void[k] } else { -to_material[k] })
        .collect()
}

fn chamfer(mask: &[bool], rows: usize, cols: usize, target: bool) -> Vec<f64> {
    let cap = 3.0 * (rows + cols) as f64;
    let mut d: Vec<f64> = mask.iter().map(|&m| if m == target { 0.0 } else { cap }).collect();
    let fwd = [(-1isize, -1isize, 4.0), (-1, 0, 3.0), (-1, 1, 4.0), (0, -1, 3.0)];
    let at = |i: isize, j: isize| -> Option<usize> {
        (i >= 0 && j >= 0 && (i as usize) < rows && (j as usize) < cols).then(|| i as usize * cols + j as usize)
    };
    for i in 0..rows as isize {
        for j in 0..cols as isize {
            let p = i as usize * cols + j as usize;
            for &(di, dj, w) in &fwd {
                if let Some(q) = at(i + di, j + dj) {
                    d[p] = d[p].min(d[q] + w);
                }
            }
        }
    }
    for i in (0..rows as isize).rev() {
        for j in (0..cols as isize).rev() {
            let p = i as usize * cols + j as usize;
            for &(di, dj, w) in &fwd {
                if let Some(q) = at(i - di, j - dj) {
                    d[p] = d[p].min(d[q] + w);
                }
            }
        }
    }
    d.into_iter().map(|v| (v / 3.0).min((rows + cols) as f64)).collect()
}
