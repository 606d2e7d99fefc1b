//! FE-labelled training patches on disk.
//!
//! A dataset directory holds `sample_NNNNN_mask.pgm` / `sample_NNNNN_kt.pfm`
//! pairs (each with its JSON sidecar) and a `manifest.json` that is
//! rewritten atomically after every sample, so an interrupted run resumes
//! where it stopped.
//!
//! Each sample is solved on a slice `margin` rows taller than the patch at
//! both ends and the central `patch_size` rows are kept, so the loaded
//! top and bottom edges of the FE model do not appear in the labels.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{self, FieldSidecar, KtField, Material, SolveConfig};
use crate::io;
use crate::seed;
use crate::surface::{self, RoughnessParams, SurfaceSlice};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_TAG: &str = "ktfield-dataset";

/// Closed interval sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
}

impl ParamRange {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::Parameter(format!(
                "{name} range [{}, {}] is not a finite ordered interval",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut seed::Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must lie in [0, 1] and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }
}

/// Split of sample `id`: a hash of (seed, id) against the cumulative
/// fractions, so the assignment never depends on which other samples exist.
pub fn assign_split(seed_value: u64, id: usize, fractions: &SplitFractions) -> Split {
    let h = seed::derive_seed(seed_value, "split", id as u64);
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    if u < fractions.train {
        Split::Train
    } else if u < fractions.train + fractions.val {
        Split::Val
    } else {
        Split::Test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_samples: usize,
    pub patch_size: usize,
    /// Extra rows solved above and below the patch, pixels.
    pub margin_rows: usize,
    /// Radial width of every patch, pixels.
    pub cols: usize,
    pub pixel_pitch_um: f64,
    pub r_inner_nominal_um: f64,
    pub rms_um: ParamRange,
    pub correlation_um: ParamRange,
    pub mean_offset_um: ParamRange,
    pub material: Material,
    pub solve: SolveConfig,
    pub split: SplitFractions,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            patch_size: 128,
            margin_rows: 32,
            cols: 128,
            pixel_pitch_um: surface::DEFAULT_PIXEL_PITCH,
            r_inner_nominal_um: 1500.0,
            rms_um: ParamRange::new(2.0, 20.0),
            correlation_um: ParamRange::new(6.0, 30.0),
            mean_offset_um: ParamRange::new(90.0, 120.0),
            material: Material::default(),
            solve: SolveConfig::default(),
            split: SplitFractions::default(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.rms_um.validate("rms")?;
        self.correlation_um.validate("correlation length")?;
        self.mean_offset_um.validate("mean offset")?;
        if self.rms_um.min < 0.0 || self.correlation_um.min <= 0.0 {
            return Err(Error::Parameter("rms must be >= 0 and correlation length > 0".into()));
        }
        if self.patch_size < surface::MIN_DIM || self.cols < surface::MIN_DIM {
            return Err(Error::Parameter(format!(
                "patch {}x{} is below the {} px minimum",
                self.patch_size,
                self.cols,
                surface::MIN_DIM
            )));
        }
        if !(self.pixel_pitch_um > 0.0 && self.pixel_pitch_um.is_finite()) {
            return Err(Error::Parameter("pixel pitch must be > 0".into()));
        }
        self.material.validate()?;
        self.solve.validate()?;
        self.split.validate()
    }

    /// Hash of everything except `n_samples`, which may grow between runs.
    pub fn compat_hash(&self) -> String {
        let mut c = self.clone();
        c.n_samples = 0;
        io::sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    fn sample_params(&self, id: usize) -> RoughnessParams {
        let mut rng = seed::rng(seed::derive_seed(self.seed, "dataset", id as u64));
        let rms_amplitude = self.rms_um.sample(&mut rng);
        let correlation_length = self.correlation_um.sample(&mut rng);
        let mean_bore_offset = self.mean_offset_um.sample(&mut rng);
        RoughnessParams {
            rms_amplitude,
            correlation_length,
            mean_bore_offset,
            seed: rng.random(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: usize,
    pub mask_file: String,
    pub kt_file: String,
    pub split: Split,
    pub params: RoughnessParams,
    pub max_kt: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailedSample {
    pub id: usize,
    pub params: RoughnessParams,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub config: DatasetConfig,
    pub config_hash: String,
    pub fem_config_hash: String,
    pub samples: Vec<ManifestEntry>,
    pub failed: Vec<FailedSample>,
}

impl Manifest {
    fn is_done(&self, id: usize) -> bool {
        self.samples.iter().any(|s| s.id == id) || self.failed.iter().any(|s| s.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub computed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub wall_time_s: f64,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let m: Manifest = io::read_json(&dir.join(MANIFEST_FILE))?;
    if m.format != FORMAT_TAG {
        return Err(Error::Format(format!("not a dataset manifest (format {:?})", m.format)));
    }
    Ok(m)
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    io::write_json(&tmp, m)?;
    fs::rename(&tmp, dir.join(MANIFEST_FILE))?;
    Ok(())
}

fn file_stem(id: usize) -> String {
    format!("sample_{id:05}")
}

/// One FE-labelled patch: `(mask, K_t)` cropped from a taller solve.
pub fn solve_sample(config: &DatasetConfig, params: &RoughnessParams) -> Result<(SurfaceSlice, KtField<f64>, usize)> {
    let rows = config.patch_size + 2 * config.margin_rows;
    let full = surface::generate_slice(params, rows, config.cols, config.pixel_pitch_um, config.r_inner_nominal_um)?;
    let (field, timing) = fem::solve_slice::<f64>(&full, &config.material, &config.solve)?;
    let slice = full.crop_rows(config.margin_rows, config.patch_size)?;
    let mut kt = field.crop_rows(config.margin_rows, config.patch_size)?;
    kt.slice_digest = slice.digest();
    Ok((slice, kt, timing.cg_iterations))
}

/// Generate (or finish generating) a dataset in `out_dir`.
///
/// Samples already listed in an existing manifest, as successes or failures,
/// are skipped. A manifest written under a different configuration (other
/// than `n_samples`) is a [`Error::Config`]. FE failures are logged and
/// recorded, never fatal.
pub fn make_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<DatasetSummary> {
    config.validate()?;
    let t0 = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mut manifest = if out_dir.join(MANIFEST_FILE).exists() {
        let m = read_manifest(out_dir)?;
        if m.config_hash != config.compat_hash() {
            return Err(Error::Config(format!(
                "{} was written with a different dataset configuration",
                out_dir.join(MANIFEST_FILE).display()
            )));
        }
        m
    } else {
        Manifest {
            format: FORMAT_TAG.into(),
            config: config.clone(),
            config_hash: config.compat_hash(),
            fem_config_hash: fem::config_hash(&config.material, &config.solve),
            samples: Vec::new(),
            failed: Vec::new(),
        }
    };
    manifest.config.n_samples = manifest.config.n_samples.max(config.n_samples);

    let mut summary = DatasetSummary {
        computed: 0,
        skipped: 0,
        failed: 0,
        wall_time_s: 0.0,
    };
    for id in 0..config.n_samples {
        if manifest.is_done(id) {
            summary.skipped += 1;
            continue;
        }
        let params = config.sample_params(id);
        match solve_sample(config, &params) {
            Ok((slice, kt, cg_iterations)) => {
                let stem = file_stem(id);
                let (mask_file, kt_file) = (format!("{stem}_mask.pgm"), format!("{stem}_kt.pfm"));
                surface::save_slice(&slice, &out_dir.join(&mask_file))?;
                let mut side = FieldSidecar::for_field(&kt, "fem");
                side.config_hash = Some(manifest.fem_config_hash.clone());
                fem::save_field(&kt, &side, &out_dir.join(&kt_file))?;
                manifest.samples.push(ManifestEntry {
                    id,
                    mask_file,
                    kt_file,
                    split: assign_split(config.seed, id, &config.split),
                    params,
                    max_kt: kt.max().unwrap_or(f64::NAN),
                    cg_iterations,
                });
                summary.computed += 1;
            }
            Err(e) => {
                log::warn!("dataset sample {id} skipped: {e}");
                manifest.failed.push(FailedSample {
                    id,
                    params,
                    error: e.to_string(),
                });
                summary.failed += 1;
            }
        }
        manifest.samples.sort_by_key(|s| s.id);
        manifest.failed.sort_by_key(|s| s.id);
        write_manifest(out_dir, &manifest)?;
    }
    if summary.computed + summary.failed == 0 && !out_dir.join(MANIFEST_FILE).exists() {
        write_manifest(out_dir, &manifest)?;
    }
    summary.wall_time_s = t0.elapsed().as_secs_f64();
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub split: Split,
    pub rows: usize,
    pub cols: usize,
    pub mask: Vec<bool>,
    /// K_t, NaN on void.
    pub kt: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
    /// SHA-256 of the manifest file.
    pub hash: String,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, which: Split) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.split == which).collect()
    }

    /// Dataset held in memory only, e.g. crops of freshly solved sections.
    pub fn from_samples(samples: Vec<Sample>, config: DatasetConfig) -> Self {
        let mut bytes = Vec::new();
        for s in &samples {
            bytes.extend_from_slice(&(s.id as u64).to_le_bytes());
            bytes.extend(s.mask.iter().map(|&m| u8::from(m)));
            bytes.extend(s.kt.iter().flat_map(|v| v.to_le_bytes()));
        }
        let manifest = Manifest {
            format: FORMAT_TAG.into(),
            config_hash: config.compat_hash(),
            fem_config_hash: fem::config_hash(&config.material, &config.solve),
            config,
            samples: Vec::new(),
            failed: Vec::new(),
        };
        Self {
            dir: PathBuf::new(),
            manifest,
            hash: io::sha256_hex(&bytes),
            samples,
        }
    }
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let bytes = fs::read(dir.join(MANIFEST_FILE))?;
    let manifest = read_manifest(dir)?;
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for e in &manifest.samples {
        let slice = surface::load_slice(&dir.join(&e.mask_file))?;
        let kt = fem::load_field::<f32>(&dir.join(&e.kt_file))?;
        kt.check_aligned(&slice)?;
        samples.push(Sample {
            id: e.id,
            split: e.split,
            rows: slice.rows(),
            cols: slice.cols(),
            mask: slice.mask().to_vec(),
            kt: kt.raw().to_vec(),
        });
    }
    Ok(Dataset {
        dir: dir.to_path_buf(),
        manifest,
        hash: io::sha256_hex(&bytes),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config(n: usize) -> DatasetConfig {
        DatasetConfig {
            n_samples: n,
            patch_size: 16,
            margin_rows: 4,
            cols: 16,
            rms_um: ParamRange::new(2.0, 4.0),
            correlation_um: ParamRange::new(6.0, 12.0),
            mean_offset_um: ParamRange::new(15.0, 20.0),
            seed: 11,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn single_sample_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let s = make_dataset(&tiny_config(1), dir.path()).unwrap();
        assert_eq!((s.computed, s.skipped, s.failed), (1, 0, 0));
        let d = load_dataset(dir.path()).unwrap();
        assert_eq!(d.samples.len(), 1);
        assert_eq!(d.manifest.samples[0].mask_file, "sample_00000_mask.pgm");
        assert!(dir.path().join("sample_00000_kt.pfm").exists());
        let smp = &d.samples[0];
        assert_eq!(smp.mask.len(), 256);
        for (m, k) in smp.mask.iter().zip(&smp.kt) {
            assert_eq!(*m, k.is_finite());
        }
    }

    #[test]
    fn rerun_completes_only_missing_samples() {
        let dir = tempfile::tempdir().unwrap();
        make_dataset(&tiny_config(2), dir.path()).unwrap();
        let first = fs::read(dir.path().join("sample_00001_kt.pfm")).unwrap();
        let s = make_dataset(&tiny_config(4), dir.path()).unwrap();
        assert_eq!((s.computed, s.skipped), (2, 2));
        assert_eq!(fs::read(dir.path().join("sample_00001_kt.pfm")).unwrap(), first);
        let again = make_dataset(&tiny_config(4), dir.path()).unwrap();
        assert_eq!((again.computed, again.skipped), (0, 4));

        let fresh = tempfile::tempdir().unwrap();
        make_dataset(&tiny_config(4), fresh.path()).unwrap();
        assert!(
            fs::read(dir.path().join(MANIFEST_FILE)).unwrap() == fs::read(fresh.path().join(MANIFEST_FILE)).unwrap(),
            "resumed manifest differs from a fresh one"
        );
    }

    #[test]
    fn changed_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        make_dataset(&tiny_config(1), dir.path()).unwrap();
        let mut other = tiny_config(1);
        other.seed = 12;
        assert!(matches!(make_dataset(&other, dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn failed_sample_is_recorded_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(2);
        // bore deeper than the patch: every profile is rejected
        cfg.mean_offset_um = ParamRange::new(100.0, 100.0);
        let s = make_dataset(&cfg, dir.path()).unwrap();
        assert_eq!((s.computed, s.failed), (0, 2));
        let m = read_manifest(dir.path()).unwrap();
        assert_eq!(m.failed.len(), 2);
        assert!(m.samples.is_empty());
    }

    #[test]
    fn split_assignment_follows_fractions() {
        let f = SplitFractions::default();
        let n = 20_000;
        let train = (0..n).filter(|&i| assign_split(3, i, &f) == Split::Train).count();
        assert!((train as f64 / n as f64 - 0.8).abs() < 0.02);
        assert_eq!(assign_split(3, 17, &f), assign_split(3, 17, &f));
        let all_test = SplitFractions {
            train: 0.0,
            val: 0.0,
            test: 1.0,
        };
        assert!((0..100).all(|i| assign_split(1, i, &all_test) == Split::Test));
        assert!(SplitFractions {
            train: 0.5,
            val: 0.5,
            test: 0.5
        }
        .validate()
        .is_err());
    }
}
