//! Connected clusters of material pixels above a K_t threshold.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{AnalysisMode, KtField};
use crate::scalar::Scalar;
use crate::stats;
use crate::surface::SurfaceSlice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    /// Neighbours already visited in a row-major scan.
    fn backward(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1)],
            Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1)],
        }
    }

    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub threshold: f64,
    pub connectivity: Connectivity,
    /// Ignore pixels deeper than this below the local bore wall (µm).
    pub max_depth_um: Option<f64>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            threshold: 2.5,
            connectivity: Connectivity::Eight,
            max_depth_um: None,
        }
    }
}

/// Component labels over a grid; 0 is background, clusters are `1..=count`
/// numbered by their first pixel in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<u32>,
    pub count: usize,
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

/// Union-find labelling of the `true` cells of a row-major grid.
pub fn label_mask(mask: &[bool], rows: usize, cols: usize, connectivity: Connectivity) -> Labels {
    assert_eq!(mask.len(), rows * cols);
    let mut parent: Vec<u32> = (0..mask.len() as u32).collect();
    for i in 0..rows {
        for j in 0..cols {
            let p = i * cols + j;
            if !mask[p] {
                continue;
            }
            for &(di, dj) in connectivity.backward() {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if ni < 0 || nj < 0 || nj >= cols as isize {
                    continue;
                }
                let q = ni as usize * cols + nj as usize;
                if mask[q] {
                    let (a, b) = (find(&mut parent, p as u32), find(&mut parent, q as u32));
                    if a != b {
                        // the smaller index stays root, so roots are first pixels
                        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                        parent[hi as usize] = lo;
                    }
                }
            }
        }
    }
    let mut labels = vec![0u32; mask.len()];
    let mut count = 0;
    for p in 0..mask.len() {
        if !mask[p] {
            continue;
        }
        let root = find(&mut parent, p as u32) as usize;
        if root == p {
            count += 1;
            labels[p] = count as u32;
        } else {
            labels[p] = labels[root];
        }
    }
    Labels { rows, cols, labels, count }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub size_pixels: usize,
    pub volume: f64,
    pub max_kt: f64,
    /// Mean pixel-center position, µm.
    pub centroid_r_um: f64,
    pub centroid_z_um: f64,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub threshold: f64,
    pub connectivity: Connectivity,
    pub mode: AnalysisMode,
    pub clusters: Vec<Cluster>,
    /// Cluster size in pixels -> number of clusters.
    pub size_histogram: BTreeMap<usize, usize>,
    pub total_stressed_volume: f64,
    /// Clusters per mm of axial surface length.
    pub number_density: f64,
    pub surface_length_um: f64,
    /// Volume of one pixel at the slice's mean radius.
    pub pixel_volume_floor: f64,
    /// K_t of every super-threshold pixel, ascending.
    pub exceeding_kt: Vec<f64>,
}

/// Pixels that pass the threshold (strictly above) and the depth filter.
pub fn exceeding_mask<T: Scalar>(field: &KtField<T>, slice: &SurfaceSlice, config: &ClusterConfig) -> Vec<bool> {
    let mut mask = vec![false; slice.rows() * slice.cols()];
    for i in 0..slice.rows() {
        let wall = slice.bore_depth_pixels(i) as f64;
        for j in 0..slice.cols() {
            let Some(v) = field.get(i, j) else { continue };
            if v.as_f64() <= config.threshold {
                continue;
            }
            if let Some(d) = config.max_depth_um {
                if (j as f64 + 0.5 - wall) * slice.pixel_pitch() > d {
                    continue;
                }
            }
            mask[i * slice.cols() + j] = true;
        }
    }
    mask
}

pub fn label_clusters<T: Scalar>(field: &KtField<T>, slice: &SurfaceSlice, config: &ClusterConfig) -> Result<ClusterReport> {
    field.check_aligned(slice)?;
    if !(config.threshold > 0.0 && config.threshold.is_finite()) {
        return Err(Error::Parameter(format!("threshold must be > 0, got {}", config.threshold)));
    }
    if config.max_depth_um.is_some_and(|d| !(d > 0.0)) {
        return Err(Error::Parameter("max_depth_um must be > 0".into()));
    }
    let mode = field.mode;
    let mask = exceeding_mask(field, slice, config);
    let labels = label_mask(&mask, slice.rows(), slice.cols(), config.connectivity);

    struct Acc {
        size: usize,
        volume: f64,
        max_kt: f64,
        r_sum: f64,
        z_sum: f64,
        bbox: BoundingBox,
    }
    let mut acc: Vec<Acc> = Vec::with_capacity(labels.count);
    let mut exceeding_kt = Vec::new();
    for i in 0..slice.rows() {
        for j in 0..slice.cols() {
            let l = labels.labels[i * slice.cols() + j] as usize;
            if l == 0 {
                continue;
            }
            let kt = field.get(i, j).expect("labelled pixels are material").as_f64();
            exceeding_kt.push(kt);
            if l > acc.len() {
                acc.push(Acc {
                    size: 0,
                    volume: 0.0,
                    max_kt: f64::NEG_INFINITY,
                    r_sum: 0.0,
                    z_sum: 0.0,
                    bbox: BoundingBox {
                        row_min: i,
                        row_max: i,
                        col_min: j,
                        col_max: j,
                    },
                });
            }
            let a = &mut acc[l - 1];
            a.size += 1;
            a.volume += stats::pixel_volume(slice, j, mode);
            a.max_kt = a.max_kt.max(kt);
            a.r_sum += slice.r_center(j);
            a.z_sum += slice.z_center(i);
            a.bbox.row_max = a.bbox.row_max.max(i);
            a.bbox.col_min = a.bbox.col_min.min(j);
            a.bbox.col_max = a.bbox.col_max.max(j);
        }
    }
    exceeding_kt.sort_by(f64::total_cmp);

    let clusters: Vec<Cluster> = acc
        .into_iter()
        .enumerate()
        .map(|(k, a)| Cluster {
            id: k + 1,
            size_pixels: a.size,
            volume: a.volume,
            max_kt: a.max_kt,
            centroid_r_um: a.r_sum / a.size as f64,
            centroid_z_um: a.z_sum / a.size as f64,
            bbox: a.bbox,
        })
        .collect();
    let length = slice.rows() as f64 * slice.pixel_pitch();
    let r_mean = 0.5 * (slice.r_inner_nominal() + slice.r_outer());
    let floor = match mode {
        AnalysisMode::Axisymmetric => 2.0 * std::f64::consts::PI * r_mean,
        AnalysisMode::PlaneStress => 1.0,
    } * slice.pixel_pitch()
        * slice.pixel_pitch();
    Ok(finish(
        config.threshold,
        config.connectivity,
        mode,
        clusters,
        length,
        floor,
        exceeding_kt,
    ))
}

fn finish(
    threshold: f64,
    connectivity: Connectivity,
    mode: AnalysisMode,
    clusters: Vec<Cluster>,
    surface_length_um: f64,
    pixel_volume_floor: f64,
    exceeding_kt: Vec<f64>,
) -> ClusterReport {
    let mut size_histogram = BTreeMap::new();
    for c in &clusters {
        *size_histogram.entry(c.size_pixels).or_insert(0) += 1;
    }
    let total_stressed_volume = clusters.iter().fold(0.0, |acc, c| acc + c.volume);
    let number_density = if surface_length_um > 0.0 {
        clusters.len() as f64 / (surface_length_um / 1000.0)
    } else {
        0.0
    };
    ClusterReport {
        threshold,
        connectivity,
        mode,
        clusters,
        size_histogram,
        total_stressed_volume,
        number_density,
        surface_length_um,
        pixel_volume_floor,
        exceeding_kt,
    }
}

/// Merges per-slice reports into one, renumbering clusters in input order.
pub fn pool_reports(reports: &[ClusterReport]) -> Result<ClusterReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Parameter("no reports to pool".into()))?;
    if reports
        .iter()
        .any(|r| r.threshold != first.threshold || r.connectivity != first.connectivity || r.mode != first.mode)
    {
        return Err(Error::Parameter(
            "pooled reports must share threshold, connectivity and mode".into(),
        ));
    }
    let mut clusters = Vec::new();
    let mut exceeding = Vec::new();
    let mut length = 0.0;
    let mut floor = 0.0;
    for r in reports {
        for c in &r.clusters {
            clusters.push(Cluster {
                id: clusters.len() + 1,
                ..c.clone()
            });
        }
        exceeding.extend_from_slice(&r.exceeding_kt);
        length += r.surface_length_um;
        floor += r.pixel_volume_floor;
    }
    exceeding.sort_by(f64::total_cmp);
    Ok(finish(
        first.threshold,
        first.connectivity,
        first.mode,
        clusters,
        length,
        floor / reports.len() as f64,
        exceeding,
    ))
}

/// One log2 bin `[lo, hi]` of cluster sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeBin {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
}

/// Counts in bins `[1,1], [2,3], [4,7], ...` up to the bin holding the
/// largest cluster. Empty for an empty report.
pub fn size_distribution(report: &ClusterReport) -> Vec<SizeBin> {
    let Some(max) = report.clusters.iter().map(|c| c.size_pixels).max() else {
        return Vec::new();
    };
    let n_bins = (usize::BITS - max.leading_zeros()) as usize;
    let mut bins: Vec<SizeBin> = (0..n_bins)
        .map(|k| SizeBin {
            lo: 1 << k,
            hi: (1 << (k + 1)) - 1,
            count: 0,
        })
        .collect();
    for c in &report.clusters {
        let k = (usize::BITS - 1 - c.size_pixels.leading_zeros()) as usize;
        bins[k].count += 1;
    }
    bins
}

/// Inputs to the life model derived from a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressedVolumeFeatures {
    pub total_stressed_volume: f64,
    pub p95_cluster_volume: f64,
    pub number_density: f64,
    pub max_kt: f64,
    /// Quantile of super-threshold K_t (1.0 without clusters).
    pub kt_eff: f64,
    pub kt_eff_quantile: f64,
    /// Lower bound applied to the stressed volume by the life model.
    pub volume_floor: f64,
}

/// Nearest-rank quantile of ascending `sorted` values.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn stressed_volume_features(report: &ClusterReport, kt_eff_quantile: f64) -> Result<StressedVolumeFeatures> {
    if !(kt_eff_quantile > 0.0 && kt_eff_quantile <= 1.0) {
        return Err(Error::Parameter(format!(
            "kt_eff_quantile must be in (0, 1], got {kt_eff_quantile}"
        )));
    }
    let mut volumes: Vec<f64> = report.clusters.iter().map(|c| c.volume).collect();
    volumes.sort_by(f64::total_cmp);
    Ok(StressedVolumeFeatures {
        total_stressed_volume: report.total_stressed_volume,
        p95_cluster_volume: quantile(&volumes, 0.95).unwrap_or(0.0),
        number_density: report.number_density,
        max_kt: report.clusters.iter().map(|c| c.max_kt).fold(0.0, f64::max),
        kt_eff: quantile(&report.exceeding_kt, kt_eff_quantile).unwrap_or(1.0),
        kt_eff_quantile,
        volume_floor: report.pixel_volume_floor,
    })
}

pub fn write_report_json(path: &Path, report: &ClusterReport) -> Result<()> {
    crate::io::write_json(path, report)
}

pub fn read_report_json(path: &Path) -> Result<ClusterReport> {
    crate::io::read_json(path)
}

#[derive(Serialize, Deserialize)]
struct HistRow {
    bin_lo: usize,
    bin_hi: usize,
    count: usize,
}

/// Log-binned size histogram as CSV `bin_lo,bin_hi,count`.
pub fn write_histogram_csv(path: &Path, bins: &[SizeBin]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for b in bins {
        w.serialize(HistRow {
            bin_lo: b.lo,
            bin_hi: b.hi,
            count: b.count,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_histogram_csv(path: &Path) -> Result<Vec<SizeBin>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| {
            let row: HistRow = row?;
            Ok(SizeBin {
                lo: row.bin_lo,
                hi: row.bin_hi,
                count: row.count,
            })
        })
        .collect()
}
