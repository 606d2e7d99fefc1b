use std::path::Path;

use image::{Rgb, RgbImage};
use ktfield::cluster::{exceeding_mask, label_mask, ClusterConfig};
use ktfield::fem::KtField;
use ktfield::surface::SurfaceSlice;
use ktfield::{Error, Result};

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

/// Clusters colorized over the mask: void black, material gray, each
/// cluster a palette color cycling by label. Rows run down the image,
/// radius to the right.
pub fn cluster_overlay(field: &KtField<f64>, slice: &SurfaceSlice, config: &ClusterConfig) -> RgbImage {
    let (rows, cols) = (slice.rows(), slice.cols());
    let labels = label_mask(&exceeding_mask(field, slice, config), rows, cols, config.connectivity);
    RgbImage::from_fn(cols as u32, rows as u32, |x, y| {
        let (i, j) = (y as usize, x as usize);
        match labels.labels[i * cols + j] {
            0 if slice.is_material(i, j) => Rgb([128, 128, 128]),
            0 => Rgb([0, 0, 0]),
            l => Rgb(PALETTE[(l as usize - 1) % PALETTE.len()]),
        }
    })
}

pub fn write_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("cannot write {}: {e}", path.display())))
}
