use rayon::prelude::*;

use super::SurrogateModel;
use crate::error::{Error, Result};
use crate::fem::KtField;
use crate::scalar::Scalar;
use crate::surface::SurfaceSlice;

/// Overlap between neighbouring tiles, pixels.
pub const TILE_OVERLAP: usize = 32;

/// Overlap used for a patch size: [`TILE_OVERLAP`], capped at half a patch
/// for the small patches of reduced architectures.
pub fn tile_overlap(patch: usize) -> usize {
    TILE_OVERLAP.min(patch / 2)
}

/// Tile origins along an axis of length `len >= patch`: stride
/// `patch − overlap`, with the last tile shifted back to end at `len`.
pub fn tile_starts(len: usize, patch: usize, overlap: usize) -> Vec<usize> {
    assert!(len >= patch && overlap < patch);
    let stride = patch - overlap;
    let mut starts = vec![0];
    while starts.last().expect("non-empty") + patch < len {
        let next = (starts.last().expect("non-empty") + stride).min(len - patch);
        starts.push(next);
    }
    starts
}

/// Pixel range `[lo, hi)` owned by each tile: neighbours split their overlap
/// at its midpoint, and the outer tiles reach the slice edges.
fn ownership(starts: &[usize], patch: usize, len: usize) -> Vec<(usize, usize)> {
    let cuts: Vec<usize> = starts
        .windows(2)
        .map(|w| (w[1] + w[0] + patch) / 2)
        .collect();
    (0..starts.len())
        .map(|k| {
            let lo = if k == 0 { 0 } else { cuts[k - 1] };
            let hi = if k + 1 == starts.len() { len } else { cuts[k] };
            (lo, hi)
        })
        .collect()
}

/// Symmetric reflection of index `i` into `0..len` (edge pixel repeated).
fn reflect(i: usize, len: usize) -> usize {
    let period = 2 * len;
    let k = i % period;
    if k < len {
        k
    } else {
        period - 1 - k
    }
}

/// K_t over a whole slice from overlapping patch-sized tiles.
///
/// Each tile contributes only the pixels it owns, so a slice exactly one
/// patch in size reproduces [`SurrogateModel::forward`]. A dimension shorter
/// than the patch (but at least half of it) is reflect-padded and cropped back.
pub fn predict_large<T: Scalar>(model: &SurrogateModel<T>, slice: &SurfaceSlice) -> Result<KtField<T>> {
    let p = model.patch_size();
    let pitch = model.training_meta.pixel_pitch_um;
    if (slice.pixel_pitch() - pitch).abs() > 1e-9 * pitch {
        return Err(Error::Parameter(format!(
            "slice pixel pitch {} µm differs from the model's {} µm",
            slice.pixel_pitch(),
            pitch
        )));
    }
    let (rows, cols) = (slice.rows(), slice.cols());
    if 2 * rows < p || 2 * cols < p {
        return Err(Error::Shape(format!(
            "slice {rows}x{cols} is smaller than half the {p}-pixel patch"
        )));
    }
    let (pr, pc) = (rows.max(p), cols.max(p));
    let mut mask = vec![false; pr * pc];
    for i in 0..pr {
        for j in 0..pc {
            mask[i * pc + j] = slice.is_material(reflect(i, rows), reflect(j, cols));
        }
    }

    let overlap = tile_overlap(p);
    let rs = tile_starts(pr, p, overlap);
    let cs = tile_starts(pc, p, overlap);
    let (ro, co) = (ownership(&rs, p, pr), ownership(&cs, p, pc));
    let tiles: Vec<(usize, usize)> = (0..rs.len())
        .flat_map(|a| (0..cs.len()).map(move |b| (a, b)))
        .collect();
    let outputs: Vec<Vec<T>> = tiles
        .par_iter()
        .map(|&(a, b)| {
            let (r0, c0) = (rs[a], cs[b]);
            let mut tile = Vec::with_capacity(p * p);
            for i in 0..p {
                tile.extend_from_slice(&mask[(r0 + i) * pc + c0..(r0 + i) * pc + c0 + p]);
            }
            model.forward(&tile)
        })
        .collect::<Result<_>>()?;

    let mut full = vec![T::nan(); pr * pc];
    for (&(a, b), out) in tiles.iter().zip(&outputs) {
        let (r0, c0) = (rs[a], cs[b]);
        for i in ro[a].0..ro[a].1 {
            for j in co[b].0..co[b].1 {
                full[i * pc + j] = out[(i - r0) * p + (j - c0)];
            }
        }
    }
    let mut field = KtField::from_slice_fn(slice, model.training_meta.mode, |i, j| full[i * pc + j]);
    field.sigma_nominal = 1.0;
    Ok(field)
}
