//! Model file: `KTSM`, u32 version, u32 header length, JSON header, then
//! little-endian `f32` blobs per layer (kernel, then bias). All integers
//! are little-endian.
//!
//! The header is `{"descriptor": …, "descriptor_sha256": …,
//! "weights_sha256": …}`; the descriptor digest covers the descriptor's exact
//! bytes, so any change to the header is detected on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::network::{Architecture, Layer, LayerShape, Network};
use super::{Normalization, SurrogateModel, TrainingMeta};
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"KTSM";
pub const VERSION: u32 = 1;
const FORMAT_TAG: &str = "ktfield-surrogate";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Descriptor {
    format: String,
    arch: Architecture,
    layers: Vec<LayerShape>,
    normalization: Normalization,
    training_meta: TrainingMeta,
    parameter_count: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header<'a> {
    #[serde(borrow)]
    descriptor: &'a RawValue,
    descriptor_sha256: String,
    weights_sha256: String,
}

pub fn encode_model<T: Scalar>(model: &SurrogateModel<T>) -> Result<Vec<u8>> {
    model.validate()?;
    let net = &model.network;
    let descriptor = serde_json::to_string(&Descriptor {
        format: FORMAT_TAG.into(),
        arch: net.arch.clone(),
        layers: net.layers.iter().map(|l| l.shape.clone()).collect(),
        normalization: model.normalization,
        training_meta: model.training_meta.clone(),
        parameter_count: net.parameter_count(),
    })?;
    let mut blob = Vec::with_capacity(4 * net.parameter_count());
    for l in &net.layers {
        for v in l.weight.iter().chain(&l.bias) {
            blob.extend_from_slice(&v.to_f32_le());
        }
    }
    let header = format!(
        r#"{{"descriptor":{descriptor},"descriptor_sha256":"{}","weights_sha256":"{}"}}"#,
        sha256_hex(descriptor.as_bytes()),
        sha256_hex(&blob)
    );
    let mut out = Vec::with_capacity(12 + header.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32::try_from(header.len()).map_err(|_| Error::Shape("header too large".into()))?.to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&blob);
    Ok(out)
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<SurrogateModel<T>> {
    if bytes.len() < 12 {
        return Err(Error::Format("model file truncated before the header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("not a surrogate model file (bad magic)".into()));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let header_len = u32_at(bytes, 8) as usize;
    let body = &bytes[12..];
    if header_len > body.len() {
        return Err(Error::Format("model file truncated inside the header".into()));
    }
    let text = std::str::from_utf8(&body[..header_len])
        .map_err(|_| Error::Format("model header is not UTF-8".into()))?;
    let header: Header = serde_json::from_str(text)?;
    if sha256_hex(header.descriptor.get().as_bytes()) != header.descriptor_sha256 {
        return Err(Error::Format("model descriptor digest mismatch".into()));
    }
    let d: Descriptor = serde_json::from_str(header.descriptor.get())?;
    if d.format != FORMAT_TAG {
        return Err(Error::Format(format!("unknown model format tag `{}`", d.format)));
    }
    d.arch.validate()?;
    if d.layers != d.arch.layer_shapes() {
        return Err(Error::Shape("layer table does not match the architecture".into()));
    }
    let count: usize = d.layers.iter().map(|s| s.weight_len() + s.out_channels).sum();
    if count != d.parameter_count {
        return Err(Error::Shape("parameter count does not match the layer table".into()));
    }
    let blob = &body[header_len..];
    if blob.len() < 4 * count {
        return Err(Error::Format(format!(
            "weights truncated: {} bytes, expected {}",
            blob.len(),
            4 * count
        )));
    }
    if blob.len() > 4 * count {
        return Err(Error::Format(format!(
            "{} trailing bytes after the weights",
            blob.len() - 4 * count
        )));
    }
    if sha256_hex(blob) != header.weights_sha256 {
        return Err(Error::Format("weight digest mismatch".into()));
    }
    let mut values = blob
        .chunks_exact(4)
        .map(|c| T::of_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
    let layers = d
        .layers
        .into_iter()
        .map(|shape| {
            let weight = values.by_ref().take(shape.weight_len()).collect();
            let bias = values.by_ref().take(shape.out_channels).collect();
            Layer { shape, weight, bias }
        })
        .collect();
    let model = SurrogateModel {
        network: Network { arch: d.arch, layers },
        normalization: d.normalization,
        training_meta: d.training_meta,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model<T: Scalar>(model: &SurrogateModel<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<SurrogateModel<T>> {
    decode_model(&fs::read(path)?)
}
