//! Binary model checkpoints.
//!
//! ```text
//! magic "SCNCKPT\0" | version u32
//! layer count u32, then per layer: in u64 | out u64 | in*out f64 | out f64 bias
//! attention: dim u64 | dim f64 | has_bias u8 | [bias f64]
//! classifier: dim u64 | classes u64 | dim*classes f64
//! delta1 f64
//! ```
//!
//! Floats are stored as raw little-endian bits, so a round trip is exact.

use std::fs;
use std::path::Path;

use crate::backbone::{DenseLayer, MlpBackbone};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Result, ScnError};
use crate::loss::{AttentionHead, Classifier};
use crate::tensor::Tensor2D;
use crate::train::ScnModel;

const MAGIC: &[u8; 8] = b"SCNCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode(model: &ScnModel) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(CHECKPOINT_VERSION);
    let layers = model.backbone.layers();
    w.u32(layers.len() as u32);
    for l in layers {
        w.u64(l.input_dim() as u64);
        w.u64(l.output_dim() as u64);
        w.f64s(l.weights.as_slice());
        w.f64s(&l.bias);
    }
    w.u64(model.attention.dim() as u64);
    w.f64s(&model.attention.weights);
    match model.attention.bias {
        Some(b) => {
            w.u8(1);
            w.f64(b);
        }
        None => w.u8(0),
    }
    w.u64(model.classifier.dim() as u64);
    w.u64(model.classifier.classes() as u64);
    w.f64s(model.classifier.weights.as_slice());
    w.f64(model.delta1);
    w.buf
}

fn matrix(r: &mut ByteReader<'_>, record: &str) -> Result<Tensor2D> {
    let rows = r.count(0, record)?;
    let cols = r.count(0, record)?;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| ScnError::parse(record, "dimension overflow"))?;
    let data = r.f64s(len, record)?;
    Tensor2D::from_vec(rows, cols, data).map_err(|e| ScnError::parse(record, e.to_string()))
}

pub fn decode(bytes: &[u8]) -> Result<ScnModel> {
    let mut r = ByteReader::new(bytes);
    if r.take(8, "header")? != MAGIC {
        return Err(ScnError::parse("header", "bad magic"));
    }
    let version = r.u32("header")?;
    if version != CHECKPOINT_VERSION {
        return Err(ScnError::parse("header", format!("unsupported version {version}")));
    }
    let n_layers = r.u32("header")? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(64));
    for k in 0..n_layers {
        let rec = format!("layer {k}");
        let weights = matrix(&mut r, &rec)?;
        let bias = r.f64s(weights.cols(), &rec)?;
        layers.push(DenseLayer { weights, bias });
    }
    let backbone = MlpBackbone::from_layers(layers).map_err(|e| ScnError::parse("backbone", e.to_string()))?;
    let dim = r.count(8, "attention")?;
    let weights = r.f64s(dim, "attention")?;
    let bias = match r.u8("attention")? {
        0 => None,
        1 => Some(r.f64("attention")?),
        other => return Err(ScnError::parse("attention", format!("bias flag {other}"))),
    };
    let classifier = Classifier::from_weights(matrix(&mut r, "classifier")?)
        .map_err(|e| ScnError::parse("classifier", e.to_string()))?;
    let delta1 = r.f64("delta1")?;
    r.finish("trailer")?;
    ScnModel::from_parts(backbone, AttentionHead { weights, bias }, classifier, delta1)
        .map_err(|e| ScnError::parse("model", e.to_string()))
}

pub fn save_checkpoint(model: &ScnModel, path: &Path) -> Result<()> {
    fs::write(path, encode(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ScnModel> {
    decode(&fs::read(path)?)
}
