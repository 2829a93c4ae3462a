//! Model file: 8-byte magic, `u16` version, `u32` tensor count, then per tensor a
//! length-prefixed UTF-8 name, `u32` rank, `u64` dims and row-major `f32` data, all
//! little-endian.

use std::collections::BTreeMap;
use std::path::Path;

use super::config::RankerDims;
use super::model::{Linear, RankerModel, HIDDEN_LAYERS};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const MODEL_MAGIC: &[u8; 8] = b"FOFENNM\0";
pub const MODEL_VERSION: u16 = 1;

pub fn encode_model(model: &RankerModel<f32>) -> Vec<u8> {
    let meta_alphas = [model.alphas.0 as f32, model.alphas.1 as f32];
    let meta_dropout = [model.dropout as f32];
    let meta_window = [model.context_window as f32];
    let mut tensors = model.tensors();
    tensors.push(("meta.alphas".into(), vec![2], &meta_alphas));
    tensors.push(("meta.dropout".into(), vec![1], &meta_dropout));
    tensors.push(("meta.context_window".into(), vec![1], &meta_window));

    let mut w = ByteWriter::default();
    w.bytes(MODEL_MAGIC);
    w.u16(MODEL_VERSION);
    w.u32(tensors.len() as u32);
    for (name, shape, data) in &tensors {
        w.str(name);
        w.u32(shape.len() as u32);
        for &d in shape {
            w.u64(d as u64);
        }
        for &v in data.iter() {
            w.f32(v);
        }
    }
    w.into_inner()
}

pub fn write_model(path: &Path, model: &RankerModel<f32>) -> Result<()> {
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<RankerModel<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

pub fn decode_model(bytes: &[u8]) -> Result<RankerModel<f32>> {
    let mut r = ByteReader::new(bytes);
    if r.take(8)? != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "unsupported model version {version}"
        )));
    }
    let count = r.u32()?;
    let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        if rank > 2 {
            return Err(Error::Format(format!("tensor {name} has rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("tensor {name} is too large")))?;
        if len.saturating_mul(4) > bytes.len() {
            return Err(Error::Format(format!(
                "tensor {name} exceeds the file size"
            )));
        }
        let data = (0..len).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        if tensors
            .insert(name.clone(), Tensor { shape, data })
            .is_some()
        {
            return Err(Error::Format(format!("duplicate tensor {name}")));
        }
    }
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after the last tensor".into()));
    }
    assemble(tensors)
}

fn take(tensors: &mut BTreeMap<String, Tensor>, name: &str) -> Result<Tensor> {
    tensors
        .remove(name)
        .ok_or_else(|| Error::Format(format!("missing tensor {name}")))
}

fn matrix(tensors: &mut BTreeMap<String, Tensor>, name: &str) -> Result<Matrix<f32>> {
    let t = take(tensors, name)?;
    match t.shape[..] {
        [rows, cols] => Matrix::from_vec(rows, cols, t.data),
        _ => Err(Error::Format(format!("tensor {name} is not a matrix"))),
    }
}

fn vector(tensors: &mut BTreeMap<String, Tensor>, name: &str, len: usize) -> Result<Vec<f32>> {
    let t = take(tensors, name)?;
    if t.shape != [len] {
        return Err(Error::Format(format!(
            "tensor {name} has shape {:?}, expected [{len}]",
            t.shape
        )));
    }
    Ok(t.data)
}

fn linear(
    tensors: &mut BTreeMap<String, Tensor>,
    name: &str,
    out: usize,
    inp: usize,
) -> Result<Linear<f32>> {
    let weight = matrix(tensors, &format!("{name}.weight"))?;
    if weight.shape() != (out, inp) {
        return Err(Error::Format(format!(
            "{name}.weight has shape {:?}, expected ({out}, {inp})",
            weight.shape()
        )));
    }
    let bias = vector(tensors, &format!("{name}.bias"), out)?;
    Ok(Linear { weight, bias })
}

fn assemble(mut t: BTreeMap<String, Tensor>) -> Result<RankerModel<f32>> {
    let word_embedding = matrix(&mut t, "word_embedding")?;
    let char_embedding = match t.contains_key("char_embedding") {
        true => Some(matrix(&mut t, "char_embedding")?),
        false => None,
    };
    let (vocab, word_dim) = word_embedding.shape();
    let (charset, char_dim) = char_embedding.as_ref().map_or((0, 0), Matrix::shape);
    let dim_of = |t: &BTreeMap<String, Tensor>, name: &str| -> Result<usize> {
        t.get(name)
            .and_then(|x| x.shape.first().copied())
            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))
    };
    let dims = RankerDims {
        vocab,
        charset,
        word_dim,
        char_dim,
        mention_dim: dim_of(&t, "mention_proj.bias")?,
        context_dim: dim_of(&t, "context_proj.bias")?,
        description_dim: dim_of(&t, "description_proj.bias")?,
        hidden: dim_of(&t, "hidden.0.bias")?,
    };
    if char_embedding.is_some() && charset == 0 {
        return Err(Error::Format("empty character embedding".into()));
    }
    let mention_proj = linear(
        &mut t,
        "mention_proj",
        dims.mention_dim,
        dims.mention_input(),
    )?;
    let context_proj = linear(&mut t, "context_proj", dims.context_dim, 4 * word_dim)?;
    let description_proj = linear(&mut t, "description_proj", dims.description_dim, word_dim)?;
    let mut hidden = Vec::with_capacity(HIDDEN_LAYERS);
    let mut width = dims.feature_width();
    for i in 0..HIDDEN_LAYERS {
        hidden.push(linear(&mut t, &format!("hidden.{i}"), dims.hidden, width)?);
        width = dims.hidden;
    }
    let output = linear(&mut t, "output", 2, dims.hidden)?;
    let alphas = vector(&mut t, "meta.alphas", 2)?;
    let dropout = vector(&mut t, "meta.dropout", 1)?;
    let window = vector(&mut t, "meta.context_window", 1)?[0];
    if !(window >= 0.0 && window.fract() == 0.0 && window <= (1u32 << 24) as f32) {
        return Err(Error::Format(format!("invalid context window {window}")));
    }
    if let Some(extra) = t.keys().next() {
        return Err(Error::Format(format!("unexpected tensor {extra}")));
    }
    crate::fofe::check_alpha_pair((alphas[0] as f64, alphas[1] as f64))?;
    Ok(RankerModel {
        dims,
        alphas: (alphas[0] as f64, alphas[1] as f64),
        dropout: dropout[0] as f64,
        context_window: window as usize,
        word_embedding,
        char_embedding,
        mention_proj,
        context_proj,
        description_proj,
        hidden,
        output,
    })
}
