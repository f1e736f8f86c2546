//! Model checkpoints.
//!
//! Layout: the line `coref-checkpoint 1`, the line `header-bytes N`, N bytes
//! of TOML holding the model configuration, the vocabulary and a tensor
//! manifest, then every tensor's values as little-endian f64 in manifest
//! order, row-major. Equal models give byte-identical files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::SubwordVocabulary;
use crate::error::{Error, Result};
use crate::model::{CorefModel, ModelConfig};
use crate::params::{Component, ParamStore};
use crate::tensor::Matrix;

const MAGIC: &str = "coref-checkpoint 1";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    component: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    vocabulary: Vec<String>,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: CorefModel,
    pub vocabulary: Option<SubwordVocabulary>,
}

pub fn to_bytes(model: &CorefModel, vocabulary: Option<&SubwordVocabulary>) -> Vec<u8> {
    let header = Header {
        model: model.config.clone(),
        vocabulary: vocabulary.map(|v| v.entries().to_vec()).unwrap_or_default(),
        tensors: model
            .params
            .iter()
            .map(|(_, p)| TensorEntry {
                name: p.name.clone(),
                component: p.component.name().to_string(),
                rows: p.value.rows(),
                cols: p.value.cols(),
            })
            .collect(),
    };
    let text = toml::to_string(&header).expect("checkpoint header serializes");
    let mut out = format!("{MAGIC}\nheader-bytes {}\n{text}", text.len()).into_bytes();
    out.reserve(8 * model.params.num_scalars());
    for (_, p) in model.params.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn bad(message: impl Into<String>) -> Error {
    Error::Checkpoint(message.into())
}

fn take_line<'a>(bytes: &mut &'a [u8]) -> Result<&'a str> {
    let end = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated preamble"))?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("preamble is not UTF-8"))?;
    *bytes = &bytes[end + 1..];
    Ok(line)
}

pub fn from_bytes(mut bytes: &[u8]) -> Result<Checkpoint> {
    if take_line(&mut bytes)? != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let len: usize = take_line(&mut bytes)?
        .strip_prefix("header-bytes ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad("malformed header-bytes line"))?;
    if bytes.len() < len {
        return Err(bad("truncated header"));
    }
    let text = std::str::from_utf8(&bytes[..len]).map_err(|_| bad("header is not UTF-8"))?;
    let header: Header = toml::from_str(text).map_err(|e| bad(format!("header: {e}")))?;
    let mut data = bytes[len..].chunks_exact(8);
    let expected: usize = header.tensors.iter().map(|t| t.rows * t.cols).sum();
    if data.len() != expected || !data.remainder().is_empty() {
        return Err(bad(format!("expected {expected} values, found {} bytes", bytes.len() - len)));
    }
    let mut store = ParamStore::new();
    for t in header.tensors {
        let component = Component::from_name(&t.component).ok_or_else(|| bad(format!("unknown component `{}`", t.component)))?;
        let values = data
            .by_ref()
            .take(t.rows * t.cols)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.add(t.name, component, Matrix::from_vec(t.rows, t.cols, values));
    }
    let model = CorefModel::from_parts(header.model, store)?;
    let vocabulary = if header.vocabulary.is_empty() {
        None
    } else {
        Some(SubwordVocabulary::from_entries(header.vocabulary)?)
    };
    Ok(Checkpoint { model, vocabulary })
}

pub fn save(path: &Path, model: &CorefModel, vocabulary: Option<&SubwordVocabulary>) -> Result<()> {
    std::fs::write(path, to_bytes(model, vocabulary))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    from_bytes(&std::fs::read(path)?)
}
