//! Binary model snapshots.
//!
//! Layout: the 8-byte magic `SPHTOPIC`, a little-endian `u32` format version,
//! a `u64` header length, the JSON header, then every parameter block followed
//! by the word embeddings as little-endian `f32`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TopicModelState};

pub const MAGIC: &[u8; 8] = b"SPHTOPIC";
pub const FORMAT_VERSION: u32 = 1;
const MAX_HEADER: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub num_topics: usize,
    /// Element count of each parameter block, in storage order.
    pub blocks: Vec<usize>,
}

fn err(msg: impl Into<String>) -> Error {
    Error::Snapshot(msg.into())
}

pub fn header_of(state: &TopicModelState) -> SnapshotHeader {
    SnapshotHeader {
        config: state.config.clone(),
        vocab_hash: state.vocab_hash.clone(),
        vocab_size: state.vocab_size(),
        embedding_dim: state.word_emb.dim(),
        num_topics: state.num_topics(),
        blocks: state.params.tensors().iter().map(|t| t.len()).collect(),
    }
}

pub fn write_snapshot<W: Write>(state: &TopicModelState, mut out: W) -> Result<()> {
    state.check_finite("snapshot save")?;
    let header = serde_json::to_vec(&header_of(state))?;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    let mut buf = Vec::new();
    let emb = state.word_emb.vectors();
    let values = state
        .params
        .tensors()
        .into_iter()
        .flat_map(|t| t.iter())
        .chain(emb.iter());
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn to_bytes(state: &TopicModelState) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_snapshot(state, &mut out)?;
    Ok(out)
}

pub fn save(state: &TopicModelState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, to_bytes(state)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_f32s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 4];
    input
        .read_exact(&mut bytes)
        .map_err(|_| err("truncated parameter data"))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<TopicModelState> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| err("file too short"))?;
    if &magic != MAGIC {
        return Err(err("not a model snapshot"));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word).map_err(|_| err("missing version"))?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(err(format!("unsupported format version {version}")));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(|_| err("missing header length"))?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(err(format!("header length {len} is implausible")));
    }
    let mut header = vec![0u8; len as usize];
    input.read_exact(&mut header).map_err(|_| err("truncated header"))?;
    let header: SnapshotHeader = serde_json::from_slice(&header)?;
    if header.config.num_topics != header.num_topics || header.config.embedding_dim != header.embedding_dim {
        return Err(err("header dimensions disagree with the model config"));
    }

    let placeholder = EmbeddingMatrix::from_unit_rows(
        Array2::from_shape_fn((header.vocab_size, header.embedding_dim), |(_, j)| if j == 0 { 1.0 } else { 0.0 }),
        0.0,
    )?;
    let mut state = TopicModelState::new(header.config.clone(), placeholder, header.vocab_hash.clone())?;
    let expected: Vec<usize> = state.params.tensors().iter().map(|t| t.len()).collect();
    if expected != header.blocks {
        return Err(err("parameter block sizes disagree with the model config"));
    }
    for block in state.params.tensors_mut() {
        let values = read_f32s(&mut input, block.len())?;
        block.copy_from_slice(&values);
    }
    let emb = read_f32s(&mut input, header.vocab_size * header.embedding_dim)?;
    let emb = Array2::from_shape_vec((header.vocab_size, header.embedding_dim), emb)
        .map_err(|e| err(e.to_string()))?;
    state.word_emb = EmbeddingMatrix::from_unit_rows(emb, 1e-5)?;
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(err("trailing bytes after parameter data"));
    }
    state.check_finite("snapshot load")?;
    Ok(state)
}

pub fn from_bytes(bytes: &[u8]) -> Result<TopicModelState> {
    read_snapshot(bytes)
}

pub fn load(path: impl AsRef<Path>) -> Result<TopicModelState> {
    read_snapshot(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Loads a snapshot and rejects it unless it was trained on `vocab_hash`.
pub fn load_for_vocab(path: impl AsRef<Path>, vocab_hash: &str) -> Result<TopicModelState> {
    let state = load(path)?;
    if state.vocab_hash != vocab_hash {
        return Err(Error::VocabMismatch {
            expected: state.vocab_hash,
            found: vocab_hash.to_string(),
        });
    }
    Ok(state)
}
