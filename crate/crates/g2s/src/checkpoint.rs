//! Model directories: vocabularies, parameter files with JSON manifests,
//! the best-checkpoint marker and the metrics log.
//!
//! A parameter file `params.NNNNN` holds the magic `G2SPARAM`, a format
//! version, the tensor count and one `(name, rows, cols)` header per tensor
//! (lengths and extents as little-endian `u32`), followed by every tensor's
//! values as little-endian `f32` in header order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use g2s_core::graph::EdgeTag;
use g2s_core::model::{DecoderConfig, EncoderConfig, Model, ModelConfig};
use g2s_core::tensor::ParamStore;
use g2s_core::train::Vocab;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Invalid;

const MAGIC: &[u8; 8] = b"G2SPARAM";
const VERSION: u32 = 1;

pub const SRC_VOCAB: &str = "src.vocab";
pub const TGT_VOCAB: &str = "tgt.vocab";
pub const METRICS: &str = "metrics.jsonl";
pub const BEST: &str = "best";
pub const BEST_LINK: &str = "params.best";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub layers: usize,
    pub hidden: usize,
    pub position_dim: usize,
    pub tags: Vec<String>,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderSpec {
    pub layers: usize,
    pub hidden: usize,
    pub embed: usize,
}

/// Serialisable mirror of [`ModelConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoder: EncoderSpec,
    pub decoder: DecoderSpec,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
}

impl From<&ModelConfig> for ModelSpec {
    fn from(c: &ModelConfig) -> Self {
        ModelSpec {
            encoder: EncoderSpec {
                layers: c.encoder.layers,
                hidden: c.encoder.hidden,
                position_dim: c.encoder.position_dim,
                tags: c.encoder.tags.iter().map(|t| t.as_str().to_string()).collect(),
                dropout: c.encoder.dropout,
            },
            decoder: DecoderSpec {
                layers: c.decoder.layers,
                hidden: c.decoder.hidden,
                embed: c.decoder.embed,
            },
            src_vocab: c.src_vocab,
            tgt_vocab: c.tgt_vocab,
        }
    }
}

impl ModelSpec {
    pub fn to_config(&self) -> Result<ModelConfig> {
        let tags = self
            .encoder
            .tags
            .iter()
            .map(|t| t.parse::<EdgeTag>().map_err(anyhow::Error::msg))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelConfig {
            encoder: EncoderConfig {
                layers: self.encoder.layers,
                hidden: self.encoder.hidden,
                position_dim: self.encoder.position_dim,
                tags,
                dropout: self.encoder.dropout,
            },
            decoder: DecoderConfig {
                layers: self.decoder.layers,
                hidden: self.decoder.hidden,
                embed: self.decoder.embed,
            },
            src_vocab: self.src_vocab,
            tgt_vocab: self.tgt_vocab,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
}

/// Sidecar `params.NNNNN.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub checkpoint: u32,
    pub tensors: Vec<TensorEntry>,
    /// Optimiser steps taken so far.
    pub step: u64,
    /// Learning rate for the next epoch.
    pub lr: f64,
    pub seed: u64,
    pub train_loss: f64,
    pub dev_perplexity: f64,
    pub model: ModelSpec,
    pub src_vocab_sha256: String,
    pub tgt_vocab_sha256: String,
}

pub fn checkpoint_name(checkpoint: u32) -> String {
    format!("params.{checkpoint:05}")
}

pub fn vocab_hash(v: &Vocab) -> String {
    let mut h = Sha256::new();
    for t in v.tokens() {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    format!("{:x}", h.finalize())
}

pub fn write_vocab(path: &Path, v: &Vocab) -> Result<()> {
    let mut text = v.tokens().join("\n");
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let tokens = text.lines().map(str::to_string).collect();
    Vocab::from_tokens(tokens).with_context(|| format!("vocabulary {}", path.display()))
}

pub fn encode_params(store: &ParamStore<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.scalar_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.rows as u32).to_le_bytes());
        out.extend_from_slice(&(p.cols as u32).to_le_bytes());
    }
    for p in store.iter() {
        for v in &p.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        ensure!(self.at + n <= self.bytes.len(), "parameter file truncated at byte {}", self.at);
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<ParamStore<f32>> {
    let mut r = Reader { bytes, at: 0 };
    ensure!(r.take(8)? == MAGIC, "not a parameter file");
    let version = r.u32()?;
    ensure!(version == VERSION as usize, "unsupported parameter file version {version}");
    let count = r.u32()?;
    let mut headers = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .context("parameter name is not UTF-8")?
            .to_string();
        headers.push((name, r.u32()?, r.u32()?));
    }
    let mut store = ParamStore::new();
    for (name, rows, cols) in headers {
        ensure!(store.by_name(&name).is_none(), "duplicate parameter {name}");
        let raw = r.take(rows * cols * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        store.add(name, rows, cols, values);
    }
    ensure!(r.at == bytes.len(), "{} trailing bytes in parameter file", bytes.len() - r.at);
    Ok(store)
}

/// Writes `params.NNNNN` and its manifest into `dir`.
pub fn save_checkpoint(dir: &Path, model: &Model<f32>, manifest: &Manifest) -> Result<PathBuf> {
    let name = checkpoint_name(manifest.checkpoint);
    let path = dir.join(&name);
    fs::write(&path, encode_params(model.params()))
        .with_context(|| format!("writing {}", path.display()))?;
    let json = serde_json::to_vec_pretty(manifest)?;
    fs::write(dir.join(format!("{name}.json")), json)?;
    Ok(path)
}

/// Records `checkpoint` as the best one: a `best` file naming it and, on
/// Unix, a `params.best` symlink.
pub fn mark_best(dir: &Path, checkpoint: u32) -> Result<()> {
    let name = checkpoint_name(checkpoint);
    fs::write(dir.join(BEST), format!("{name}\n"))?;
    #[cfg(unix)]
    {
        let link = dir.join(BEST_LINK);
        if link.symlink_metadata().is_ok() {
            fs::remove_file(&link)?;
        }
        std::os::unix::fs::symlink(&name, &link)?;
    }
    Ok(())
}

/// A loaded checkpoint with its vocabularies.
pub struct Loaded {
    pub model: Model<f32>,
    pub manifest: Manifest,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub path: PathBuf,
}

/// Resolves a checkpoint argument: a parameter file, or a model directory
/// (meaning its best checkpoint).
pub fn resolve(path: &Path) -> Result<PathBuf> {
    if path.is_dir() {
        let best = path.join(BEST);
        let name = fs::read_to_string(&best)
            .with_context(|| format!("{} has no best checkpoint marker", path.display()))?;
        return Ok(path.join(name.trim()));
    }
    Ok(path.to_path_buf())
}

pub fn load_checkpoint(path: &Path) -> Result<Loaded> {
    let path = resolve(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let manifest_path = PathBuf::from(format!("{}.json", path.display()));
    let manifest: Manifest = serde_json::from_slice(
        &fs::read(&manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?,
    )
    .with_context(|| format!("parsing {}", manifest_path.display()))?;
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let store = decode_params(&bytes).with_context(|| format!("loading {}", path.display()))?;
    let src_vocab = read_vocab(&dir.join(SRC_VOCAB))?;
    let tgt_vocab = read_vocab(&dir.join(TGT_VOCAB))?;
    if vocab_hash(&src_vocab) != manifest.src_vocab_sha256
        || vocab_hash(&tgt_vocab) != manifest.tgt_vocab_sha256
    {
        bail!(Invalid(format!(
            "vocabularies next to {} do not match its manifest",
            path.display()
        )));
    }
    let config = manifest.model.to_config()?;
    let model = Model::from_params(config, store).map_err(|e| Invalid(e.to_string()))?;
    Ok(Loaded {
        model,
        manifest,
        src_vocab,
        tgt_vocab,
        path,
    })
}

/// Appends one JSON value as a line.
pub fn append_jsonl<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    serde_json::to_writer(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}
