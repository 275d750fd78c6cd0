//! Decoding preprocessed graphs with one model or an ensemble.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use g2s_core::amr::{deanonymize, AnonymizationMap};
use g2s_core::graph::LeviGraph;
use g2s_core::model::{GraphInput, ModelError};
use g2s_core::search::{
    argmax, beam_search, default_max_len, replace_unk, Ensemble, Hypothesis, ModelScorer,
    SearchConfig,
};
use g2s_core::train::{Vocab, SPECIALS, UNK};
use rayon::prelude::*;

use crate::checkpoint::{load_checkpoint, Loaded};
use crate::interchange::{read_jsonl, write_jsonl, MapRecord, TraceRecord};
use crate::preprocess::split_paths;
use crate::trainer::load_split;
use crate::Invalid;

pub struct TranslateOptions {
    pub checkpoints: Vec<PathBuf>,
    pub test: PathBuf,
    pub beam: usize,
    /// Fixed length limit; `None` uses the per-graph default.
    pub max_len: Option<usize>,
    /// `<unk>` replacement and deanonymisation.
    pub amr: bool,
    pub output: PathBuf,
    pub trace: Option<PathBuf>,
}

pub struct Decoded {
    pub tokens: Vec<String>,
    pub hypothesis: Hypothesis,
}

/// Loads checkpoints and checks that they share both vocabularies.
pub fn load_models(paths: &[PathBuf]) -> Result<Vec<Loaded>> {
    let models = paths
        .iter()
        .map(|p| load_checkpoint(p))
        .collect::<Result<Vec<_>>>()?;
    let first = models.first().ok_or_else(|| Invalid("no checkpoint given".into()))?;
    for m in &models[1..] {
        if m.manifest.src_vocab_sha256 != first.manifest.src_vocab_sha256
            || m.manifest.tgt_vocab_sha256 != first.manifest.tgt_vocab_sha256
        {
            return Err(Invalid(format!(
                "{} and {} were trained with different vocabularies",
                first.path.display(),
                m.path.display()
            ))
            .into());
        }
    }
    Ok(models)
}

/// Beam search over the averaged models for one graph.
pub fn decode_graph(models: &[Loaded], graph: &LeviGraph, cfg: &SearchConfig) -> Result<Hypothesis, ModelError> {
    let src = &models[0].src_vocab;
    let input = GraphInput::from_levi(graph, |l| src.id(l))?;
    let scorers = models
        .iter()
        .map(|m| ModelScorer::new(&m.model, &input))
        .collect::<Result<Vec<_>, _>>()?;
    if scorers.len() == 1 {
        beam_search(&scorers[0], cfg)
    } else {
        beam_search(&Ensemble::new(scorers)?, cfg)
    }
}

/// Output tokens, with `<unk>` replaced by the most attended node label and
/// anonymised tokens restored when `map` is given.
pub fn postprocess(
    h: &Hypothesis,
    tgt: &Vocab,
    graph: &LeviGraph,
    map: Option<&AnonymizationMap>,
    amr: bool,
) -> Vec<String> {
    let tokens: Vec<String> = h.output().iter().map(|&t| tgt.token(t).to_string()).collect();
    if !amr {
        return tokens;
    }
    let labels: Vec<String> = graph.nodes().iter().map(|n| n.label.clone()).collect();
    let replaced = replace_unk(&tokens, &h.attention, &labels, SPECIALS[UNK as usize]);
    match map {
        Some(m) => deanonymize(&replaced, m),
        None => replaced,
    }
}

fn read_maps(path: &Path) -> Result<Option<Vec<AnonymizationMap>>> {
    if !path.exists() {
        return Ok(None);
    }
    let records: Vec<MapRecord> = read_jsonl(BufReader::new(File::open(path)?))
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(Some(records.into_iter().map(Into::into).collect()))
}

pub fn translate(opts: &TranslateOptions) -> Result<Vec<Decoded>> {
    if opts.beam == 0 {
        return Err(Invalid("beam size must be positive".into()).into());
    }
    let models = load_models(&opts.checkpoints)?;
    let split = load_split(&opts.test)?;
    let dir = opts.test.parent().unwrap_or(Path::new("."));
    let name = opts.test.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let maps = if opts.amr { read_maps(&split_paths(dir, &name).2)? } else { None };
    if let Some(m) = &maps {
        crate::corpus::ensure_same_len("graphs and maps", split.graphs.len(), m.len())?;
    }
    let tgt = &models[0].tgt_vocab;
    let decoded = split
        .graphs
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let max_len = opts.max_len.unwrap_or_else(|| default_max_len(g.node_count()));
            let cfg = SearchConfig::new(opts.beam, max_len);
            let h = decode_graph(&models, g, &cfg).with_context(|| format!("graph {}", i + 1))?;
            let map = maps.as_ref().map(|m| &m[i]);
            Ok(Decoded {
                tokens: postprocess(&h, tgt, g, map, opts.amr),
                hypothesis: h,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let unfinished = decoded.iter().filter(|d| !d.hypothesis.finished).count();
    if unfinished > 0 {
        eprintln!("warning: {unfinished} hypotheses reached the length limit unfinished");
    }
    if let Some(parent) = opts.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(
        File::create(&opts.output).with_context(|| format!("creating {}", opts.output.display()))?,
    );
    for d in &decoded {
        writeln!(out, "{}", d.tokens.join(" "))?;
    }
    out.flush()?;
    if let Some(path) = &opts.trace {
        let records: Vec<TraceRecord> = decoded
            .iter()
            .map(|d| TraceRecord {
                tokens: d.hypothesis.tokens.iter().map(|&t| tgt.token(t).to_string()).collect(),
                log_prob: d.hypothesis.log_prob,
                score: d.hypothesis.score(),
                finished: d.hypothesis.finished,
                attention_argmax: d.hypothesis.attention.iter().map(|a| argmax(a)).collect(),
            })
            .collect();
        write_jsonl(BufWriter::new(File::create(path)?), &records)?;
    }
    Ok(decoded)
}
