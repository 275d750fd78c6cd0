//! Training driver: data loading, vocabularies, checkpoints and the log.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use g2s_core::graph::LeviGraph;
use g2s_core::model::{GraphInput, Model, ModelConfig, ModelError};
use g2s_core::tensor::Adam;
use g2s_core::train::{
    batch_nll, eval_groups, train, EpochRecord, Instance, Nll, TrainError, TrainHooks,
    TrainSummary, Vocab,
};
use rayon::prelude::*;
use serde_json::json;

use crate::checkpoint::{
    append_jsonl, mark_best, save_checkpoint, vocab_hash, write_vocab, Manifest, ModelSpec,
    TensorEntry, METRICS, SRC_VOCAB, TGT_VOCAB,
};
use crate::config::RunConfig;
use crate::interchange::{read_jsonl, GraphRecord};
use crate::preprocess::split_paths;
use crate::Invalid;

/// Graphs and tokenised targets of one preprocessed split.
pub struct Split {
    pub graphs: Vec<LeviGraph>,
    pub targets: Vec<Vec<String>>,
}

/// Reads `<prefix>.graphs.jsonl` and `<prefix>.tgt`, where `prefix` is a
/// path such as `data/train`.
pub fn load_split(prefix: &Path) -> Result<Split> {
    let dir = prefix.parent().unwrap_or(Path::new("."));
    let name = prefix
        .file_name()
        .with_context(|| format!("{} names no split", prefix.display()))?
        .to_string_lossy();
    let (graphs_path, targets_path, _) = split_paths(dir, &name);
    let records: Vec<GraphRecord> = read_jsonl(BufReader::new(
        File::open(&graphs_path).with_context(|| format!("opening {}", graphs_path.display()))?,
    ))
    .with_context(|| format!("reading {}", graphs_path.display()))?;
    let graphs = records
        .iter()
        .enumerate()
        .map(|(i, r)| r.to_levi().with_context(|| format!("{} line {}", graphs_path.display(), i + 1)))
        .collect::<Result<Vec<_>>>()?;
    let targets = match fs::read_to_string(&targets_path) {
        Ok(text) => crate::corpus::read_token_lines(&text),
        Err(_) => vec![Vec::new(); graphs.len()],
    };
    crate::corpus::ensure_same_len("graphs and targets", graphs.len(), targets.len())?;
    Ok(Split { graphs, targets })
}

pub fn instances(split: &Split, src: &Vocab, tgt: &Vocab) -> Result<Vec<Instance>> {
    split
        .graphs
        .iter()
        .zip(&split.targets)
        .map(|(g, t)| {
            Ok(Instance {
                graph: GraphInput::from_levi(g, |l| src.id(l))?,
                target: tgt.encode(t.iter().map(String::as_str)),
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()
        .map_err(Into::into)
}

pub struct TrainOptions {
    pub config: RunConfig,
    pub train: PathBuf,
    pub dev: PathBuf,
    pub output: PathBuf,
    pub quiet: bool,
}

struct Writer {
    dir: PathBuf,
    start: Instant,
    spec: ModelSpec,
    src_hash: String,
    tgt_hash: String,
    seed: u64,
    quiet: bool,
}

impl TrainHooks<f32> for Writer {
    fn dropped(&mut self, ids: &[usize], max_len: usize) {
        eprintln!(
            "warning: dropped {} training instances with targets longer than {max_len}: {ids:?}",
            ids.len()
        );
    }

    fn dev_nll(&mut self, model: &Model<f32>, dev: &[Instance], batch_size: usize) -> Result<Nll, ModelError> {
        let parts = eval_groups(dev, batch_size)
            .par_iter()
            .map(|g| batch_nll(model, g))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(parts.into_iter().fold(Nll::default(), Nll::add))
    }

    fn checkpoint(&mut self, model: &Model<f32>, adam: &Adam<f32>, r: &EpochRecord) -> Result<(), TrainError> {
        let io = |e: anyhow::Error| TrainError::Hook(format!("{e:#}"));
        let manifest = Manifest {
            checkpoint: r.checkpoint,
            tensors: model
                .params()
                .iter()
                .map(|p| TensorEntry {
                    name: p.name.clone(),
                    shape: [p.rows, p.cols],
                })
                .collect(),
            step: adam.steps(),
            lr: if r.halved { r.lr / 2.0 } else { r.lr },
            seed: self.seed,
            train_loss: r.train_loss,
            dev_perplexity: r.dev_perplexity,
            model: self.spec.clone(),
            src_vocab_sha256: self.src_hash.clone(),
            tgt_vocab_sha256: self.tgt_hash.clone(),
        };
        save_checkpoint(&self.dir, model, &manifest).map_err(io)?;
        if r.improved {
            mark_best(&self.dir, r.checkpoint).map_err(io)?;
        }
        let line = json!({
            "checkpoint": r.checkpoint,
            "train_loss": r.train_loss,
            "dev_perplexity": r.dev_perplexity,
            "lr": r.lr,
            "wall_time": self.start.elapsed().as_secs_f64(),
            "steps": r.steps,
            "improved": r.improved,
            "halved": r.halved,
            "stop": r.stop.map(|s| format!("{s:?}")),
        });
        append_jsonl(&self.dir.join(METRICS), &line).map_err(io)?;
        if !self.quiet {
            eprintln!(
                "checkpoint {:>2}  train loss {:.4}  dev ppl {:.4}  lr {:.2e}{}",
                r.checkpoint,
                r.train_loss,
                r.dev_perplexity,
                r.lr,
                if r.improved { "  *" } else { "" }
            );
        }
        Ok(())
    }
}

pub fn build_vocabs(train: &Split, min_freq: usize) -> Result<(Vocab, Vocab)> {
    let src = Vocab::build(
        train.graphs.iter().map(|g| g.nodes().iter().map(|n| n.label.as_str())),
        min_freq,
    )?;
    let tgt = Vocab::build(train.targets.iter().map(|t| t.iter().map(String::as_str)), min_freq)?;
    Ok((src, tgt))
}

/// Trains from preprocessed splits, writing vocabularies, one checkpoint
/// per epoch, the best marker and `metrics.jsonl` into `output`.
pub fn run_train(opts: &TrainOptions) -> Result<TrainSummary> {
    let cfg = &opts.config;
    let train_split = load_split(&opts.train)?;
    let dev_split = load_split(&opts.dev)?;
    let (src, tgt) = build_vocabs(&train_split, cfg.min_freq)?;
    let train_set = instances(&train_split, &src, &tgt)?;
    let dev_set = instances(&dev_split, &src, &tgt)?;

    fs::create_dir_all(&opts.output).with_context(|| format!("creating {}", opts.output.display()))?;
    write_vocab(&opts.output.join(SRC_VOCAB), &src)?;
    write_vocab(&opts.output.join(TGT_VOCAB), &tgt)?;
    let metrics = opts.output.join(METRICS);
    if metrics.exists() {
        fs::remove_file(&metrics)?;
    }
    let model_config = ModelConfig {
        encoder: cfg.encoder.clone(),
        decoder: cfg.decoder.clone(),
        src_vocab: src.len(),
        tgt_vocab: tgt.len(),
    };
    let mut model: Model<f32> =
        Model::new(model_config.clone(), cfg.seed).map_err(|e| Invalid(e.to_string()))?;
    let header = json!({
        "header": cfg.header(),
        "src_vocab": src.len(),
        "tgt_vocab": tgt.len(),
        "train_instances": train_set.len(),
        "dev_instances": dev_set.len(),
        "parameters": model.params().scalar_count(),
    });
    append_jsonl(&metrics, &header)?;
    if !opts.quiet {
        eprintln!("{}", serde_json::to_string_pretty(&header)?);
    }
    let mut hooks = Writer {
        dir: opts.output.clone(),
        start: Instant::now(),
        spec: ModelSpec::from(&model_config),
        src_hash: vocab_hash(&src),
        tgt_hash: vocab_hash(&tgt),
        seed: cfg.seed,
        quiet: opts.quiet,
    };
    let summary = train(&mut model, &train_set, &dev_set, &cfg.train, &mut hooks).map_err(|e| match e {
        TrainError::Config(m) => anyhow::Error::from(Invalid(m)),
        other => other.into(),
    })?;
    Ok(summary)
}
