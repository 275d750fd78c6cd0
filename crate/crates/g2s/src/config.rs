//! Run configuration: task defaults, an optional TOML file, then flags.

use std::path::Path;

use anyhow::{Context, Result};
use g2s_core::metrics::EvalConfig;
use g2s_core::model::{DecoderConfig, EncoderConfig};
use g2s_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::Invalid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    AmrGen,
    Nmt,
    NmtPlus,
}

impl Task {
    pub fn encoder(self) -> EncoderConfig {
        match self {
            Task::AmrGen => EncoderConfig::amr(),
            Task::Nmt => EncoderConfig::nmt(),
            Task::NmtPlus => EncoderConfig::nmt_plus(),
        }
    }

    pub fn eval(self) -> EvalConfig {
        match self {
            Task::AmrGen => EvalConfig::amr(),
            Task::Nmt | Task::NmtPlus => EvalConfig::nmt(),
        }
    }

    pub fn is_amr(self) -> bool {
        self == Task::AmrGen
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::AmrGen => "amr-gen",
            Task::Nmt => "nmt",
            Task::NmtPlus => "nmt-plus",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: Option<usize>,
    pub bucket_size: Option<usize>,
    pub max_len: Option<usize>,
    pub lr: Option<f64>,
    pub halve_patience: Option<u32>,
    pub stop_patience: Option<u32>,
    pub max_checkpoints: Option<u32>,
    pub clip: Option<f64>,
    pub min_freq: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub position_dim: Option<usize>,
    pub dropout: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderSection {
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub embed: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub beam: Option<usize>,
    pub max_len: Option<usize>,
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub task: Option<Task>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub decoder: DecoderSection,
    #[serde(default)]
    pub search: SearchSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())).into())
    }
}

/// Settings given on the command line; they win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub task: Option<Task>,
    pub seed: Option<u64>,
    pub beam: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub train: TrainConfig,
    pub min_freq: usize,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub beam: usize,
    /// Decoding length limit; `None` means the per-graph default.
    pub max_len: Option<usize>,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn resolve(file: &FileConfig, flags: &Overrides) -> Result<Self> {
        let task = flags.task.or(file.task).unwrap_or_default();
        let seed = flags.seed.or(file.seed).unwrap_or(1);
        let mut train = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let t = &file.train;
        let set = |slot: &mut usize, v: Option<usize>| *slot = v.unwrap_or(*slot);
        set(&mut train.batch.batch_size, t.batch_size);
        set(&mut train.batch.bucket_size, t.bucket_size);
        set(&mut train.batch.max_len, t.max_len);
        train.schedule.lr = t.lr.unwrap_or(train.schedule.lr);
        train.schedule.halve_patience = t.halve_patience.unwrap_or(train.schedule.halve_patience);
        train.schedule.stop_patience = t.stop_patience.unwrap_or(train.schedule.stop_patience);
        train.schedule.max_checkpoints = t.max_checkpoints.unwrap_or(train.schedule.max_checkpoints);
        train.clip = t.clip.unwrap_or(train.clip);
        train.validate().map_err(|e| Invalid(e.to_string()))?;

        let mut encoder = task.encoder();
        let e = &file.encoder;
        set(&mut encoder.layers, e.layers);
        set(&mut encoder.hidden, e.hidden);
        set(&mut encoder.position_dim, e.position_dim);
        encoder.dropout = e.dropout.unwrap_or(encoder.dropout);
        encoder.validate().map_err(|e| Invalid(e.to_string()))?;

        let mut decoder = DecoderConfig::default();
        let d = &file.decoder;
        set(&mut decoder.layers, d.layers);
        set(&mut decoder.hidden, d.hidden);
        set(&mut decoder.embed, d.embed);
        decoder.validate().map_err(|e| Invalid(e.to_string()))?;

        let beam = flags.beam.or(file.search.beam).unwrap_or(5);
        if beam == 0 {
            return Err(Invalid("beam size must be positive".into()).into());
        }
        Ok(RunConfig {
            task,
            seed,
            train,
            min_freq: t.min_freq.unwrap_or(2),
            encoder,
            decoder,
            beam,
            max_len: file.search.max_len,
            eval: task.eval(),
        })
    }

    /// Every setting, for the run header.
    pub fn header(&self) -> serde_json::Value {
        let t = &self.train;
        serde_json::json!({
            "task": self.task.name(),
            "seed": self.seed,
            "train": {
                "batch_size": t.batch.batch_size,
                "bucket_size": t.batch.bucket_size,
                "max_len": t.batch.max_len,
                "lr": t.schedule.lr,
                "halve_patience": t.schedule.halve_patience,
                "stop_patience": t.schedule.stop_patience,
                "max_checkpoints": t.schedule.max_checkpoints,
                "clip": t.clip,
                "min_freq": self.min_freq,
                "adam": [t.adam.beta1, t.adam.beta2, t.adam.epsilon],
            },
            "encoder": {
                "layers": self.encoder.layers,
                "hidden": self.encoder.hidden,
                "position_dim": self.encoder.position_dim,
                "tags": self.encoder.tags.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
                "dropout": self.encoder.dropout,
            },
            "decoder": {
                "layers": self.decoder.layers,
                "hidden": self.decoder.hidden,
                "embed": self.decoder.embed,
            },
            "search": { "beam": self.beam, "max_len": self.max_len },
            "eval": {
                "case_sensitive": self.eval.case_sensitive,
                "bleu_order": self.eval.bleu_order,
                "char_order": self.eval.char_order,
                "word_order": self.eval.word_order,
                "beta": self.eval.beta,
            },
        })
    }
}
