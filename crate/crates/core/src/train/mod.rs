//! Vocabulary, bucketing, the learning-rate schedule and the training loop.

mod batching;
mod schedule;
mod synthetic;
mod vocab;

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use batching::{make_batches, BatchConfig, Batches};
pub use schedule::{Outcome, Schedule, ScheduleConfig, StopReason};
pub use synthetic::{synthetic_corpus, SyntheticPair};
pub use vocab::{Vocab, VocabError, BOS, EOS, PAD, SPECIALS, UNK};

use crate::model::{GraphInput, Model, ModelError, TargetBatch};
use crate::tensor::{clip_global_norm, Adam, AdamConfig, OptimError, Real};

/// One prepared training pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub graph: GraphInput,
    /// Target ids without `<s>` and `</s>`.
    pub target: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch: BatchConfig,
    pub schedule: ScheduleConfig,
    pub adam: AdamConfig,
    pub clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: BatchConfig::default(),
            schedule: ScheduleConfig::default(),
            adam: AdamConfig::default(),
            clip: 1.0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let s = &self.schedule;
        let b = &self.batch;
        let positive = [
            ("batch_size", b.batch_size > 0),
            ("bucket_size", b.bucket_size > 0),
            ("max_len", b.max_len > 0),
            ("lr", s.lr > 0.0 && s.lr.is_finite()),
            ("halve_patience", s.halve_patience > 0),
            ("stop_patience", s.stop_patience > 0),
            ("max_checkpoints", s.max_checkpoints > 0),
            ("clip", self.clip > 0.0),
        ];
        match positive.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(TrainError::Config(alloc::format!("{name} must be positive"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("no trainable instances")]
    EmptyTrainSet,
    #[error("no development instances")]
    EmptyDevSet,
    #[error(
        "non-finite training loss at checkpoint {checkpoint}, step {step}: loss {loss}, gradient norm {grad_norm}, batch {batch:?}"
    )]
    NonFinite {
        checkpoint: u32,
        step: u64,
        batch: Vec<usize>,
        loss: f64,
        grad_norm: f64,
    },
    #[error("{0}")]
    Hook(String),
}

/// Summed token negative log-likelihood.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Nll {
    pub sum: f64,
    pub tokens: usize,
}

impl Nll {
    pub fn add(self, other: Nll) -> Nll {
        Nll {
            sum: self.sum + other.sum,
            tokens: self.tokens + other.tokens,
        }
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.tokens as f64
    }

    pub fn perplexity(&self) -> f64 {
        libm::exp(self.mean())
    }
}

/// Evaluation-mode likelihood of one group of instances.
pub fn batch_nll<T: Real>(model: &Model<T>, group: &[&Instance]) -> Result<Nll, ModelError> {
    let graphs: Vec<&GraphInput> = group.iter().map(|i| &i.graph).collect();
    let seqs: Vec<&[u32]> = group.iter().map(|i| i.target.as_slice()).collect();
    let targets = TargetBatch::new(&seqs, BOS, EOS, PAD)?;
    let batch = model.graph_batch(&graphs)?;
    let mean = model.eval_loss(&batch, &targets)?.to_f64();
    let tokens = targets.token_count();
    Ok(Nll {
        sum: mean * tokens as f64,
        tokens,
    })
}

/// Fixed evaluation groups: consecutive chunks of `batch_size` instances.
pub fn eval_groups(data: &[Instance], batch_size: usize) -> Vec<Vec<&Instance>> {
    data.chunks(batch_size.max(1))
        .map(|c| c.iter().collect())
        .collect()
}

/// Teacher-forced likelihood of a corpus, without dropout.
pub fn corpus_nll<T: Real>(
    model: &Model<T>,
    data: &[Instance],
    batch_size: usize,
) -> Result<Nll, ModelError> {
    eval_groups(data, batch_size)
        .iter()
        .try_fold(Nll::default(), |acc, g| Ok(acc.add(batch_nll(model, g)?)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub checkpoint: u32,
    /// Mean token loss of the epoch's training batches, with dropout.
    pub train_loss: f64,
    pub dev_perplexity: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub improved: bool,
    pub halved: bool,
    pub steps: u64,
    pub stop: Option<StopReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub history: Vec<EpochRecord>,
    pub best_checkpoint: u32,
    pub best_dev_perplexity: f64,
    pub dropped: Vec<usize>,
}

/// Callbacks around the training loop. Every method has a default, so `()`
/// trains without side effects.
pub trait TrainHooks<T: Real> {
    /// Training instances skipped for exceeding the length limit.
    fn dropped(&mut self, _ids: &[usize], _max_len: usize) {}

    fn step(&mut self, _checkpoint: u32, _step: u64, _loss: f64, _grad_norm: f64) {}

    /// Dev likelihood; override to evaluate the groups concurrently.
    fn dev_nll(
        &mut self,
        model: &Model<T>,
        dev: &[Instance],
        batch_size: usize,
    ) -> Result<Nll, ModelError> {
        corpus_nll(model, dev, batch_size)
    }

    /// Called once per epoch after the schedule has been updated.
    fn checkpoint(
        &mut self,
        _model: &Model<T>,
        _optimizer: &Adam<T>,
        _record: &EpochRecord,
    ) -> Result<(), TrainError> {
        Ok(())
    }
}

impl<T: Real> TrainHooks<T> for () {}

/// Runs epochs until the schedule stops, checkpointing after each one.
pub fn train<T: Real, H: TrainHooks<T> + ?Sized>(
    model: &mut Model<T>,
    train_set: &[Instance],
    dev_set: &[Instance],
    cfg: &TrainConfig,
    hooks: &mut H,
) -> Result<TrainSummary, TrainError> {
    cfg.validate()?;
    if dev_set.is_empty() {
        return Err(TrainError::EmptyDevSet);
    }
    let sizes: Vec<(usize, usize)> = train_set
        .iter()
        .map(|i| (i.graph.node_count(), i.target.len()))
        .collect();
    let mut adam = Adam::new(cfg.adam, model.params());
    let mut schedule = Schedule::new(cfg.schedule);
    let mut dropout = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5DEE_CE66_D1CE_4E5B);
    let mut history = Vec::new();
    let mut dropped = Vec::new();
    for epoch in 0.. {
        let checkpoint = schedule.checkpoints() + 1;
        let plan = make_batches(&sizes, &cfg.batch, cfg.seed, epoch);
        if epoch == 0 {
            if plan.batches.is_empty() {
                return Err(TrainError::EmptyTrainSet);
            }
            if !plan.dropped.is_empty() {
                hooks.dropped(&plan.dropped, cfg.batch.max_len);
            }
            dropped = plan.dropped.clone();
        }
        let lr = schedule.lr();
        let mut epoch_nll = Nll::default();
        for ids in &plan.batches {
            let graphs: Vec<&GraphInput> = ids.iter().map(|&i| &train_set[i].graph).collect();
            let seqs: Vec<&[u32]> = ids.iter().map(|&i| train_set[i].target.as_slice()).collect();
            let targets = TargetBatch::new(&seqs, BOS, EOS, PAD)?;
            let graphs = model.graph_batch(&graphs)?;
            let (loss, mut grads) = model.loss_and_grads(&graphs, &targets, Some(&mut dropout))?;
            let loss = loss.to_f64();
            let grad_norm = clip_global_norm(&mut grads, cfg.clip);
            if !loss.is_finite() || !grad_norm.is_finite() {
                return Err(TrainError::NonFinite {
                    checkpoint,
                    step: adam.steps() + 1,
                    batch: ids.clone(),
                    loss,
                    grad_norm,
                });
            }
            adam.step(model.params_mut(), &grads, lr)?;
            hooks.step(checkpoint, adam.steps(), loss, grad_norm);
            let tokens = targets.token_count();
            epoch_nll = epoch_nll.add(Nll {
                sum: loss * tokens as f64,
                tokens,
            });
        }
        let dev_perplexity = hooks.dev_nll(model, dev_set, cfg.batch.batch_size)?.perplexity();
        let outcome = schedule.observe(dev_perplexity);
        let record = EpochRecord {
            checkpoint,
            train_loss: epoch_nll.mean(),
            dev_perplexity,
            lr,
            improved: outcome.improved,
            halved: outcome.halved,
            steps: adam.steps(),
            stop: outcome.stop,
        };
        hooks.checkpoint(model, &adam, &record)?;
        history.push(record);
        if outcome.stop.is_some() {
            break;
        }
    }
    Ok(TrainSummary {
        history,
        best_checkpoint: schedule.best_checkpoint(),
        best_dev_perplexity: schedule.best().unwrap_or(f64::INFINITY),
        dropped,
    })
}
