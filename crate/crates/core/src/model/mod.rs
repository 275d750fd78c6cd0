//! Gated graph encoder and two-layer attentional LSTM decoder.

mod check;
mod decoder;
mod encoder;

use alloc::borrow::Cow;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use check::{check_encoder, check_full_model, micro_config, micro_instance};
pub use decoder::{
    attention, decode_step, init_state, padded_memory, sequence_loss, DecoderConfig, DecoderParams,
    DecoderState, LstmParams, Memory, Step, TargetBatch,
};
pub use encoder::{
    embed_nodes, encode, encode_layers, ggnn_layer, ggnn_param_count, EncoderConfig, EncoderParams,
    GraphBatch, GraphInput, Propagation, TagParams, BASE_TAGS,
};

use crate::graph::EdgeTag;
use crate::tensor::{xavier_uniform, ParamStore, Real, Tape, TensorError, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(
        "node {node} of graph {graph} has no incoming edges; augment the graph before encoding"
    )]
    IsolatedNode { graph: usize, node: usize },
    #[error("graph has no positions; compute positions before encoding")]
    MissingPositions,
    #[error("edge tag {0} is not in the configured tag set")]
    UnknownTag(EdgeTag),
    #[error("token id {token} outside vocabulary of {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("empty graph")]
    EmptyGraph,
    #[error("empty target sequence")]
    EmptyTarget,
    #[error("empty batch")]
    EmptyBatch,
    #[error("parameter mismatch: {0}")]
    Params(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        if self.src_vocab == 0 || self.tgt_vocab == 0 {
            return Err(ModelError::Config("empty vocabulary".into()));
        }
        Ok(())
    }

    /// Name and shape of every parameter, in storage order.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        encoder::encoder_layout(&self.encoder, self.src_vocab, &mut out);
        decoder::decoder_layout(&self.decoder, self.encoder.hidden, self.tgt_vocab, &mut out);
        out
    }
}

/// Encoder states of one graph, detached from any tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded<T> {
    pub states: Vec<T>,
    pub nodes: usize,
}

/// Detached decoder state: per layer, `rows x hidden` values.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState<T> {
    pub h: Vec<Vec<T>>,
    pub c: Vec<Vec<T>>,
    pub rows: usize,
}

impl<T: Real> RecurrentState<T> {
    /// Keeps the listed rows, in order, possibly repeating.
    pub fn select(&self, rows: &[usize]) -> Self {
        let pick = |m: &Vec<T>| {
            let w = m.len() / self.rows.max(1);
            rows.iter()
                .flat_map(|&r| m[r * w..(r + 1) * w].iter().copied())
                .collect()
        };
        RecurrentState {
            h: self.h.iter().map(pick).collect(),
            c: self.c.iter().map(pick).collect(),
            rows: rows.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T> {
    /// `rows x vocab` unnormalised scores.
    pub logits: Vec<T>,
    pub state: RecurrentState<T>,
    /// `rows x nodes` attention weights.
    pub attention: Vec<T>,
}

/// Parameters plus the id layout shared by encoder and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    enc: EncoderParams,
    dec: DecoderParams,
}

fn ids(config: &ModelConfig) -> (EncoderParams, DecoderParams) {
    let mut next = 0;
    let enc = encoder::encoder_params(&config.encoder, &mut next);
    let dec = decoder::decoder_params(&config.decoder, &mut next);
    (enc, dec)
}

impl<T: Real> Model<T> {
    /// Xavier-initialised model; single-row parameters (biases) start at
    /// zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_init(config, |_, rows, cols| xavier_uniform(rows, cols, &mut rng))
    }

    /// Model whose parameters come from `init(name, rows, cols)`.
    pub fn with_init(
        config: ModelConfig,
        mut init: impl FnMut(&str, usize, usize) -> Vec<T>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamStore::new();
        for (name, rows, cols) in config.layout() {
            let values = init(&name, rows, cols);
            if values.len() != rows * cols {
                return Err(ModelError::Params(format!(
                    "{name} initialiser returned {} values",
                    values.len()
                )));
            }
            params.add(name, rows, cols, values);
        }
        let (enc, dec) = ids(&config);
        Ok(Model {
            config,
            params,
            enc,
            dec,
        })
    }

    /// Adopts a parameter store (for example one loaded from disk) after
    /// checking names and shapes against the configuration.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != params.len() {
            return Err(ModelError::Params(format!(
                "expected {} parameters, found {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, rows, cols), p) in layout.iter().zip(params.iter()) {
            if *name != p.name || (*rows, *cols) != (p.rows, p.cols) {
                return Err(ModelError::Params(format!(
                    "expected {name} {rows}x{cols}, found {} {}x{}",
                    p.name, p.rows, p.cols
                )));
            }
        }
        let (enc, dec) = ids(&config);
        Ok(Model {
            config,
            params,
            enc,
            dec,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    pub fn encoder_params(&self) -> &EncoderParams {
        &self.enc
    }

    pub fn decoder_params(&self) -> &DecoderParams {
        &self.dec
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            enc: self.enc.clone(),
            dec: self.dec.clone(),
        }
    }

    pub fn graph_batch(&self, graphs: &[&GraphInput]) -> Result<GraphBatch, ModelError> {
        GraphBatch::new(graphs, &self.config.encoder, self.config.src_vocab)
    }

    /// Mean token cross-entropy of a batch; `rng` enables dropout.
    pub fn loss<'p, R: RngCore + ?Sized>(
        &self,
        tape: &mut Tape<'p, T>,
        vars: &[Var],
        graphs: &GraphBatch,
        targets: &TargetBatch,
        rng: Option<&mut R>,
    ) -> Result<Var, ModelError> {
        let states = encode(tape, vars, &self.enc, &self.config.encoder, graphs, rng)?;
        let memory = padded_memory(tape, states, graphs)?;
        sequence_loss(
            tape,
            vars,
            &self.dec,
            &self.config.decoder,
            &memory,
            targets,
        )
    }

    /// Loss value and dense parameter gradients for one batch.
    pub fn loss_and_grads<R: RngCore + ?Sized>(
        &self,
        graphs: &GraphBatch,
        targets: &TargetBatch,
        rng: Option<&mut R>,
    ) -> Result<(T, Vec<Vec<T>>), ModelError> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, true)?;
        let loss = self.loss(&mut tape, &vars, graphs, targets, rng)?;
        let value = tape.value(loss)[0];
        let grads = self.params.collect_grads(&vars, tape.backward(loss)?);
        Ok((value, grads))
    }

    /// Loss in evaluation mode, without gradients.
    pub fn eval_loss(&self, graphs: &GraphBatch, targets: &TargetBatch) -> Result<T, ModelError> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false)?;
        let loss = self.loss::<ChaCha8Rng>(&mut tape, &vars, graphs, targets, None)?;
        Ok(tape.value(loss)[0])
    }

    /// Evaluation-mode encoding of a single graph.
    pub fn encode_graph(&self, graph: &GraphInput) -> Result<Encoded<T>, ModelError> {
        let batch = self.graph_batch(&[graph])?;
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false)?;
        let h = encode::<T, ChaCha8Rng>(
            &mut tape,
            &vars,
            &self.enc,
            &self.config.encoder,
            &batch,
            None,
        )?;
        Ok(Encoded {
            states: tape.value(h).to_vec(),
            nodes: graph.node_count(),
        })
    }

    fn memory<'p>(
        &self,
        tape: &mut Tape<'p, T>,
        enc: &'p Encoded<T>,
    ) -> Result<Memory, ModelError> {
        let states = tape.leaf(
            Cow::Borrowed(enc.states.as_slice()),
            enc.nodes,
            self.config.encoder.hidden,
            false,
        )?;
        Ok(Memory {
            states,
            mask: vec![true; enc.nodes],
            width: enc.nodes,
        })
    }

    fn detach(tape: &Tape<'_, T>, state: &DecoderState, rows: usize) -> RecurrentState<T> {
        RecurrentState {
            h: state.h.iter().map(|&v| tape.value(v).to_vec()).collect(),
            c: state.c.iter().map(|&v| tape.value(v).to_vec()).collect(),
            rows,
        }
    }

    /// Decoder state before the first token (one row).
    pub fn start(&self, enc: &Encoded<T>) -> Result<RecurrentState<T>, ModelError> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false)?;
        let memory = self.memory(&mut tape, enc)?;
        let state = init_state(&mut tape, &vars, &self.dec, &self.config.decoder, &memory)?;
        Ok(Self::detach(&tape, &state, 1))
    }

    /// One decoder step for every row of `state`, all rows attending over
    /// the same encoded graph.
    pub fn step(
        &self,
        enc: &Encoded<T>,
        state: &RecurrentState<T>,
        prev: &[u32],
    ) -> Result<StepOutput<T>, ModelError> {
        if prev.len() != state.rows {
            return Err(ModelError::Config(format!(
                "{} previous tokens for {} states",
                prev.len(),
                state.rows
            )));
        }
        let hidden = self.config.decoder.hidden;
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false)?;
        let memory = self.memory(&mut tape, enc)?;
        let mut ds = DecoderState {
            h: Vec::new(),
            c: Vec::new(),
        };
        for (h, c) in state.h.iter().zip(&state.c) {
            ds.h.push(tape.leaf(Cow::Borrowed(h.as_slice()), state.rows, hidden, false)?);
            ds.c.push(tape.leaf(Cow::Borrowed(c.as_slice()), state.rows, hidden, false)?);
        }
        let segments = vec![0; state.rows];
        let step = decode_step(
            &mut tape,
            &vars,
            &self.dec,
            &self.config.decoder,
            &ds,
            prev,
            &memory,
            &segments,
        )?;
        Ok(StepOutput {
            logits: tape.value(step.logits).to_vec(),
            state: Self::detach(&tape, &step.state, state.rows),
            attention: tape.value(step.attention).to_vec(),
        })
    }
}
