use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::encoder::GraphBatch;
use super::ModelError;
use crate::tensor::{ParamId, Real, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub embed: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            layers: 2,
            hidden: 512,
            embed: 512,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers == 0 || self.hidden == 0 || self.embed == 0 {
            return Err(ModelError::Config(format!("degenerate decoder {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Input projection, gates laid out as `[i, f, o, g]`.
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub emb: ParamId,
    pub lstm: Vec<LstmParams>,
    /// Projects the mean encoder state to every layer's `[h, c]`.
    pub w_init: ParamId,
    /// Bilinear attention matrix.
    pub w_a: ParamId,
    pub w_o: ParamId,
    pub w_v: ParamId,
    pub b_v: ParamId,
}

pub(super) fn decoder_layout(
    cfg: &DecoderConfig,
    enc_hidden: usize,
    vocab: usize,
    out: &mut Vec<(String, usize, usize)>,
) {
    let h = cfg.hidden;
    out.push(("dec.emb".into(), vocab, cfg.embed));
    for l in 0..cfg.layers {
        let input = if l == 0 { cfg.embed } else { h };
        out.push((format!("dec.lstm{l}.w_x"), input, 4 * h));
        out.push((format!("dec.lstm{l}.w_h"), h, 4 * h));
        out.push((format!("dec.lstm{l}.b"), 1, 4 * h));
    }
    out.push(("dec.w_init".into(), enc_hidden, 2 * cfg.layers * h));
    out.push(("dec.w_a".into(), h, enc_hidden));
    out.push(("dec.w_o".into(), h + enc_hidden, h));
    out.push(("dec.w_v".into(), h, vocab));
    out.push(("dec.b_v".into(), 1, vocab));
}

pub(super) fn decoder_params(cfg: &DecoderConfig, next: &mut usize) -> DecoderParams {
    let mut take = || {
        *next += 1;
        ParamId(*next - 1)
    };
    let emb = take();
    let lstm = (0..cfg.layers)
        .map(|_| LstmParams {
            w_x: take(),
            w_h: take(),
            b: take(),
        })
        .collect();
    DecoderParams {
        emb,
        lstm,
        w_init: take(),
        w_a: take(),
        w_o: take(),
        w_v: take(),
        b_v: take(),
    }
}

/// Encoder states arranged as equal-width segments, one per graph, with a
/// validity mask over rows.
#[derive(Debug, Clone)]
pub struct Memory {
    pub states: Var,
    pub mask: Vec<bool>,
    pub width: usize,
}

impl Memory {
    pub fn segments(&self) -> usize {
        self.mask.len() / self.width.max(1)
    }

    /// Attention mask for decoder rows reading `segments`.
    fn row_mask(&self, segments: &[u32]) -> Vec<bool> {
        let w = self.width;
        segments
            .iter()
            .flat_map(|&s| {
                self.mask[s as usize * w..(s as usize + 1) * w]
                    .iter()
                    .copied()
            })
            .collect()
    }
}

/// Pads the union-encoded states of `batch` to `graphs x max_nodes` rows.
pub fn padded_memory<'p, T: Real>(
    tape: &mut Tape<'p, T>,
    states: Var,
    batch: &GraphBatch,
) -> Result<Memory, ModelError> {
    let width = batch.max_nodes();
    let mut layout = Vec::with_capacity(batch.graph_count() * width);
    let mut mask = Vec::with_capacity(batch.graph_count() * width);
    for (&offset, &n) in batch.offsets().iter().zip(batch.sizes()) {
        for j in 0..width {
            layout.push((j < n).then_some((offset + j) as u32));
            mask.push(j < n);
        }
    }
    let states = tape.gather_rows(states, layout)?;
    Ok(Memory {
        states,
        mask,
        width,
    })
}

/// Per-layer recurrent state; every matrix has one row per decoded
/// sequence.
#[derive(Debug, Clone)]
pub struct DecoderState {
    pub h: Vec<Var>,
    pub c: Vec<Var>,
}

/// `tanh(mean · W_init)` over the unmasked rows of each memory segment.
pub fn init_state<'p, T: Real>(
    tape: &mut Tape<'p, T>,
    vars: &[Var],
    p: &DecoderParams,
    cfg: &DecoderConfig,
    memory: &Memory,
) -> Result<DecoderState, ModelError> {
    let segments = memory.segments();
    let w = memory.width;
    let mut factors = Vec::with_capacity(memory.mask.len());
    for s in 0..segments {
        let rows = &memory.mask[s * w..(s + 1) * w];
        let count = rows.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(ModelError::EmptyGraph);
        }
        let scale = T::from_f64(1.0 / count as f64);
        factors.extend(rows.iter().map(|&m| if m { scale } else { T::ZERO }));
    }
    let scaled = tape.scale_rows(memory.states, factors)?;
    let owner = (0..segments as u32)
        .flat_map(|s| core::iter::repeat_n(s, w))
        .collect();
    let mean = tape.scatter_rows(scaled, owner, segments)?;
    let proj = tape.matmul(mean, vars[p.w_init.0])?;
    let proj = tape.tanh(proj)?;
    let h = cfg.hidden;
    let mut state = DecoderState {
        h: Vec::with_capacity(cfg.layers),
        c: Vec::with_capacity(cfg.layers),
    };
    for l in 0..cfg.layers {
        state.h.push(tape.slice_cols(proj, 2 * l * h, h)?);
        state.c.push(tape.slice_cols(proj, (2 * l + 1) * h, h)?);
    }
    Ok(state)
}

/// Bilinear attention of each query row over its memory segment. Returns
/// the context vectors and the attention weights.
pub fn attention<'p, T: Real>(
    tape: &mut Tape<'p, T>,
    vars: &[Var],
    p: &DecoderParams,
    query: Var,
    memory: &Memory,
    segments: &[u32],
) -> Result<(Var, Var), ModelError> {
    let q = tape.matmul(query, vars[p.w_a.0])?;
    let scores = tape.segment_dot(q, memory.states, segments.to_vec(), memory.width)?;
    let weights = tape.masked_softmax(scores, &memory.row_mask(segments))?;
    let context = tape.segment_weighted_sum(weights, memory.states, segments.to_vec())?;
    Ok((context, weights))
}

fn lstm_cell<'p, T: Real>(
    tape: &mut Tape<'p, T>,
    vars: &[Var],
    p: &LstmParams,
    hidden: usize,
    input_proj: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var), ModelError> {
    let rec = tape.matmul(h, vars[p.w_h.0])?;
    let gates = tape.add(input_proj, rec)?;
    let gates = tape.add_row(gates, vars[p.b.0])?;
    let sig = tape.slice_cols(gates, 0, 3 * hidden)?;
    let sig = tape.sigmoid(sig)?;
    let i = tape.slice_cols(sig, 0, hidden)?;
    let f = tape.slice_cols(sig, hidden, hidden)?;
    let o = tape.slice_cols(sig, 2 * hidden, hidden)?;
    let g = tape.slice_cols(gates, 3 * hidden, hidden)?;
    let g = tape.tanh(g)?;
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Result of one decoder step.
pub struct Step {
    pub logits: Var,
    pub state: DecoderState,
    pub attention: Var,
    /// Combined output `tanh([h; context] · W_o)` before the vocabulary
    /// projection.
    pub output: Var,
}

fn step_from_projection<'p, T: Real>(
    tape: &mut Tape<'p, T>,
    vars: &[Var],
    p: &DecoderParams,
    cfg: &DecoderConfig,
    state: &DecoderState,
    first_proj: Var,
    memory: &Memory,
    segments: &[u32],
) -> Result<(Var, DecoderState, Var), ModelError> {
    let mut next = DecoderState {
        h: Vec::with_capacity(cfg.layers),
        c: Vec::with_capacity(cfg.layers),
    };
    let mut proj = first_proj;
    for (l, lp) in p.lstm.iter().enumerate() {
        if l > 0 {
            proj = tape.matmul(next.h[l - 1], vars[lp.w_x.0])?;
        }
        let (h, c) = lstm_cell(tape, vars, lp, cfg.hidden, proj, state.h[l], state.c[l])?;
        next.h.push(h);
        next.c.push(c);
    }
    let top = next.h[cfg.layers - 1];
    let (context, weights) = attention(tape, vars, p, top, memory, segments)?;
    let joined = tape.concat_cols(&[top, context])?;
    let output = tape.matmul(joined, vars[p.w_o.0])?;
    let output = tape.tanh(output)?;
    Ok((output, next, weights))
}

fn check_tokens(tokens: &[u32], vocab: usize) -> Result<(), ModelError> {
    match tokens.iter().find(|&&t| t as usize >= vocab) {
        Some(&token) => Err(ModelError::TokenOutOfRange { token, vocab }),
        None => Ok(()),
    }
}

/// Feeds `prev` (one token per row) through the decoder. Row `i` attends
/// over memory segment `segments[i]`.
#[allow(clippy::too_many_arguments)]
pub fn decode_step<'p, T: Real>(
    tape: &mut Tape<'p, T>,
    vars: &[Var],
    p: &DecoderParams,
    cfg: &DecoderConfig,
    state: &DecoderState,
    prev: &[u32],
    memory: &Memory,
    segments: &[u32],
) -> Result<Step, ModelError> {
    let vocab = tape.shape(vars[p.emb.0]).0;
    check_tokens(prev, vocab)?;
    let x = tape.embedding(vars[p.emb.0], prev)?;
    let proj = tape.matmul(x, vars[p.lstm[0].w_x.0])?;
    let (output, state, attention) =
        step_from_projection(tape, vars, p, cfg, state, proj, memory, segments)?;
    let logits = tape.matmul(output, vars[p.w_v.0])?;
    let logits = tape.add_row(logits, vars[p.b_v.0])?;
    Ok(Step {
        logits,
        state,
        attention,
        output,
    })
}

/// Teacher-forcing inputs and outputs for a batch of target sequences,
/// stored time-major (`row = step * size + sequence`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetBatch {
    pub inputs: Vec<u32>,
    pub targets: Vec<u32>,
    pub mask: Vec<bool>,
    pub steps: usize,
    pub size: usize,
}

impl TargetBatch {
    /// Wraps each sequence as `bos y1..yn` (inputs) and `y1..yn eos`
    /// (targets), padding to the longest.
    pub fn new(seqs: &[&[u32]], bos: u32, eos: u32, pad: u32) -> Result<Self, ModelError> {
        if seqs.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        if seqs.iter().any(|s| s.is_empty()) {
            return Err(ModelError::EmptyTarget);
        }
        let size = seqs.len();
        let steps = seqs.iter().map(|s| s.len() + 1).max().unwrap_or(0);
        let mut batch = TargetBatch {
            inputs: vec![pad; steps * size],
            targets: vec![pad; steps * size],
            mask: vec![false; steps * size],
            steps,
            size,
        };
        for (b, seq) in seqs.iter().enumerate() {
            for t in 0..=seq.len() {
                let row = t * size + b;
                batch.inputs[row] = if t == 0 { bos } else { seq[t - 1] };
                batch.targets[row] = if t == seq.len() { eos } else { seq[t] };
                batch.mask[row] = true;
            }
        }
        Ok(batch)
    }

    /// Number of predicted (unmasked) tokens.
    pub fn token_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Teacher-forced decoding of `targets` against `memory` (segment `i` for
/// sequence `i`); returns the mean cross-entropy over unmasked tokens.
pub fn sequence_loss<'p, T: Real>(
    tape: &mut Tape<'p, T>,
    vars: &[Var],
    p: &DecoderParams,
    cfg: &DecoderConfig,
    memory: &Memory,
    targets: &TargetBatch,
) -> Result<Var, ModelError> {
    let b = targets.size;
    if memory.segments() != b {
        return Err(ModelError::Config(format!(
            "{} target sequences for {} graphs",
            b,
            memory.segments()
        )));
    }
    let vocab = tape.shape(vars[p.emb.0]).0;
    check_tokens(&targets.inputs, vocab)?;
    let segments: Vec<u32> = (0..b as u32).collect();
    let mut state = init_state(tape, vars, p, cfg, memory)?;
    let x = tape.embedding(vars[p.emb.0], &targets.inputs)?;
    let proj_all = tape.matmul(x, vars[p.lstm[0].w_x.0])?;
    let mut outputs = Vec::with_capacity(targets.steps);
    for t in 0..targets.steps {
        let proj = tape.slice_rows(proj_all, t * b, b)?;
        let (output, next, _) =
            step_from_projection(tape, vars, p, cfg, &state, proj, memory, &segments)?;
        outputs.push(output);
        state = next;
    }
    let outputs = tape.concat_rows(&outputs)?;
    let logits = tape.matmul(outputs, vars[p.w_v.0])?;
    let logits = tape.add_row(logits, vars[p.b_v.0])?;
    Ok(tape.cross_entropy(logits, targets.targets.clone(), targets.mask.clone())?)
}
