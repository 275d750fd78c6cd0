//! Beam search, ensembles and `<unk>` replacement.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::model::{Encoded, GraphInput, Model, ModelError, RecurrentState};
use crate::tensor::{log_softmax_rows, Real};

/// Log-probabilities, attention and successor state for a batch of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored<S> {
    /// `rows × vocab`.
    pub log_probs: Vec<f64>,
    /// `rows × nodes`.
    pub attention: Vec<f64>,
    pub state: S,
}

/// Anything that scores next tokens given a decoder state.
pub trait Scorer {
    type State;

    fn vocab_size(&self) -> usize;

    /// Attention width (source node count).
    fn nodes(&self) -> usize;

    /// Single-row state before the first token.
    fn start(&self) -> Result<Self::State, ModelError>;

    fn step(&self, state: &Self::State, prev: &[u32]) -> Result<Scored<Self::State>, ModelError>;

    /// State made of the given rows, in order (rows may repeat).
    fn select(&self, state: &Self::State, rows: &[usize]) -> Self::State;
}

/// A model bound to one encoded graph.
pub struct ModelScorer<'m, T> {
    model: &'m Model<T>,
    encoded: Encoded<T>,
}

impl<'m, T: Real> ModelScorer<'m, T> {
    pub fn new(model: &'m Model<T>, graph: &GraphInput) -> Result<Self, ModelError> {
        Ok(ModelScorer {
            model,
            encoded: model.encode_graph(graph)?,
        })
    }
}

impl<T: Real> Scorer for ModelScorer<'_, T> {
    type State = RecurrentState<T>;

    fn vocab_size(&self) -> usize {
        self.model.config().tgt_vocab
    }

    fn nodes(&self) -> usize {
        self.encoded.nodes
    }

    fn start(&self) -> Result<Self::State, ModelError> {
        self.model.start(&self.encoded)
    }

    fn step(&self, state: &Self::State, prev: &[u32]) -> Result<Scored<Self::State>, ModelError> {
        let out = self.model.step(&self.encoded, state, prev)?;
        let vocab = self.vocab_size();
        let mut log_probs = log_softmax_rows(&out.logits, vocab);
        // Padding and the start token are never valid outputs.
        for row in log_probs.chunks_mut(vocab) {
            for &t in &[crate::train::PAD, crate::train::BOS] {
                if let Some(lp) = row.get_mut(t as usize) {
                    *lp = f64::NEG_INFINITY;
                }
            }
        }
        Ok(Scored {
            log_probs,
            attention: out.attention.iter().map(|a| a.to_f64()).collect(),
            state: out.state,
        })
    }

    fn select(&self, state: &Self::State, rows: &[usize]) -> Self::State {
        state.select(rows)
    }
}

/// Averages member log-probabilities and attention at every step.
pub struct Ensemble<S> {
    members: Vec<S>,
}

impl<S: Scorer> Ensemble<S> {
    pub fn new(members: Vec<S>) -> Result<Self, ModelError> {
        let first = members
            .first()
            .ok_or_else(|| ModelError::Config("empty ensemble".into()))?;
        let (vocab, nodes) = (first.vocab_size(), first.nodes());
        for (i, m) in members.iter().enumerate() {
            if m.vocab_size() != vocab {
                return Err(ModelError::Config(alloc::format!(
                    "ensemble member {i} has target vocabulary {} instead of {vocab}",
                    m.vocab_size()
                )));
            }
            if m.nodes() != nodes {
                return Err(ModelError::Config(alloc::format!(
                    "ensemble member {i} encodes {} nodes instead of {nodes}",
                    m.nodes()
                )));
            }
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[S] {
        &self.members
    }
}

impl<S: Scorer> Scorer for Ensemble<S> {
    type State = Vec<S::State>;

    fn vocab_size(&self) -> usize {
        self.members[0].vocab_size()
    }

    fn nodes(&self) -> usize {
        self.members[0].nodes()
    }

    fn start(&self) -> Result<Self::State, ModelError> {
        self.members.iter().map(Scorer::start).collect()
    }

    fn step(&self, state: &Self::State, prev: &[u32]) -> Result<Scored<Self::State>, ModelError> {
        let k = self.members.len() as f64;
        let mut log_probs = vec![0.0; prev.len() * self.vocab_size()];
        let mut attention = vec![0.0; prev.len() * self.nodes()];
        let mut states = Vec::with_capacity(self.members.len());
        for (m, s) in self.members.iter().zip(state) {
            let out = m.step(s, prev)?;
            for (acc, x) in log_probs.iter_mut().zip(&out.log_probs) {
                *acc += x;
            }
            for (acc, x) in attention.iter_mut().zip(&out.attention) {
                *acc += x;
            }
            states.push(out.state);
        }
        log_probs.iter_mut().for_each(|x| *x /= k);
        attention.iter_mut().for_each(|x| *x /= k);
        Ok(Scored {
            log_probs,
            attention,
            state: states,
        })
    }

    fn select(&self, state: &Self::State, rows: &[usize]) -> Self::State {
        self.members
            .iter()
            .zip(state)
            .map(|(m, s)| m.select(s, rows))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    pub beam: usize,
    pub max_len: usize,
    pub bos: u32,
    /// Ending token; an id outside the vocabulary disables finishing.
    pub eos: u32,
}

impl SearchConfig {
    pub fn new(beam: usize, max_len: usize) -> Self {
        SearchConfig {
            beam,
            max_len,
            bos: crate::train::BOS,
            eos: crate::train::EOS,
        }
    }
}

/// Default decoding length limit for a graph of `nodes` nodes.
pub fn default_max_len(nodes: usize) -> usize {
    (2 * nodes + 10).min(200)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Emitted tokens, including the final end token when finished.
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    /// One attention vector per emitted token.
    pub attention: Vec<Vec<f64>>,
    pub finished: bool,
}

impl Hypothesis {
    /// Log-probability per emitted token.
    pub fn score(&self) -> f64 {
        if self.tokens.is_empty() {
            0.0
        } else {
            self.log_prob / self.tokens.len() as f64
        }
    }

    /// Tokens without the end token.
    pub fn output(&self) -> &[u32] {
        match (self.finished, self.tokens.split_last()) {
            (true, Some((_, rest))) => rest,
            _ => &self.tokens,
        }
    }
}

/// Higher score first; ties go to the lexicographically smaller sequence.
fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score()
        .total_cmp(&a.score())
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Beam search returning the best hypothesis. Live hypotheses are expanded
/// by every token; the best `beam - finished` candidates by accumulated
/// log-probability survive, with ties broken by lower token id and then
/// lower parent index. Candidates ending in `eos` are set aside. The result
/// is the finished hypothesis with the best length-normalised score, or the
/// best unfinished one (`finished == false`) when none finished within
/// `max_len` tokens.
pub fn beam_search<S: Scorer>(scorer: &S, cfg: &SearchConfig) -> Result<Hypothesis, ModelError> {
    if cfg.beam == 0 {
        return Err(ModelError::Config("beam size must be positive".into()));
    }
    let vocab = scorer.vocab_size();
    let nodes = scorer.nodes();
    let mut state = scorer.start()?;
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        attention: Vec::new(),
        finished: false,
    }];
    let mut done: Vec<Hypothesis> = Vec::new();
    for _ in 0..cfg.max_len {
        let prev: Vec<u32> = live
            .iter()
            .map(|h| h.tokens.last().copied().unwrap_or(cfg.bos))
            .collect();
        let out = scorer.step(&state, &prev)?;
        let mut cands: Vec<(f64, u32, usize)> = Vec::with_capacity(live.len() * vocab);
        for (i, h) in live.iter().enumerate() {
            let row = &out.log_probs[i * vocab..(i + 1) * vocab];
            cands.extend(row.iter().enumerate().map(|(w, lp)| (h.log_prob + lp, w as u32, i)));
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(cfg.beam - done.len());
        let mut next = Vec::new();
        let mut rows = Vec::new();
        for (log_prob, w, i) in cands {
            let parent = &live[i];
            let mut tokens = parent.tokens.clone();
            tokens.push(w);
            let mut attention = parent.attention.clone();
            attention.push(out.attention[i * nodes..(i + 1) * nodes].to_vec());
            let finished = w == cfg.eos;
            let h = Hypothesis {
                tokens,
                log_prob,
                attention,
                finished,
            };
            if finished {
                done.push(h);
            } else {
                next.push(h);
                rows.push(i);
            }
        }
        if next.is_empty() {
            live = next;
            break;
        }
        state = scorer.select(&out.state, &rows);
        live = next;
    }
    let pool = if done.is_empty() { live } else { done };
    pool.into_iter()
        .min_by(rank)
        .ok_or_else(|| ModelError::Config("search produced no hypothesis".into()))
}

/// Stepwise argmax decoding (lowest token id on ties).
pub fn greedy_decode<S: Scorer>(scorer: &S, cfg: &SearchConfig) -> Result<Hypothesis, ModelError> {
    let vocab = scorer.vocab_size();
    let mut state = scorer.start()?;
    let mut h = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        attention: Vec::new(),
        finished: false,
    };
    while h.tokens.len() < cfg.max_len && !h.finished {
        let prev = h.tokens.last().copied().unwrap_or(cfg.bos);
        let out = scorer.step(&state, &[prev])?;
        let mut best = 0;
        for w in 1..vocab {
            if out.log_probs[w] > out.log_probs[best] {
                best = w;
            }
        }
        h.tokens.push(best as u32);
        h.log_prob += out.log_probs[best];
        h.attention.push(out.attention);
        h.finished = best as u32 == cfg.eos;
        state = out.state;
    }
    Ok(h)
}

/// Index of the largest weight, lowest index on ties.
pub fn argmax(weights: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &w) in weights.iter().enumerate() {
        if best.is_none_or(|b| w > weights[b]) {
            best = Some(i);
        }
    }
    best
}

/// Replaces every `unk` token with the label of the node that received the
/// most attention at that step.
pub fn replace_unk(
    tokens: &[String],
    attention: &[Vec<f64>],
    labels: &[String],
    unk: &str,
) -> Vec<String> {
    tokens
        .iter()
        .enumerate()
        .map(|(t, tok)| {
            let node = (tok == unk)
                .then(|| attention.get(t).and_then(|a| argmax(a)))
                .flatten();
            match node.and_then(|n| labels.get(n)) {
                Some(label) => label.clone(),
                None => tok.clone(),
            }
        })
        .collect()
}
