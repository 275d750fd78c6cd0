//! Scorers driven by explicit next-token tables, plus brute-force search.

#![allow(dead_code)]

use g2s_core::model::ModelError;
use g2s_core::search::{Scored, Scorer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Next-token probabilities as a function of the emitted prefix.
pub struct TableScorer<F> {
    pub vocab: usize,
    pub dist: F,
}

/// Per row: whether a token has been fed yet, and the prefix before it.
pub type Rows = Vec<(bool, Vec<u32>)>;

impl<F: Fn(&[u32]) -> Vec<f64>> Scorer for TableScorer<F> {
    type State = Rows;

    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn nodes(&self) -> usize {
        2
    }

    fn start(&self) -> Result<Self::State, ModelError> {
        Ok(vec![(false, Vec::new())])
    }

    fn step(&self, state: &Self::State, prev: &[u32]) -> Result<Scored<Self::State>, ModelError> {
        let mut log_probs = Vec::new();
        let mut attention = Vec::new();
        let mut next = Vec::new();
        for ((started, prefix), &p) in state.iter().zip(prev) {
            let mut prefix = prefix.clone();
            if *started {
                prefix.push(p);
            }
            let probs = (self.dist)(&prefix);
            assert_eq!(probs.len(), self.vocab);
            log_probs.extend(probs.iter().map(|x| x.ln()));
            let a = (prefix.len() % 3) as f64 / 2.0;
            attention.extend([a, 1.0 - a]);
            next.push((true, prefix));
        }
        Ok(Scored {
            log_probs,
            attention,
            state: next,
        })
    }

    fn select(&self, state: &Self::State, rows: &[usize]) -> Self::State {
        rows.iter().map(|&r| state[r].clone()).collect()
    }
}

/// Deterministic pseudo-random distribution for every prefix.
pub fn random_table(seed: u64, vocab: usize) -> impl Fn(&[u32]) -> Vec<f64> {
    move |prefix: &[u32]| {
        let key = prefix
            .iter()
            .fold(seed ^ 0x9E37_79B9_7F4A_7C15, |h, &t| {
                (h ^ (t as u64 + 1)).wrapping_mul(0x1000_0000_01B3)
            });
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let w: Vec<f64> = (0..vocab).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }
}

/// All sequences of exactly `len` tokens, or ending at `eos` earlier,
/// with their summed log-probabilities.
pub fn enumerate<F: Fn(&[u32]) -> Vec<f64>>(
    dist: &F,
    vocab: usize,
    len: usize,
    eos: Option<u32>,
) -> Vec<(Vec<u32>, f64, bool)> {
    let mut out = Vec::new();
    let mut stack = vec![(Vec::new(), 0.0)];
    while let Some((prefix, lp)) = stack.pop() {
        let probs = dist(&prefix);
        for w in 0..vocab as u32 {
            let mut seq = prefix.clone();
            seq.push(w);
            let score = lp + probs[w as usize].ln();
            if Some(w) == eos {
                out.push((seq, score, true));
            } else if seq.len() == len {
                out.push((seq, score, false));
            } else {
                stack.push((seq, score));
            }
        }
    }
    out
}

/// Best sequence by length-normalised score among finished sequences (or
/// all of them when none finish), lexicographically smallest on ties.
pub fn brute_force_best<F: Fn(&[u32]) -> Vec<f64>>(
    dist: &F,
    vocab: usize,
    len: usize,
    eos: Option<u32>,
) -> (Vec<u32>, f64) {
    let all = enumerate(dist, vocab, len, eos);
    let any_finished = all.iter().any(|x| x.2);
    all.into_iter()
        .filter(|x| x.2 == any_finished)
        .map(|(s, lp, _)| {
            let score = lp / s.len() as f64;
            (s, score)
        })
        .min_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)))
        .unwrap()
}
