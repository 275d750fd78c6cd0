use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::LabeledGraph;

const VERBS: [&str; 5] = ["want-01", "see-01", "like-01", "help-01", "find-01"];
const NOUNS: [&str; 6] = ["boy", "girl", "dog", "cat", "teacher", "city"];
const ADJECTIVES: [&str; 3] = ["big", "small", "red"];
const MAX_CONCEPTS: usize = 5;
const MAX_TOKENS: usize = 12;

/// A small graph with its deterministic realisation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticPair {
    pub graph: LabeledGraph,
    pub sentence: Vec<String>,
}

fn surface(concept: &str) -> &str {
    concept.split('-').next().unwrap_or(concept)
}

/// Generates `count` distinct pairs. Graphs are trees of at most five
/// concepts (a verb with an `ARG0` noun and an optional `ARG1` noun or
/// clause; nouns may carry a `mod` adjective), so their Levi graphs have
/// at most nine nodes. Sentences have at most twelve tokens.
pub fn synthetic_corpus(count: usize, seed: u64) -> Vec<SyntheticPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<SyntheticPair> = Vec::with_capacity(count);
    while out.len() < count {
        let mut g = LabeledGraph::new(*VERBS.choose(&mut rng).unwrap_or(&VERBS[0]));
        let mut words = Vec::new();
        clause(&mut g, 0, &mut words, &mut rng, 0);
        if g.node_count() > MAX_CONCEPTS || words.len() > MAX_TOKENS {
            continue;
        }
        let pair = SyntheticPair {
            graph: g,
            sentence: words,
        };
        if !out.contains(&pair) {
            out.push(pair);
        }
    }
    out
}

fn clause(g: &mut LabeledGraph, verb: usize, words: &mut Vec<String>, rng: &mut ChaCha8Rng, depth: u32) {
    let agent = noun(g, words, rng);
    edge(g, verb, agent, "ARG0");
    words.push(surface(g.label(verb)).to_string());
    match rng.random_range(0..3) {
        0 => {}
        1 if depth == 0 => {
            words.push("that".to_string());
            let sub = g.add_node(*VERBS.choose(rng).unwrap_or(&VERBS[0]));
            edge(g, verb, sub, "ARG1");
            clause(g, sub, words, rng, depth + 1);
        }
        _ => {
            let patient = noun(g, words, rng);
            edge(g, verb, patient, "ARG1");
        }
    }
}

fn noun(g: &mut LabeledGraph, words: &mut Vec<String>, rng: &mut ChaCha8Rng) -> usize {
    let n = g.add_node(*NOUNS.choose(rng).unwrap_or(&NOUNS[0]));
    words.push("the".to_string());
    if rng.random_bool(0.3) {
        let a = g.add_node(*ADJECTIVES.choose(rng).unwrap_or(&ADJECTIVES[0]));
        edge(g, n, a, "mod");
        words.push(g.label(a).to_string());
    }
    words.push(g.label(n).to_string());
    n
}

fn edge(g: &mut LabeledGraph, src: usize, dst: usize, label: &str) {
    // Both endpoints were just created.
    let _ = g.add_edge(Some(src), dst, label);
}
