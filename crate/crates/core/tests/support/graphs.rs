//! Random graph generators shared by the integration tests.

#![allow(dead_code)]

use g2s_core::graph::{augment, to_levi, LabeledGraph, LeviGraph};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

const CONCEPTS: [&str; 8] = ["want-01", "boy", "girl", "go-02", "city", "believe-01", "see-01", "dog"];
const ROLES: [&str; 5] = ["ARG0", "ARG1", "ARG2", "mod", "location"];

/// Random rooted graph whose Levi graph has at most `max_levi_nodes` nodes.
pub fn random_graph<R: Rng>(rng: &mut R, max_levi_nodes: usize) -> LabeledGraph {
    let n = rng.random_range(1..=(max_levi_nodes / 2).max(1));
    let mut g = LabeledGraph::new(*CONCEPTS.choose(rng).unwrap());
    for _ in 1..n {
        g.add_node(*CONCEPTS.choose(rng).unwrap());
    }
    let max_edges = max_levi_nodes - n;
    // A spanning tree keeps most nodes reachable; extra edges add reentrancies.
    let mut edges = 0;
    for v in 1..n {
        if edges == max_edges {
            break;
        }
        let u = rng.random_range(0..v);
        g.add_edge(Some(u), v, *ROLES.choose(rng).unwrap()).unwrap();
        edges += 1;
    }
    let extra = rng.random_range(0..=(max_edges - edges).min(3));
    for _ in 0..extra {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        g.add_edge(Some(u), v, *ROLES.choose(rng).unwrap()).unwrap();
    }
    g
}

pub fn prepared<R: Rng>(rng: &mut R, max_levi_nodes: usize) -> LeviGraph {
    augment(&to_levi(&random_graph(rng, max_levi_nodes)))
        .unwrap()
        .with_positions()
}

/// Stable vocabulary lookup for the label sets above.
pub fn label_id(label: &str) -> u32 {
    CONCEPTS
        .iter()
        .chain(ROLES.iter())
        .position(|&c| c == label)
        .map_or(1, |i| i as u32 + 4)
}

pub const LABEL_VOCAB: usize = 4 + CONCEPTS.len() + ROLES.len();

pub fn random_permutation<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}
