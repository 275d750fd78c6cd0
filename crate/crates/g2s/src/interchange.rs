//! Line-oriented JSON formats: graphs, anonymisation maps, decode traces.

use std::io::{BufRead, Write};

use anyhow::{bail, Context, Result};
use g2s_core::amr::AnonymizationMap;
use g2s_core::graph::{EdgeTag, LeviEdge, LeviGraph, LeviNode, Origin};
use serde::{Deserialize, Serialize};

/// One graph per line:
/// `{"nodes":[[id,label,origin]],"edges":[[src,dst,tag]],"root":r,"positions":[..]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub nodes: Vec<(usize, String, String)>,
    pub edges: Vec<(Option<usize>, usize, String)>,
    pub root: usize,
    pub positions: Vec<u32>,
}

impl GraphRecord {
    pub fn from_levi(g: &LeviGraph) -> Self {
        GraphRecord {
            nodes: g
                .nodes()
                .iter()
                .enumerate()
                .map(|(i, n)| (i, n.label.clone(), n.origin.as_str().to_string()))
                .collect(),
            edges: g
                .edges()
                .iter()
                .map(|e| (Some(e.src), e.dst, e.tag.as_str().to_string()))
                .collect(),
            root: g.root(),
            positions: g.positions().to_vec(),
        }
    }

    pub fn to_levi(&self) -> Result<LeviGraph> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (expected, (id, label, origin)) in self.nodes.iter().enumerate() {
            if *id != expected {
                bail!("node ids must be contiguous from 0, found {id} at position {expected}");
            }
            let origin: Origin = origin.parse().map_err(anyhow::Error::msg)?;
            nodes.push(LeviNode {
                label: label.clone(),
                origin,
            });
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        for (i, (src, dst, tag)) in self.edges.iter().enumerate() {
            let Some(src) = src else {
                bail!("edge {i} has no source, which a Levi graph cannot contain");
            };
            let tag: EdgeTag = tag.parse().map_err(anyhow::Error::msg)?;
            edges.push(LeviEdge {
                src: *src,
                dst: *dst,
                tag,
            });
        }
        Ok(LeviGraph::from_parts(
            nodes,
            edges,
            self.root,
            self.positions.clone(),
        )?)
    }
}

/// Sidecar map for one sentence: `{"entries":[["loc_0",["Russia"]]]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapRecord {
    pub entries: Vec<(String, Vec<String>)>,
}

impl From<&AnonymizationMap> for MapRecord {
    fn from(m: &AnonymizationMap) -> Self {
        MapRecord {
            entries: m.entries.clone(),
        }
    }
}

impl From<MapRecord> for AnonymizationMap {
    fn from(m: MapRecord) -> Self {
        AnonymizationMap { entries: m.entries }
    }
}

/// Per-sentence decoding trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tokens: Vec<String>,
    pub log_prob: f64,
    pub score: f64,
    pub finished: bool,
    /// Most attended node per emitted token.
    pub attention_argmax: Vec<Option<usize>>,
}

pub fn write_jsonl<T: Serialize, W: Write>(mut out: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads one value per non-empty line; errors name the line.
pub fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(input: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("line {}", i + 1))?);
    }
    Ok(out)
}
