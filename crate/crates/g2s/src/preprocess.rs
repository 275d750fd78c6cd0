//! Raw AMR or CoNLL splits to interchange graphs, targets and maps.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use g2s_core::amr::{
    anonymize, parse_penman, resolve_path, simplify, Alignment, AmrGraph, EntityTypeTable,
};
use g2s_core::graph::{augment, to_levi, EdgeTag, LeviGraph};
use g2s_core::nmt::{build_nmt_graph, parse_conll, ConllColumns};
use serde::Serialize;

use crate::config::Task;
use crate::corpus::{read_amr_blocks, read_token_lines, AlignmentRecord};
use crate::interchange::{read_jsonl, write_jsonl, GraphRecord, MapRecord};
use crate::Invalid;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitInput {
    pub name: String,
    pub source: PathBuf,
    /// Target sentences (translation only; AMR reads `::tok`/`::snt`).
    pub target: Option<PathBuf>,
    /// Alignment JSON lines overriding `::alignments` comments.
    pub alignments: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct PreprocessOptions {
    pub task: Task,
    pub splits: Vec<SplitInput>,
    pub output: PathBuf,
    pub strict: bool,
    pub types: EntityTypeTable,
    pub columns: ConllColumns,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SplitStats {
    pub split: String,
    pub instances: usize,
    /// `(1-based source line, message)` for skipped inputs.
    pub failures: Vec<(usize, String)>,
    /// Anonymised entities with no aligned surface tokens.
    pub unaligned_entities: usize,
    pub nodes: usize,
    pub edges: BTreeMap<String, usize>,
    pub position_histogram: BTreeMap<u32, usize>,
}

impl SplitStats {
    fn record(&mut self, g: &LeviGraph) {
        self.instances += 1;
        self.nodes += g.node_count();
        for tag in EdgeTag::ALL {
            let n = g.count_tag(tag);
            if n > 0 {
                *self.edges.entry(tag.as_str().to_string()).or_default() += n;
            }
        }
        for &p in g.positions() {
            *self.position_histogram.entry(p).or_default() += 1;
        }
    }
}

pub struct Prepared {
    pub graph: LeviGraph,
    pub target: Vec<String>,
    pub map: Option<MapRecord>,
}

pub fn split_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{name}.graphs.jsonl")),
        dir.join(format!("{name}.tgt")),
        dir.join(format!("{name}.map.jsonl")),
    )
}

/// Anonymises then simplifies, so alignment paths refer to the graph as
/// written.
pub fn prepare_amr(
    g: &AmrGraph,
    paths: &[(String, usize, usize)],
    tokens: &[String],
    types: &EntityTypeTable,
) -> Result<(LeviGraph, Vec<String>, MapRecord, usize)> {
    let alignments = paths
        .iter()
        .map(|(p, start, end)| {
            resolve_path(g, p)
                .map(|node| Alignment {
                    node,
                    start: *start,
                    end: *end,
                })
                .with_context(|| format!("alignment path {p} names no node"))
        })
        .collect::<Result<Vec<_>>>()?;
    let a = anonymize(g, &alignments, tokens, types)?;
    let s = simplify(&a.graph);
    let levi = augment(&to_levi(&s.graph))?.with_positions();
    Ok((levi, a.tokens, MapRecord::from(&a.map), a.unaligned.len()))
}

fn amr_split(split: &SplitInput, types: &EntityTypeTable, stats: &mut SplitStats) -> Result<Vec<Prepared>> {
    let text = fs::read_to_string(&split.source)
        .with_context(|| format!("reading {}", split.source.display()))?;
    let blocks = read_amr_blocks(&text)?;
    let external: Option<Vec<AlignmentRecord>> = match &split.alignments {
        Some(p) => Some(read_jsonl(BufReader::new(
            File::open(p).with_context(|| format!("opening {}", p.display()))?,
        ))?),
        None => None,
    };
    if let Some(ext) = &external {
        crate::corpus::ensure_same_len("AMR blocks and alignment lines", blocks.len(), ext.len())?;
    }
    let mut out = Vec::new();
    for (i, b) in blocks.iter().enumerate() {
        let paths = external.as_ref().map_or(&b.alignments, |e| &e[i].alignments);
        let tokens = b.tokens.clone().unwrap_or_default();
        let result = parse_penman(&b.graph)
            .map_err(|e| anyhow::anyhow!("{e}"))
            .and_then(|g| prepare_amr(&g, paths, &tokens, types));
        match result {
            Ok((graph, target, map, unaligned)) => {
                stats.unaligned_entities += unaligned;
                stats.record(&graph);
                out.push(Prepared {
                    graph,
                    target,
                    map: Some(map),
                });
            }
            Err(e) => stats.failures.push((b.line, format!("{e:#}"))),
        }
    }
    Ok(out)
}

fn nmt_split(split: &SplitInput, task: Task, cols: ConllColumns, stats: &mut SplitStats) -> Result<Vec<Prepared>> {
    let text = fs::read_to_string(&split.source)
        .with_context(|| format!("reading {}", split.source.display()))?;
    // Sentences are parsed one at a time so a bad one does not hide the rest.
    let mut chunks: Vec<(usize, String)> = Vec::new();
    let mut current: Option<(usize, String)> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            chunks.extend(current.take());
        } else {
            let c = current.get_or_insert_with(|| (i + 1, String::new()));
            c.1.push_str(line);
            c.1.push('\n');
        }
    }
    chunks.extend(current);
    let targets = match &split.target {
        Some(p) => {
            let t = read_token_lines(
                &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            );
            crate::corpus::ensure_same_len("source sentences and target lines", chunks.len(), t.len())?;
            t
        }
        None => vec![Vec::new(); chunks.len()],
    };
    let mut out = Vec::new();
    for ((first, chunk), target) in chunks.into_iter().zip(targets) {
        let parsed = parse_conll(&chunk, cols).map_err(|mut e| {
            e.line += first - 1;
            anyhow::Error::from(e)
        });
        let result = parsed.and_then(|mut s| {
            let s = s.pop().context("empty sentence")?;
            Ok(build_nmt_graph(&s, task == Task::NmtPlus)?)
        });
        match result {
            Ok(graph) => {
                stats.record(&graph);
                out.push(Prepared {
                    graph,
                    target,
                    map: None,
                });
            }
            Err(e) => stats.failures.push((first, format!("{e:#}"))),
        }
    }
    Ok(out)
}

fn write_split(dir: &Path, name: &str, items: &[Prepared]) -> Result<()> {
    let (graphs, targets, maps) = split_paths(dir, name);
    let records: Vec<GraphRecord> = items.iter().map(|p| GraphRecord::from_levi(&p.graph)).collect();
    write_jsonl(BufWriter::new(File::create(&graphs)?), &records)?;
    let mut t = BufWriter::new(File::create(&targets)?);
    for p in items {
        writeln!(t, "{}", p.target.join(" "))?;
    }
    t.flush()?;
    if items.iter().any(|p| p.map.is_some()) {
        let m: Vec<MapRecord> = items.iter().map(|p| p.map.clone().unwrap_or_default()).collect();
        write_jsonl(BufWriter::new(File::create(&maps)?), &m)?;
    }
    Ok(())
}

/// Processes every split; in strict mode any skipped input is a
/// validation failure (after all outputs have been written).
pub fn preprocess(opts: &PreprocessOptions) -> Result<Vec<SplitStats>> {
    fs::create_dir_all(&opts.output)
        .with_context(|| format!("creating {}", opts.output.display()))?;
    let mut all = Vec::new();
    for split in &opts.splits {
        let mut stats = SplitStats {
            split: split.name.clone(),
            ..SplitStats::default()
        };
        let items = if opts.task.is_amr() {
            amr_split(split, &opts.types, &mut stats)?
        } else {
            nmt_split(split, opts.task, opts.columns, &mut stats)?
        };
        write_split(&opts.output, &split.name, &items)?;
        for (line, msg) in &stats.failures {
            eprintln!("warning: {}:{line}: {msg}", split.source.display());
        }
        all.push(stats);
    }
    let failures: usize = all.iter().map(|s| s.failures.len()).sum();
    if opts.strict && failures > 0 {
        return Err(Invalid(format!("{failures} inputs failed to preprocess")).into());
    }
    Ok(all)
}

/// Entity type table from `concept<TAB>type` lines; `*` sets the fallback.
pub fn read_entity_types(path: &Path) -> Result<EntityTypeTable> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pairs = Vec::new();
    let mut fallback = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (concept, ty) = line
            .split_once('\t')
            .ok_or_else(|| Invalid(format!("{}:{}: expected concept<TAB>type", path.display(), i + 1)))?;
        if concept == "*" {
            fallback = Some(ty.trim().to_string());
        } else {
            pairs.push((concept.trim().to_string(), ty.trim().to_string()));
        }
    }
    Ok(EntityTypeTable::from_pairs(pairs, fallback))
}
