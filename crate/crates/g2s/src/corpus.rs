//! Raw corpus readers.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// One PENMAN block with its metadata comments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmrBlock {
    /// 1-based line of the block's first line.
    pub line: usize,
    pub id: Option<String>,
    /// `::tok`, or `::snt` split on whitespace.
    pub tokens: Option<Vec<String>>,
    /// `(node path, start, end)` from a `::alignments` comment.
    pub alignments: Vec<(String, usize, usize)>,
    pub graph: String,
}

/// `::key value` pairs of one comment line.
fn metadata(comment: &str) -> Vec<(&str, &str)> {
    comment
        .split("::")
        .skip(1)
        .filter_map(|seg| {
            let seg = seg.trim();
            let (k, v) = seg.split_once(char::is_whitespace).unwrap_or((seg, ""));
            (!k.is_empty()).then(|| (k, v.trim()))
        })
        .collect()
}

/// Parses JAMR-style alignments: space-separated `start-end|path+path`.
pub fn parse_jamr_alignments(text: &str) -> Result<Vec<(String, usize, usize)>> {
    let mut out = Vec::new();
    for item in text.split_whitespace() {
        let (span, paths) = item
            .split_once('|')
            .with_context(|| format!("alignment `{item}` has no `|`"))?;
        let (s, e) = span
            .split_once('-')
            .with_context(|| format!("alignment span `{span}` is not start-end"))?;
        let (start, end): (usize, usize) = (
            s.parse().with_context(|| format!("bad span start `{s}`"))?,
            e.parse().with_context(|| format!("bad span end `{e}`"))?,
        );
        for p in paths.split('+') {
            out.push((p.to_string(), start, end));
        }
    }
    Ok(out)
}

/// Splits text into blank-line separated PENMAN blocks. Blocks made only of
/// comments are skipped.
pub fn read_amr_blocks(text: &str) -> Result<Vec<AmrBlock>> {
    let mut blocks = Vec::new();
    let mut current: Option<AmrBlock> = None;
    let mut snt: Option<Vec<String>> = None;
    let flush = |b: Option<AmrBlock>, snt: &mut Option<Vec<String>>, out: &mut Vec<AmrBlock>| {
        if let Some(mut b) = b {
            if b.tokens.is_none() {
                b.tokens = snt.take();
            }
            if !b.graph.trim().is_empty() {
                out.push(b);
            }
        }
        *snt = None;
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            flush(current.take(), &mut snt, &mut blocks);
            continue;
        }
        let b = current.get_or_insert_with(|| AmrBlock {
            line: i + 1,
            id: None,
            tokens: None,
            alignments: Vec::new(),
            graph: String::new(),
        });
        if let Some(comment) = line.trim_start().strip_prefix('#') {
            for (k, v) in metadata(comment) {
                match k {
                    "id" => b.id = Some(v.split_whitespace().next().unwrap_or("").to_string()),
                    "tok" => b.tokens = Some(v.split_whitespace().map(str::to_string).collect()),
                    "snt" => snt = Some(v.split_whitespace().map(str::to_string).collect()),
                    "alignments" => {
                        b.alignments = parse_jamr_alignments(v)
                            .with_context(|| format!("line {}", i + 1))?
                    }
                    _ => {}
                }
            }
        } else {
            b.graph.push_str(line);
            b.graph.push('\n');
        }
    }
    flush(current.take(), &mut snt, &mut blocks);
    Ok(blocks)
}

/// One line of an alignment file: `{"alignments":[["0.1",3,4]]}`, matched
/// to AMR blocks by position.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub alignments: Vec<(String, usize, usize)>,
}

/// Whitespace-tokenised lines.
pub fn read_token_lines(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect()
}

pub fn ensure_same_len(what: &str, left: usize, right: usize) -> Result<()> {
    if left != right {
        bail!(crate::Invalid(format!("{what}: {left} versus {right} lines")));
    }
    Ok(())
}
