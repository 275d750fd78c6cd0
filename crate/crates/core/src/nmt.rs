//! Dependency trees as translation inputs.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{
    add_sequential_edges, augment, to_levi, GraphError, LabeledGraph, LeviGraph, NodeId,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepToken {
    pub form: String,
    /// 0-based index of the head token; `None` for the root.
    pub head: Option<usize>,
    pub relation: String,
}

/// A sentence whose heads form a tree with exactly one root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencySentence {
    tokens: Vec<DepToken>,
    root: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("sentence has no tokens")]
    Empty,
    #[error("sentence has no root")]
    NoRoot,
    #[error("tokens {0} and {1} are both roots")]
    MultipleRoots(usize, usize),
    #[error("token {token} has head {head}, outside the sentence")]
    HeadOutOfRange { token: usize, head: usize },
    #[error("token {0} is on a head cycle")]
    Cycle(usize),
}

impl DependencySentence {
    pub fn new(tokens: Vec<DepToken>) -> Result<Self, TreeError> {
        if tokens.is_empty() {
            return Err(TreeError::Empty);
        }
        let mut root = None;
        for (i, t) in tokens.iter().enumerate() {
            match t.head {
                None => match root {
                    Some(r) => return Err(TreeError::MultipleRoots(r, i)),
                    None => root = Some(i),
                },
                Some(h) if h >= tokens.len() => {
                    return Err(TreeError::HeadOutOfRange { token: i, head: h })
                }
                Some(_) => {}
            }
        }
        let root = root.ok_or(TreeError::NoRoot)?;
        // Every head chain must reach the root within n steps.
        for start in 0..tokens.len() {
            let mut v = start;
            let mut steps = 0;
            while let Some(h) = tokens[v].head {
                v = h;
                steps += 1;
                if steps > tokens.len() {
                    return Err(TreeError::Cycle(start));
                }
            }
        }
        Ok(DependencySentence { tokens, root })
    }

    pub fn tokens(&self) -> &[DepToken] {
        &self.tokens
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.form.as_str())
    }
}

/// Which tab-separated columns hold the form, head and relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConllColumns {
    pub form: usize,
    pub head: usize,
    pub relation: usize,
}

impl Default for ConllColumns {
    /// CoNLL-X / CoNLL-U layout.
    fn default() -> Self {
        ConllColumns {
            form: 1,
            head: 6,
            relation: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConllErrorKind {
    #[error("expected at least {expected} columns, found {found}")]
    MissingColumn { expected: usize, found: usize },
    #[error("head `{0}` is not a number")]
    BadHead(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// `line` is 1-based; for tree errors it is the sentence's first line.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct ConllError {
    pub line: usize,
    pub kind: ConllErrorKind,
}

/// Parses blank-line separated sentences. Lines starting with `#` are
/// comments; multiword ranges (`3-4`) and empty nodes (`3.1`) are skipped.
/// A head of 0 marks the root.
pub fn parse_conll(text: &str, cols: ConllColumns) -> Result<Vec<DependencySentence>, ConllError> {
    let needed = cols.form.max(cols.head).max(cols.relation) + 1;
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut first_line = 0;
    let mut finish = |tokens: &mut Vec<DepToken>, line: usize| -> Result<(), ConllError> {
        if !tokens.is_empty() {
            let s = DependencySentence::new(core::mem::take(tokens))
                .map_err(|e| ConllError { line, kind: e.into() })?;
            out.push(s);
        }
        Ok(())
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut tokens, first_line)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields
            .first()
            .is_some_and(|id| id.contains('-') || id.contains('.'))
        {
            continue;
        }
        if fields.len() < needed {
            return Err(ConllError {
                line: i + 1,
                kind: ConllErrorKind::MissingColumn {
                    expected: needed,
                    found: fields.len(),
                },
            });
        }
        if tokens.is_empty() {
            first_line = i + 1;
        }
        let head_field = fields[cols.head];
        let head: usize = head_field.parse().map_err(|_| ConllError {
            line: i + 1,
            kind: ConllErrorKind::BadHead(head_field.to_string()),
        })?;
        tokens.push(DepToken {
            form: fields[cols.form].to_string(),
            head: head.checked_sub(1),
            relation: fields[cols.relation].to_string(),
        });
    }
    finish(&mut tokens, first_line)?;
    Ok(out)
}

/// Words as nodes, one edge per token from its head labelled with the
/// relation. The root's edge has no source.
pub fn dependency_graph(sent: &DependencySentence) -> LabeledGraph {
    let mut g = LabeledGraph::new(sent.tokens[0].form.clone());
    for t in &sent.tokens[1..] {
        g.add_node(t.form.clone());
    }
    for (i, t) in sent.tokens.iter().enumerate() {
        // Heads were validated on construction.
        let _ = g.add_edge(t.head, i, t.relation.clone());
    }
    let _ = g.set_root(sent.root);
    g
}

/// Levi graph of the dependency tree, optionally with left/right edges
/// linking the words in surface order, augmented and with positions. The
/// position root is the node created from the root relation.
pub fn build_nmt_graph(sent: &DependencySentence, with_sequential: bool) -> Result<LeviGraph, GraphError> {
    let g = dependency_graph(sent);
    let mut levi = to_levi(&g);
    levi.set_root(g.node_count() + sent.root)?;
    if with_sequential {
        let order: Vec<NodeId> = (0..sent.len()).collect();
        levi = add_sequential_edges(&levi, &order)?;
    }
    Ok(augment(&levi)?.with_positions())
}

/// Word node ids in surface order, recovered from left edges alone.
pub fn surface_order(g: &LeviGraph) -> Vec<NodeId> {
    use crate::graph::EdgeTag;
    let n = g.node_count();
    let mut next = vec![None; n];
    let mut has_prev = vec![false; n];
    let mut in_chain = vec![false; n];
    for e in g.edges().iter().filter(|e| e.tag == EdgeTag::Left) {
        next[e.src] = Some(e.dst);
        has_prev[e.dst] = true;
        in_chain[e.src] = true;
        in_chain[e.dst] = true;
    }
    let mut order = Vec::new();
    if let Some(mut v) = (0..n).find(|&v| in_chain[v] && !has_prev[v]) {
        order.push(v);
        while let Some(w) = next[v] {
            order.push(w);
            v = w;
        }
    }
    order
}
