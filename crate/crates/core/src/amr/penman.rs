use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::graph::{LabeledGraph, NodeId};

/// What a node of an AMR graph was written as.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    /// `(var / concept ...)`; the label is the concept.
    Variable(String),
    /// An attribute value; `quoted` for string literals.
    Constant { quoted: bool },
}

/// A rooted AMR graph. Edge labels are roles without the colon, exactly as
/// written (inverse roles such as `ARG0-of` are kept, not flipped).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmrGraph {
    pub graph: LabeledGraph,
    pub kinds: Vec<NodeKind>,
}

impl AmrGraph {
    pub fn variable(&self, node: NodeId) -> Option<&str> {
        match &self.kinds[node] {
            NodeKind::Variable(v) => Some(v),
            NodeKind::Constant { .. } => None,
        }
    }

    pub fn is_constant(&self, node: NodeId) -> bool {
        matches!(self.kinds[node], NodeKind::Constant { .. })
    }

    /// Outgoing edges of `node` in written order, as `(role, target)`.
    pub fn children(&self, node: NodeId) -> impl Iterator<Item = (&str, NodeId)> {
        self.graph
            .edges()
            .iter()
            .filter(move |e| e.src == Some(node))
            .map(|e| (e.label.as_str(), e.dst))
    }

    /// Keeps the nodes flagged in `keep`, renumbering densely.
    pub fn retain_nodes(&mut self, keep: &[bool]) {
        // `keep` always has one flag per node here.
        if self.graph.retain_nodes(keep).is_ok() {
            let mut i = 0;
            self.kinds.retain(|_| {
                i += 1;
                keep[i - 1]
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PenmanErrorKind {
    UnexpectedEnd,
    Unexpected(String),
    UnbalancedClose,
    UnterminatedString,
    UndefinedVariable(String),
    DuplicateVariable(String),
    TrailingInput,
}

impl core::fmt::Display for PenmanErrorKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::UnexpectedEnd => write!(f, "unexpected end of input (unbalanced parentheses)"),
            Self::Unexpected(t) => write!(f, "unexpected `{t}`"),
            Self::UnbalancedClose => write!(f, "unbalanced `)`"),
            Self::UnterminatedString => write!(f, "unterminated string"),
            Self::UndefinedVariable(v) => write!(f, "undefined variable `{v}`"),
            Self::DuplicateVariable(v) => write!(f, "variable `{v}` defined twice"),
            Self::TrailingInput => write!(f, "input continues after the graph"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{column}: {kind}")]
pub struct PenmanError {
    pub line: usize,
    pub column: usize,
    pub kind: PenmanErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Slash,
    Role(String),
    Str(String),
    Sym(String),
}

struct Lexer<'a> {
    chars: core::iter::Peekable<core::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Lexer<'_> {
    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn err(&self, line: usize, column: usize, kind: PenmanErrorKind) -> PenmanError {
        PenmanError { line, column, kind }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize, usize)>, PenmanError> {
        let mut out = Vec::new();
        while let Some(&c) = self.chars.peek() {
            let (line, column) = (self.line, self.column);
            if c.is_whitespace() {
                self.bump();
                continue;
            }
            let tok = match c {
                '(' => {
                    self.bump();
                    Tok::Open
                }
                ')' => {
                    self.bump();
                    Tok::Close
                }
                '/' => {
                    self.bump();
                    Tok::Slash
                }
                '"' => {
                    self.bump();
                    let mut s = String::new();
                    loop {
                        match self.bump() {
                            None => return Err(self.err(line, column, PenmanErrorKind::UnterminatedString)),
                            Some('"') => break,
                            Some('\\') => match self.bump() {
                                Some(e) => s.push(e),
                                None => return Err(self.err(line, column, PenmanErrorKind::UnterminatedString)),
                            },
                            Some(ch) => s.push(ch),
                        }
                    }
                    Tok::Str(s)
                }
                _ => {
                    let mut s = String::new();
                    while let Some(&ch) = self.chars.peek() {
                        if ch.is_whitespace() || matches!(ch, '(' | ')' | '"') || (ch == '/' && !s.is_empty() && !s.starts_with(':')) {
                            break;
                        }
                        s.push(ch);
                        self.bump();
                    }
                    match s.strip_prefix(':') {
                        Some(role) if !role.is_empty() => Tok::Role(role.to_string()),
                        _ => Tok::Sym(s),
                    }
                }
            };
            out.push((tok, line, column));
        }
        Ok(out)
    }
}

/// Symbols that look like AMR variables: one or two lowercase letters and
/// optional digits.
fn variable_like(s: &str) -> bool {
    let letters = s.chars().take_while(|c| c.is_ascii_lowercase()).count();
    (1..=2).contains(&letters) && s[letters..].chars().all(|c| c.is_ascii_digit())
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    end: (usize, usize),
    labels: Vec<String>,
    kinds: Vec<NodeKind>,
    edges: Vec<(NodeId, Target, String)>,
    defined: BTreeMap<String, NodeId>,
}

enum Target {
    Node(NodeId),
    Symbol(String, usize, usize),
}

impl Parser {
    fn err_at(&self, i: usize, kind: PenmanErrorKind) -> PenmanError {
        let (line, column) = self.toks.get(i).map_or(self.end, |t| (t.1, t.2));
        PenmanError { line, column, kind }
    }

    fn next(&mut self) -> Result<Tok, PenmanError> {
        let t = self
            .toks
            .get(self.pos)
            .map(|t| t.0.clone())
            .ok_or_else(|| self.err_at(self.pos, PenmanErrorKind::UnexpectedEnd))?;
        self.pos += 1;
        Ok(t)
    }

    fn unexpected(&self, at: usize, t: &Tok) -> PenmanError {
        let text = match t {
            Tok::Open => "(".to_string(),
            Tok::Close => ")".to_string(),
            Tok::Slash => "/".to_string(),
            Tok::Role(r) => alloc::format!(":{r}"),
            Tok::Str(s) => alloc::format!("\"{s}\""),
            Tok::Sym(s) => s.clone(),
        };
        self.err_at(at, PenmanErrorKind::Unexpected(text))
    }

    /// Parses `( var / concept role* )` after the opening parenthesis.
    fn node(&mut self) -> Result<NodeId, PenmanError> {
        let at = self.pos;
        let var = match self.next()? {
            Tok::Sym(v) => v,
            t => return Err(self.unexpected(at, &t)),
        };
        let at_slash = self.pos;
        match self.next()? {
            Tok::Slash => {}
            t => return Err(self.unexpected(at_slash, &t)),
        }
        let at_concept = self.pos;
        let concept = match self.next()? {
            Tok::Sym(c) => c,
            Tok::Str(c) => c,
            t => return Err(self.unexpected(at_concept, &t)),
        };
        if self.defined.contains_key(&var) {
            return Err(self.err_at(at, PenmanErrorKind::DuplicateVariable(var)));
        }
        let id = self.labels.len();
        self.labels.push(concept);
        self.kinds.push(NodeKind::Variable(var.clone()));
        self.defined.insert(var, id);
        loop {
            let at = self.pos;
            match self.next()? {
                Tok::Close => return Ok(id),
                Tok::Role(role) => {
                    let at_target = self.pos;
                    let target = match self.next()? {
                        Tok::Open => Target::Node(self.node()?),
                        Tok::Str(s) => Target::Node(self.constant(s, true)),
                        Tok::Sym(s) => {
                            let (_, line, column) = self.toks[at_target];
                            Target::Symbol(s, line, column)
                        }
                        t => return Err(self.unexpected(at_target, &t)),
                    };
                    self.edges.push((id, target, role));
                }
                t => return Err(self.unexpected(at, &t)),
            }
        }
    }

    fn constant(&mut self, value: String, quoted: bool) -> NodeId {
        self.labels.push(value);
        self.kinds.push(NodeKind::Constant { quoted });
        self.labels.len() - 1
    }
}

/// Parses one PENMAN graph. Symbols naming a variable defined anywhere in
/// the graph become reentrant edges; other variable-like symbols are
/// reported as undefined, and the rest become constants.
pub fn parse_penman(text: &str) -> Result<AmrGraph, PenmanError> {
    let lexer = Lexer {
        chars: text.chars().peekable(),
        line: 1,
        column: 1,
    };
    let end = {
        let line = text.lines().count().max(1);
        let column = text.lines().last().map_or(0, |l| l.chars().count()) + 1;
        (line, column)
    };
    let toks = lexer.tokens()?;
    let mut p = Parser {
        toks,
        pos: 0,
        end,
        labels: Vec::new(),
        kinds: Vec::new(),
        edges: Vec::new(),
        defined: BTreeMap::new(),
    };
    match p.next()? {
        Tok::Open => {}
        Tok::Close => return Err(p.err_at(0, PenmanErrorKind::UnbalancedClose)),
        t => return Err(p.unexpected(0, &t)),
    }
    let root = p.node()?;
    if p.pos < p.toks.len() {
        let kind = match p.toks[p.pos].0 {
            Tok::Close => PenmanErrorKind::UnbalancedClose,
            _ => PenmanErrorKind::TrailingInput,
        };
        return Err(p.err_at(p.pos, kind));
    }
    let pending = core::mem::take(&mut p.edges);
    let mut edges = Vec::with_capacity(pending.len());
    for (src, target, role) in pending {
        let dst = match target {
            Target::Node(n) => n,
            Target::Symbol(s, line, column) => match p.defined.get(&s) {
                Some(&n) => n,
                None if variable_like(&s) => {
                    return Err(PenmanError {
                        line,
                        column,
                        kind: PenmanErrorKind::UndefinedVariable(s),
                    })
                }
                None => p.constant(s, false),
            },
        };
        edges.push(crate::graph::Edge {
            src: Some(src),
            dst,
            label: role,
        });
    }
    let nodes = p.labels.into_iter().enumerate().collect();
    let graph = LabeledGraph::from_parts(nodes, edges, root).expect("parser produces valid ids");
    Ok(AmrGraph {
        graph,
        kinds: p.kinds,
    })
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        if matches!(c, '"' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Writes the graph in PENMAN notation, one role per line. Each variable is
/// defined at its first depth-first visit from the root; later visits print
/// the bare variable. Nodes unreachable from the root are not printed.
pub fn to_penman(g: &AmrGraph) -> String {
    let mut order = Vec::new();
    visit_order(g, g.graph.root(), &mut vec![false; g.graph.node_count()], &mut order);
    let mut names: Vec<Option<String>> = vec![None; g.graph.node_count()];
    let mut taken: Vec<String> = Vec::new();
    for n in order {
        names[n] = Some(fresh_variable(g, n, &mut taken));
    }
    let mut out = String::new();
    write_node(g, g.graph.root(), 0, &mut vec![false; g.graph.node_count()], &names, &mut out);
    out
}

fn visit_order(g: &AmrGraph, node: NodeId, seen: &mut [bool], order: &mut Vec<NodeId>) {
    if g.is_constant(node) || seen[node] {
        return;
    }
    seen[node] = true;
    order.push(node);
    for (_, c) in g.children(node) {
        visit_order(g, c, seen, order);
    }
}

/// Keeps the parsed variable when it is still free, otherwise derives one
/// from the concept's first letter.
fn fresh_variable(g: &AmrGraph, node: NodeId, taken: &mut Vec<String>) -> String {
    if let Some(v) = g.variable(node) {
        if variable_like(v) && !taken.iter().any(|t| t == v) {
            taken.push(v.to_string());
            return v.to_string();
        }
    }
    let base = g.graph.label(node).chars().find(|c| c.is_ascii_lowercase()).unwrap_or('x');
    let mut k = 1;
    loop {
        let cand = if k == 1 { base.to_string() } else { alloc::format!("{base}{k}") };
        if !taken.contains(&cand) {
            taken.push(cand.clone());
            return cand;
        }
        k += 1;
    }
}

fn write_node(
    g: &AmrGraph,
    node: NodeId,
    depth: usize,
    seen: &mut [bool],
    names: &[Option<String>],
    out: &mut String,
) {
    if let NodeKind::Constant { quoted } = g.kinds[node] {
        let label = g.graph.label(node);
        let plain = !label.is_empty()
            && !variable_like(label)
            && !label.contains(|c: char| c.is_whitespace() || "()\":/".contains(c));
        if quoted || !plain {
            out.push_str(&quote(label));
        } else {
            out.push_str(label);
        }
        return;
    }
    let var = names[node].as_deref().unwrap_or("x");
    if seen[node] {
        out.push_str(var);
        return;
    }
    seen[node] = true;
    let _ = write!(out, "({var} / {}", g.graph.label(node));
    for (role, child) in g.children(node) {
        out.push('\n');
        for _ in 0..=depth {
            out.push_str("    ");
        }
        let _ = write!(out, ":{role} ");
        write_node(g, child, depth + 1, seen, names, out);
    }
    out.push(')');
}
