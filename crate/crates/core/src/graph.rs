//! Labelled graphs, the Levi transformation and structural edge augmentation.
//!
//! A [`LabeledGraph`] carries labels on both nodes and edges. [`to_levi`] turns
//! every edge into a node of its own, so that the only remaining edge
//! information is a small structural tag ([`EdgeTag`]). [`augment`] then adds
//! reverse and self edges, and [`compute_positions`] assigns each node its
//! breadth-first distance from the root.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub type NodeId = usize;

/// Largest distance from the root that gets its own positional index.
pub const MAX_POSITION: u32 = 20;

/// Index assigned to nodes that cannot be reached from the root.
pub const UNREACHABLE_POSITION: u32 = MAX_POSITION + 1;

/// Number of distinct positional indices (`0..=MAX_POSITION` plus the sentinel).
pub const POSITION_COUNT: usize = MAX_POSITION as usize + 2;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("node ids must be contiguous from 0, but id {0} is missing")]
    NonContiguous(NodeId),
    #[error("edge {edge} references node {node}, which does not exist")]
    DanglingEdge { edge: usize, node: NodeId },
    #[error("root {0} is not a node of the graph")]
    BadRoot(NodeId),
    #[error("graph already contains {0} edges; augment must run exactly once")]
    AlreadyAugmented(EdgeTag),
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("node {0} was created from an edge and cannot take sequential edges")]
    NotAWord(NodeId),
    #[error("node {0} appears twice in the sequential order")]
    DuplicateInOrder(NodeId),
    #[error("edge {edge} has no source, which only original graphs may contain")]
    MissingSource { edge: usize },
    #[error("positions cover {got} nodes but the graph has {expected}")]
    PositionCount { expected: usize, got: usize },
}

/// Structural edge type of a Levi graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeTag {
    Default,
    Reverse,
    SelfLoop,
    Left,
    Right,
}

impl EdgeTag {
    pub const ALL: [EdgeTag; 5] = [
        EdgeTag::Default,
        EdgeTag::Reverse,
        EdgeTag::SelfLoop,
        EdgeTag::Left,
        EdgeTag::Right,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeTag::Default => "default",
            EdgeTag::Reverse => "reverse",
            EdgeTag::SelfLoop => "self",
            EdgeTag::Left => "left",
            EdgeTag::Right => "right",
        }
    }

    /// Position of the tag's block in the canonical edge ordering.
    pub fn block(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EdgeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeTag::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| alloc::format!("unknown edge tag `{s}`"))
    }
}

/// An edge of an original (pre-Levi) graph. A missing source marks a
/// relation hanging off a virtual root, such as a dependency `ROOT` arc.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub src: Option<NodeId>,
    pub dst: NodeId,
    pub label: String,
}

/// Directed graph with labelled nodes, labelled edges and a root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGraph {
    nodes: Vec<String>,
    edges: Vec<Edge>,
    root: NodeId,
}

impl LabeledGraph {
    /// Graph with a single root node.
    pub fn new(root_label: impl Into<String>) -> Self {
        LabeledGraph {
            nodes: vec![root_label.into()],
            edges: Vec::new(),
            root: 0,
        }
    }

    /// Builds a graph from explicit `(id, label)` pairs, validating that ids
    /// are unique and contiguous from 0 and that every edge endpoint and the
    /// root exist.
    pub fn from_parts(
        nodes: Vec<(NodeId, String)>,
        edges: Vec<Edge>,
        root: NodeId,
    ) -> Result<Self, GraphError> {
        let mut slots: Vec<Option<String>> = vec![None; nodes.len()];
        for (id, label) in nodes {
            match slots.get_mut(id) {
                Some(slot @ None) => *slot = Some(label),
                Some(Some(_)) => return Err(GraphError::DuplicateNode(id)),
                // An id past the end means some smaller id is missing or duplicated.
                None => {
                    let missing = slots.iter().position(Option::is_none).unwrap_or(id);
                    return Err(GraphError::NonContiguous(missing));
                }
            }
        }
        let nodes: Vec<String> = slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or(GraphError::NonContiguous(i)))
            .collect::<Result<_, _>>()?;
        let g = LabeledGraph { nodes, edges, root };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<(), GraphError> {
        let n = self.nodes.len();
        if self.root >= n {
            return Err(GraphError::BadRoot(self.root));
        }
        for (i, e) in self.edges.iter().enumerate() {
            for node in e.src.into_iter().chain([e.dst]) {
                if node >= n {
                    return Err(GraphError::DanglingEdge { edge: i, node });
                }
            }
        }
        Ok(())
    }

    pub fn add_node(&mut self, label: impl Into<String>) -> NodeId {
        self.nodes.push(label.into());
        self.nodes.len() - 1
    }

    pub fn add_edge(
        &mut self,
        src: Option<NodeId>,
        dst: NodeId,
        label: impl Into<String>,
    ) -> Result<(), GraphError> {
        let edge = self.edges.len();
        for node in src.into_iter().chain([dst]) {
            if node >= self.nodes.len() {
                return Err(GraphError::DanglingEdge { edge, node });
            }
        }
        self.edges.push(Edge {
            src,
            dst,
            label: label.into(),
        });
        Ok(())
    }

    pub fn set_root(&mut self, root: NodeId) -> Result<(), GraphError> {
        if root >= self.nodes.len() {
            return Err(GraphError::BadRoot(root));
        }
        self.root = root;
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.nodes
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.nodes[id]
    }

    pub fn set_label(&mut self, id: NodeId, label: impl Into<String>) {
        self.nodes[id] = label.into();
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Keeps only the nodes for which `keep` is true, renumbering the
    /// survivors densely in their original order. Edges touching a removed
    /// node are dropped. Returns the old-to-new id map.
    pub fn retain_nodes(&mut self, keep: &[bool]) -> Result<Vec<Option<NodeId>>, GraphError> {
        let mut map = vec![None; self.nodes.len()];
        let mut next = 0;
        for (old, slot) in map.iter_mut().enumerate() {
            if keep[old] {
                *slot = Some(next);
                next += 1;
            }
        }
        let root = map[self.root].ok_or(GraphError::BadRoot(self.root))?;
        let mut nodes = Vec::with_capacity(next);
        for (old, label) in core::mem::take(&mut self.nodes).into_iter().enumerate() {
            if keep[old] {
                nodes.push(label);
            }
        }
        let edges = core::mem::take(&mut self.edges)
            .into_iter()
            .filter_map(|e| {
                let dst = map[e.dst]?;
                let src = match e.src {
                    Some(s) => Some(map[s]?),
                    None => None,
                };
                Some(Edge {
                    src,
                    dst,
                    label: e.label,
                })
            })
            .collect();
        self.nodes = nodes;
        self.edges = edges;
        self.root = root;
        Ok(map)
    }

    /// Removes edges for which `keep` returns false.
    pub fn retain_edges(&mut self, mut keep: impl FnMut(&Edge) -> bool) {
        self.edges.retain(|e| keep(e));
    }

    /// Nodes reachable from the root following edge direction.
    pub fn reachable_from_root(&self) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut out: Vec<Vec<NodeId>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            if let Some(s) = e.src {
                out[s].push(e.dst);
            }
        }
        let mut stack = vec![self.root];
        seen[self.root] = true;
        while let Some(v) = stack.pop() {
            for &w in &out[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }
}

/// Whether a Levi node stands for an original node or an original edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Node,
    Edge,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Node => "node",
            Origin::Edge => "edge",
        }
    }
}

impl FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "node" => Ok(Origin::Node),
            "edge" => Ok(Origin::Edge),
            other => Err(alloc::format!("unknown node origin `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeviNode {
    pub label: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeviEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub tag: EdgeTag,
}

/// Levi graph: labels live on nodes only, edges carry a structural tag.
///
/// `positions` is empty until [`compute_positions`] has been applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeviGraph {
    nodes: Vec<LeviNode>,
    edges: Vec<LeviEdge>,
    root: NodeId,
    positions: Vec<u32>,
}

impl LeviGraph {
    /// Builds a Levi graph from already-transformed parts (for example when
    /// reading the interchange format), checking endpoints, root and
    /// position count.
    pub fn from_parts(
        nodes: Vec<LeviNode>,
        edges: Vec<LeviEdge>,
        root: NodeId,
        positions: Vec<u32>,
    ) -> Result<Self, GraphError> {
        let n = nodes.len();
        if root >= n {
            return Err(GraphError::BadRoot(root));
        }
        for (i, e) in edges.iter().enumerate() {
            for node in [e.src, e.dst] {
                if node >= n {
                    return Err(GraphError::DanglingEdge { edge: i, node });
                }
            }
        }
        if !positions.is_empty() && positions.len() != n {
            return Err(GraphError::PositionCount {
                expected: n,
                got: positions.len(),
            });
        }
        Ok(LeviGraph {
            nodes,
            edges,
            root,
            positions,
        })
    }

    pub fn nodes(&self) -> &[LeviNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[LeviEdge] {
        &self.edges
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn set_root(&mut self, root: NodeId) -> Result<(), GraphError> {
        if root >= self.nodes.len() {
            return Err(GraphError::BadRoot(root));
        }
        self.root = root;
        Ok(())
    }

    /// Per-node positional indices, empty if not yet computed.
    pub fn positions(&self) -> &[u32] {
        &self.positions
    }

    pub fn has_positions(&self) -> bool {
        self.positions.len() == self.nodes.len()
    }

    /// Stores the root distances computed by [`compute_positions`].
    pub fn with_positions(mut self) -> Self {
        self.positions = compute_positions(&self);
        self
    }

    pub fn count_tag(&self, tag: EdgeTag) -> usize {
        self.edges.iter().filter(|e| e.tag == tag).count()
    }

    /// Number of incoming edges per node, over all tags.
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for e in &self.edges {
            deg[e.dst] += 1;
        }
        deg
    }

    /// Renumbers nodes so that old node `i` becomes `perm[i]`. Edge order is
    /// kept, so the result differs from the input only by the relabelling.
    pub fn permuted(&self, perm: &[NodeId]) -> LeviGraph {
        assert_eq!(perm.len(), self.nodes.len(), "permutation length mismatch");
        let mut nodes = self.nodes.clone();
        let mut positions = self.positions.clone();
        for (old, &new) in perm.iter().enumerate() {
            nodes[new] = self.nodes[old].clone();
            if !self.positions.is_empty() {
                positions[new] = self.positions[old];
            }
        }
        let edges = self
            .edges
            .iter()
            .map(|e| LeviEdge {
                src: perm[e.src],
                dst: perm[e.dst],
                tag: e.tag,
            })
            .collect();
        LeviGraph {
            nodes,
            edges,
            root: perm[self.root],
            positions,
        }
    }

    /// Stable sort of edges into tag blocks (default, reverse, self, left,
    /// right), preserving insertion order inside each block.
    fn sort_blocks(&mut self) {
        self.edges.sort_by_key(|e| e.tag.block());
    }
}

/// Turns every edge `(u, v, l)` into a node `w` labelled `l` with default
/// edges `u -> w` and `w -> v`. Original nodes keep their ids; the node for
/// edge `i` gets id `|V| + i`. Edges without a source contribute only
/// `w -> v`.
pub fn to_levi(g: &LabeledGraph) -> LeviGraph {
    let n = g.node_count();
    let mut nodes: Vec<LeviNode> = g
        .labels()
        .iter()
        .map(|l| LeviNode {
            label: l.clone(),
            origin: Origin::Node,
        })
        .collect();
    let mut edges = Vec::with_capacity(2 * g.edges().len());
    for (i, e) in g.edges().iter().enumerate() {
        let w = n + i;
        nodes.push(LeviNode {
            label: e.label.clone(),
            origin: Origin::Edge,
        });
        if let Some(src) = e.src {
            edges.push(LeviEdge {
                src,
                dst: w,
                tag: EdgeTag::Default,
            });
        }
        edges.push(LeviEdge {
            src: w,
            dst: e.dst,
            tag: EdgeTag::Default,
        });
    }
    LeviGraph {
        nodes,
        edges,
        root: g.root(),
        positions: Vec::new(),
    }
}

/// Adds one reverse edge per default edge and one self edge per node.
/// Sequential (left/right) edges are left as they are: they already come in
/// mutually reversed pairs.
pub fn augment(g: &LeviGraph) -> Result<LeviGraph, GraphError> {
    if let Some(e) = g
        .edges
        .iter()
        .find(|e| matches!(e.tag, EdgeTag::Reverse | EdgeTag::SelfLoop))
    {
        return Err(GraphError::AlreadyAugmented(e.tag));
    }
    let mut out = g.clone();
    out.edges
        .reserve(g.count_tag(EdgeTag::Default) + g.node_count());
    for e in g.edges.iter().filter(|e| e.tag == EdgeTag::Default) {
        out.edges.push(LeviEdge {
            src: e.dst,
            dst: e.src,
            tag: EdgeTag::Reverse,
        });
    }
    for v in 0..g.node_count() {
        out.edges.push(LeviEdge {
            src: v,
            dst: v,
            tag: EdgeTag::SelfLoop,
        });
    }
    out.sort_blocks();
    Ok(out)
}

/// Chains the given word nodes in order: `w_i -left-> w_{i+1}` and
/// `w_{i+1} -right-> w_i` for each consecutive pair.
pub fn add_sequential_edges(g: &LeviGraph, order: &[NodeId]) -> Result<LeviGraph, GraphError> {
    let mut seen = vec![false; g.node_count()];
    for &id in order {
        let node = g.nodes.get(id).ok_or(GraphError::UnknownNode(id))?;
        if node.origin != Origin::Node {
            return Err(GraphError::NotAWord(id));
        }
        if core::mem::replace(&mut seen[id], true) {
            return Err(GraphError::DuplicateInOrder(id));
        }
    }
    let mut out = g.clone();
    for pair in order.windows(2) {
        out.edges.push(LeviEdge {
            src: pair[0],
            dst: pair[1],
            tag: EdgeTag::Left,
        });
    }
    for pair in order.windows(2) {
        out.edges.push(LeviEdge {
            src: pair[1],
            dst: pair[0],
            tag: EdgeTag::Right,
        });
    }
    out.sort_blocks();
    Ok(out)
}

/// Breadth-first distance from the root over default edges only, clamped at
/// [`MAX_POSITION`]. Unreachable nodes get [`UNREACHABLE_POSITION`].
pub fn compute_positions(g: &LeviGraph) -> Vec<u32> {
    let n = g.node_count();
    let mut succ: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for e in g.edges.iter().filter(|e| e.tag == EdgeTag::Default) {
        succ[e.src].push(e.dst);
    }
    let mut dist: Vec<Option<u32>> = vec![None; n];
    dist[g.root] = Some(0);
    let mut queue = VecDeque::from([g.root]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap_or(0);
        for &w in &succ[v] {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist.into_iter()
        .map(|d| d.map_or(UNREACHABLE_POSITION, |d| d.min(MAX_POSITION)))
        .collect()
}
