use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::penman::{AmrGraph, NodeKind};
use crate::graph::NodeId;

/// Strips a trailing `-NN` sense number from a concept.
pub fn strip_sense(concept: &str) -> &str {
    match concept.rsplit_once('-') {
        Some((stem, sense))
            if !stem.is_empty() && !sense.is_empty() && sense.bytes().all(|b| b.is_ascii_digit()) =>
        {
            stem
        }
        _ => concept,
    }
}

/// Removes sense numbers from concepts and deletes every subgraph hanging
/// off a `:wiki` role. Nodes still reachable from the root through other
/// roles are kept.
pub fn simplify(g: &AmrGraph) -> AmrGraph {
    let mut out = g.clone();
    for n in 0..out.graph.node_count() {
        if let NodeKind::Variable(_) = out.kinds[n] {
            let stripped = strip_sense(out.graph.label(n)).to_string();
            out.graph.set_label(n, stripped);
        }
    }
    let before = out.graph.reachable_from_root();
    out.graph.retain_edges(|e| e.label != "wiki");
    let after = out.graph.reachable_from_root();
    let keep: Vec<bool> = before.iter().zip(&after).map(|(&b, &a)| a || !b).collect();
    out.retain_nodes(&keep);
    out
}

/// Maps entity concepts to coarse types. Unlisted concepts get the fallback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityTypeTable {
    types: BTreeMap<String, String>,
    fallback: Option<String>,
}

const PERSON: &[&str] = &["person", "family", "animal", "language", "nationality", "ethnic-group", "regional-group", "religious-group", "political-movement"];
const LOC: &[&str] = &[
    "location", "city", "city-district", "county", "state", "province", "territory", "country",
    "local-region", "country-region", "world-region", "continent", "ocean", "sea", "lake", "river",
    "gulf", "bay", "strait", "canal", "peninsula", "mountain", "volcano", "valley", "canyon",
    "island", "desert", "forest", "moon", "planet", "star", "constellation", "facility", "airport",
    "station", "port", "tunnel", "bridge", "road", "square", "building", "park", "palace",
];
const ORG: &[&str] = &[
    "organization", "company", "government-organization", "military", "criminal-organization",
    "political-party", "market-sector", "school", "university", "research-institute", "team",
    "league",
];

impl EntityTypeTable {
    /// No clustering: every entity keeps its own concept.
    pub fn identity() -> Self {
        EntityTypeTable {
            types: BTreeMap::new(),
            fallback: None,
        }
    }

    /// Four coarse types: `person`, `loc`, `org` and `other`.
    pub fn coarse() -> Self {
        let mut types = BTreeMap::new();
        for (ty, concepts) in [("person", PERSON), ("loc", LOC), ("org", ORG)] {
            for c in concepts {
                types.insert(c.to_string(), ty.to_string());
            }
        }
        EntityTypeTable {
            types,
            fallback: Some("other".into()),
        }
    }

    pub fn from_pairs<I, A, B>(pairs: I, fallback: Option<String>) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        EntityTypeTable {
            types: pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
            fallback,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.types.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn fallback(&self) -> Option<&str> {
        self.fallback.as_deref()
    }

    pub fn coarse_type<'a>(&'a self, concept: &'a str) -> &'a str {
        self.types
            .get(concept)
            .map(String::as_str)
            .or(self.fallback.as_deref())
            .unwrap_or(concept)
    }
}

impl Default for EntityTypeTable {
    fn default() -> Self {
        Self::coarse()
    }
}

/// Surface tokens `start..end` aligned to a graph node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub node: NodeId,
    pub start: usize,
    pub end: usize,
}

/// Resolves an alignment path such as `0.1.0`: `0` is the root and each
/// further index picks an outgoing role in written order (counting roles
/// that point at constants or at already defined variables).
pub fn resolve_path(g: &AmrGraph, path: &str) -> Option<NodeId> {
    let mut parts = path.split('.');
    if parts.next()? != "0" {
        return None;
    }
    let mut node = g.graph.root();
    for p in parts {
        let i: usize = p.parse().ok()?;
        node = g.children(node).nth(i)?.1;
    }
    Some(node)
}

/// Ordered anonymised-token → original-token map of one sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnonymizationMap {
    pub entries: Vec<(String, Vec<String>)>,
}

impl AnonymizationMap {
    pub fn get(&self, token: &str) -> Option<&[String]> {
        self.entries
            .iter()
            .find(|(t, _)| t == token)
            .map(|(_, v)| v.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn insert(&mut self, token: String, values: Vec<String>) {
        match self.entries.iter_mut().find(|(t, _)| *t == token) {
            Some(slot) => slot.1 = values,
            None => self.entries.push((token, values)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnonymizeError {
    #[error("alignment refers to node {node}, but the graph has {nodes} nodes")]
    UnknownNode { node: NodeId, nodes: usize },
    #[error("alignment span {start}..{end} outside a sentence of {len} tokens")]
    BadSpan { start: usize, end: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anonymized {
    pub graph: AmrGraph,
    pub tokens: Vec<String>,
    pub map: AnonymizationMap,
    /// Anonymised graph tokens with no aligned surface span.
    pub unaligned: Vec<String>,
}

const MONTHS: [&str; 12] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September",
    "October", "November", "December",
];

fn ordinal(n: &str) -> String {
    let v: u32 = n.parse().unwrap_or(0);
    let suffix = match (v % 10, v % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    alloc::format!("{n}{suffix}")
}

fn month_name(n: &str) -> Option<&'static str> {
    let v: usize = n.parse().ok()?;
    MONTHS.get(v.checked_sub(1)?).copied()
}

/// What one graph node becomes and which surface tokens it can claim.
struct Entity {
    /// Nodes whose alignments belong to the entity.
    members: Vec<NodeId>,
    token: String,
    names: Vec<String>,
    kind: EntityKind,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum EntityKind {
    Name,
    Year,
    Month,
    Day,
}

/// Collapses `:name` subgraphs and anonymises `date-entity` parts.
///
/// Entity nodes are visited depth-first from the root. A node with a
/// `:name` role is relabelled `type_i`, where the type comes from `types`
/// and `i` counts entities of that type, and its name subgraph is removed.
/// Constants under a `date-entity` through `:year`, `:month` or `:day`
/// become `year_i`, `month_i` and `day_i`. Aligned surface runs are
/// replaced by the same token (months and days split into `*_name_i` and
/// `*_number_i` by their surface form). The map holds the aligned surface
/// tokens when an alignment exists and the graph's names otherwise.
pub fn anonymize(
    g: &AmrGraph,
    alignments: &[Alignment],
    surface: &[String],
    types: &EntityTypeTable,
) -> Result<Anonymized, AnonymizeError> {
    let n = g.graph.node_count();
    for a in alignments {
        if a.node >= n {
            return Err(AnonymizeError::UnknownNode { node: a.node, nodes: n });
        }
        if a.start >= a.end || a.end > surface.len() {
            return Err(AnonymizeError::BadSpan {
                start: a.start,
                end: a.end,
                len: surface.len(),
            });
        }
    }
    let mut out = g.clone();
    let mut remove = vec![false; n];
    let mut entities: Vec<Entity> = Vec::new();
    let mut counters: BTreeMap<String, usize> = BTreeMap::new();
    let mut next_index = |ty: &str| {
        let c = counters.entry(ty.to_string()).or_insert(0);
        *c += 1;
        alloc::format!("{ty}_{}", *c - 1)
    };
    for v in dfs_order(g) {
        if remove[v] || g.is_constant(v) {
            continue;
        }
        if let Some(name) = g.children(v).find(|(r, _)| *r == "name").map(|(_, c)| c) {
            let ty = types.coarse_type(g.graph.label(v));
            let token = next_index(ty);
            let mut sub = Vec::new();
            collect_subgraph(g, name, v, &mut sub);
            let names: Vec<String> = sub
                .iter()
                .filter(|&&m| m != name && g.is_constant(m))
                .map(|&m| g.graph.label(m).to_string())
                .collect();
            for &m in &sub {
                remove[m] = true;
            }
            out.graph.set_label(v, token.clone());
            let mut members = vec![v];
            members.extend(&sub);
            entities.push(Entity {
                members,
                token,
                names,
                kind: EntityKind::Name,
            });
        } else if g.graph.label(v) == "date-entity" {
            for (role, c) in g.children(v) {
                let kind = match role {
                    "year" => EntityKind::Year,
                    "month" => EntityKind::Month,
                    "day" => EntityKind::Day,
                    _ => continue,
                };
                if !g.is_constant(c) {
                    continue;
                }
                let token = next_index(role);
                out.graph.set_label(c, token.clone());
                out.kinds[c] = NodeKind::Constant { quoted: false };
                entities.push(Entity {
                    members: vec![c],
                    token,
                    names: vec![g.graph.label(c).to_string()],
                    kind,
                });
            }
        }
    }
    // Surface side: tag every aligned token with its entity, then collapse
    // runs of the same entity into one token.
    let mut owner: Vec<Option<usize>> = vec![None; surface.len()];
    let mut aligned = vec![false; entities.len()];
    for a in alignments {
        if let Some(e) = entities.iter().position(|e| e.members.contains(&a.node)) {
            aligned[e] = true;
            for slot in &mut owner[a.start..a.end] {
                *slot = Some(e);
            }
        }
    }
    let mut map = AnonymizationMap::default();
    let mut tokens = Vec::new();
    let mut seen_span = vec![false; entities.len()];
    let mut i = 0;
    while i < surface.len() {
        let Some(e) = owner[i] else {
            tokens.push(surface[i].clone());
            i += 1;
            continue;
        };
        let mut j = i + 1;
        while j < surface.len() && owner[j] == Some(e) {
            j += 1;
        }
        let span: Vec<String> = surface[i..j].to_vec();
        let ent = &entities[e];
        let token = match ent.kind {
            EntityKind::Name | EntityKind::Year => ent.token.clone(),
            EntityKind::Month | EntityKind::Day => {
                let (stem, idx) = ent.token.rsplit_once('_').unwrap_or((&ent.token, "0"));
                let numeric = span.iter().all(|t| t.bytes().all(|b| b.is_ascii_digit()));
                let form = if numeric { "number" } else { "name" };
                alloc::format!("{stem}_{form}_{idx}")
            }
        };
        if !seen_span[e] || map.get(&token).is_none() {
            map.insert(token.clone(), span);
            seen_span[e] = true;
        }
        tokens.push(token);
        i = j;
    }
    let mut unaligned = Vec::new();
    for (e, ent) in entities.iter().enumerate() {
        if map.get(&ent.token).is_none() {
            map.insert(ent.token.clone(), ent.names.clone());
        }
        let (stem, idx) = ent.token.rsplit_once('_').unwrap_or((&ent.token, "0"));
        match ent.kind {
            EntityKind::Month => {
                let value = &ent.names[0];
                let name = month_name(value).map_or_else(|| value.clone(), str::to_string);
                fill(&mut map, alloc::format!("{stem}_name_{idx}"), name);
                fill(&mut map, alloc::format!("{stem}_number_{idx}"), value.clone());
            }
            EntityKind::Day => {
                let value = &ent.names[0];
                fill(&mut map, alloc::format!("{stem}_name_{idx}"), ordinal(value));
                fill(&mut map, alloc::format!("{stem}_number_{idx}"), value.clone());
            }
            _ => {}
        }
        if !aligned[e] {
            unaligned.push(ent.token.clone());
        }
    }
    let keep: Vec<bool> = remove.iter().map(|r| !r).collect();
    out.retain_nodes(&keep);
    Ok(Anonymized {
        graph: out,
        tokens: if alignments.is_empty() { surface.to_vec() } else { tokens },
        map,
        unaligned,
    })
}

fn fill(map: &mut AnonymizationMap, token: String, value: String) {
    if map.get(&token).is_none() {
        map.insert(token, vec![value]);
    }
}

/// Nodes in depth-first order from the root, each once.
fn dfs_order(g: &AmrGraph) -> Vec<NodeId> {
    let mut seen = vec![false; g.graph.node_count()];
    let mut order = Vec::new();
    let mut stack = vec![g.graph.root()];
    while let Some(v) = stack.pop() {
        if core::mem::replace(&mut seen[v], true) {
            continue;
        }
        order.push(v);
        let children: Vec<NodeId> = g.children(v).map(|(_, c)| c).collect();
        stack.extend(children.into_iter().rev());
    }
    order
}

/// The subgraph below `start` in depth-first order, not passing `stop`.
fn collect_subgraph(g: &AmrGraph, start: NodeId, stop: NodeId, out: &mut Vec<NodeId>) {
    if start == stop || out.contains(&start) {
        return;
    }
    out.push(start);
    let children: Vec<NodeId> = g.children(start).map(|(_, c)| c).collect();
    for c in children {
        collect_subgraph(g, c, stop, out);
    }
}

/// Replaces every token found in the map by its original tokens.
pub fn deanonymize(tokens: &[String], map: &AnonymizationMap) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens {
        match map.get(t) {
            Some(orig) => out.extend(orig.iter().cloned()),
            None => out.push(t.clone()),
        }
    }
    out
}
