use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use super::ModelError;
use crate::graph::{EdgeTag, LeviGraph, POSITION_COUNT};
use crate::tensor::{ParamId, Real, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    /// Width `d_h` of node states.
    pub hidden: usize,
    /// Width of the positional embedding; node-label embeddings take the
    /// remaining `hidden - position_dim` columns.
    pub position_dim: usize,
    /// Edge tags with their own propagation parameters, in block order.
    pub tags: Vec<EdgeTag>,
    /// Dropout on the input embeddings during training.
    pub dropout: f64,
}

pub const BASE_TAGS: [EdgeTag; 3] = [EdgeTag::Default, EdgeTag::Reverse, EdgeTag::SelfLoop];

impl EncoderConfig {
    fn with(hidden: usize, tags: &[EdgeTag]) -> Self {
        EncoderConfig {
            layers: 8,
            hidden,
            position_dim: 64,
            tags: tags.to_vec(),
            dropout: 0.5,
        }
    }

    pub fn amr() -> Self {
        Self::with(576, &BASE_TAGS)
    }

    pub fn nmt() -> Self {
        Self::with(512, &BASE_TAGS)
    }

    pub fn nmt_plus() -> Self {
        Self::with(448, &EdgeTag::ALL)
    }

    pub fn node_dim(&self) -> usize {
        self.hidden - self.position_dim
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.layers == 0 {
            return bad("encoder needs at least one layer".into());
        }
        if self.position_dim == 0 || self.position_dim >= self.hidden {
            return bad(format!(
                "positional width {} must be in 1..{}",
                self.position_dim, self.hidden
            ));
        }
        if self.tags.is_empty() {
            return bad("empty edge tag set".into());
        }
        for (i, t) in self.tags.iter().enumerate() {
            if self.tags[..i].contains(t) {
                return bad(format!("edge tag {t} listed twice"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// Size of the propagation block: three `d_h x d_h` matrices and three bias
/// vectors per edge tag.
pub fn ggnn_param_count(tags: usize, hidden: usize) -> usize {
    tags * (3 * hidden * hidden + 3 * hidden)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagParams {
    pub tag: EdgeTag,
    pub w_r: ParamId,
    pub w_z: ParamId,
    pub w: ParamId,
    pub b_r: ParamId,
    pub b_z: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub node_emb: ParamId,
    pub pos_emb: ParamId,
    pub blocks: Vec<TagParams>,
}

impl EncoderParams {
    /// Every propagation parameter, excluding the embedding tables.
    pub fn propagation_ids(&self) -> Vec<ParamId> {
        self.blocks
            .iter()
            .flat_map(|b| [b.w_r, b.w_z, b.w, b.b_r, b.b_z, b.b])
            .collect()
    }
}

pub(super) fn encoder_layout(
    cfg: &EncoderConfig,
    vocab: usize,
    out: &mut Vec<(String, usize, usize)>,
) {
    let d = cfg.hidden;
    out.push(("enc.node_emb".into(), vocab, cfg.node_dim()));
    out.push(("enc.pos_emb".into(), POSITION_COUNT, cfg.position_dim));
    for t in &cfg.tags {
        for (name, rows) in [
            ("w_r", d),
            ("w_z", d),
            ("w", d),
            ("b_r", 1),
            ("b_z", 1),
            ("b", 1),
        ] {
            out.push((format!("enc.{t}.{name}"), rows, d));
        }
    }
}

pub(super) fn encoder_params(cfg: &EncoderConfig, next: &mut usize) -> EncoderParams {
    let mut take = || {
        *next += 1;
        ParamId(*next - 1)
    };
    let node_emb = take();
    let pos_emb = take();
    let blocks = cfg
        .tags
        .iter()
        .map(|&tag| TagParams {
            tag,
            w_r: take(),
            w_z: take(),
            w: take(),
            b_r: take(),
            b_z: take(),
            b: take(),
        })
        .collect();
    EncoderParams {
        node_emb,
        pos_emb,
        blocks,
    }
}

/// Encoder input for one graph: vocabulary ids, positions and tagged edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphInput {
    pub labels: Vec<u32>,
    pub positions: Vec<u32>,
    pub edges: Vec<(usize, usize, EdgeTag)>,
}

impl GraphInput {
    pub fn from_levi(
        g: &LeviGraph,
        mut lookup: impl FnMut(&str) -> u32,
    ) -> Result<Self, ModelError> {
        if g.node_count() == 0 {
            return Err(ModelError::EmptyGraph);
        }
        if !g.has_positions() {
            return Err(ModelError::MissingPositions);
        }
        Ok(GraphInput {
            labels: g.nodes().iter().map(|n| lookup(&n.label)).collect(),
            positions: g.positions().to_vec(),
            edges: g.edges().iter().map(|e| (e.src, e.dst, e.tag)).collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }
}

/// Per-tag edge lists of a batch, with node ids offset into the disjoint
/// union of its graphs.
#[derive(Debug, Clone)]
pub(crate) struct TagEdges {
    pub src: Vec<Option<u32>>,
    pub dst: Vec<u32>,
    /// Number of incoming edges of this tag per node.
    pub counts: Vec<f64>,
}

/// Several graphs encoded together as one disjoint union.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub(crate) labels: Vec<u32>,
    pub(crate) positions: Vec<Option<u32>>,
    pub(crate) tags: Vec<TagEdges>,
    pub(crate) inv_degree: Vec<f64>,
    pub(crate) offsets: Vec<usize>,
    pub(crate) sizes: Vec<usize>,
}

impl GraphBatch {
    pub fn new(
        graphs: &[&GraphInput],
        cfg: &EncoderConfig,
        src_vocab: usize,
    ) -> Result<Self, ModelError> {
        if graphs.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let total: usize = graphs.iter().map(|g| g.node_count()).sum();
        let mut batch = GraphBatch {
            labels: Vec::with_capacity(total),
            positions: Vec::with_capacity(total),
            tags: cfg
                .tags
                .iter()
                .map(|_| TagEdges {
                    src: Vec::new(),
                    dst: Vec::new(),
                    counts: vec![0.0; total],
                })
                .collect(),
            inv_degree: vec![0.0; total],
            offsets: Vec::with_capacity(graphs.len()),
            sizes: Vec::with_capacity(graphs.len()),
        };
        for (gi, g) in graphs.iter().enumerate() {
            let n = g.node_count();
            if n == 0 {
                return Err(ModelError::EmptyGraph);
            }
            if g.positions.len() != n {
                return Err(ModelError::MissingPositions);
            }
            let offset = batch.labels.len();
            for &l in &g.labels {
                if l as usize >= src_vocab {
                    return Err(ModelError::TokenOutOfRange {
                        token: l,
                        vocab: src_vocab,
                    });
                }
            }
            batch.labels.extend_from_slice(&g.labels);
            batch.positions.extend(
                g.positions
                    .iter()
                    .map(|&p| Some(p.min(POSITION_COUNT as u32 - 1))),
            );
            for &(s, d, tag) in &g.edges {
                if s >= n || d >= n {
                    return Err(ModelError::Config(format!(
                        "graph {gi} has an edge outside its nodes"
                    )));
                }
                let t = cfg
                    .tags
                    .iter()
                    .position(|&x| x == tag)
                    .ok_or(ModelError::UnknownTag(tag))?;
                let edges = &mut batch.tags[t];
                edges.src.push(Some((offset + s) as u32));
                edges.dst.push((offset + d) as u32);
                edges.counts[offset + d] += 1.0;
                batch.inv_degree[offset + d] += 1.0;
            }
            for v in 0..n {
                let deg = batch.inv_degree[offset + v];
                if deg == 0.0 {
                    return Err(ModelError::IsolatedNode { graph: gi, node: v });
                }
                batch.inv_degree[offset + v] = 1.0 / deg;
            }
            batch.offsets.push(offset);
            batch.sizes.push(n);
        }
        Ok(batch)
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn graph_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn max_nodes(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }
}

fn to_t<T: Real>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|&x| T::from_f64(x)).collect()
}

/// Initial node states: label embedding concatenated with positional
/// embedding, with dropout when `rng` is given.
pub fn embed_nodes<'p, T: Real, R: RngCore + ?Sized>(
    tape: &mut Tape<'p, T>,
    vars: &[Var],
    p: &EncoderParams,
    cfg: &EncoderConfig,
    batch: &GraphBatch,
    rng: Option<&mut R>,
) -> Result<Var, ModelError> {
    let labels = tape.embedding(vars[p.node_emb.0], &batch.labels)?;
    let positions = tape.gather_rows(vars[p.pos_emb.0], batch.positions.clone())?;
    let x = tape.concat_cols(&[labels, positions])?;
    Ok(match rng {
        Some(rng) => tape.dropout(x, cfg.dropout, rng)?,
        None => x,
    })
}

/// Layer-invariant quantities of the propagation block: joined gate
/// matrices and the per-node bias sums.
pub struct Propagation {
    w_rz: Vec<Var>,
    w: Vec<Var>,
    bias_rz: Option<Var>,
    bias: Option<Var>,
}

impl Propagation {
    pub fn new<'p, T: Real>(
        tape: &mut Tape<'p, T>,
        vars: &[Var],
        p: &EncoderParams,
        batch: &GraphBatch,
    ) -> Result<Self, ModelError> {
        let mut prop = Propagation {
            w_rz: Vec::new(),
            w: Vec::new(),
            bias_rz: None,
            bias: None,
        };
        for (block, edges) in p.blocks.iter().zip(&batch.tags) {
            prop.w_rz
                .push(tape.concat_cols(&[vars[block.w_r.0], vars[block.w_z.0]])?);
            prop.w.push(vars[block.w.0]);
            if edges.dst.is_empty() {
                continue;
            }
            // Every incoming edge contributes its tag's bias once.
            let b_rz = tape.concat_cols(&[vars[block.b_r.0], vars[block.b_z.0]])?;
            let b_rz = tape.outer_row(b_rz, to_t(&edges.counts))?;
            let b = tape.outer_row(vars[block.b.0], to_t(&edges.counts))?;
            prop.bias_rz = Some(match prop.bias_rz {
                Some(acc) => tape.add(acc, b_rz)?,
                None => b_rz,
            });
            prop.bias = Some(match prop.bias {
                Some(acc) => tape.add(acc, b)?,
                None => b,
            });
        }
        Ok(prop)
    }
}

fn aggregate<'p, T: Real>(
    tape: &mut Tape<'p, T>,
    h: Var,
    batch: &GraphBatch,
    weights: &[Var],
    bias: Option<Var>,
) -> Result<Var, ModelError> {
    let n = batch.node_count();
    let mut acc = bias;
    for (edges, &w) in batch.tags.iter().zip(weights) {
        if edges.dst.is_empty() {
            continue;
        }
        let msgs = tape.gather_rows(h, edges.src.clone())?;
        let summed = tape.scatter_rows(msgs, edges.dst.clone(), n)?;
        let projected = tape.matmul(summed, w)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, projected)?,
            None => projected,
        });
    }
    let acc = acc.ok_or(ModelError::EmptyGraph)?;
    Ok(tape.scale_rows(acc, to_t(&batch.inv_degree))?)
}

/// One gated propagation step over all edge tags.
pub fn ggnn_layer<'p, T: Real>(
    tape: &mut Tape<'p, T>,
    prop: &Propagation,
    batch: &GraphBatch,
    h: Var,
) -> Result<Var, ModelError> {
    let d = tape.shape(h).1;
    let rz = aggregate(tape, h, batch, &prop.w_rz, prop.bias_rz)?;
    let rz = tape.sigmoid(rz)?;
    let r = tape.slice_cols(rz, 0, d)?;
    let z = tape.slice_cols(rz, d, d)?;
    let reset = tape.mul(r, h)?;
    let candidate = aggregate(tape, reset, batch, &prop.w, prop.bias)?;
    let candidate = tape.tanh(candidate)?;
    let delta = tape.sub(candidate, h)?;
    let step = tape.mul(z, delta)?;
    Ok(tape.add(h, step)?)
}

/// Embeds the batch and applies `cfg.layers` tied propagation steps.
/// Returns one row per node of the disjoint union.
pub fn encode<'p, T: Real, R: RngCore + ?Sized>(
    tape: &mut Tape<'p, T>,
    vars: &[Var],
    p: &EncoderParams,
    cfg: &EncoderConfig,
    batch: &GraphBatch,
    rng: Option<&mut R>,
) -> Result<Var, ModelError> {
    encode_layers(tape, vars, p, cfg, batch, rng, cfg.layers)
}

/// As [`encode`] with an explicit number of layers (zero returns the
/// embeddings).
pub fn encode_layers<'p, T: Real, R: RngCore + ?Sized>(
    tape: &mut Tape<'p, T>,
    vars: &[Var],
    p: &EncoderParams,
    cfg: &EncoderConfig,
    batch: &GraphBatch,
    rng: Option<&mut R>,
    layers: usize,
) -> Result<Var, ModelError> {
    let mut h = embed_nodes(tape, vars, p, cfg, batch, rng)?;
    if layers == 0 {
        return Ok(h);
    }
    let prop = Propagation::new(tape, vars, p, batch)?;
    for _ in 0..layers {
        h = ggnn_layer(tape, &prop, batch, h)?;
    }
    Ok(h)
}
