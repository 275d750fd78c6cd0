//! Finite-difference checks of the encoder and of the full model on a
//! micro instance.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    encode, padded_memory, sequence_loss, DecoderConfig, EncoderConfig, GraphInput, Model,
    ModelConfig, ModelError, TargetBatch,
};
use crate::graph::{augment, to_levi, EdgeTag, LabeledGraph};
use crate::tensor::{
    finite_difference_check, Fault, GradCheckConfig, GradCheckError, GradCheckReport, ParamStore,
    Tape,
};

/// Tiny model: every dimension small enough for exhaustive checking.
pub fn micro_config(tags: &[EdgeTag]) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            layers: 2,
            hidden: 6,
            position_dim: 2,
            tags: tags.to_vec(),
            dropout: 0.5,
        },
        decoder: DecoderConfig {
            layers: 2,
            hidden: 5,
            embed: 4,
        },
        src_vocab: 9,
        tgt_vocab: 8,
    }
}

/// A 3-node graph with a reentrancy, and a 4-token target.
pub fn micro_instance() -> (GraphInput, Vec<u32>) {
    let mut g = LabeledGraph::new("want-01");
    let boy = g.add_node("boy");
    let go = g.add_node("go-02");
    g.add_edge(Some(0), boy, "ARG0").expect("valid node");
    g.add_edge(Some(0), go, "ARG1").expect("valid node");
    g.add_edge(Some(go), boy, "ARG0").expect("valid node");
    let levi = augment(&to_levi(&g)).expect("fresh graph").with_positions();
    let table = ["want-01", "boy", "go-02", "ARG0", "ARG1"];
    let input = GraphInput::from_levi(&levi, |l| {
        table
            .iter()
            .position(|&t| t == l)
            .map_or(1, |i| i as u32 + 4)
    })
    .expect("positions computed");
    (input, vec![4, 6, 5, 7])
}

type Eval = fn(
    &Model<f64>,
    &GraphInput,
    &[u32],
    Option<Fault>,
    bool,
) -> Result<(f64, Vec<Vec<f64>>), ModelError>;

fn with_tape(
    model: &Model<f64>,
    fault: Option<Fault>,
    grads: bool,
    build: impl for<'p> FnOnce(
        &mut Tape<'p, f64>,
        &[crate::tensor::Var],
    ) -> Result<crate::tensor::Var, ModelError>,
) -> Result<(f64, Vec<Vec<f64>>), ModelError> {
    let mut tape = fault.map_or_else(Tape::new, Tape::with_fault);
    let vars = model.params().bind(&mut tape, grads)?;
    let loss = build(&mut tape, &vars)?;
    let value = tape.value(loss)[0];
    let grads = if grads {
        model.params().collect_grads(&vars, tape.backward(loss)?)
    } else {
        Vec::new()
    };
    Ok((value, grads))
}

fn full_loss(
    model: &Model<f64>,
    graph: &GraphInput,
    target: &[u32],
    fault: Option<Fault>,
    grads: bool,
) -> Result<(f64, Vec<Vec<f64>>), ModelError> {
    let batch = model.graph_batch(&[graph])?;
    let targets = TargetBatch::new(&[target], 2, 3, 0)?;
    with_tape(model, fault, grads, |tape, vars| {
        let h = encode::<f64, ChaCha8Rng>(
            tape,
            vars,
            model.encoder_params(),
            &model.config().encoder,
            &batch,
            None,
        )?;
        let memory = padded_memory(tape, h, &batch)?;
        sequence_loss(
            tape,
            vars,
            model.decoder_params(),
            &model.config().decoder,
            &memory,
            &targets,
        )
    })
}

fn encoder_readout(
    model: &Model<f64>,
    graph: &GraphInput,
    _target: &[u32],
    fault: Option<Fault>,
    grads: bool,
) -> Result<(f64, Vec<Vec<f64>>), ModelError> {
    let batch = model.graph_batch(&[graph])?;
    let d = model.config().encoder.hidden;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dist = Uniform::new(-1.0, 1.0).expect("valid range");
    let weights: Vec<f64> = (0..graph.node_count() * d)
        .map(|_| dist.sample(&mut rng))
        .collect();
    with_tape(model, fault, grads, |tape, vars| {
        let h = encode::<f64, ChaCha8Rng>(
            tape,
            vars,
            model.encoder_params(),
            &model.config().encoder,
            &batch,
            None,
        )?;
        let w = tape.constant(weights, graph.node_count(), d)?;
        let weighted = tape.mul(h, w)?;
        Ok(tape.sum(weighted)?)
    })
}

fn run(
    eval: Eval,
    config: ModelConfig,
    gc: &GradCheckConfig,
    fault: Option<Fault>,
) -> Result<GradCheckReport, GradCheckError<ModelError>> {
    let model = Model::<f64>::new(config.clone(), gc.seed).map_err(GradCheckError::Loss)?;
    let (graph, target) = micro_instance();
    let (_, grads) = eval(&model, &graph, &target, fault, true).map_err(GradCheckError::Loss)?;
    let mut store: ParamStore<f64> = model.params().clone();
    finite_difference_check(&mut store, &grads, gc, |s| {
        let m = Model::from_params(config.clone(), s.clone())?;
        eval(&m, &graph, &target, None, false).map(|r| r.0)
    })
}

/// Encoder followed by a fixed random linear readout.
pub fn check_encoder(
    tags: &[EdgeTag],
    gc: &GradCheckConfig,
    fault: Option<Fault>,
) -> Result<GradCheckReport, GradCheckError<ModelError>> {
    run(encoder_readout, micro_config(tags), gc, fault)
}

/// Encoder, decoder and teacher-forced loss on the micro instance.
pub fn check_full_model(
    tags: &[EdgeTag],
    gc: &GradCheckConfig,
    fault: Option<Fault>,
) -> Result<GradCheckReport, GradCheckError<ModelError>> {
    run(full_loss, micro_config(tags), gc, fault)
}
