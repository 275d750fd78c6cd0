mod support;

use g2s_core::graph::{EdgeTag, POSITION_COUNT};
use g2s_core::model::{
    attention, encode_layers, ggnn_param_count, micro_config, micro_instance, DecoderConfig, Encoded,
    EncoderConfig, GraphInput, Memory, Model, ModelConfig, ModelError, TargetBatch, BASE_TAGS,
};
use g2s_core::tensor::{log_softmax_rows, Real, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::graphs::{label_id, prepared, random_permutation, LABEL_VOCAB};
use support::oracle::{self, rows, Mat};

fn hand_set(name: &str, r: usize, c: usize) -> Vec<f64> {
    let salt = name.bytes().map(|b| b as f64).sum::<f64>();
    (0..r * c).map(|i| 0.6 * ((i as f64) * 0.731 + salt * 0.37).sin()).collect()
}

fn param(model: &Model<f64>, name: &str) -> Mat {
    let p = model.params().get(model.params().by_name(name).unwrap());
    rows(&p.values, p.cols)
}

fn tag_weights(model: &Model<f64>, tag: EdgeTag) -> oracle::TagWeights {
    let v = |n: &str| param(model, &format!("enc.{tag}.{n}"));
    oracle::TagWeights {
        w_r: v("w_r"),
        w_z: v("w_z"),
        w: v("w"),
        b_r: v("b_r").remove(0),
        b_z: v("b_z").remove(0),
        b: v("b").remove(0),
    }
}

fn oracle_decoder(model: &Model<f64>) -> oracle::Decoder {
    let layers = model.config().decoder.layers;
    oracle::Decoder {
        emb: param(model, "dec.emb"),
        lstm: (0..layers)
            .map(|l| oracle::Lstm {
                w_x: param(model, &format!("dec.lstm{l}.w_x")),
                w_h: param(model, &format!("dec.lstm{l}.w_h")),
                b: param(model, &format!("dec.lstm{l}.b")).remove(0),
            })
            .collect(),
        w_init: param(model, "dec.w_init"),
        w_a: param(model, "dec.w_a"),
        w_o: param(model, "dec.w_o"),
        w_v: param(model, "dec.w_v"),
        b_v: param(model, "dec.b_v").remove(0),
    }
}

fn encode_with<T: Real>(model: &Model<T>, graphs: &[&GraphInput], layers: usize) -> Vec<T> {
    let batch = model.graph_batch(graphs).unwrap();
    let mut tape = Tape::new();
    let vars = model.params().bind(&mut tape, false).unwrap();
    let h = encode_layers::<T, ChaCha8Rng>(
        &mut tape,
        &vars,
        model.encoder_params(),
        &model.config().encoder,
        &batch,
        None,
        layers,
    )
    .unwrap();
    tape.value(h).to_vec()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn flat(m: &Mat) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

fn oracle_embeddings(model: &Model<f64>, g: &GraphInput) -> Mat {
    let node = param(model, "enc.node_emb");
    let pos = param(model, "enc.pos_emb");
    g.labels
        .iter()
        .zip(&g.positions)
        .map(|(&l, &p)| node[l as usize].iter().chain(&pos[p as usize]).copied().collect())
        .collect()
}

fn oracle_edges(g: &GraphInput, tags: &[EdgeTag]) -> Vec<(usize, usize, usize)> {
    g.edges
        .iter()
        .map(|&(s, d, t)| (s, d, tags.iter().position(|&x| x == t).unwrap()))
        .collect()
}

#[test]
fn ggnn_layer_matches_scalar_oracle() {
    let config = micro_config(&BASE_TAGS);
    let model = Model::with_init(config.clone(), hand_set).unwrap();
    let (g, _) = micro_instance();
    let h0 = oracle_embeddings(&model, &g);
    assert!(max_diff(&encode_with(&model, &[&g], 0), &flat(&h0)) == 0.0);
    let tags: Vec<_> = BASE_TAGS.iter().map(|&t| tag_weights(&model, t)).collect();
    let edges = oracle_edges(&g, &BASE_TAGS);
    let h1 = oracle::ggnn_layer(&h0, &edges, &tags);
    assert!(max_diff(&encode_with(&model, &[&g], 1), &flat(&h1)) < 1e-12);
    let h2 = oracle::ggnn_layer(&h1, &edges, &tags);
    assert!(max_diff(&encode_with(&model, &[&g], 2), &flat(&h2)) < 1e-12);
}

#[test]
fn ggnn_two_node_hand_case() {
    let mut config = micro_config(&BASE_TAGS);
    config.encoder.hidden = 2;
    config.encoder.position_dim = 1;
    let model = Model::with_init(config, hand_set).unwrap();
    let g = GraphInput {
        labels: vec![4, 5],
        positions: vec![0, 1],
        edges: vec![
            (0, 1, EdgeTag::Default),
            (1, 0, EdgeTag::Reverse),
            (0, 0, EdgeTag::SelfLoop),
            (1, 1, EdgeTag::SelfLoop),
        ],
    };
    let h0 = oracle_embeddings(&model, &g);
    let tags: Vec<_> = BASE_TAGS.iter().map(|&t| tag_weights(&model, t)).collect();
    let h1 = oracle::ggnn_layer(&h0, &oracle_edges(&g, &BASE_TAGS), &tags);
    assert!(max_diff(&encode_with(&model, &[&g], 1), &flat(&h1)) < 1e-12);
}

#[test]
fn zero_weights_halve_the_state() {
    let config = micro_config(&BASE_TAGS);
    let model = Model::with_init(config, |name, r, c| {
        if name.starts_with("enc.") && !name.contains("emb") {
            vec![0.0; r * c]
        } else {
            hand_set(name, r, c)
        }
    })
    .unwrap();
    let g = GraphInput {
        labels: vec![6],
        positions: vec![0],
        edges: vec![(0, 0, EdgeTag::SelfLoop)],
    };
    let h0 = encode_with(&model, &[&g], 0);
    let h1 = encode_with(&model, &[&g], 1);
    for (a, b) in h0.iter().zip(&h1) {
        assert_eq!(*b, 0.5 * a);
    }
}

#[test]
fn normalisation_uses_in_degree() {
    // With only biases, the pre-activation is c_v * (count * b) = b for any
    // in-degree, so the candidate must not depend on the number of edges.
    let config = micro_config(&BASE_TAGS);
    let model = Model::with_init(config, |name, r, c| {
        if name.starts_with("enc.") && name.contains(".w") {
            vec![0.0; r * c]
        } else {
            hand_set(name, r, c)
        }
    })
    .unwrap();
    let star = GraphInput {
        labels: vec![4, 5, 6, 7],
        positions: vec![0, 1, 1, 1],
        edges: vec![
            (1, 0, EdgeTag::Reverse),
            (2, 0, EdgeTag::Reverse),
            (3, 0, EdgeTag::Reverse),
            (0, 1, EdgeTag::Reverse),
            (0, 2, EdgeTag::Reverse),
            (0, 3, EdgeTag::Reverse),
        ],
    };
    let h0 = encode_with(&model, &[&star], 0);
    let h1 = encode_with(&model, &[&star], 1);
    let d = model.config().encoder.hidden;
    let b = param(&model, "enc.reverse.b").remove(0);
    let bz = param(&model, "enc.reverse.b_z").remove(0);
    for k in 0..d {
        let z = oracle::sigmoid(bz[k]);
        let expected = (1.0 - z) * h0[k] + z * b[k].tanh();
        assert!((h1[k] - expected).abs() < 1e-15);
    }
}

#[test]
fn forced_closed_update_gate_is_a_fixed_point() {
    let config = micro_config(&BASE_TAGS);
    let model = Model::with_init(config, |name, r, c| {
        if name.ends_with(".b_z") {
            vec![-1e4; r * c]
        } else if name.ends_with(".w_z") {
            vec![0.0; r * c]
        } else {
            hand_set(name, r, c)
        }
    })
    .unwrap();
    let (g, _) = micro_instance();
    assert_eq!(encode_with(&model, &[&g], 0), encode_with(&model, &[&g], 3));
}

#[test]
fn gates_stay_in_range() {
    let model = Model::<f64>::new(micro_config(&BASE_TAGS), 3).unwrap();
    let (g, _) = micro_instance();
    // States are convex combinations of the previous state and a tanh, so
    // starting inside (-1, 1) they never leave it.
    let h = encode_with(&model, &[&g], 8);
    assert!(h.iter().all(|v| v.abs() < 1.0));
}

#[test]
fn missing_self_loops_are_rejected() {
    let model = Model::<f64>::new(micro_config(&BASE_TAGS), 0).unwrap();
    let g = GraphInput {
        labels: vec![4, 5],
        positions: vec![0, 1],
        edges: vec![(0, 1, EdgeTag::Default)],
    };
    let err = model.graph_batch(&[&g]).unwrap_err();
    assert_eq!(err, ModelError::IsolatedNode { graph: 0, node: 0 });
    assert!(err.to_string().contains("augment"));
    let plus_edge = GraphInput {
        labels: vec![4],
        positions: vec![0],
        edges: vec![(0, 0, EdgeTag::Left)],
    };
    assert_eq!(model.graph_batch(&[&plus_edge]).unwrap_err(), ModelError::UnknownTag(EdgeTag::Left));
}

#[test]
fn positions_select_distinct_rows() {
    let model = Model::<f64>::new(micro_config(&BASE_TAGS), 1).unwrap();
    let g = GraphInput {
        labels: vec![4, 4, 4],
        positions: vec![0, POSITION_COUNT as u32 - 1, 0],
        edges: (0..3).map(|v| (v, v, EdgeTag::SelfLoop)).collect(),
    };
    let h = encode_with(&model, &[&g], 0);
    let d = model.config().encoder.hidden;
    assert_ne!(h[..d], h[d..2 * d]);
    assert_eq!(h[..d], h[2 * d..3 * d]);
}

#[test]
fn disconnected_copies_encode_identically() {
    let model = Model::<f32>::new(micro_config(&BASE_TAGS), 2).unwrap();
    let (g, _) = micro_instance();
    let h = encode_with(&model, &[&g, &g], 8);
    let (a, b) = h.split_at(h.len() / 2);
    assert_eq!(a, b);
}

#[test]
fn permutation_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut config = micro_config(&BASE_TAGS);
    config.encoder = EncoderConfig {
        layers: 8,
        hidden: 32,
        position_dim: 8,
        tags: BASE_TAGS.to_vec(),
        dropout: 0.5,
    };
    config.src_vocab = LABEL_VOCAB;
    let model = Model::<f32>::new(config, 9).unwrap();
    let d = 32;
    for _ in 0..20 {
        let levi = prepared(&mut rng, 20);
        let perm = random_permutation(&mut rng, levi.node_count());
        let a = GraphInput::from_levi(&levi, label_id).unwrap();
        let b = GraphInput::from_levi(&levi.permuted(&perm), label_id).unwrap();
        let (ha, hb) = (encode_with(&model, &[&a], 8), encode_with(&model, &[&b], 8));
        for (old, &new) in perm.iter().enumerate() {
            for k in 0..d {
                assert!((ha[old * d + k] - hb[new * d + k]).abs() <= 1e-6);
            }
        }
    }
}

fn in_hops(g: &GraphInput, target: usize) -> Vec<usize> {
    let n = g.node_count();
    let mut hops = vec![usize::MAX; n];
    hops[target] = 0;
    let mut queue = std::collections::VecDeque::from([target]);
    while let Some(v) = queue.pop_front() {
        for &(s, t, _) in &g.edges {
            if t == v && hops[s] == usize::MAX {
                hops[s] = hops[v] + 1;
                queue.push_back(s);
            }
        }
    }
    hops
}

// The candidate state of v uses r_u, which is computed from u's own
// neighbours, so one layer reaches two in-edge hops.
#[test]
fn state_depends_only_on_nodes_within_2k_hops() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut config = micro_config(&BASE_TAGS);
    config.src_vocab = LABEL_VOCAB;
    let model = Model::<f64>::new(config, 5).unwrap();
    let d = model.config().encoder.hidden;
    let mut checked = 0;
    for _ in 0..60 {
        let levi = prepared(&mut rng, 20);
        let g = GraphInput::from_levi(&levi, label_id).unwrap();
        let hops = in_hops(&g, 0);
        let k = 1;
        let Some(far) = (0..g.node_count()).find(|&u| hops[u] > 2 * k) else { continue };
        let mut changed = g.clone();
        changed.labels[far] = if g.labels[far] == 4 { 5 } else { 4 };
        let (a, b) = (encode_with(&model, &[&g], k), encode_with(&model, &[&changed], k));
        assert_eq!(a[..d], b[..d]);
        if hops[far] != usize::MAX {
            let deeper = encode_with(&model, &[&changed], hops[far]);
            assert_ne!(encode_with(&model, &[&g], hops[far])[..d], deeper[..d]);
        }
        checked += 1;
    }
    assert!(checked > 5, "{checked}");
}

#[test]
fn one_layer_reaches_two_hops() {
    let model = Model::<f64>::new(micro_config(&BASE_TAGS), 5).unwrap();
    // Chain 2 -> 1 -> 0 plus self loops.
    let mut g = GraphInput {
        labels: vec![4, 5, 6],
        positions: vec![0, 1, 2],
        edges: vec![(2, 1, EdgeTag::Default), (1, 0, EdgeTag::Default)],
    };
    g.edges.extend((0..3).map(|v| (v, v, EdgeTag::SelfLoop)));
    let mut changed = g.clone();
    changed.labels[2] = 7;
    let d = model.config().encoder.hidden;
    assert_ne!(encode_with(&model, &[&g], 1)[..d], encode_with(&model, &[&changed], 1)[..d]);
}

#[test]
fn parameter_count_identity() {
    for tags in [&BASE_TAGS[..], &EdgeTag::ALL[..]] {
        for hidden in [448, 512, 576] {
            let config = ModelConfig {
                encoder: EncoderConfig {
                    hidden,
                    tags: tags.to_vec(),
                    ..EncoderConfig::amr()
                },
                decoder: DecoderConfig::default(),
                src_vocab: 10,
                tgt_vocab: 10,
            };
            let count: usize = config
                .layout()
                .iter()
                .filter(|(n, _, _)| n.starts_with("enc.") && !n.ends_with("_emb"))
                .map(|(_, r, c)| r * c)
                .sum();
            assert_eq!(count, ggnn_param_count(tags.len(), hidden));
            assert_eq!(count, tags.len() * (3 * hidden * hidden + 3 * hidden));
        }
    }
    let model = Model::<f32>::new(micro_config(&EdgeTag::ALL), 0).unwrap();
    let ids = model.encoder_params().propagation_ids();
    let total: usize = ids.iter().map(|&id| model.params().get(id).values.len()).sum();
    assert_eq!(total, ggnn_param_count(5, 6));
}

#[test]
fn layer_count_costs_no_parameters() {
    let mut a = micro_config(&BASE_TAGS);
    let b = a.clone();
    a.encoder.layers = 1;
    assert_eq!(a.layout(), b.layout());
}

fn decoder_model() -> Model<f64> {
    Model::with_init(micro_config(&BASE_TAGS), hand_set).unwrap()
}

fn encoded(nodes: usize, hidden: usize) -> Encoded<f64> {
    Encoded {
        states: (0..nodes * hidden).map(|i| (i as f64 * 0.917).cos() * 0.8).collect(),
        nodes,
    }
}

#[test]
fn decoder_step_matches_scalar_oracle() {
    let model = decoder_model();
    let enc = encoded(5, model.config().encoder.hidden);
    let h_enc = rows(&enc.states, model.config().encoder.hidden);
    let mask = vec![true; 5];
    let dec = oracle_decoder(&model);

    let start = model.start(&enc).unwrap();
    let ref_state = oracle::init_state(&dec, &h_enc, &mask);
    for (l, (h, c)) in ref_state.iter().enumerate() {
        assert!(max_diff(&start.h[l], h) < 1e-12);
        assert!(max_diff(&start.c[l], c) < 1e-12);
    }

    let two = start.select(&[0, 0]);
    let out = model.step(&enc, &two, &[2, 5]).unwrap();
    let vocab = model.config().tgt_vocab;
    for (row, prev) in [2usize, 5].into_iter().enumerate() {
        let (logits, state, weights) = oracle::decode_step(&dec, &ref_state, prev, &h_enc, &mask);
        assert!(max_diff(&out.logits[row * vocab..(row + 1) * vocab], &logits) < 1e-12);
        assert!(max_diff(&out.attention[row * 5..(row + 1) * 5], &weights) < 1e-12);
        let hidden = model.config().decoder.hidden;
        for (l, (h, c)) in state.iter().enumerate() {
            assert!(max_diff(&out.state.h[l][row * hidden..(row + 1) * hidden], h) < 1e-12);
            assert!(max_diff(&out.state.c[l][row * hidden..(row + 1) * hidden], c) < 1e-12);
        }
    }
}

#[test]
fn decoder_step_is_pure_and_shaped() {
    let model = decoder_model();
    let enc = encoded(4, model.config().encoder.hidden);
    let s = model.start(&enc).unwrap();
    let a = model.step(&enc, &s, &[3]).unwrap();
    let b = model.step(&enc, &s, &[3]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.logits.len(), model.config().tgt_vocab);
    assert!((a.attention.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(
        model.step(&enc, &s, &[99]).unwrap_err(),
        ModelError::TokenOutOfRange { token: 99, vocab: 8 }
    );
}

#[test]
fn init_state_edge_cases() {
    let model = decoder_model();
    let d = model.config().encoder.hidden;
    let zero = Encoded {
        states: vec![0.0; 3 * d],
        nodes: 3,
    };
    let s = model.start(&zero).unwrap();
    assert!(s.h.iter().chain(&s.c).flatten().all(|&v| v == 0.0));

    // A mask over half the rows averages only those rows.
    let enc = encoded(4, d);
    let h_enc = rows(&enc.states, d);
    let dec = oracle_decoder(&model);
    let mask = vec![true, false, true, false];
    let mut tape = Tape::new();
    let vars = model.params().bind(&mut tape, false).unwrap();
    let states = tape.constant(enc.states.clone(), 4, d).unwrap();
    let memory = Memory {
        states,
        mask: mask.clone(),
        width: 4,
    };
    let st = g2s_core::model::init_state(&mut tape, &vars, model.decoder_params(), &model.config().decoder, &memory)
        .unwrap();
    let expected = oracle::init_state(&dec, &h_enc, &mask);
    assert!(max_diff(tape.value(st.h[0]), &expected[0].0) < 1e-12);
    let single = oracle::init_state(&dec, &h_enc[..1].to_vec(), &[true]);
    let one = model.start(&Encoded { states: h_enc[0].clone(), nodes: 1 }).unwrap();
    assert!(max_diff(&one.h[1], &single[1].0) < 1e-12);

    let memory = Memory {
        states,
        mask: vec![false; 4],
        width: 4,
    };
    assert!(matches!(
        g2s_core::model::init_state(&mut tape, &vars, model.decoder_params(), &model.config().decoder, &memory),
        Err(ModelError::EmptyGraph)
    ));
}

#[test]
fn attention_hand_cases() {
    let mut config = micro_config(&BASE_TAGS);
    config.encoder.hidden = 3;
    config.encoder.position_dim = 1;
    config.decoder.hidden = 3;
    let model = Model::with_init(config, |name, r, c| {
        if name == "dec.w_a" {
            (0..r * c).map(|i| if i % (c + 1) == 0 { 1.0 } else { 0.0 }).collect()
        } else {
            vec![0.0; r * c]
        }
    })
    .unwrap();
    let run = |q: Vec<f64>, h: Vec<f64>, mask: Vec<bool>| {
        let mut tape = Tape::new();
        let vars = model.params().bind(&mut tape, false).unwrap();
        let n = mask.len();
        let q = tape.constant(q, 1, 3).unwrap();
        let states = tape.constant(h, n, 3).unwrap();
        let memory = Memory { states, mask, width: n };
        let (ctx, w) = attention(&mut tape, &vars, model.decoder_params(), q, &memory, &[0]).unwrap();
        (tape.value(w).to_vec(), tape.value(ctx).to_vec())
    };
    // Dot-product dominance.
    let (w, _) = run(vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], vec![true; 3]);
    assert!(w[0] > w[1] && w[0] > w[2]);
    // Single unmasked node.
    let (w, ctx) = run(vec![0.3, -0.2, 0.9], vec![5.0, 5.0, 5.0, 0.1, 0.2, 0.3, -1.0, 2.0, 0.5], vec![false, true, false]);
    assert_eq!(w, vec![0.0, 1.0, 0.0]);
    assert_eq!(ctx, vec![0.1, 0.2, 0.3]);
    // Hand softmax: scores 0.5, 1.0, -0.5.
    let (w, ctx) = run(vec![0.5, 1.0, 0.0], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 7.0], vec![true; 3]);
    let e = [0.5f64.exp(), 1.0f64.exp(), (-0.5f64).exp()];
    let z: f64 = e.iter().sum();
    for i in 0..3 {
        assert!((w[i] - e[i] / z).abs() < 1e-10);
    }
    assert!((ctx[0] - (e[0] - e[2]) / z).abs() < 1e-10);
    assert!((ctx[2] - 7.0 * e[2] / z).abs() < 1e-10);
    // Fully masked.
    let mut tape = Tape::new();
    let vars = model.params().bind(&mut tape, false).unwrap();
    let q = tape.constant(vec![0.0; 3], 1, 3).unwrap();
    let states = tape.constant(vec![0.0; 6], 2, 3).unwrap();
    let memory = Memory {
        states,
        mask: vec![false, false],
        width: 2,
    };
    assert!(attention(&mut tape, &vars, model.decoder_params(), q, &memory, &[0]).is_err());
}

fn teacher_forced_oracle(model: &Model<f64>, g: &GraphInput, target: &[u32]) -> f64 {
    let h = rows(&encode_with(model, &[g], model.config().encoder.layers), model.config().encoder.hidden);
    let mask = vec![true; h.len()];
    let dec = oracle_decoder(model);
    let mut state = oracle::init_state(&dec, &h, &mask);
    let mut prev = 2usize;
    let mut total = 0.0;
    let gold: Vec<usize> = target.iter().map(|&t| t as usize).chain([3]).collect();
    for &y in &gold {
        let (logits, next, _) = oracle::decode_step(&dec, &state, prev, &h, &mask);
        total -= log_softmax_rows(&logits, logits.len())[y];
        state = next;
        prev = y;
    }
    total / gold.len() as f64
}

#[test]
fn sequence_loss_matches_oracle() {
    let model = decoder_model();
    let (g, target) = micro_instance();
    let batch = model.graph_batch(&[&g]).unwrap();
    for t in [&target[..2], &target[..]] {
        let tb = TargetBatch::new(&[t], 2, 3, 0).unwrap();
        let loss = model.eval_loss(&batch, &tb).unwrap();
        assert!((loss - teacher_forced_oracle(&model, &g, t)).abs() < 1e-12);
    }
}

#[test]
fn uniform_and_peaked_losses() {
    let model = Model::with_init(micro_config(&BASE_TAGS), |name, r, c| {
        if name == "dec.w_v" || name == "dec.b_v" {
            vec![0.0; r * c]
        } else {
            hand_set(name, r, c)
        }
    })
    .unwrap();
    let (g, target) = micro_instance();
    let batch = model.graph_batch(&[&g]).unwrap();
    let tb = TargetBatch::new(&[&target], 2, 3, 0).unwrap();
    assert!((model.eval_loss(&batch, &tb).unwrap() - 8f64.ln()).abs() < 1e-12);

    // Bias strongly favours one token: target of that token costs ~0.
    let peaked = Model::with_init(micro_config(&BASE_TAGS), |name, r, c| match name {
        "dec.w_v" => vec![0.0; r * c],
        "dec.b_v" => (0..c).map(|i| if i == 3 { 60.0 } else { 0.0 }).collect(),
        _ => hand_set(name, r, c),
    })
    .unwrap();
    let tb = TargetBatch::new(&[&[3, 3]], 2, 3, 0).unwrap();
    assert!(peaked.eval_loss(&batch, &tb).unwrap() < 1e-20);
    assert_eq!(TargetBatch::new(&[&[]], 2, 3, 0).unwrap_err(), ModelError::EmptyTarget);
}

#[test]
fn loss_invariant_under_batch_reordering() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut config = micro_config(&BASE_TAGS);
    config.src_vocab = LABEL_VOCAB;
    let model = Model::<f64>::new(config, 6).unwrap();
    let graphs: Vec<GraphInput> = (0..4)
        .map(|_| GraphInput::from_levi(&prepared(&mut rng, 12), label_id).unwrap())
        .collect();
    let targets: Vec<Vec<u32>> = vec![vec![4, 5], vec![6, 7, 4, 4], vec![5], vec![7, 6, 5]];
    let loss = |order: &[usize]| {
        let gs: Vec<&GraphInput> = order.iter().map(|&i| &graphs[i]).collect();
        let ts: Vec<&[u32]> = order.iter().map(|&i| targets[i].as_slice()).collect();
        let batch = model.graph_batch(&gs).unwrap();
        model.eval_loss(&batch, &TargetBatch::new(&ts, 2, 3, 0).unwrap()).unwrap()
    };
    let a = loss(&[0, 1, 2, 3]);
    let b = loss(&[3, 1, 0, 2]);
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn dropout_is_seeded() {
    let model = Model::<f32>::new(micro_config(&BASE_TAGS), 0).unwrap();
    let (g, target) = micro_instance();
    let batch = model.graph_batch(&[&g]).unwrap();
    let tb = TargetBatch::new(&[&target], 2, 3, 0).unwrap();
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.loss_and_grads(&batch, &tb, Some(&mut rng)).unwrap()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1).0, run(2).0);
    assert_ne!(run(1).0, model.eval_loss(&batch, &tb).unwrap());
}
