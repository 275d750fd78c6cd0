//! Finite-difference checks of every differentiable primitive in isolation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    finite_difference_check, Fault, GradCheckConfig, GradCheckError, GradCheckReport, ParamStore,
    Tape, TensorError, Var,
};

type Build = fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var, TensorError>;

struct Case {
    name: &'static str,
    shapes: &'static [(usize, usize)],
    build: Build,
}

const SEG_MASK: [bool; 12] = [
    true, true, true, false, true, true, false, false, true, true, true, true,
];

fn cases() -> Vec<Case> {
    vec![
        Case {
            name: "matmul",
            shapes: &[(3, 4), (4, 5)],
            build: |t, p| t.matmul(p[0], p[1]),
        },
        Case {
            name: "add",
            shapes: &[(3, 4), (3, 4)],
            build: |t, p| t.add(p[0], p[1]),
        },
        Case {
            name: "sub",
            shapes: &[(3, 4), (3, 4)],
            build: |t, p| t.sub(p[0], p[1]),
        },
        Case {
            name: "mul",
            shapes: &[(3, 4), (3, 4)],
            build: |t, p| t.mul(p[0], p[1]),
        },
        Case {
            name: "add_row",
            shapes: &[(3, 4), (1, 4)],
            build: |t, p| t.add_row(p[0], p[1]),
        },
        Case {
            name: "affine",
            shapes: &[(3, 4)],
            build: |t, p| t.affine(p[0], -1.5, 0.25),
        },
        Case {
            name: "sigmoid",
            shapes: &[(3, 4)],
            build: |t, p| t.sigmoid(p[0]),
        },
        Case {
            name: "tanh",
            shapes: &[(3, 4)],
            build: |t, p| t.tanh(p[0]),
        },
        Case {
            name: "concat_cols",
            shapes: &[(3, 2), (3, 4), (3, 1)],
            build: |t, p| t.concat_cols(&[p[0], p[1], p[2]]),
        },
        Case {
            name: "concat_rows",
            shapes: &[(2, 3), (1, 3), (3, 3)],
            build: |t, p| t.concat_rows(&[p[0], p[1], p[2]]),
        },
        Case {
            name: "slice_rows",
            shapes: &[(5, 3)],
            build: |t, p| t.slice_rows(p[0], 1, 3),
        },
        Case {
            name: "slice_cols",
            shapes: &[(3, 6)],
            build: |t, p| t.slice_cols(p[0], 2, 3),
        },
        Case {
            name: "embedding_lookup",
            shapes: &[(5, 3)],
            build: |t, p| t.gather_rows(p[0], vec![Some(4), None, Some(1), Some(4), Some(0)]),
        },
        Case {
            name: "scatter_rows",
            shapes: &[(5, 3)],
            build: |t, p| t.scatter_rows(p[0], vec![2, 0, 2, 1, 2], 4),
        },
        Case {
            name: "scale_rows",
            shapes: &[(3, 4)],
            build: |t, p| t.scale_rows(p[0], vec![0.5, -2.0, 1.0 / 3.0]),
        },
        Case {
            name: "outer_row",
            shapes: &[(1, 4)],
            build: |t, p| t.outer_row(p[0], vec![1.0, 0.0, 3.0]),
        },
        Case {
            name: "masked_softmax",
            shapes: &[(3, 4)],
            build: |t, p| t.masked_softmax(p[0], &SEG_MASK),
        },
        Case {
            name: "segment_dot",
            shapes: &[(3, 4), (8, 4)],
            build: |t, p| t.segment_dot(p[0], p[1], vec![1, 0, 1], 4),
        },
        Case {
            name: "segment_weighted_sum",
            shapes: &[(3, 4), (8, 5)],
            build: |t, p| t.segment_weighted_sum(p[0], p[1], vec![0, 1, 1]),
        },
        Case {
            name: "dropout",
            shapes: &[(4, 5)],
            build: |t, p| t.dropout(p[0], 0.3, &mut ChaCha8Rng::seed_from_u64(11)),
        },
        Case {
            name: "cross_entropy",
            shapes: &[(4, 6)],
            build: |t, p| t.cross_entropy(p[0], vec![1, 5, 0, 2], vec![true, true, false, true]),
        },
        Case {
            name: "sum",
            shapes: &[(3, 4)],
            build: |t, p| t.sum(p[0]),
        },
    ]
}

/// Names of the primitives covered by [`check_primitives`].
pub fn primitive_names() -> Vec<&'static str> {
    cases().iter().map(|c| c.name).collect()
}

fn readout<'p>(tape: &mut Tape<'p, f64>, out: Var, seed: u64) -> Result<Var, TensorError> {
    let (r, c) = tape.shape(out);
    if (r, c) == (1, 1) {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(-1.0, 1.0).expect("valid range");
    let weights = tape.constant((0..r * c).map(|_| dist.sample(&mut rng)).collect(), r, c)?;
    let weighted = tape.mul(out, weights)?;
    tape.sum(weighted)
}

fn evaluate(
    case: &Case,
    store: &ParamStore<f64>,
    fault: Option<Fault>,
    with_grads: bool,
) -> Result<(f64, Vec<Vec<f64>>), TensorError> {
    let mut tape = fault.map_or_else(Tape::new, Tape::with_fault);
    let vars = store.bind(&mut tape, true)?;
    let out = (case.build)(&mut tape, &vars)?;
    let loss = readout(&mut tape, out, 7)?;
    let value = tape.value(loss)[0];
    let grads = if with_grads {
        store.collect_grads(&vars, tape.backward(loss)?)
    } else {
        Vec::new()
    };
    Ok((value, grads))
}

/// Runs the finite-difference harness on each primitive with random inputs.
/// `fault` corrupts the analytic gradients (never the numeric ones).
pub fn check_primitives(
    config: &GradCheckConfig,
    fault: Option<Fault>,
) -> Result<Vec<(String, GradCheckReport)>, GradCheckError<TensorError>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dist = Uniform::new(-1.5, 1.5).expect("valid range");
    let mut out = Vec::new();
    for case in cases() {
        let mut store = ParamStore::new();
        for (i, &(r, c)) in case.shapes.iter().enumerate() {
            let values = (0..r * c).map(|_| dist.sample(&mut rng)).collect();
            store.add(alloc::format!("{}.{i}", case.name), r, c, values);
        }
        let (_, grads) = evaluate(&case, &store, fault, true).map_err(GradCheckError::Loss)?;
        let report = finite_difference_check(&mut store, &grads, config, |s| {
            evaluate(&case, s, None, false).map(|r| r.0)
        })?;
        out.push((String::from(case.name), report));
    }
    Ok(out)
}
