use alloc::borrow::Cow;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
}

fn invalid(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::Invalid {
        op,
        detail: detail.into(),
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Deliberately wrong gradient rules, used as negative controls for the
/// finite-difference harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Sigmoid backward uses `y` instead of `y (1 - y)`.
    SigmoidGrad,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<Option<u32>>),
    ScatterRows(Var, Vec<u32>),
    ScaleRows(Var, Vec<T>),
    OuterRow(Var, Vec<T>),
    MaskedSoftmax(Var),
    SegmentDot {
        query: Var,
        memory: Var,
        segments: Vec<u32>,
    },
    SegmentWeightedSum {
        weights: Var,
        memory: Var,
        segments: Vec<u32>,
    },
    Dropout(Var, Vec<T>),
    CrossEntropy {
        logits: Var,
        targets: Vec<u32>,
        mask: Vec<bool>,
        probs: Vec<T>,
        count: usize,
    },
    Sum(Var),
}

struct Node<'p, T: Real> {
    value: Cow<'p, [T]>,
    rows: usize,
    cols: usize,
    op: Op<T>,
    requires_grad: bool,
}

/// Records operations on row-major matrices for reverse-mode
/// differentiation. Leaves may borrow their storage (parameters) for the
/// lifetime `'p`.
pub struct Tape<'p, T: Real> {
    nodes: Vec<Node<'p, T>>,
    fault: Option<Fault>,
    check_finite: bool,
}

impl<'p, T: Real> Default for Tape<'p, T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a leaf, `None` if the leaf does not require gradients or
    /// the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of a leaf with zeros filled in when the loss does not
    /// depend on it.
    pub fn take_or_zeros(&mut self, v: Var, len: usize) -> Vec<T> {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| vec![T::ZERO; len])
    }
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            fault: None,
            check_finite: false,
        }
    }

    pub fn with_fault(fault: Fault) -> Self {
        Tape {
            fault: Some(fault),
            ..Self::new()
        }
    }

    /// When enabled every forward result is scanned for NaN/Inf.
    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn node(&self, v: Var) -> &Node<'p, T> {
        &self.nodes[v.0]
    }

    fn push(
        &mut self,
        name: &'static str,
        value: Vec<T>,
        rows: usize,
        cols: usize,
        op: Op<T>,
        inputs: &[Var],
    ) -> Result<Var, TensorError> {
        debug_assert_eq!(value.len(), rows * cols);
        if self.check_finite && value.iter().any(|x| !x.is_finite()) {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        // Results that no gradient can flow through are kept as plain leaves.
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value: Cow::Owned(value),
            rows,
            cols,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(
        &mut self,
        values: impl Into<Cow<'p, [T]>>,
        rows: usize,
        cols: usize,
        requires_grad: bool,
    ) -> Result<Var, TensorError> {
        let value = values.into();
        if value.len() != rows * cols {
            return Err(invalid(
                "leaf",
                alloc::format!("{} values for a {rows}x{cols} matrix", value.len()),
            ));
        }
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Leaf that does not take gradients.
    pub fn constant(
        &mut self,
        values: Vec<T>,
        rows: usize,
        cols: usize,
    ) -> Result<Var, TensorError> {
        self.leaf(values, rows, cols, false)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize), TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::Shape {
                op,
                lhs: sa,
                rhs: sb,
            });
        }
        Ok(sa)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let ((m, k), (k2, n)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(TensorError::Shape {
                op: "matmul",
                lhs: (m, k),
                rhs: (k2, n),
            });
        }
        let mut out = vec![T::ZERO; m * n];
        T::gemm(
            m,
            k,
            n,
            self.value(a),
            (k as isize, 1),
            self.value(b),
            (n as isize, 1),
            T::ZERO,
            &mut out,
        );
        self.push("matmul", out, m, n, Op::MatMul(a, b), &[a, b])
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var, TensorError> {
        let (r, c) = self.same_shape(name, a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(name, out, r, c, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds the `1 x n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let ((m, n), sb) = (self.shape(a), self.shape(b));
        if sb != (1, n) {
            return Err(TensorError::Shape {
                op: "add_row",
                lhs: (m, n),
                rhs: sb,
            });
        }
        let bias = self.value(b);
        let out = self
            .value(a)
            .chunks(n.max(1))
            .flat_map(|row| row.iter().zip(bias).map(|(&x, &y)| x + y))
            .collect();
        self.push("add_row", out, m, n, Op::AddRow(a, b), &[a, b])
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Result<Var, TensorError> {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| scale * v + shift).collect();
        self.push("affine", out, r, c, Op::Affine(x, scale), &[x])
    }

    pub fn one_minus(&mut self, x: Var) -> Result<Var, TensorError> {
        self.affine(x, -T::ONE, T::ONE)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| v.sigmoid()).collect();
        self.push("sigmoid", out, r, c, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, TensorError> {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| v.tanh()).collect();
        self.push("tanh", out, r, c, Op::Tanh(x), &[x])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts
            .first()
            .ok_or_else(|| invalid("concat_cols", "no inputs"))?;
        let rows = self.shape(first).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(TensorError::Shape {
                    op: "concat_cols",
                    lhs: self.shape(first),
                    rhs: self.shape(p),
                });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        self.push(
            "concat_cols",
            out,
            rows,
            cols,
            Op::ConcatCols(parts.to_vec()),
            parts,
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var, TensorError> {
        let (rows, cols) = self.shape(x);
        if start + width > cols {
            return Err(invalid(
                "slice_cols",
                alloc::format!(
                    "columns {start}..{} of a {cols}-column matrix",
                    start + width
                ),
            ));
        }
        let v = self.value(x);
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&v[r * cols + start..r * cols + start + width]);
        }
        self.push(
            "slice_cols",
            out,
            rows,
            width,
            Op::SliceCols(x, start),
            &[x],
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts
            .first()
            .ok_or_else(|| invalid("concat_rows", "no inputs"))?;
        let cols = self.shape(first).1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            if self.shape(p).1 != cols {
                return Err(TensorError::Shape {
                    op: "concat_rows",
                    lhs: self.shape(first),
                    rhs: self.shape(p),
                });
            }
            out.extend_from_slice(self.value(p));
            rows += self.shape(p).0;
        }
        self.push(
            "concat_rows",
            out,
            rows,
            cols,
            Op::ConcatRows(parts.to_vec()),
            parts,
        )
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, count: usize) -> Result<Var, TensorError> {
        let (rows, cols) = self.shape(x);
        if start + count > rows {
            return Err(invalid(
                "slice_rows",
                alloc::format!("rows {start}..{} of a {rows}-row matrix", start + count),
            ));
        }
        let out = self.value(x)[start * cols..(start + count) * cols].to_vec();
        self.push(
            "slice_rows",
            out,
            count,
            cols,
            Op::SliceRows(x, start),
            &[x],
        )
    }

    /// Row `i` of the result is row `idx[i]` of `x`, or zeros for `None`.
    pub fn gather_rows(&mut self, x: Var, idx: Vec<Option<u32>>) -> Result<Var, TensorError> {
        let (rows, cols) = self.shape(x);
        let v = self.value(x);
        let mut out = vec![T::ZERO; idx.len() * cols];
        for (i, src) in idx.iter().enumerate() {
            if let Some(s) = *src {
                let s = s as usize;
                if s >= rows {
                    return Err(invalid(
                        "gather_rows",
                        alloc::format!("row {s} of a {rows}-row matrix"),
                    ));
                }
                out[i * cols..(i + 1) * cols].copy_from_slice(&v[s * cols..(s + 1) * cols]);
            }
        }
        let n = idx.len();
        self.push("gather_rows", out, n, cols, Op::GatherRows(x, idx), &[x])
    }

    /// Embedding lookup: gathers `ids` rows of `table`.
    pub fn embedding(&mut self, table: Var, ids: &[u32]) -> Result<Var, TensorError> {
        self.gather_rows(table, ids.iter().map(|&i| Some(i)).collect())
    }

    /// Sums row `i` of `x` into row `idx[i]` of an `out_rows`-row result.
    pub fn scatter_rows(
        &mut self,
        x: Var,
        idx: Vec<u32>,
        out_rows: usize,
    ) -> Result<Var, TensorError> {
        let (rows, cols) = self.shape(x);
        if idx.len() != rows {
            return Err(invalid(
                "scatter_rows",
                alloc::format!("{} indices for {rows} rows", idx.len()),
            ));
        }
        let v = self.value(x);
        let mut out = vec![T::ZERO; out_rows * cols];
        for (i, &d) in idx.iter().enumerate() {
            let d = d as usize;
            if d >= out_rows {
                return Err(invalid(
                    "scatter_rows",
                    alloc::format!("target row {d} of {out_rows}"),
                ));
            }
            for (o, &s) in out[d * cols..(d + 1) * cols]
                .iter_mut()
                .zip(&v[i * cols..(i + 1) * cols])
            {
                *o += s;
            }
        }
        self.push(
            "scatter_rows",
            out,
            out_rows,
            cols,
            Op::ScatterRows(x, idx),
            &[x],
        )
    }

    /// Multiplies row `i` by the constant `factors[i]`.
    pub fn scale_rows(&mut self, x: Var, factors: Vec<T>) -> Result<Var, TensorError> {
        let (rows, cols) = self.shape(x);
        if factors.len() != rows {
            return Err(invalid(
                "scale_rows",
                alloc::format!("{} factors for {rows} rows", factors.len()),
            ));
        }
        let out = self
            .value(x)
            .chunks(cols.max(1))
            .zip(&factors)
            .flat_map(|(row, &f)| row.iter().map(move |&v| v * f))
            .collect();
        self.push(
            "scale_rows",
            out,
            rows,
            cols,
            Op::ScaleRows(x, factors),
            &[x],
        )
    }

    /// Expands the `1 x n` row `b` into `weights.len()` rows, row `i` being
    /// `weights[i] * b`.
    pub fn outer_row(&mut self, b: Var, weights: Vec<T>) -> Result<Var, TensorError> {
        let (r, n) = self.shape(b);
        if r != 1 {
            return Err(TensorError::Shape {
                op: "outer_row",
                lhs: (r, n),
                rhs: (1, n),
            });
        }
        let bias = self.value(b);
        let out = weights
            .iter()
            .flat_map(|&w| bias.iter().map(move |&x| w * x))
            .collect();
        let m = weights.len();
        self.push("outer_row", out, m, n, Op::OuterRow(b, weights), &[b])
    }

    /// Row-wise softmax restricted to positions where `mask` is true; masked
    /// positions come out as exactly zero.
    pub fn masked_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var, TensorError> {
        let (rows, cols) = self.shape(x);
        if mask.len() != rows * cols {
            return Err(invalid(
                "masked_softmax",
                alloc::format!("mask of {} for {rows}x{cols}", mask.len()),
            ));
        }
        let v = self.value(x);
        let mut out = vec![T::ZERO; rows * cols];
        for r in 0..rows {
            let span = r * cols..(r + 1) * cols;
            let (row, m, o) = (&v[span.clone()], &mask[span.clone()], &mut out[span]);
            let max = row
                .iter()
                .zip(m)
                .filter(|(_, &keep)| keep)
                .map(|(&x, _)| x)
                .fold(None, |acc: Option<T>, x| Some(acc.map_or(x, |a| a.max(x))))
                .ok_or_else(|| {
                    invalid("masked_softmax", alloc::format!("row {r} is fully masked"))
                })?;
            let mut total = T::ZERO;
            for ((o, &x), &keep) in o.iter_mut().zip(row).zip(m) {
                if keep {
                    *o = (x - max).exp();
                    total += *o;
                }
            }
            for o in o.iter_mut() {
                *o = *o / total;
            }
        }
        self.push(
            "masked_softmax",
            out,
            rows,
            cols,
            Op::MaskedSoftmax(x),
            &[x],
        )
    }

    /// Scores every query row against a block of memory rows:
    /// `out[b, j] = query[b] · memory[segments[b] * width + j]`, where
    /// `width` is the number of memory rows per segment.
    pub fn segment_dot(
        &mut self,
        query: Var,
        memory: Var,
        segments: Vec<u32>,
        width: usize,
    ) -> Result<Var, TensorError> {
        let ((b, d), (mr, md)) = (self.shape(query), self.shape(memory));
        if d != md || segments.len() != b {
            return Err(TensorError::Shape {
                op: "segment_dot",
                lhs: (b, d),
                rhs: (mr, md),
            });
        }
        let (q, mem) = (self.value(query), self.value(memory));
        let mut out = vec![T::ZERO; b * width];
        for (i, &s) in segments.iter().enumerate() {
            let base = s as usize * width;
            if base + width > mr {
                return Err(invalid(
                    "segment_dot",
                    alloc::format!("segment {s} out of range"),
                ));
            }
            let qi = &q[i * d..(i + 1) * d];
            for j in 0..width {
                let row = &mem[(base + j) * d..(base + j + 1) * d];
                out[i * width + j] = qi.iter().zip(row).map(|(&x, &y)| x * y).sum();
            }
        }
        self.push(
            "segment_dot",
            out,
            b,
            width,
            Op::SegmentDot {
                query,
                memory,
                segments,
            },
            &[query, memory],
        )
    }

    /// `out[b] = sum_j weights[b, j] * memory[segments[b] * width + j]`,
    /// with `width` the number of columns of `weights`.
    pub fn segment_weighted_sum(
        &mut self,
        weights: Var,
        memory: Var,
        segments: Vec<u32>,
    ) -> Result<Var, TensorError> {
        let ((b, width), (mr, d)) = (self.shape(weights), self.shape(memory));
        if segments.len() != b {
            return Err(TensorError::Shape {
                op: "segment_weighted_sum",
                lhs: (b, width),
                rhs: (mr, d),
            });
        }
        let (w, mem) = (self.value(weights), self.value(memory));
        let mut out = vec![T::ZERO; b * d];
        for (i, &s) in segments.iter().enumerate() {
            let base = s as usize * width;
            if base + width > mr {
                return Err(invalid(
                    "segment_weighted_sum",
                    alloc::format!("segment {s} out of range"),
                ));
            }
            let o = &mut out[i * d..(i + 1) * d];
            for j in 0..width {
                let wij = w[i * width + j];
                for (o, &m) in o.iter_mut().zip(&mem[(base + j) * d..(base + j + 1) * d]) {
                    *o += wij * m;
                }
            }
        }
        self.push(
            "segment_weighted_sum",
            out,
            b,
            d,
            Op::SegmentWeightedSum {
                weights,
                memory,
                segments,
            },
            &[weights, memory],
        )
    }

    /// Inverted dropout: zeroes each unit with probability `p` and scales
    /// survivors by `1 / (1 - p)`. Identity when `p == 0`.
    pub fn dropout<R: RngCore + ?Sized>(
        &mut self,
        x: Var,
        p: f64,
        rng: &mut R,
    ) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid(
                "dropout",
                alloc::format!("probability {p} outside [0, 1)"),
            ));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let (r, c) = self.shape(x);
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..r * c)
            .map(|_| {
                if rng.random::<f64>() < p {
                    T::ZERO
                } else {
                    keep
                }
            })
            .collect();
        let out = self
            .value(x)
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        self.push("dropout", out, r, c, Op::Dropout(x, mask), &[x])
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`, over rows where `mask` is true.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: Vec<u32>,
        mask: Vec<bool>,
    ) -> Result<Var, TensorError> {
        let (rows, vocab) = self.shape(logits);
        if targets.len() != rows || mask.len() != rows {
            return Err(invalid(
                "cross_entropy",
                alloc::format!(
                    "{} targets / {} mask entries for {rows} rows",
                    targets.len(),
                    mask.len()
                ),
            ));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(invalid("cross_entropy", "no unmasked target positions"));
        }
        let v = self.value(logits);
        let mut probs = vec![T::ZERO; rows * vocab];
        let mut total = T::ZERO;
        for r in 0..rows {
            if !mask[r] {
                continue;
            }
            let t = targets[r] as usize;
            if t >= vocab {
                return Err(invalid(
                    "cross_entropy",
                    alloc::format!("target {t} outside vocabulary of {vocab}"),
                ));
            }
            let row = &v[r * vocab..(r + 1) * vocab];
            let max = row.iter().copied().fold(T::NEG_INFINITY, T::max);
            let p = &mut probs[r * vocab..(r + 1) * vocab];
            let mut z = T::ZERO;
            for (p, &x) in p.iter_mut().zip(row) {
                *p = (x - max).exp();
                z += *p;
            }
            for p in p.iter_mut() {
                *p = *p / z;
            }
            total += -(row[t] - max - z.ln());
        }
        let loss = total / T::from_f64(count as f64);
        self.push(
            "cross_entropy",
            vec![loss],
            1,
            1,
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                probs,
                count,
            },
            &[logits],
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let total = self.value(x).iter().copied().sum();
        self.push("sum", vec![total], 1, 1, Op::Sum(x), &[x])
    }

    /// Runs the recorded gradient rules backwards from a scalar `loss`.
    /// Only leaf gradients are retained.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.node(loss).requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![T::ONE]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Op::Leaf = node.op {
                grads[i] = Some(g);
                continue;
            }
            self.apply_rule(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn apply_rule(&self, node: &Node<'p, T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (rows, cols) = (node.rows, node.cols);
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = cols;
                if let Some(da) = self.slot(*a, grads) {
                    T::gemm(
                        m,
                        n,
                        k,
                        g,
                        (n as isize, 1),
                        self.value(*b),
                        (1, n as isize),
                        T::ONE,
                        da,
                    );
                }
                if let Some(db) = self.slot(*b, grads) {
                    T::gemm(
                        k,
                        m,
                        n,
                        self.value(*a),
                        (1, k as isize),
                        g,
                        (n as isize, 1),
                        T::ONE,
                        db,
                    );
                }
            }
            Op::Add(a, b) => {
                self.accumulate(*a, grads, |da| add_into(da, g));
                self.accumulate(*b, grads, |db| add_into(db, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, grads, |da| add_into(da, g));
                self.accumulate(*b, grads, |db| {
                    for (d, &x) in db.iter_mut().zip(g) {
                        *d -= x;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                self.accumulate(*a, grads, |da| {
                    for ((d, &x), &w) in da.iter_mut().zip(g).zip(vb) {
                        *d += x * w;
                    }
                });
                self.accumulate(*b, grads, |db| {
                    for ((d, &x), &w) in db.iter_mut().zip(g).zip(va) {
                        *d += x * w;
                    }
                });
            }
            Op::AddRow(a, b) => {
                self.accumulate(*a, grads, |da| add_into(da, g));
                self.accumulate(*b, grads, |db| {
                    for row in g.chunks(cols.max(1)) {
                        add_into(db, row);
                    }
                });
            }
            Op::Affine(x, scale) => {
                self.accumulate(*x, grads, |dx| {
                    for (d, &v) in dx.iter_mut().zip(g) {
                        *d += *scale * v;
                    }
                });
            }
            Op::Sigmoid(x) => {
                let faulty = self.fault == Some(Fault::SigmoidGrad);
                self.accumulate(*x, grads, |dx| {
                    for ((d, &v), &s) in dx.iter_mut().zip(g).zip(y.iter()) {
                        let local = if faulty { s } else { s * (T::ONE - s) };
                        *d += v * local;
                    }
                });
            }
            Op::Tanh(x) => {
                self.accumulate(*x, grads, |dx| {
                    for ((d, &v), &t) in dx.iter_mut().zip(g).zip(y.iter()) {
                        *d += v * (T::ONE - t * t);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p).1;
                    self.accumulate(p, grads, |dp| {
                        for r in 0..rows {
                            add_into(
                                &mut dp[r * c..(r + 1) * c],
                                &g[r * cols + offset..r * cols + offset + c],
                            );
                        }
                    });
                    offset += c;
                }
            }
            Op::SliceCols(x, start) => {
                let src_cols = self.shape(*x).1;
                self.accumulate(*x, grads, |dx| {
                    for r in 0..rows {
                        add_into(
                            &mut dx[r * src_cols + start..r * src_cols + start + cols],
                            &g[r * cols..(r + 1) * cols],
                        );
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.shape(p).0 * cols;
                    self.accumulate(p, grads, |dp| add_into(dp, &g[offset..offset + n]));
                    offset += n;
                }
            }
            Op::SliceRows(x, start) => {
                self.accumulate(*x, grads, |dx| {
                    add_into(&mut dx[start * cols..(start + rows) * cols], g);
                });
            }
            Op::GatherRows(x, idx) => {
                self.accumulate(*x, grads, |dx| {
                    for (i, s) in idx.iter().enumerate() {
                        if let Some(s) = *s {
                            let s = s as usize;
                            add_into(
                                &mut dx[s * cols..(s + 1) * cols],
                                &g[i * cols..(i + 1) * cols],
                            );
                        }
                    }
                });
            }
            Op::ScatterRows(x, idx) => {
                self.accumulate(*x, grads, |dx| {
                    for (i, &d) in idx.iter().enumerate() {
                        let d = d as usize;
                        add_into(
                            &mut dx[i * cols..(i + 1) * cols],
                            &g[d * cols..(d + 1) * cols],
                        );
                    }
                });
            }
            Op::ScaleRows(x, factors) => {
                self.accumulate(*x, grads, |dx| {
                    for (r, &f) in factors.iter().enumerate() {
                        for (d, &v) in dx[r * cols..(r + 1) * cols]
                            .iter_mut()
                            .zip(&g[r * cols..(r + 1) * cols])
                        {
                            *d += f * v;
                        }
                    }
                });
            }
            Op::OuterRow(b, weights) => {
                self.accumulate(*b, grads, |db| {
                    for (r, &w) in weights.iter().enumerate() {
                        for (d, &v) in db.iter_mut().zip(&g[r * cols..(r + 1) * cols]) {
                            *d += w * v;
                        }
                    }
                });
            }
            Op::MaskedSoftmax(x) => {
                self.accumulate(*x, grads, |dx| {
                    for r in 0..rows {
                        let span = r * cols..(r + 1) * cols;
                        let (yr, gr) = (&y[span.clone()], &g[span.clone()]);
                        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for ((d, &yv), &gv) in dx[span].iter_mut().zip(yr).zip(gr) {
                            *d += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::SegmentDot {
                query,
                memory,
                segments,
            } => {
                let width = cols;
                let d = self.shape(*query).1;
                let (q, mem) = (self.value(*query), self.value(*memory));
                self.accumulate(*query, grads, |dq| {
                    for (i, &s) in segments.iter().enumerate() {
                        let base = s as usize * width;
                        for j in 0..width {
                            let gij = g[i * width + j];
                            for (d_, &m) in dq[i * d..(i + 1) * d]
                                .iter_mut()
                                .zip(&mem[(base + j) * d..(base + j + 1) * d])
                            {
                                *d_ += gij * m;
                            }
                        }
                    }
                });
                self.accumulate(*memory, grads, |dm| {
                    for (i, &s) in segments.iter().enumerate() {
                        let base = s as usize * width;
                        for j in 0..width {
                            let gij = g[i * width + j];
                            for (d_, &qv) in dm[(base + j) * d..(base + j + 1) * d]
                                .iter_mut()
                                .zip(&q[i * d..(i + 1) * d])
                            {
                                *d_ += gij * qv;
                            }
                        }
                    }
                });
            }
            Op::SegmentWeightedSum {
                weights,
                memory,
                segments,
            } => {
                let width = self.shape(*weights).1;
                let d = cols;
                let (w, mem) = (self.value(*weights), self.value(*memory));
                self.accumulate(*weights, grads, |dw| {
                    for (i, &s) in segments.iter().enumerate() {
                        let base = s as usize * width;
                        let gi = &g[i * d..(i + 1) * d];
                        for j in 0..width {
                            dw[i * width + j] += gi
                                .iter()
                                .zip(&mem[(base + j) * d..(base + j + 1) * d])
                                .map(|(&a, &b)| a * b)
                                .sum();
                        }
                    }
                });
                self.accumulate(*memory, grads, |dm| {
                    for (i, &s) in segments.iter().enumerate() {
                        let base = s as usize * width;
                        let gi = &g[i * d..(i + 1) * d];
                        for j in 0..width {
                            let wij = w[i * width + j];
                            for (d_, &gv) in
                                dm[(base + j) * d..(base + j + 1) * d].iter_mut().zip(gi)
                            {
                                *d_ += wij * gv;
                            }
                        }
                    }
                });
            }
            Op::Dropout(x, mask) => {
                self.accumulate(*x, grads, |dx| {
                    for ((d, &v), &m) in dx.iter_mut().zip(g).zip(mask) {
                        *d += v * m;
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                probs,
                count,
            } => {
                let vocab = self.shape(*logits).1;
                let scale = g[0] / T::from_f64(*count as f64);
                self.accumulate(*logits, grads, |dl| {
                    for (r, (&t, &m)) in targets.iter().zip(mask).enumerate() {
                        if !m {
                            continue;
                        }
                        let row = &mut dl[r * vocab..(r + 1) * vocab];
                        for (d, &p) in row.iter_mut().zip(&probs[r * vocab..(r + 1) * vocab]) {
                            *d += scale * p;
                        }
                        row[t as usize] -= scale;
                    }
                });
            }
            Op::Sum(x) => {
                self.accumulate(*x, grads, |dx| {
                    for d in dx.iter_mut() {
                        *d += g[0];
                    }
                });
            }
        }
    }

    /// Gradient buffer of `v`, allocated on first use; `None` when `v` takes
    /// no gradient.
    fn slot<'g>(&self, v: Var, grads: &'g mut [Option<Vec<T>>]) -> Option<&'g mut [T]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(
            grads[v.0]
                .get_or_insert_with(|| vec![T::ZERO; node.rows * node.cols])
                .as_mut_slice(),
        )
    }

    fn accumulate(&self, v: Var, grads: &mut [Option<Vec<T>>], f: impl FnOnce(&mut [T])) {
        if let Some(slot) = self.slot(v, grads) {
            f(slot);
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Row-wise log-softmax of a `rows x cols` buffer, computed in `f64`.
pub fn log_softmax_rows<T: Real>(values: &[T], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    for row in values.chunks(cols.max(1)) {
        let max = row
            .iter()
            .map(|v| v.to_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| libm::exp(v.to_f64() - max)).sum();
        let log_z = max + libm::log(z);
        out.extend(row.iter().map(|v| v.to_f64() - log_z));
    }
    out
}
