//! Loop-based reference implementations of the encoder layer, attention
//! and decoder step. No tensor operations, only scalar arithmetic.

#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-major `rows x cols` slice to nested rows.
pub fn rows(values: &[f64], cols: usize) -> Mat {
    values.chunks(cols).map(|r| r.to_vec()).collect()
}

/// `x · W` for a row vector `x` and `W` stored as `in x out`.
pub fn vec_mat(x: &[f64], w: &Mat) -> Vec<f64> {
    let out = w[0].len();
    let mut y = vec![0.0; out];
    for (i, xi) in x.iter().enumerate() {
        for k in 0..out {
            y[k] += xi * w[i][k];
        }
    }
    y
}

pub struct TagWeights {
    pub w_r: Mat,
    pub w_z: Mat,
    pub w: Mat,
    pub b_r: Vec<f64>,
    pub b_z: Vec<f64>,
    pub b: Vec<f64>,
}

/// One gated propagation step. `edges` holds `(src, dst, tag index)`.
pub fn ggnn_layer(h: &Mat, edges: &[(usize, usize, usize)], tags: &[TagWeights]) -> Mat {
    let n = h.len();
    let d = h[0].len();
    let mut r = vec![vec![0.0; d]; n];
    let mut z = vec![vec![0.0; d]; n];
    for v in 0..n {
        let incoming: Vec<_> = edges.iter().filter(|e| e.1 == v).collect();
        let c = 1.0 / incoming.len() as f64;
        for k in 0..d {
            let mut sr = 0.0;
            let mut sz = 0.0;
            for &&(u, _, t) in &incoming {
                let tw = &tags[t];
                let mut ar = tw.b_r[k];
                let mut az = tw.b_z[k];
                for j in 0..d {
                    ar += h[u][j] * tw.w_r[j][k];
                    az += h[u][j] * tw.w_z[j][k];
                }
                sr += ar;
                sz += az;
            }
            r[v][k] = sigmoid(c * sr);
            z[v][k] = sigmoid(c * sz);
        }
    }
    let mut out = vec![vec![0.0; d]; n];
    for v in 0..n {
        let incoming: Vec<_> = edges.iter().filter(|e| e.1 == v).collect();
        let c = 1.0 / incoming.len() as f64;
        for k in 0..d {
            let mut s = 0.0;
            for &&(u, _, t) in &incoming {
                let tw = &tags[t];
                let mut a = tw.b[k];
                for j in 0..d {
                    a += r[u][j] * h[u][j] * tw.w[j][k];
                }
                s += a;
            }
            let cand = (c * s).tanh();
            out[v][k] = (1.0 - z[v][k]) * h[v][k] + z[v][k] * cand;
        }
    }
    out
}

/// Bilinear attention `score_v = q · W_a · h_v` over unmasked rows.
pub fn attention(q: &[f64], w_a: &Mat, h: &Mat, mask: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let proj = vec_mat(q, w_a);
    let scores: Vec<f64> = h.iter().map(|hv| hv.iter().zip(&proj).map(|(a, b)| a * b).sum()).collect();
    let max = scores
        .iter()
        .zip(mask)
        .filter(|p| *p.1)
        .map(|p| *p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = scores
        .iter()
        .zip(mask)
        .map(|(s, &m)| if m { (s - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let d = h[0].len();
    let mut ctx = vec![0.0; d];
    for (v, hv) in h.iter().enumerate() {
        for k in 0..d {
            ctx[k] += weights[v] * hv[k];
        }
    }
    (weights, ctx)
}

pub struct Lstm {
    pub w_x: Mat,
    pub w_h: Mat,
    pub b: Vec<f64>,
}

pub struct Decoder {
    pub emb: Mat,
    pub lstm: Vec<Lstm>,
    pub w_init: Mat,
    pub w_a: Mat,
    pub w_o: Mat,
    pub w_v: Mat,
    pub b_v: Vec<f64>,
}

/// Per-layer `(h, c)`.
pub type State = Vec<(Vec<f64>, Vec<f64>)>;

pub fn init_state(dec: &Decoder, h_enc: &Mat, mask: &[bool]) -> State {
    let d = h_enc[0].len();
    let count = mask.iter().filter(|&&m| m).count() as f64;
    let mut mean = vec![0.0; d];
    for (hv, &m) in h_enc.iter().zip(mask) {
        if m {
            for k in 0..d {
                mean[k] += hv[k] / count;
            }
        }
    }
    let proj: Vec<f64> = vec_mat(&mean, &dec.w_init).into_iter().map(f64::tanh).collect();
    let hidden = dec.lstm[0].w_h.len();
    (0..dec.lstm.len())
        .map(|l| {
            let base = 2 * l * hidden;
            (
                proj[base..base + hidden].to_vec(),
                proj[base + hidden..base + 2 * hidden].to_vec(),
            )
        })
        .collect()
}

/// Returns `(logits, new state, attention weights)`.
pub fn decode_step(dec: &Decoder, state: &State, prev: usize, h_enc: &Mat, mask: &[bool]) -> (Vec<f64>, State, Vec<f64>) {
    let mut x = dec.emb[prev].clone();
    let mut next = Vec::new();
    for (l, cell) in dec.lstm.iter().enumerate() {
        let (h, c) = &state[l];
        let hidden = h.len();
        let gx = vec_mat(&x, &cell.w_x);
        let gh = vec_mat(h, &cell.w_h);
        let mut h2 = vec![0.0; hidden];
        let mut c2 = vec![0.0; hidden];
        for k in 0..hidden {
            let pre = |gate: usize| gx[gate * hidden + k] + gh[gate * hidden + k] + cell.b[gate * hidden + k];
            let i = sigmoid(pre(0));
            let f = sigmoid(pre(1));
            let o = sigmoid(pre(2));
            let g = pre(3).tanh();
            c2[k] = f * c[k] + i * g;
            h2[k] = o * c2[k].tanh();
        }
        x = h2.clone();
        next.push((h2, c2));
    }
    let top = &next.last().unwrap().0;
    let (weights, ctx) = attention(top, &dec.w_a, h_enc, mask);
    let joined: Vec<f64> = top.iter().chain(&ctx).copied().collect();
    let o: Vec<f64> = vec_mat(&joined, &dec.w_o).into_iter().map(f64::tanh).collect();
    let logits: Vec<f64> = vec_mat(&o, &dec.w_v).iter().zip(&dec.b_v).map(|(a, b)| a + b).collect();
    (logits, next, weights)
}
