//! Attention encoder with a hand-written backward pass.
//!
//! Each layer: multi-head self-attention, residual, layer normalization,
//! ReLU feed-forward, residual, layer normalization. Normalization
//! standardizes each node's vector across features (eps 1e-5) and then
//! applies a learned gain and bias. The graph embedding is the mean of the
//! final node embeddings.

use crate::error::{Error, Result};
use crate::linalg::{
    gather_cols, matmul, matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, scatter_cols_acc, softmax_in_place,
};
use crate::params::{LayerLayout, PolicyParams, NODE_FEATURES};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
struct LayerCache {
    input: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    // heads × n × n attention weights
    attn: Vec<f64>,
    heads_out: Vec<f64>,
    xhat1: Vec<f64>,
    inv_std1: Vec<f64>,
    n1: Vec<f64>,
    ff_pre: Vec<f64>,
    ff_act: Vec<f64>,
    xhat2: Vec<f64>,
    inv_std2: Vec<f64>,
}

/// Encoder output plus everything needed to backpropagate through it.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub n: usize,
    pub d: usize,
    /// Final node embeddings, `n × d`.
    pub nodes: Vec<f64>,
    /// Mean of the node embeddings.
    pub graph: Vec<f64>,
    x: Vec<f64>,
    layers: Vec<LayerCache>,
}

fn add_bias_rows(x: &mut [f64], b: &[f64]) {
    for row in x.chunks_mut(b.len()) {
        for (v, bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
}

fn col_sums_acc(x: &[f64], m: usize, out: &mut [f64]) {
    for row in x.chunks(m) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Returns `(y, xhat, inv_std)`.
fn layer_norm(x: &[f64], d: usize, gain: &[f64], bias: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + LN_EPS).sqrt();
        inv[i] = s;
        for t in 0..d {
            let h = (row[t] - mean) * s;
            xhat[i * d + t] = h;
            y[i * d + t] = gain[t] * h + bias[t];
        }
    }
    (y, xhat, inv)
}

/// Backward through layer norm; accumulates gain/bias grads, returns dx.
fn layer_norm_backward(
    dy: &[f64],
    xhat: &[f64],
    inv: &[f64],
    gain: &[f64],
    d: usize,
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let n = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let dyr = &dy[i * d..(i + 1) * d];
        let xr = &xhat[i * d..(i + 1) * d];
        for t in 0..d {
            dgain[t] += dyr[t] * xr[t];
            dbias[t] += dyr[t];
            dxhat[t] = dyr[t] * gain[t];
        }
        let m1 = dxhat.iter().sum::<f64>() / d as f64;
        let m2 = dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for t in 0..d {
            dx[i * d + t] = inv[i] * (dxhat[t] - m1 - xr[t] * m2);
        }
    }
    dx
}

fn layer_forward(params: &PolicyParams, ll: &LayerLayout, h: Vec<f64>, n: usize) -> (Vec<f64>, LayerCache) {
    let dims = &params.dims;
    let (d, f, heads) = (dims.embed, dims.ff_hidden, dims.heads);
    let dk = dims.head_dim();
    let w = |r: &std::ops::Range<usize>| params.tensor(r);
    let q = matmul(&h, w(&ll.q), n, d, d);
    let k = matmul(&h, w(&ll.k), n, d, d);
    let v = matmul(&h, w(&ll.v), n, d, d);
    let scale = 1.0 / (dk as f64).sqrt();
    let mut attn = vec![0.0; heads * n * n];
    let mut heads_out = vec![0.0; n * d];
    for hd in 0..heads {
        let off = hd * dk;
        let qh = gather_cols(&q, d, off, dk);
        let kh = gather_cols(&k, d, off, dk);
        let vh = gather_cols(&v, d, off, dk);
        let a = &mut attn[hd * n * n..(hd + 1) * n * n];
        matmul_a_bt_acc(&qh, &kh, n, n, dk, a);
        for row in a.chunks_mut(n) {
            row.iter_mut().for_each(|x| *x *= scale);
            softmax_in_place(row);
        }
        let oh = matmul(a, &vh, n, n, dk);
        scatter_cols_acc(&oh, d, off, dk, &mut heads_out);
    }
    let mut r1 = matmul(&heads_out, w(&ll.o), n, d, d);
    for (a, b) in r1.iter_mut().zip(&h) {
        *a += b;
    }
    let (n1, xhat1, inv_std1) = layer_norm(&r1, d, w(&ll.norm1_gain), w(&ll.norm1_bias));
    let mut ff_pre = matmul(&n1, w(&ll.ff1_w), n, d, f);
    add_bias_rows(&mut ff_pre, w(&ll.ff1_b));
    let ff_act: Vec<f64> = ff_pre.iter().map(|&x| x.max(0.0)).collect();
    let mut r2 = matmul(&ff_act, w(&ll.ff2_w), n, f, d);
    add_bias_rows(&mut r2, w(&ll.ff2_b));
    for (a, b) in r2.iter_mut().zip(&n1) {
        *a += b;
    }
    let (out, xhat2, inv_std2) = layer_norm(&r2, d, w(&ll.norm2_gain), w(&ll.norm2_bias));
    let cache = LayerCache {
        input: h,
        q,
        k,
        v,
        attn,
        heads_out,
        xhat1,
        inv_std1,
        n1,
        ff_pre,
        ff_act,
        xhat2,
        inv_std2,
    };
    (out, cache)
}

fn layer_backward(params: &PolicyParams, ll: &LayerLayout, c: &LayerCache, dout: &[f64], n: usize, grad: &mut [f64]) -> Vec<f64> {
    let dims = &params.dims;
    let (d, f, heads) = (dims.embed, dims.ff_hidden, dims.heads);
    let dk = dims.head_dim();
    let w = |r: &std::ops::Range<usize>| params.tensor(r);

    let (g2, b2) = split_pair(grad, &ll.norm2_gain, &ll.norm2_bias);
    let dr2 = layer_norm_backward(dout, &c.xhat2, &c.inv_std2, w(&ll.norm2_gain), d, g2, b2);
    // r2 = n1 + ff(n1)
    let mut dn1 = dr2.clone();
    matmul_at_b_acc(&c.ff_act, &dr2, n, f, d, &mut grad[ll.ff2_w.clone()]);
    col_sums_acc(&dr2, d, &mut grad[ll.ff2_b.clone()]);
    let mut dpre = vec![0.0; n * f];
    matmul_a_bt_acc(&dr2, w(&ll.ff2_w), n, f, d, &mut dpre);
    for (g, &x) in dpre.iter_mut().zip(&c.ff_pre) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    matmul_at_b_acc(&c.n1, &dpre, n, d, f, &mut grad[ll.ff1_w.clone()]);
    col_sums_acc(&dpre, f, &mut grad[ll.ff1_b.clone()]);
    matmul_a_bt_acc(&dpre, w(&ll.ff1_w), n, d, f, &mut dn1);

    let (g1, b1) = split_pair(grad, &ll.norm1_gain, &ll.norm1_bias);
    let dr1 = layer_norm_backward(&dn1, &c.xhat1, &c.inv_std1, w(&ll.norm1_gain), d, g1, b1);
    // r1 = h + attn(h)
    let mut dh = dr1.clone();
    matmul_at_b_acc(&c.heads_out, &dr1, n, d, d, &mut grad[ll.o.clone()]);
    let mut dho = vec![0.0; n * d];
    matmul_a_bt_acc(&dr1, w(&ll.o), n, d, d, &mut dho);

    let scale = 1.0 / (dk as f64).sqrt();
    let mut dq = vec![0.0; n * d];
    let mut dkm = vec![0.0; n * d];
    let mut dv = vec![0.0; n * d];
    for hd in 0..heads {
        let off = hd * dk;
        let a = &c.attn[hd * n * n..(hd + 1) * n * n];
        let qh = gather_cols(&c.q, d, off, dk);
        let kh = gather_cols(&c.k, d, off, dk);
        let vh = gather_cols(&c.v, d, off, dk);
        let doh = gather_cols(&dho, d, off, dk);
        let mut dvh = vec![0.0; n * dk];
        matmul_at_b_acc(a, &doh, n, n, dk, &mut dvh);
        let mut ds = vec![0.0; n * n];
        matmul_a_bt_acc(&doh, &vh, n, n, dk, &mut ds);
        for (dsr, ar) in ds.chunks_mut(n).zip(a.chunks(n)) {
            let s: f64 = dsr.iter().zip(ar).map(|(x, y)| x * y).sum();
            for (x, &y) in dsr.iter_mut().zip(ar) {
                *x = y * (*x - s) * scale;
            }
        }
        let dqh = matmul(&ds, &kh, n, n, dk);
        let mut dkh = vec![0.0; n * dk];
        matmul_at_b_acc(&ds, &qh, n, n, dk, &mut dkh);
        scatter_cols_acc(&dqh, d, off, dk, &mut dq);
        scatter_cols_acc(&dkh, d, off, dk, &mut dkm);
        scatter_cols_acc(&dvh, d, off, dk, &mut dv);
    }
    for (dm, r) in [(&dq, &ll.q), (&dkm, &ll.k), (&dv, &ll.v)] {
        matmul_at_b_acc(&c.input, dm, n, d, d, &mut grad[r.clone()]);
        matmul_a_bt_acc(dm, w(r), n, d, d, &mut dh);
    }
    dh
}

fn split_pair<'a>(
    grad: &'a mut [f64],
    a: &std::ops::Range<usize>,
    b: &std::ops::Range<usize>,
) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert_eq!(a.end, b.start);
    let (left, right) = grad[a.start..b.end].split_at_mut(a.len());
    (left, right)
}

/// Encode `n` nodes with row-major `n × 6` features `x`.
pub fn encode(params: &PolicyParams, x: &[f64], n: usize) -> Result<Encoding> {
    if x.len() != n * NODE_FEATURES {
        return Err(Error::Dims(format!(
            "expected {} feature values for {n} nodes, got {}",
            n * NODE_FEATURES,
            x.len()
        )));
    }
    if n == 0 {
        return Err(Error::Dims("instance has no sites".into()));
    }
    let d = params.dims.embed;
    let lay = &params.layout;
    let mut h = vec![0.0; n * d];
    matmul_acc(x, params.tensor(&lay.input_w), n, NODE_FEATURES, d, &mut h);
    add_bias_rows(&mut h, params.tensor(&lay.input_b));
    let mut layers = Vec::with_capacity(lay.layers.len());
    for ll in &lay.layers {
        let (out, cache) = layer_forward(params, ll, h, n);
        layers.push(cache);
        h = out;
    }
    let mut graph = vec![0.0; d];
    col_sums_acc(&h, d, &mut graph);
    graph.iter_mut().for_each(|g| *g /= n as f64);
    Ok(Encoding { n, d, nodes: h, graph, x: x.to_vec(), layers })
}

/// Backpropagate `dnodes` (`n × d`) and `dgraph` (`d`) into `grad`.
pub fn encode_backward(params: &PolicyParams, enc: &Encoding, dnodes: &[f64], dgraph: &[f64], grad: &mut [f64]) {
    let (n, d) = (enc.n, enc.d);
    let mut dh = dnodes.to_vec();
    for row in dh.chunks_mut(d) {
        for (a, g) in row.iter_mut().zip(dgraph) {
            *a += g / n as f64;
        }
    }
    let lay = &params.layout;
    for (ll, cache) in lay.layers.iter().zip(&enc.layers).rev() {
        dh = layer_backward(params, ll, cache, &dh, n, grad);
    }
    matmul_at_b_acc(&enc.x, &dh, n, NODE_FEATURES, d, &mut grad[lay.input_w.clone()]);
    col_sums_acc(&dh, d, &mut grad[lay.input_b.clone()]);
}
