//! Masked single-query attention decoder.
//!
//! Keys and values are projected once per episode from the node embeddings;
//! at every step they are shifted by the current node flags through small
//! `4 × d` matrices. The context `[graph embedding, globals]` is projected to
//! a query that glimpses the feasible nodes with multi-head attention. The
//! glimpse is projected again and scored against the logit keys:
//! `l_i = C · tanh(q · k_i / sqrt(d))` with `C = 10`, masked, softmaxed.

use crate::encoder::Encoding;
use crate::error::{Error, Result};
use crate::linalg::{dot, matmul, matmul_a_bt_acc, matmul_at_b_acc, softmax_in_place};
use crate::params::{PolicyParams, DYN_FEATURES, GLOBAL_FEATURES};

pub const LOGIT_CLIP: f64 = 10.0;

/// Static key/value projections of one encoding.
#[derive(Debug, Clone)]
pub struct DecoderPrep {
    kg: Vec<f64>,
    vg: Vec<f64>,
    kl: Vec<f64>,
}

pub fn prepare(params: &PolicyParams, enc: &Encoding) -> DecoderPrep {
    let (n, d) = (enc.n, enc.d);
    let lay = &params.layout;
    DecoderPrep {
        kg: matmul(&enc.nodes, params.tensor(&lay.glimpse_key), n, d, d),
        vg: matmul(&enc.nodes, params.tensor(&lay.glimpse_value), n, d, d),
        kl: matmul(&enc.nodes, params.tensor(&lay.logit_key), n, d, d),
    }
}

/// Forward values of one decoding step kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    flags: Vec<f64>,
    ctx_in: Vec<f64>,
    query: Vec<f64>,
    /// Feasible node indices in increasing order.
    pub feasible: Vec<usize>,
    kg: Vec<f64>,
    vg: Vec<f64>,
    kl: Vec<f64>,
    // heads × |feasible|
    glimpse_attn: Vec<f64>,
    glimpse: Vec<f64>,
    glimpse_out: Vec<f64>,
    tanh: Vec<f64>,
    /// Action probabilities over all nodes; exactly 0 on masked nodes.
    pub probs: Vec<f64>,
}

/// Gradients with respect to the static projections.
#[derive(Debug, Clone)]
pub struct PrepGrad {
    kg: Vec<f64>,
    vg: Vec<f64>,
    kl: Vec<f64>,
}

impl PrepGrad {
    pub fn zeros(n: usize, d: usize) -> Self {
        PrepGrad { kg: vec![0.0; n * d], vg: vec![0.0; n * d], kl: vec![0.0; n * d] }
    }
}

fn shifted(base: &[f64], u: &[f64], flags: &[f64], feasible: &[usize], d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(feasible.len() * d);
    for &i in feasible {
        let start = out.len();
        out.extend_from_slice(&base[i * d..(i + 1) * d]);
        for (f, &fv) in flags[i * DYN_FEATURES..(i + 1) * DYN_FEATURES].iter().enumerate() {
            if fv != 0.0 {
                for (o, uv) in out[start..].iter_mut().zip(&u[f * d..(f + 1) * d]) {
                    *o += fv * uv;
                }
            }
        }
    }
    out
}

/// Action distribution for one step.
pub fn step(
    params: &PolicyParams,
    enc: &Encoding,
    prep: &DecoderPrep,
    flags: &[f64],
    globals: &[f64; GLOBAL_FEATURES],
    mask: &[bool],
) -> Result<StepCache> {
    let (n, d) = (enc.n, enc.d);
    if mask.len() != n || flags.len() != n * DYN_FEATURES {
        return Err(Error::Dims("state does not match encoding".into()));
    }
    let feasible: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    if feasible.is_empty() {
        return Err(Error::NoFeasibleAction);
    }
    let m = feasible.len();
    let lay = &params.layout;
    let heads = params.dims.heads;
    let dk = params.dims.head_dim();

    let mut ctx_in = enc.graph.clone();
    ctx_in.extend_from_slice(globals);
    let query = matmul(&ctx_in, params.tensor(&lay.context), 1, d + GLOBAL_FEATURES, d);

    let kg = shifted(&prep.kg, params.tensor(&lay.glimpse_key_dyn), flags, &feasible, d);
    let vg = shifted(&prep.vg, params.tensor(&lay.glimpse_value_dyn), flags, &feasible, d);
    let kl = shifted(&prep.kl, params.tensor(&lay.logit_key_dyn), flags, &feasible, d);

    let hs = 1.0 / (dk as f64).sqrt();
    let mut glimpse_attn = vec![0.0; heads * m];
    let mut glimpse = vec![0.0; d];
    for h in 0..heads {
        let off = h * dk;
        let qh = &query[off..off + dk];
        let row = &mut glimpse_attn[h * m..(h + 1) * m];
        for (k, s) in row.iter_mut().enumerate() {
            *s = dot(qh, &kg[k * d + off..k * d + off + dk]) * hs;
        }
        softmax_in_place(row);
        for (k, &a) in row.iter().enumerate() {
            for (g, v) in glimpse[off..off + dk].iter_mut().zip(&vg[k * d + off..k * d + off + dk]) {
                *g += a * v;
            }
        }
    }
    let glimpse_out = matmul(&glimpse, params.tensor(&lay.glimpse_out), 1, d, d);

    let ls = 1.0 / (d as f64).sqrt();
    let tanh: Vec<f64> = (0..m).map(|k| (dot(&glimpse_out, &kl[k * d..(k + 1) * d]) * ls).tanh()).collect();
    let mut logits: Vec<f64> = tanh.iter().map(|t| LOGIT_CLIP * t).collect();
    softmax_in_place(&mut logits);
    let mut probs = vec![0.0; n];
    for (&i, &p) in feasible.iter().zip(&logits) {
        probs[i] = p;
    }
    Ok(StepCache {
        flags: flags.to_vec(),
        ctx_in,
        query,
        feasible,
        kg,
        vg,
        kl,
        glimpse_attn,
        glimpse,
        glimpse_out,
        tanh,
        probs,
    })
}

fn scatter_dyn(dshift: &[f64], flags: &[f64], feasible: &[usize], d: usize, dbase: &mut [f64], du: &mut [f64]) {
    for (k, &i) in feasible.iter().enumerate() {
        let row = &dshift[k * d..(k + 1) * d];
        for (b, g) in dbase[i * d..(i + 1) * d].iter_mut().zip(row) {
            *b += g;
        }
        for (f, &fv) in flags[i * DYN_FEATURES..(i + 1) * DYN_FEATURES].iter().enumerate() {
            if fv != 0.0 {
                for (u, g) in du[f * d..(f + 1) * d].iter_mut().zip(row) {
                    *u += fv * g;
                }
            }
        }
    }
}

/// Backward of one step given `dlogits[k]`, the loss gradient with respect
/// to the clipped logit of `feasible[k]`.
pub fn step_backward(
    params: &PolicyParams,
    c: &StepCache,
    dlogits: &[f64],
    grad: &mut [f64],
    pg: &mut PrepGrad,
    dgraph: &mut [f64],
) {
    let d = c.query.len();
    let m = c.feasible.len();
    let lay = &params.layout;
    let heads = params.dims.heads;
    let dk = params.dims.head_dim();
    let ls = 1.0 / (d as f64).sqrt();

    let mut dgo = vec![0.0; d];
    let mut dkl = vec![0.0; m * d];
    for k in 0..m {
        let ds = dlogits[k] * LOGIT_CLIP * (1.0 - c.tanh[k] * c.tanh[k]) * ls;
        if ds == 0.0 {
            continue;
        }
        for t in 0..d {
            dgo[t] += ds * c.kl[k * d + t];
            dkl[k * d + t] = ds * c.glimpse_out[t];
        }
    }
    scatter_dyn(&dkl, &c.flags, &c.feasible, d, &mut pg.kl, &mut grad[lay.logit_key_dyn.clone()]);

    matmul_at_b_acc(&c.glimpse, &dgo, 1, d, d, &mut grad[lay.glimpse_out.clone()]);
    let mut dg = vec![0.0; d];
    matmul_a_bt_acc(&dgo, params.tensor(&lay.glimpse_out), 1, d, d, &mut dg);

    let hs = 1.0 / (dk as f64).sqrt();
    let mut dq = vec![0.0; d];
    let mut dkg = vec![0.0; m * d];
    let mut dvg = vec![0.0; m * d];
    let mut da = vec![0.0; m];
    for h in 0..heads {
        let off = h * dk;
        let a = &c.glimpse_attn[h * m..(h + 1) * m];
        let gh = &dg[off..off + dk];
        for k in 0..m {
            da[k] = dot(gh, &c.vg[k * d + off..k * d + off + dk]);
            for t in 0..dk {
                dvg[k * d + off + t] += a[k] * gh[t];
            }
        }
        let s = dot(a, &da);
        for k in 0..m {
            let du = a[k] * (da[k] - s) * hs;
            if du == 0.0 {
                continue;
            }
            for t in 0..dk {
                dq[off + t] += du * c.kg[k * d + off + t];
                dkg[k * d + off + t] += du * c.query[off + t];
            }
        }
    }
    scatter_dyn(&dkg, &c.flags, &c.feasible, d, &mut pg.kg, &mut grad[lay.glimpse_key_dyn.clone()]);
    scatter_dyn(&dvg, &c.flags, &c.feasible, d, &mut pg.vg, &mut grad[lay.glimpse_value_dyn.clone()]);

    let ci = c.ctx_in.len();
    matmul_at_b_acc(&c.ctx_in, &dq, 1, ci, d, &mut grad[lay.context.clone()]);
    let mut dctx = vec![0.0; ci];
    matmul_a_bt_acc(&dq, params.tensor(&lay.context), 1, ci, d, &mut dctx);
    for (g, v) in dgraph.iter_mut().zip(&dctx[..d]) {
        *g += v;
    }
}

/// Backward of [`prepare`]: accumulates weight grads and node-embedding grads.
pub fn prepare_backward(params: &PolicyParams, enc: &Encoding, pg: &PrepGrad, grad: &mut [f64], dnodes: &mut [f64]) {
    let (n, d) = (enc.n, enc.d);
    let lay = &params.layout;
    for (g, r) in [(&pg.kg, &lay.glimpse_key), (&pg.vg, &lay.glimpse_value), (&pg.kl, &lay.logit_key)] {
        matmul_at_b_acc(&enc.nodes, g, n, d, d, &mut grad[r.clone()]);
        matmul_a_bt_acc(g, params.tensor(r), n, d, d, dnodes);
    }
}
