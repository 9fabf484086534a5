//! Forward and backward passes of the pre-norm temporal encoder.
//!
//! Sequence layout: row 0 is the CLS token, rows `1..=T` are frame features
//! plus their positional embeddings. Each layer computes
//! `X1 = X + MHA(LN1(X))` and `X2 = X1 + FFN(LN2(X1))`; the output is the
//! final-layer CLS row after a last layer norm.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::nn::{
    gelu, gelu_grad, layer_norm, layer_norm_backward, softmax_rows, softmax_rows_backward, LayerNormCache,
};
use super::params::{LayerParams, TemporalEncoderParams};

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    #[cfg_attr(not(test), allow(dead_code))]
    input: Array2<f64>,
    ln1: LayerNormCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Attention probabilities per head, `n x n`.
    probs: Vec<Array2<f64>>,
    concat: Array2<f64>,
    ln2: LayerNormCache,
    b: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    layers: Vec<LayerCache>,
    final_ln: LayerNormCache,
    n_frames: usize,
}

impl EncoderCache {
    /// Final-layer attention probabilities of head `h`.
    pub fn final_attention(&self, head: usize) -> &Array2<f64> {
        &self.layers.last().expect("at least one layer").probs[head]
    }

    pub fn n_heads(&self) -> usize {
        self.layers.last().map_or(0, |l| l.probs.len())
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }
}

fn layer_forward(p: &LayerParams, x: Array2<f64>, n_heads: usize) -> (Array2<f64>, LayerCache) {
    let d = x.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (a, ln1) = layer_norm(x.view(), &p.ln1_gamma, &p.ln1_beta);
    let q = a.dot(&p.w_q) + &p.b_q;
    let k = a.dot(&p.w_k) + &p.b_k;
    let v = a.dot(&p.w_v) + &p.b_v;
    let mut concat = Array2::zeros(x.raw_dim());
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        let prob = softmax_rows(scores);
        concat.slice_mut(cols).assign(&prob.dot(&v.slice(cols)));
        probs.push(prob);
    }
    let x1 = &x + &(concat.dot(&p.w_o) + &p.b_o);
    let (b, ln2) = layer_norm(x1.view(), &p.ln2_gamma, &p.ln2_beta);
    let pre = b.dot(&p.w_ff1) + &p.b_ff1;
    let act = pre.mapv(gelu);
    let out = &x1 + &(act.dot(&p.w_ff2) + &p.b_ff2);
    let cache = LayerCache {
        input: x,
        ln1,
        a,
        q,
        k,
        v,
        probs,
        concat,
        ln2,
        b,
        pre,
        act,
    };
    (out, cache)
}

/// Accumulates parameter gradients into `g` and returns `dL/dX`.
fn layer_backward(p: &LayerParams, c: &LayerCache, dout: Array2<f64>, g: &mut LayerParams) -> Array2<f64> {
    let n_heads = c.probs.len();
    let d = dout.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    // feed-forward branch
    g.w_ff2 += &c.act.t().dot(&dout);
    g.b_ff2 += &dout.sum_axis(Axis(0));
    let dact = dout.dot(&p.w_ff2.t());
    let dpre = &dact * &c.pre.mapv(gelu_grad);
    g.w_ff1 += &c.b.t().dot(&dpre);
    g.b_ff1 += &dpre.sum_axis(Axis(0));
    let db = dpre.dot(&p.w_ff1.t());
    let dx1 = &dout + &layer_norm_backward(db.view(), &c.ln2, &p.ln2_gamma, &mut g.ln2_gamma, &mut g.ln2_beta);

    // attention branch
    g.w_o += &c.concat.t().dot(&dx1);
    g.b_o += &dx1.sum_axis(Axis(0));
    let dconcat = dx1.dot(&p.w_o.t());
    let mut dq = Array2::zeros(c.q.raw_dim());
    let mut dk = Array2::zeros(c.k.raw_dim());
    let mut dv = Array2::zeros(c.v.raw_dim());
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let prob = &c.probs[h];
        let dhead = dconcat.slice(cols);
        let dprob = dhead.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&prob.t().dot(&dhead));
        let dscores = softmax_rows_backward(prob, &dprob) * scale;
        dq.slice_mut(cols).assign(&dscores.dot(&c.k.slice(cols)));
        dk.slice_mut(cols).assign(&dscores.t().dot(&c.q.slice(cols)));
    }
    g.w_q += &c.a.t().dot(&dq);
    g.b_q += &dq.sum_axis(Axis(0));
    g.w_k += &c.a.t().dot(&dk);
    g.b_k += &dk.sum_axis(Axis(0));
    g.w_v += &c.a.t().dot(&dv);
    g.b_v += &dv.sum_axis(Axis(0));
    let da = dq.dot(&p.w_q.t()) + dk.dot(&p.w_k.t()) + dv.dot(&p.w_v.t());
    &dx1 + &layer_norm_backward(da.view(), &c.ln1, &p.ln1_gamma, &mut g.ln1_gamma, &mut g.ln1_beta)
}

/// Runs the encoder on `T x D` frame features (`T <= max_frames`, checked
/// by the caller) and returns the CLS summary with the activation cache.
pub(crate) fn forward(params: &TemporalEncoderParams, frames: ArrayView2<f64>) -> (Array1<f64>, EncoderCache) {
    let t = frames.nrows();
    let d = params.config.dim;
    let mut x = Array2::zeros((t + 1, d));
    x.row_mut(0).assign(&params.cls);
    x.slice_mut(s![1.., ..])
        .assign(&(&frames + &params.positions.slice(s![..t, ..])));
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (out, cache) = layer_forward(layer, x, params.config.n_heads);
        layers.push(cache);
        x = out;
    }
    let cls_row = x.slice(s![0..1, ..]);
    let (y, final_ln) = layer_norm(cls_row, &params.final_gamma, &params.final_beta);
    (
        y.row(0).to_owned(),
        EncoderCache {
            layers,
            final_ln,
            n_frames: t,
        },
    )
}

/// Accumulates `dL/dθ` for `dL/dh_cls = dh` into `grads`.
pub(crate) fn backward(
    params: &TemporalEncoderParams,
    cache: &EncoderCache,
    dh: &Array1<f64>,
    grads: &mut TemporalEncoderParams,
) {
    let d = params.config.dim;
    let dy = dh.view().insert_axis(Axis(0));
    let dcls_row = layer_norm_backward(
        dy,
        &cache.final_ln,
        &params.final_gamma,
        &mut grads.final_gamma,
        &mut grads.final_beta,
    );
    let n = cache.n_frames + 1;
    let mut dx = Array2::zeros((n, d));
    dx.row_mut(0).assign(&dcls_row.row(0));
    for (i, (layer, c)) in params.layers.iter().zip(&cache.layers).enumerate().rev() {
        dx = layer_backward(layer, c, dx, &mut grads.layers[i]);
    }
    grads.cls += &dx.row(0);
    let mut dpos = grads.positions.slice_mut(s![..cache.n_frames, ..]);
    dpos += &dx.slice(s![1.., ..]);
}

/// Input rows of the first layer (CLS plus positioned frames), for tests.
#[cfg(test)]
pub(crate) fn first_layer_input(cache: &EncoderCache) -> &Array2<f64> {
    &cache.layers[0].input
}
