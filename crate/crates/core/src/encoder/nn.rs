//! Row-wise primitives with their backward passes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

pub const LN_EPS: f64 = 1e-5;

/// Saved state of a row-wise layer norm.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub fn layer_norm(x: ArrayView2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> (Array2<f64>, LayerNormCache) {
    let (n, d) = x.dim();
    let mut xhat = Array2::zeros((n, d));
    let mut inv_std = Array1::zeros(n);
    for (i, row) in x.outer_iter().enumerate() {
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std[i] = inv;
        xhat.row_mut(i)
            .iter_mut()
            .zip(row)
            .for_each(|(o, v)| *o = (v - mean) * inv);
    }
    let y = &xhat * gamma + beta;
    (y, LayerNormCache { xhat, inv_std })
}

/// Returns `dx` and accumulates into `dgamma`, `dbeta`.
pub fn layer_norm_backward(
    dy: ArrayView2<f64>,
    cache: &LayerNormCache,
    gamma: &Array1<f64>,
    dgamma: &mut Array1<f64>,
    dbeta: &mut Array1<f64>,
) -> Array2<f64> {
    *dgamma += &(&dy * &cache.xhat).sum_axis(Axis(0));
    *dbeta += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let dxhat = &dy * gamma;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let g = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let sum_g = g.sum();
        let sum_gx = g.dot(&xh);
        let inv = cache.inv_std[i];
        dx.row_mut(i)
            .iter_mut()
            .zip(g.iter().zip(xh.iter()))
            .for_each(|(o, (gi, xi))| *o = inv / d * (d * gi - sum_g - xi * sum_gx));
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Numerically stable softmax of each row.
pub fn softmax_rows(mut s: Array2<f64>) -> Array2<f64> {
    for mut row in s.outer_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row /= z;
    }
    s
}

pub fn softmax(v: ArrayView1<f64>) -> Array1<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = v.mapv(|x| (x - max).exp());
    let z = e.sum();
    e / z
}

/// Gradient through row-wise softmax: `dS = P * (dP - rowsum(dP * P))`.
pub fn softmax_rows_backward(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let inner = (dp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
    p * &(dp - &inner)
}
