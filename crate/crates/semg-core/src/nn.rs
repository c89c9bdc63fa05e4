//! Reverse-mode-differentiable numeric core.
//!
//! Explicit forward/backward function pairs for the handful of layer kinds
//! the classifier stack needs: dense, 1-D same-padded convolution, layer
//! normalization, Mish/ReLU/tanh/row-softmax activations, and inverted
//! dropout. There is no general tape; the model wires these together as a
//! static feed-forward list. All math is `f64`.
//!
//! Backward functions take the forward inputs (plus whatever small cache the
//! forward returned), accumulate parameter gradients into caller-owned
//! buffers, and return the gradient with respect to the layer input.

use crate::error::{Error, Result};
use crate::tensor::Tensor2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// `out = x * w + b`, bias broadcast over rows. `x: N x I`, `w: I x O`, `b: 1 x O`.
pub fn dense_forward(x: &Tensor2, w: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if x.cols() != w.rows() {
        return Err(Error::Dimension(format!(
            "dense: input {}x{} vs weight {}x{}",
            x.rows(),
            x.cols(),
            w.rows(),
            w.cols()
        )));
    }
    if b.rows() != 1 || b.cols() != w.cols() {
        return Err(Error::Dimension(format!(
            "dense: bias {}x{} vs weight {}x{}",
            b.rows(),
            b.cols(),
            w.rows(),
            w.cols()
        )));
    }
    let (n, i_dim) = x.shape();
    let o_dim = w.cols();
    let mut out = Tensor2::zeros(n, o_dim);
    for r in 0..n {
        out.row_mut(r).copy_from_slice(b.row(0));
        let x_row = x.row(r);
        for i in 0..i_dim {
            let xi = x_row[i];
            let w_row = w.row(i);
            let out_row = out.row_mut(r);
            for o in 0..o_dim {
                out_row[o] += xi * w_row[o];
            }
        }
    }
    Ok(out)
}

/// Accumulates `dw`, `db` and returns `dx` for a dense layer.
pub fn dense_backward(
    x: &Tensor2,
    w: &Tensor2,
    dy: &Tensor2,
    dw: &mut Tensor2,
    db: &mut Tensor2,
) -> Tensor2 {
    let (n, i_dim) = x.shape();
    let o_dim = w.cols();
    debug_assert_eq!(dy.shape(), (n, o_dim));
    debug_assert_eq!(dw.shape(), w.shape());
    debug_assert_eq!(db.shape(), (1, o_dim));

    let mut dx = Tensor2::zeros(n, i_dim);
    for r in 0..n {
        let dy_row = dy.row(r);
        let x_row = x.row(r);
        // db += dy ; dw += outer(x_row, dy_row) ; dx = dy * w^T
        {
            let db_row = db.row_mut(0);
            for o in 0..o_dim {
                db_row[o] += dy_row[o];
            }
        }
        for i in 0..i_dim {
            let xi = x_row[i];
            let w_row = w.row(i);
            let dw_row = dw.row_mut(i);
            let mut acc = 0.0;
            for o in 0..o_dim {
                dw_row[o] += xi * dy_row[o];
                acc += dy_row[o] * w_row[o];
            }
            dx[(r, i)] = acc;
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// Conv1d (same padding, odd kernel)
// ---------------------------------------------------------------------------

/// 1-D convolution over time with zero same-padding.
///
/// `x: T x C_in`; the kernel is stored as `(k * C_in) x C_out` where row
/// `tap * C_in + i` holds tap `tap`'s weights for input channel `i`;
/// `b: 1 x C_out`. Output is `T x C_out`.
pub fn conv1d_forward(x: &Tensor2, kernel: &Tensor2, k: usize, b: &Tensor2) -> Result<Tensor2> {
    if k % 2 == 0 {
        return Err(Error::Config(format!("conv1d kernel size {} must be odd", k)));
    }
    let (t_len, c_in) = x.shape();
    if kernel.rows() != k * c_in {
        return Err(Error::Dimension(format!(
            "conv1d: kernel rows {} vs k*C_in {}",
            kernel.rows(),
            k * c_in
        )));
    }
    let c_out = kernel.cols();
    if b.rows() != 1 || b.cols() != c_out {
        return Err(Error::Dimension(format!(
            "conv1d: bias {}x{} vs C_out {}",
            b.rows(),
            b.cols(),
            c_out
        )));
    }
    let half = k / 2;
    let mut out = Tensor2::zeros(t_len, c_out);
    for t in 0..t_len {
        out.row_mut(t).copy_from_slice(b.row(0));
        for tap in 0..k {
            let s = t as isize + tap as isize - half as isize;
            if s < 0 || s >= t_len as isize {
                continue;
            }
            let x_row = x.row(s as usize);
            for i in 0..c_in {
                let xi = x_row[i];
                let k_row = kernel.row(tap * c_in + i);
                let out_row = out.row_mut(t);
                for o in 0..c_out {
                    out_row[o] += xi * k_row[o];
                }
            }
        }
    }
    Ok(out)
}

/// Accumulates `dkernel`, `db` and returns `dx` for [`conv1d_forward`].
pub fn conv1d_backward(
    x: &Tensor2,
    kernel: &Tensor2,
    k: usize,
    dy: &Tensor2,
    dkernel: &mut Tensor2,
    db: &mut Tensor2,
) -> Tensor2 {
    let (t_len, c_in) = x.shape();
    let c_out = kernel.cols();
    let half = k / 2;
    let mut dx = Tensor2::zeros(t_len, c_in);
    for t in 0..t_len {
        let dy_row = dy.row(t);
        {
            let db_row = db.row_mut(0);
            for o in 0..c_out {
                db_row[o] += dy_row[o];
            }
        }
        for tap in 0..k {
            let s = t as isize + tap as isize - half as isize;
            if s < 0 || s >= t_len as isize {
                continue;
            }
            let s = s as usize;
            for i in 0..c_in {
                let xi = x[(s, i)];
                let k_row = kernel.row(tap * c_in + i);
                let dk_row = dkernel.row_mut(tap * c_in + i);
                let mut acc = 0.0;
                for o in 0..c_out {
                    dk_row[o] += xi * dy_row[o];
                    acc += dy_row[o] * k_row[o];
                }
                dx[(s, i)] += acc;
            }
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// Layer normalization
// ---------------------------------------------------------------------------

/// Per-row intermediates needed by [`layernorm_backward`].
pub struct LayerNormCache {
    /// Normalized rows before the affine map.
    pub xhat: Tensor2,
    /// `1 / sqrt(var + eps)` per row.
    pub inv_std: Vec<f64>,
}

/// Normalizes each row to zero mean, unit variance, then applies
/// `gain (1 x n)` and `shift (1 x n)`.
pub fn layernorm_forward(
    x: &Tensor2,
    gain: &Tensor2,
    shift: &Tensor2,
    eps: f64,
) -> Result<(Tensor2, LayerNormCache)> {
    let (rows, n) = x.shape();
    if gain.cols() != n || shift.cols() != n {
        return Err(Error::Dimension(format!(
            "layernorm: gain/shift width {}/{} vs row length {}",
            gain.cols(),
            shift.cols(),
            n
        )));
    }
    let mut xhat = Tensor2::zeros(rows, n);
    let mut inv_std = Vec::with_capacity(rows);
    let mut out = Tensor2::zeros(rows, n);
    let nf = n as f64;
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / nf;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        let istd = 1.0 / (var + eps).sqrt();
        inv_std.push(istd);
        let g = gain.row(0);
        let s = shift.row(0);
        for c in 0..n {
            let h = (row[c] - mean) * istd;
            xhat[(r, c)] = h;
            out[(r, c)] = g[c] * h + s[c];
        }
    }
    Ok((out, LayerNormCache { xhat, inv_std }))
}

/// Accumulates `dgain`, `dshift` and returns `dx` for [`layernorm_forward`].
pub fn layernorm_backward(
    cache: &LayerNormCache,
    gain: &Tensor2,
    dy: &Tensor2,
    dgain: &mut Tensor2,
    dshift: &mut Tensor2,
) -> Tensor2 {
    let (rows, n) = dy.shape();
    let nf = n as f64;
    let mut dx = Tensor2::zeros(rows, n);
    for r in 0..rows {
        let dy_row = dy.row(r);
        let xhat_row = cache.xhat.row(r);
        let g = gain.row(0);
        // Accumulate parameter grads and the two row means the input grad needs.
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for c in 0..n {
            let dxhat = dy_row[c] * g[c];
            dgain[(0, c)] += dy_row[c] * xhat_row[c];
            dshift[(0, c)] += dy_row[c];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat_row[c];
        }
        mean_dxhat /= nf;
        mean_dxhat_xhat /= nf;
        let istd = cache.inv_std[r];
        for c in 0..n {
            let dxhat = dy_row[c] * g[c];
            dx[(r, c)] = (dxhat - mean_dxhat - xhat_row[c] * mean_dxhat_xhat) * istd;
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

/// Numerically stable `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `mish(x) = x * tanh(ln(1 + e^x))` applied elementwise.
pub fn mish(x: &Tensor2) -> Tensor2 {
    x.map(|v| v * softplus(v).tanh())
}

/// Analytic Mish derivative: `tanh(sp(x)) + x * (1 - tanh^2(sp(x))) * sigmoid(x)`.
pub fn mish_derivative(x: f64) -> f64 {
    let t = softplus(x).tanh();
    t + x * (1.0 - t * t) * sigmoid(x)
}

pub fn mish_backward(x: &Tensor2, dy: &Tensor2) -> Tensor2 {
    debug_assert_eq!(x.shape(), dy.shape());
    let mut dx = Tensor2::zeros(x.rows(), x.cols());
    for (i, d) in dx.as_mut_slice().iter_mut().enumerate() {
        *d = dy.as_slice()[i] * mish_derivative(x.as_slice()[i]);
    }
    dx
}

pub fn relu(x: &Tensor2) -> Tensor2 {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(x: &Tensor2, dy: &Tensor2) -> Tensor2 {
    let mut dx = Tensor2::zeros(x.rows(), x.cols());
    for (i, d) in dx.as_mut_slice().iter_mut().enumerate() {
        *d = if x.as_slice()[i] > 0.0 { dy.as_slice()[i] } else { 0.0 };
    }
    dx
}

pub fn tanh(x: &Tensor2) -> Tensor2 {
    x.map(f64::tanh)
}

pub fn tanh_backward(y: &Tensor2, dy: &Tensor2) -> Tensor2 {
    let mut dx = Tensor2::zeros(y.rows(), y.cols());
    for (i, d) in dx.as_mut_slice().iter_mut().enumerate() {
        let t = y.as_slice()[i];
        *d = dy.as_slice()[i] * (1.0 - t * t);
    }
    dx
}

/// Row-wise softmax, stabilized by subtracting each row's maximum.
pub fn softmax_rows(x: &Tensor2) -> Tensor2 {
    let (rows, n) = x.shape();
    let mut out = Tensor2::zeros(rows, n);
    for r in 0..rows {
        let row = x.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..n {
            let e = (row[c] - max).exp();
            out[(r, c)] = e;
            sum += e;
        }
        for c in 0..n {
            out[(r, c)] /= sum;
        }
    }
    out
}

/// Input gradient for [`softmax_rows`] given its output `y`:
/// `dx = y .* (dy - sum(dy .* y))` per row.
pub fn softmax_rows_backward(y: &Tensor2, dy: &Tensor2) -> Tensor2 {
    let (rows, n) = y.shape();
    let mut dx = Tensor2::zeros(rows, n);
    for r in 0..rows {
        let y_row = y.row(r);
        let dy_row = dy.row(r);
        let dot: f64 = y_row.iter().zip(dy_row).map(|(a, b)| a * b).sum();
        for c in 0..n {
            dx[(r, c)] = y_row[c] * (dy_row[c] - dot);
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/// Inverted dropout. In training mode zeroes entries with probability `rate`
/// and scales survivors by `1/(1-rate)`; in inference mode it is the identity
/// and consumes no randomness. Returns the mask used (None outside training
/// or at rate 0).
pub fn dropout_forward(
    x: &Tensor2,
    rate: f64,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<(Tensor2, Option<Tensor2>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {} outside [0, 1)", rate)));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mut mask = Tensor2::zeros(x.rows(), x.cols());
    for m in mask.as_mut_slice() {
        *m = if rng.random::<f64>() < keep { scale } else { 0.0 };
    }
    let mut out = x.clone();
    for (o, m) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *o *= m;
    }
    Ok((out, Some(mask)))
}

pub fn dropout_backward(mask: Option<&Tensor2>, dy: &Tensor2) -> Tensor2 {
    match mask {
        None => dy.clone(),
        Some(mask) => {
            let mut dx = dy.clone();
            for (d, m) in dx.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                *d *= m;
            }
            dx
        }
    }
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Fan-in-scaled uniform init: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn init_uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let mut t = Tensor2::zeros(rows, cols);
    for v in t.as_mut_slice() {
        *v = rng.random_range(-bound..bound);
    }
    t
}
