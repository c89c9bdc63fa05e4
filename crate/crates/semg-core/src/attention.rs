//! Channel-wise temporal attention, plus the two simpler variants it is
//! ablated against.
//!
//! The main mechanism treats each channel's time series independently: the
//! transposed input `h^T (C x T)` is pushed row by row through one shared
//! `T x T` linear map, a softmax along time turns each row into a temporal
//! probability mask `alpha (C x T)`, and the context vector is the
//! mask-weighted sum of each channel over time. Every output entry is a
//! convex combination of that channel's samples.
//!
//! The bias is a scalar by default and can be widened to one value per
//! timestep.

use crate::error::{Error, Result};
use crate::nn;
use crate::tensor::Tensor2;

/// Parameters of the channel-wise temporal attention.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// Shared `T x T` map applied to every channel's time series.
    pub w_time: Tensor2,
    /// Score bias: `1 x 1` (scalar, default) or `1 x T` (per timestep).
    pub bias: Tensor2,
}

impl AttentionParams {
    pub fn zeros(t_len: usize) -> Self {
        Self {
            w_time: Tensor2::zeros(t_len, t_len),
            bias: Tensor2::zeros(1, 1),
        }
    }

    fn check(&self, t_len: usize) -> Result<()> {
        if self.w_time.shape() != (t_len, t_len) {
            return Err(Error::Dimension(format!(
                "attention weights {}x{} vs input timesteps {}",
                self.w_time.rows(),
                self.w_time.cols(),
                t_len
            )));
        }
        if self.bias.rows() != 1 || (self.bias.cols() != 1 && self.bias.cols() != t_len) {
            return Err(Error::Dimension(format!(
                "attention bias {}x{} must be 1x1 or 1x{}",
                self.bias.rows(),
                self.bias.cols(),
                t_len
            )));
        }
        Ok(())
    }
}

/// Intermediates for [`attend_backward`].
pub struct AttendCache {
    /// `C x T` attention matrix; each row sums to 1.
    pub alpha: Tensor2,
}

/// Applies channel-wise temporal attention to `h (T x C)`.
///
/// Scores are `h^T * W + b` per channel row; softmax runs along time; the
/// context vector entry for channel `j` is `sum_t alpha[j][t] * h[t][j]`.
/// Returns the `1 x C` context and the cache needed for the backward pass.
pub fn attend(h: &Tensor2, p: &AttentionParams) -> Result<(Tensor2, AttendCache)> {
    let (t_len, channels) = h.shape();
    p.check(t_len)?;

    let mut scores = h.transpose().matmul(&p.w_time)?;
    for c in 0..channels {
        let row = scores.row_mut(c);
        if p.bias.cols() == 1 {
            let b = p.bias[(0, 0)];
            for v in row {
                *v += b;
            }
        } else {
            for (v, b) in row.iter_mut().zip(p.bias.row(0)) {
                *v += b;
            }
        }
    }
    let alpha = nn::softmax_rows(&scores);

    let mut context = Tensor2::zeros(1, channels);
    for c in 0..channels {
        let mut acc = 0.0;
        for t in 0..t_len {
            acc += alpha[(c, t)] * h[(t, c)];
        }
        context[(0, c)] = acc;
    }
    Ok((context, AttendCache { alpha }))
}

/// Backward pass for [`attend`]. Accumulates `dw`/`dbias` and returns `dh`.
pub fn attend_backward(
    h: &Tensor2,
    p: &AttentionParams,
    cache: &AttendCache,
    dcontext: &Tensor2,
    dw: &mut Tensor2,
    dbias: &mut Tensor2,
) -> Tensor2 {
    let (t_len, channels) = h.shape();
    let alpha = &cache.alpha;

    // dalpha[c][t] = dc[c] * h[t][c]; the direct path into h is alpha-weighted.
    let mut dalpha = Tensor2::zeros(channels, t_len);
    let mut dh = Tensor2::zeros(t_len, channels);
    for c in 0..channels {
        let g = dcontext[(0, c)];
        for t in 0..t_len {
            dalpha[(c, t)] = g * h[(t, c)];
            dh[(t, c)] = g * alpha[(c, t)];
        }
    }

    let dscores = nn::softmax_rows_backward(alpha, &dalpha);

    // scores = h^T * W + b:
    //   dW += h * dscores          (T x C) * (C x T) -> T x T
    //   dh^T += dscores * W^T  =>  dh[t][c] += sum_j dscores[c][j] * W[t][j]
    for t in 0..t_len {
        for c in 0..channels {
            let h_tc = h[(t, c)];
            let ds_row = dscores.row(c);
            let w_row = p.w_time.row(t);
            let dw_row = dw.row_mut(t);
            let mut acc = 0.0;
            for j in 0..t_len {
                dw_row[j] += h_tc * ds_row[j];
                acc += ds_row[j] * w_row[j];
            }
            dh[(t, c)] += acc;
        }
    }
    if dbias.cols() == 1 {
        dbias[(0, 0)] += dscores.as_slice().iter().sum::<f64>();
    } else {
        for c in 0..channels {
            for j in 0..t_len {
                dbias[(0, j)] += dscores[(c, j)];
            }
        }
    }
    dh
}

/// Parameters for the per-timestep scalar-score variant.
#[derive(Debug, Clone, PartialEq)]
pub struct RaffelParams {
    /// `C x 1` projection of each timestep to a scalar score.
    pub w: Tensor2,
    /// `1 x 1` score bias.
    pub b: Tensor2,
}

impl RaffelParams {
    pub fn zeros(channels: usize) -> Self {
        Self {
            w: Tensor2::zeros(channels, 1),
            b: Tensor2::zeros(1, 1),
        }
    }
}

/// Intermediates for [`attend_raffel_backward`].
pub struct RaffelCache {
    /// `1 x T` attention over timesteps; sums to 1.
    pub alpha: Tensor2,
    /// `1 x T` tanh-activated scores.
    pub scores: Tensor2,
}

/// Scalar-score attention: `alpha = softmax_t(tanh(h_t . w + b))`,
/// `c = sum_t alpha_t h_t`.
pub fn attend_raffel(h: &Tensor2, p: &RaffelParams) -> Result<(Tensor2, RaffelCache)> {
    let (t_len, channels) = h.shape();
    if p.w.shape() != (channels, 1) {
        return Err(Error::Dimension(format!(
            "raffel weights {}x{} vs {} channels",
            p.w.rows(),
            p.w.cols(),
            channels
        )));
    }
    let mut scores = Tensor2::zeros(1, t_len);
    for t in 0..t_len {
        let mut acc = p.b[(0, 0)];
        for c in 0..channels {
            acc += h[(t, c)] * p.w[(c, 0)];
        }
        scores[(0, t)] = acc.tanh();
    }
    let alpha = nn::softmax_rows(&scores);
    let mut context = Tensor2::zeros(1, channels);
    for t in 0..t_len {
        let a = alpha[(0, t)];
        for c in 0..channels {
            context[(0, c)] += a * h[(t, c)];
        }
    }
    Ok((context, RaffelCache { alpha, scores }))
}

/// Backward pass for [`attend_raffel`].
pub fn attend_raffel_backward(
    h: &Tensor2,
    p: &RaffelParams,
    cache: &RaffelCache,
    dcontext: &Tensor2,
    dw: &mut Tensor2,
    db: &mut Tensor2,
) -> Tensor2 {
    let (t_len, channels) = h.shape();
    let mut dalpha = Tensor2::zeros(1, t_len);
    let mut dh = Tensor2::zeros(t_len, channels);
    for t in 0..t_len {
        let mut acc = 0.0;
        for c in 0..channels {
            acc += dcontext[(0, c)] * h[(t, c)];
            dh[(t, c)] = dcontext[(0, c)] * cache.alpha[(0, t)];
        }
        dalpha[(0, t)] = acc;
    }
    let dscores_post = nn::softmax_rows_backward(&cache.alpha, &dalpha);
    // Through tanh: scores stored post-activation.
    for t in 0..t_len {
        let s = cache.scores[(0, t)];
        let dpre = dscores_post[(0, t)] * (1.0 - s * s);
        db[(0, 0)] += dpre;
        for c in 0..channels {
            dw[(c, 0)] += dpre * h[(t, c)];
            dh[(t, c)] += dpre * p.w[(c, 0)];
        }
    }
    dh
}

/// Parameter-free temporal sum: `c = sum_t h_t`.
pub fn attend_sum(h: &Tensor2) -> Tensor2 {
    let (t_len, channels) = h.shape();
    let mut context = Tensor2::zeros(1, channels);
    for t in 0..t_len {
        for c in 0..channels {
            context[(0, c)] += h[(t, c)];
        }
    }
    context
}

/// Backward pass for [`attend_sum`].
pub fn attend_sum_backward(t_len: usize, dcontext: &Tensor2) -> Tensor2 {
    let channels = dcontext.cols();
    let mut dh = Tensor2::zeros(t_len, channels);
    for t in 0..t_len {
        dh.row_mut(t).copy_from_slice(dcontext.row(0));
    }
    dh
}
