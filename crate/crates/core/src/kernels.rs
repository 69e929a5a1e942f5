//! Forward and backward kernels shared by the autodiff graph and the
//! inference path.

use crate::scalar::{matmul, Scalar};

pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    if max == T::neg_infinity() {
        row.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    let inv = T::one() / sum;
    row.iter_mut().for_each(|v| *v = *v * inv);
}

/// Returns `log(sum(exp(row)))` computed with max subtraction.
pub fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let sum = row.iter().fold(T::zero(), |s, &v| s + (v - max).exp());
    max + sum.ln()
}

pub fn log_softmax_in_place<T: Scalar>(row: &mut [T]) {
    let lse = log_sum_exp(row);
    row.iter_mut().for_each(|v| *v = *v - lse);
}

/// `out = x * w + b` with `x: n x din`, `w: din x dout`.
pub fn linear_forward<T: Scalar>(
    x: &[T],
    n: usize,
    din: usize,
    w: &[T],
    dout: usize,
    b: Option<&[T]>,
    out: &mut [T],
) {
    match b {
        Some(b) => {
            for row in out.chunks_exact_mut(dout) {
                row.copy_from_slice(b);
            }
            matmul(n, din, dout, x, false, w, false, out, true);
        }
        None => matmul(n, din, dout, x, false, w, false, out, false),
    }
}

/// Row-wise layer normalization. `stats` receives `(mean, 1/std)` per row.
pub fn layer_norm_forward<T: Scalar>(
    x: &[T],
    d: usize,
    gain: &[T],
    bias: &[T],
    eps: T,
    out: &mut [T],
    mut stats: Option<&mut [(T, T)]>,
) {
    let inv_d = T::one() / T::from_usize(d);
    for (r, (xr, yr)) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)).enumerate() {
        let mean = xr.iter().fold(T::zero(), |s, &v| s + v) * inv_d;
        let var = xr.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) * inv_d;
        let rstd = T::one() / (var + eps).sqrt();
        for i in 0..d {
            yr[i] = (xr[i] - mean) * rstd * gain[i] + bias[i];
        }
        if let Some(s) = stats.as_deref_mut() {
            s[r] = (mean, rstd);
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn layer_norm_backward<T: Scalar>(
    x: &[T],
    d: usize,
    gain: &[T],
    stats: &[(T, T)],
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dgain: Option<&mut [T]>,
    mut dbias: Option<&mut [T]>,
) {
    let inv_d = T::one() / T::from_usize(d);
    for (r, (xr, gr)) in x.chunks_exact(d).zip(dy.chunks_exact(d)).enumerate() {
        let (mean, rstd) = stats[r];
        if let Some(dg) = dgain.as_deref_mut() {
            for i in 0..d {
                dg[i] = dg[i] + gr[i] * (xr[i] - mean) * rstd;
            }
        }
        if let Some(db) = dbias.as_deref_mut() {
            for i in 0..d {
                db[i] = db[i] + gr[i];
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for i in 0..d {
                let g = gr[i] * gain[i];
                let xhat = (xr[i] - mean) * rstd;
                sum_g = sum_g + g;
                sum_gx = sum_gx + g * xhat;
            }
            let dxr = &mut dx[r * d..(r + 1) * d];
            for i in 0..d {
                let g = gr[i] * gain[i];
                let xhat = (xr[i] - mean) * rstd;
                dxr[i] = dxr[i] + rstd * (g - inv_d * sum_g - xhat * inv_d * sum_gx);
            }
        }
    }
}

/// Geometry of a multi-head attention call over a padded batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnShape {
    pub batch: usize,
    pub q_len: usize,
    pub k_len: usize,
    pub heads: usize,
    pub d_model: usize,
    /// Key `j` is visible to query `i` only when `j <= i + q_offset`.
    pub causal: bool,
    pub q_offset: usize,
}

impl AttnShape {
    fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Scaled dot-product attention. `key_pad[b * k_len + j]` masks key `j` of
/// batch row `b`. `probs` has `batch * heads * q_len * k_len` entries.
pub fn attention_forward<T: Scalar>(
    s: &AttnShape,
    q: &[T],
    k: &[T],
    v: &[T],
    key_pad: &[bool],
    probs: &mut [T],
    out: &mut [T],
) {
    let dh = s.head_dim();
    let d = s.d_model;
    let scale = T::one() / T::from_usize(dh).sqrt();
    out.iter_mut().for_each(|o| *o = T::zero());
    for b in 0..s.batch {
        for h in 0..s.heads {
            for i in 0..s.q_len {
                let qrow = &q[(b * s.q_len + i) * d + h * dh..][..dh];
                let p = &mut probs[((b * s.heads + h) * s.q_len + i) * s.k_len..][..s.k_len];
                for j in 0..s.k_len {
                    let visible = !key_pad[b * s.k_len + j] && (!s.causal || j <= i + s.q_offset);
                    p[j] = if visible {
                        dot(qrow, &k[(b * s.k_len + j) * d + h * dh..][..dh]) * scale
                    } else {
                        T::neg_infinity()
                    };
                }
                softmax_in_place(p);
                let orow = &mut out[(b * s.q_len + i) * d + h * dh..][..dh];
                for j in 0..s.k_len {
                    let pj = p[j];
                    if pj == T::zero() {
                        continue;
                    }
                    let vrow = &v[(b * s.k_len + j) * d + h * dh..][..dh];
                    for t in 0..dh {
                        orow[t] = orow[t] + pj * vrow[t];
                    }
                }
            }
        }
    }
}

/// Accumulates gradients of [`attention_forward`] into whichever of
/// `dq`, `dk`, `dv` are present.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward<T: Scalar>(
    s: &AttnShape,
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    dout: &[T],
    mut dq: Option<&mut [T]>,
    mut dk: Option<&mut [T]>,
    mut dv: Option<&mut [T]>,
) {
    let dh = s.head_dim();
    let d = s.d_model;
    let scale = T::one() / T::from_usize(dh).sqrt();
    let mut ds = alloc::vec![T::zero(); s.k_len];
    for b in 0..s.batch {
        for h in 0..s.heads {
            for i in 0..s.q_len {
                let p = &probs[((b * s.heads + h) * s.q_len + i) * s.k_len..][..s.k_len];
                let go = &dout[(b * s.q_len + i) * d + h * dh..][..dh];
                let mut weighted = T::zero();
                for j in 0..s.k_len {
                    if p[j] == T::zero() {
                        ds[j] = T::zero();
                        continue;
                    }
                    let vrow = &v[(b * s.k_len + j) * d + h * dh..][..dh];
                    let dp = dot(go, vrow);
                    ds[j] = dp;
                    weighted = weighted + p[j] * dp;
                    if let Some(dv) = dv.as_deref_mut() {
                        let dvrow = &mut dv[(b * s.k_len + j) * d + h * dh..][..dh];
                        for t in 0..dh {
                            dvrow[t] = dvrow[t] + p[j] * go[t];
                        }
                    }
                }
                for j in 0..s.k_len {
                    ds[j] = p[j] * (ds[j] - weighted) * scale;
                }
                let qrow = &q[(b * s.q_len + i) * d + h * dh..][..dh];
                if let Some(dq) = dq.as_deref_mut() {
                    let dqrow = &mut dq[(b * s.q_len + i) * d + h * dh..][..dh];
                    for j in 0..s.k_len {
                        if ds[j] == T::zero() {
                            continue;
                        }
                        let krow = &k[(b * s.k_len + j) * d + h * dh..][..dh];
                        for t in 0..dh {
                            dqrow[t] = dqrow[t] + ds[j] * krow[t];
                        }
                    }
                }
                if let Some(dk) = dk.as_deref_mut() {
                    for j in 0..s.k_len {
                        if ds[j] == T::zero() {
                            continue;
                        }
                        let dkrow = &mut dk[(b * s.k_len + j) * d + h * dh..][..dh];
                        for t in 0..dh {
                            dkrow[t] = dkrow[t] + ds[j] * qrow[t];
                        }
                    }
                }
            }
        }
    }
}
