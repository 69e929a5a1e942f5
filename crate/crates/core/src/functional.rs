//! Checked single-vector forms of the numerics the model is built from.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::cross_entropy_forward;
use crate::kernels;
use crate::scalar::Scalar;

pub fn softmax<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input"));
    }
    let mut out = x.to_vec();
    kernels::softmax_in_place(&mut out);
    Ok(out)
}

pub fn layer_norm<T: Scalar>(x: &[T], gain: &[T], bias: &[T], eps: T) -> Result<Vec<T>> {
    if gain.len() != x.len() || bias.len() != x.len() {
        return Err(Error::Shape(alloc::format!(
            "layer_norm: x {}, gain {}, bias {}",
            x.len(),
            gain.len(),
            bias.len()
        )));
    }
    let mut out = alloc::vec![T::zero(); x.len()];
    kernels::layer_norm_forward(x, x.len(), gain, bias, eps, &mut out, None);
    Ok(out)
}

/// Mean label-smoothed negative log-likelihood over non-pad positions of a
/// `positions x vocab` logit matrix.
pub fn cross_entropy_smoothed<T: Scalar>(
    logits: &[T],
    vocab: usize,
    targets: &[usize],
    eps: T,
    pad_index: usize,
) -> Result<T> {
    if !(eps >= T::zero() && eps < T::one()) {
        return Err(Error::Invalid(alloc::format!("label smoothing {eps:?} outside [0, 1)")));
    }
    if vocab == 0 || logits.len() != vocab * targets.len() {
        return Err(Error::Shape(alloc::format!(
            "{} logits for {} targets over vocab {vocab}",
            logits.len(),
            targets.len()
        )));
    }
    cross_entropy_forward(logits, vocab, targets, eps, pad_index, None).map(|(l, _)| l)
}
