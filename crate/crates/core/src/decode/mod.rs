//! Greedy and beam-search decoding over any incremental step model, plus
//! two-pass pivot translation.

mod beam;
mod pivot;

use alloc::vec::Vec;

use crate::error::Result;

pub use beam::{beam_search, greedy_decode, Hypothesis};
pub use pivot::{pivot_translate, translate, translate_greedy_batch, PivotTrace, SearchSettings, Translator};

/// A decoder that extends a set of live rows one token at a time and
/// returns next-token log-probabilities (`rows x vocab`, row-major).
pub trait StepModel {
    fn vocab_size(&self) -> usize;
    /// Resets to the initial rows (BOS only) and scores the first token.
    fn start(&mut self) -> Result<Vec<f32>>;
    /// Keeps rows `parents` in the given order, appends `tokens[r]` to the
    /// new row `r` and scores the next token of every row.
    fn advance(&mut self, parents: &[usize], tokens: &[u32]) -> Result<Vec<f32>>;
}
