use alloc::vec::Vec;

use super::{beam_search, greedy_decode, Hypothesis};
use crate::error::{Error, Result};
use crate::model::{encode_batch, IncrementalDecoder, ParamTree};
use crate::surgery::Checkpoint;
use crate::vocab::EOS;

/// Beam width, length penalty and the output length limit
/// `min(a * src_len + b, max_positions)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSettings {
    pub beam: usize,
    pub length_penalty: f64,
    pub max_len_a: f64,
    pub max_len_b: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            beam: 5,
            length_penalty: 1.0,
            max_len_a: 1.5,
            max_len_b: 10,
        }
    }
}

impl SearchSettings {
    pub fn max_len(&self, tree: &ParamTree, src_len: usize) -> usize {
        let limit = (self.max_len_a * src_len as f64) as usize + self.max_len_b;
        limit.min(tree.config().max_positions).max(2)
    }
}

fn with_eos(src: &[u32]) -> Vec<u32> {
    let mut s = Vec::with_capacity(src.len() + 1);
    s.extend_from_slice(src);
    s.push(EOS);
    s
}

/// Translates one sentence (tokens without EOS) by beam search.
pub fn translate(tree: &ParamTree, src: &[u32], settings: &SearchSettings) -> Result<Hypothesis> {
    let s = with_eos(src);
    let encs = encode_batch(tree, &[&s])?;
    let mut dec = IncrementalDecoder::new(tree, &encs)?;
    beam_search(&mut dec, settings.beam, settings.max_len(tree, src.len()), settings.length_penalty)
}

/// Greedy translation of many sentences at once; returns contents without
/// EOS.
pub fn translate_greedy_batch(tree: &ParamTree, srcs: &[&[u32]], settings: &SearchSettings) -> Result<Vec<Vec<u32>>> {
    if srcs.is_empty() {
        return Ok(Vec::new());
    }
    let with: Vec<Vec<u32>> = srcs.iter().map(|s| with_eos(s)).collect();
    let refs: Vec<&[u32]> = with.iter().map(|s| s.as_slice()).collect();
    let encs = encode_batch(tree, &refs)?;
    let mut dec = IncrementalDecoder::new(tree, &encs)?;
    let longest = srcs.iter().map(|s| s.len()).max().unwrap_or(0);
    let hyps = greedy_decode(&mut dec, settings.max_len(tree, longest))?;
    // greedy rows are independent, so cutting at each sentence's own limit
    // gives what decoding it alone would
    Ok(hyps
        .iter()
        .zip(srcs)
        .map(|(h, s)| {
            let cut = &h.tokens[..h.tokens.len().min(settings.max_len(tree, s.len()))];
            cut.strip_suffix(&[EOS]).unwrap_or(cut).to_vec()
        })
        .collect())
}

/// Anything that maps a token sequence to a best hypothesis, tagged with
/// the vocabulary fingerprints of both sides.
pub trait Translator {
    fn src_fingerprint(&self) -> u64;
    fn tgt_fingerprint(&self) -> u64;
    fn translate(&self, src: &[u32], settings: &SearchSettings) -> Result<Hypothesis>;
}

impl Translator for Checkpoint {
    fn src_fingerprint(&self) -> u64 {
        self.src_fingerprint
    }

    fn tgt_fingerprint(&self) -> u64 {
        self.tgt_fingerprint
    }

    fn translate(&self, src: &[u32], settings: &SearchSettings) -> Result<Hypothesis> {
        translate(&self.params, src, settings)
    }
}

/// Record of a two-pass pivot translation.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotTrace {
    pub pivot: Vec<u32>,
    pub pivot_score: f64,
    pub output: Vec<u32>,
    pub output_score: f64,
    /// Number of full model passes, always 2.
    pub passes: usize,
}

/// Translates source to pivot with `src_pivot`, then the pivot's 1-best
/// to target with `pivot_tgt`.
pub fn pivot_translate<A: Translator + ?Sized, B: Translator + ?Sized>(
    src_pivot: &A,
    pivot_tgt: &B,
    src: &[u32],
    settings: &SearchSettings,
) -> Result<PivotTrace> {
    if src_pivot.tgt_fingerprint() != pivot_tgt.src_fingerprint() {
        return Err(Error::PivotMismatch(src_pivot.tgt_fingerprint(), pivot_tgt.src_fingerprint()));
    }
    let mut passes = 0;
    let first = src_pivot.translate(src, settings)?;
    passes += 1;
    let pivot = first.content().to_vec();
    let second = pivot_tgt.translate(&pivot, settings)?;
    passes += 1;
    Ok(PivotTrace {
        output: second.content().to_vec(),
        output_score: second.score,
        pivot,
        pivot_score: first.score,
        passes,
    })
}
