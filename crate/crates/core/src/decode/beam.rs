use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::StepModel;
use crate::error::{Error, Result};
use crate::vocab::EOS;

/// A finished search result. `tokens` excludes BOS and includes the final
/// EOS unless the hypothesis stopped at the length limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    /// Sum of token log-probabilities.
    pub raw_score: f64,
    /// `raw_score / len^length_penalty`, the ranking key.
    pub score: f64,
}

impl Hypothesis {
    fn new(tokens: Vec<u32>, raw_score: f64, length_penalty: f64) -> Self {
        let len = tokens.len().max(1) as f64;
        Hypothesis {
            score: raw_score / num_traits::Float::powf(len, length_penalty),
            tokens,
            raw_score,
        }
    }

    /// Tokens without the trailing EOS.
    pub fn content(&self) -> &[u32] {
        match self.tokens.last() {
            Some(&EOS) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

/// Index of the largest value; the lowest index wins ties.
fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Stepwise argmax decoding of every initial row of `model`. A row stops at
/// EOS or after `max_len` generated tokens.
pub fn greedy_decode<M: StepModel>(model: &mut M, max_len: usize) -> Result<Vec<Hypothesis>> {
    if max_len < 2 {
        return Err(Error::MaxLenTooSmall(max_len));
    }
    let vocab = model.vocab_size();
    let mut lp = model.start()?;
    let n = lp.len() / vocab;
    let mut out: Vec<Option<Hypothesis>> = vec![None; n];
    let mut seqs: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 0.0); n];
    // live[r] = original sentence index of model row r
    let mut live: Vec<usize> = (0..n).collect();
    for step in 0..max_len {
        let mut parents = Vec::new();
        let mut tokens = Vec::new();
        let mut next_live = Vec::new();
        for (r, &orig) in live.iter().enumerate() {
            let row = &lp[r * vocab..(r + 1) * vocab];
            let t = argmax(row);
            let (seq, score) = &mut seqs[orig];
            seq.push(t as u32);
            *score += row[t] as f64;
            if t as u32 == EOS || step + 1 == max_len {
                out[orig] = Some(Hypothesis::new(core::mem::take(seq), *score, 1.0));
            } else {
                parents.push(r);
                tokens.push(t as u32);
                next_live.push(orig);
            }
        }
        if next_live.is_empty() {
            break;
        }
        live = next_live;
        lp = model.advance(&parents, &tokens)?;
    }
    Ok(out.into_iter().map(|h| h.expect("every row finishes")).collect())
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    row: usize,
    token: u32,
}

/// Ranking: higher score first; ties go to the lower token index, then the
/// lower beam row.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.token.cmp(&b.token))
        .then(a.row.cmp(&b.row))
}

/// Beam search on the first initial row of `model`.
///
/// Each step ranks all one-token extensions and keeps the best `2 * beam`.
/// EOS extensions ranked within the first `beam` are finalized; the first
/// `beam` non-EOS extensions stay live. At the length limit every kept
/// extension is finalized. Search ends once `beam` hypotheses are finished
/// and the best finished hypothesis by length-normalized score is returned
/// (earliest finalized wins ties).
pub fn beam_search<M: StepModel>(model: &mut M, beam: usize, max_len: usize, length_penalty: f64) -> Result<Hypothesis> {
    if beam == 0 {
        return Err(Error::ZeroBeam);
    }
    if max_len < 2 {
        return Err(Error::MaxLenTooSmall(max_len));
    }
    let vocab = model.vocab_size();
    let mut lp = model.start()?;
    lp.truncate(vocab);
    let mut live: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let keep = 2 * beam;
    for step in 0..max_len {
        let last = step + 1 == max_len;
        let mut cands: Vec<Candidate> = Vec::with_capacity(live.len() * keep);
        for (r, (_, base)) in live.iter().enumerate() {
            let row = &lp[r * vocab..(r + 1) * vocab];
            let mut top: Vec<Candidate> = Vec::with_capacity(keep + 1);
            for (t, &v) in row.iter().enumerate() {
                let c = Candidate {
                    score: base + v as f64,
                    row: r,
                    token: t as u32,
                };
                if top.len() == keep && rank(&c, &top[keep - 1]) != Ordering::Less {
                    continue;
                }
                let pos = top.partition_point(|x| rank(x, &c) == Ordering::Less);
                top.insert(pos, c);
                top.truncate(keep);
            }
            cands.extend(top);
        }
        cands.sort_by(rank);
        cands.truncate(keep);

        let mut parents = Vec::new();
        let mut tokens = Vec::new();
        let mut next_live = Vec::new();
        for (i, c) in cands.iter().enumerate() {
            let mut seq = live[c.row].0.clone();
            seq.push(c.token);
            if c.token == EOS || last {
                if i < beam {
                    finished.push(Hypothesis::new(seq, c.score, length_penalty));
                }
            } else if next_live.len() < beam {
                parents.push(c.row);
                tokens.push(c.token);
                next_live.push((seq, c.score));
            }
        }
        if finished.len() >= beam || next_live.is_empty() || last {
            break;
        }
        live = next_live;
        lp = model.advance(&parents, &tokens)?;
    }
    let mut best: Option<Hypothesis> = None;
    for h in finished {
        if best.as_ref().is_none_or(|b| h.score > b.score) {
            best = Some(h);
        }
    }
    best.ok_or_else(|| Error::Invalid("beam search finished no hypothesis".into()))
}
