//! Corpus BLEU with exponential smoothing and paired bootstrap resampling.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods are missing without std
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Additive n-gram statistics of one or more sentence pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub correct: [usize; MAX_ORDER],
    pub total: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn add(&mut self, o: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.correct[n] += o.correct[n];
            self.total[n] += o.total[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }
}

fn ngram_counts<'a>(tokens: &[&'a str], n: usize) -> BTreeMap<Vec<&'a str>, usize> {
    let mut m = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    m
}

/// Statistics of one whitespace-tokenized hypothesis against its reference.
pub fn sentence_stats(hyp: &str, reference: &str) -> BleuStats {
    let h: Vec<&str> = hyp.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    let mut s = BleuStats {
        hyp_len: h.len(),
        ref_len: r.len(),
        ..Default::default()
    };
    for n in 1..=MAX_ORDER {
        let hc = ngram_counts(&h, n);
        let rc = ngram_counts(&r, n);
        s.total[n - 1] = h.len().saturating_sub(n - 1);
        s.correct[n - 1] = hc.iter().map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0))).sum();
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuReport {
    /// Corpus BLEU on a 0-100 scale.
    pub score: f64,
    /// Smoothed n-gram precisions on a 0-100 scale.
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub stats: BleuStats,
}

impl BleuReport {
    pub fn hyp_len(&self) -> usize {
        self.stats.hyp_len
    }

    pub fn ref_len(&self) -> usize {
        self.stats.ref_len
    }
}

fn log_or_floor(p: f64) -> f64 {
    if p == 0.0 {
        -9_999_999_999.0
    } else {
        p.ln()
    }
}

/// BLEU from aggregated statistics. An order with no matches contributes
/// `100 / (2^k * total)` for the k-th such order; orders with no candidate
/// n-grams stay at zero.
pub fn bleu_from_stats(s: &BleuStats) -> BleuReport {
    let bp = if s.hyp_len == 0 {
        0.0
    } else if s.hyp_len < s.ref_len {
        (1.0 - s.ref_len as f64 / s.hyp_len as f64).exp()
    } else {
        1.0
    };
    let mut precisions = [0.0; MAX_ORDER];
    let mut smooth = 1.0;
    for n in 0..MAX_ORDER {
        if s.total[n] == 0 {
            break;
        }
        precisions[n] = if s.correct[n] == 0 {
            smooth *= 2.0;
            100.0 / (smooth * s.total[n] as f64)
        } else {
            100.0 * s.correct[n] as f64 / s.total[n] as f64
        };
    }
    let mean = precisions.iter().map(|&p| log_or_floor(p)).sum::<f64>() / MAX_ORDER as f64;
    BleuReport {
        score: bp * mean.exp(),
        precisions,
        brevity_penalty: bp,
        stats: *s,
    }
}

fn check_counts<S>(hyps: &[S], refs: &[S]) -> Result<()> {
    if hyps.len() != refs.len() {
        return Err(Error::CountMismatch(hyps.len(), refs.len()));
    }
    if hyps.is_empty() {
        return Err(Error::EmptyHypotheses);
    }
    Ok(())
}

pub fn bleu<S: AsRef<str>>(hyps: &[S], refs: &[S]) -> Result<BleuReport> {
    check_counts(hyps, refs)?;
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&sentence_stats(h.as_ref(), r.as_ref()));
    }
    Ok(bleu_from_stats(&total))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bootstrap {
    /// Fraction of resamples where system A does not beat system B.
    pub p_value: f64,
    pub samples: usize,
    /// Set when fewer than 100 resamples were requested.
    pub low_sample_warning: bool,
}

/// Paired bootstrap: resamples sentence indices with replacement and
/// counts resamples where BLEU(A) <= BLEU(B).
pub fn paired_bootstrap<S: AsRef<str>>(
    hyps_a: &[S],
    hyps_b: &[S],
    refs: &[S],
    samples: usize,
    seed: u64,
) -> Result<Bootstrap> {
    check_counts(hyps_a, refs)?;
    check_counts(hyps_b, refs)?;
    if samples == 0 {
        return Err(Error::Invalid("bootstrap needs at least one sample".into()));
    }
    let sa: Vec<BleuStats> = hyps_a.iter().zip(refs).map(|(h, r)| sentence_stats(h.as_ref(), r.as_ref())).collect();
    let sb: Vec<BleuStats> = hyps_b.iter().zip(refs).map(|(h, r)| sentence_stats(h.as_ref(), r.as_ref())).collect();
    let n = refs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut not_better = 0usize;
    for _ in 0..samples {
        let mut a = BleuStats::default();
        let mut b = BleuStats::default();
        for _ in 0..n {
            let i = rng.random_range(0..n);
            a.add(&sa[i]);
            b.add(&sb[i]);
        }
        if bleu_from_stats(&a).score <= bleu_from_stats(&b).score {
            not_better += 1;
        }
    }
    Ok(Bootstrap {
        p_value: not_better as f64 / samples as f64,
        samples,
        low_sample_warning: samples < 100,
    })
}
