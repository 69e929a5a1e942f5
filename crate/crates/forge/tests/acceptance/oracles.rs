//! Reference implementations the library is checked against.

use forge_core::decode::StepModel;
use forge_core::eval::{bleu_from_stats, sentence_stats, BleuStats};
use forge_core::vocab::EOS;
use forge_core::Result;

/// BLEU by plain quadratic n-gram matching, one count per reference n-gram.
pub fn bleu(hyps: &[String], refs: &[String]) -> f64 {
    let mut correct = [0f64; 4];
    let mut total = [0f64; 4];
    let (mut hl, mut rl) = (0f64, 0f64);
    for (h, r) in hyps.iter().zip(refs) {
        let h: Vec<&str> = h.split_whitespace().collect();
        let r: Vec<&str> = r.split_whitespace().collect();
        hl += h.len() as f64;
        rl += r.len() as f64;
        for n in 1..=4 {
            if h.len() < n {
                continue;
            }
            let mut used = vec![false; r.len().saturating_sub(n - 1)];
            for i in 0..=h.len() - n {
                total[n - 1] += 1.0;
                if let Some(j) = (0..used.len()).find(|&j| !used[j] && h[i..i + n] == r[j..j + n]) {
                    used[j] = true;
                    correct[n - 1] += 1.0;
                }
            }
        }
    }
    let mut logs = 0.0;
    let mut k = 0;
    for n in 0..4 {
        if total[n] == 0.0 {
            return 0.0;
        }
        // exp smoothing of zero counts: 1 / (2^k * total)
        let p = if correct[n] == 0.0 {
            k += 1;
            1.0 / (2f64.powi(k) * total[n])
        } else {
            correct[n] / total[n]
        };
        logs += p.ln();
    }
    let bp = if hl == 0.0 {
        0.0
    } else if hl < rl {
        (1.0 - rl / hl).exp()
    } else {
        1.0
    };
    100.0 * bp * (logs / 4.0).exp()
}

/// Exact paired-bootstrap p: every multiset of resampled indices weighted
/// by its multinomial probability.
pub fn exhaustive_p(a: &[&str], b: &[&str], refs: &[&str]) -> f64 {
    let n = refs.len();
    let sa: Vec<BleuStats> = a.iter().zip(refs).map(|(h, r)| sentence_stats(h, r)).collect();
    let sb: Vec<BleuStats> = b.iter().zip(refs).map(|(h, r)| sentence_stats(h, r)).collect();
    let fact: Vec<f64> = (0..=n).map(|i| (1..=i).map(|k| k as f64).product()).collect();
    fn rec(i: usize, left: usize, counts: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if i + 1 == counts.len() {
            counts[i] = left;
            f(counts);
            return;
        }
        for c in 0..=left {
            counts[i] = c;
            rec(i + 1, left - c, counts, f);
        }
    }
    let mut p = 0.0;
    rec(0, n, &mut vec![0; n], &mut |c: &[usize]| {
        let mut weight = fact[n] / (n as f64).powi(n as i32);
        let (mut ta, mut tb) = (BleuStats::default(), BleuStats::default());
        for (i, &k) in c.iter().enumerate() {
            weight /= fact[k];
            for _ in 0..k {
                ta.add(&sa[i]);
                tb.add(&sb[i]);
            }
        }
        if bleu_from_stats(&ta).score <= bleu_from_stats(&tb).score {
            p += weight;
        }
    });
    p
}

/// Next-token distribution that depends only on the prefix, over a small
/// vocabulary whose token 1 is EOS.
pub struct MicroModel {
    pub vocab: usize,
    pub seed: u64,
    rows: Vec<Vec<u32>>,
}

impl MicroModel {
    pub fn new(vocab: usize, seed: u64) -> Self {
        assert!(vocab > EOS as usize);
        MicroModel { vocab, seed, rows: Vec::new() }
    }

    pub fn scores(&self, prefix: &[u32]) -> Vec<f32> {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for &t in prefix {
            h = (h ^ t as u64).wrapping_mul(0x100_0000_01b3);
        }
        let logits: Vec<f64> = (0..self.vocab)
            .map(|v| {
                let x = (h ^ (v as u64 + 1)).wrapping_mul(0x2545_f491_4f6c_dd1d);
                ((x >> 11) as f64 / (1u64 << 53) as f64) * 4.0
            })
            .collect();
        let z = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
        logits.iter().map(|l| (l - z) as f32).collect()
    }

    /// Best complete sequence of at most `max_len` tokens under `raw / len^lp`.
    pub fn brute_force(&self, max_len: usize, lp: f64) -> (Vec<u32>, f64) {
        let mut best: Option<(Vec<u32>, f64)> = None;
        let mut stack = vec![(Vec::<u32>::new(), 0.0f64)];
        while let Some((prefix, raw)) = stack.pop() {
            let s = self.scores(&prefix);
            for t in 0..self.vocab as u32 {
                let mut seq = prefix.clone();
                seq.push(t);
                let r = raw + s[t as usize] as f64;
                if t == EOS || seq.len() == max_len {
                    let score = r / (seq.len() as f64).powf(lp);
                    if best.as_ref().is_none_or(|b| score > b.1) {
                        best = Some((seq, score));
                    }
                } else {
                    stack.push((seq, r));
                }
            }
        }
        best.expect("at least one sequence")
    }
}

impl StepModel for MicroModel {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn start(&mut self) -> Result<Vec<f32>> {
        self.rows = vec![Vec::new()];
        Ok(self.scores(&[]))
    }

    fn advance(&mut self, parents: &[usize], tokens: &[u32]) -> Result<Vec<f32>> {
        self.rows = parents
            .iter()
            .zip(tokens)
            .map(|(&p, &t)| {
                let mut r = self.rows[p].clone();
                r.push(t);
                r
            })
            .collect();
        Ok(self.rows.iter().flat_map(|r| self.scores(r)).collect())
    }
}
