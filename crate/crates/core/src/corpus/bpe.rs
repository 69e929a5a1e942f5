use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::vocab::{self, Vocab, BOS, EOS, MASK, NUM_SPECIALS, PAD, UNK};

/// End-of-word marker, kept as a symbol of its own before merging.
pub const END_OF_WORD: &str = "</w>";

/// Ordered merge list plus the vocabulary it induces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeModel {
    base: Vec<String>,
    merges: Vec<(String, String)>,
    vocab: Vocab,
    /// (left id, right id) -> (rank, merged id)
    table: BTreeMap<(u32, u32), (usize, u32)>,
}

fn split_word(word: &str) -> Vec<String> {
    let mut s: Vec<String> = word.chars().map(|c| c.to_string()).collect();
    s.push(END_OF_WORD.to_string());
    s
}

/// Learns `merges` merge operations from word frequencies: each round merges
/// the most frequent adjacent pair (ties go to the lexicographically smallest
/// pair). Learning stops early once no pair occurs at least twice.
pub fn learn_bpe<S: AsRef<str>>(corpus: &[S], merges: i64) -> Result<BpeModel> {
    if merges < 0 {
        return Err(Error::NegativeMerges(merges));
    }
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for line in corpus {
        for w in line.as_ref().split_whitespace() {
            *freq.entry(w).or_default() += 1;
        }
    }
    if freq.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut words: Vec<(Vec<String>, u64)> = freq.iter().map(|(w, &f)| (split_word(w), f)).collect();
    let base: BTreeSet<String> = words.iter().flat_map(|(s, _)| s.iter().cloned()).collect();
    let mut learned = Vec::new();
    for _ in 0..merges {
        let mut counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        for (syms, f) in &words {
            for p in syms.windows(2) {
                *counts.entry((p[0].as_str(), p[1].as_str())).or_default() += f;
            }
        }
        // BTreeMap iterates in pair order, so strict `>` keeps the smallest pair on ties.
        let mut best: Option<((&str, &str), u64)> = None;
        for (&pair, &c) in &counts {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((pair, c));
            }
        }
        let Some(((a, b), count)) = best else { break };
        if count < 2 {
            break;
        }
        let (a, b) = (a.to_string(), b.to_string());
        for (syms, _) in &mut words {
            *syms = merge_pair(core::mem::take(syms), &a, &b);
        }
        learned.push((a, b));
    }
    BpeModel::from_parts(base.into_iter().collect(), learned)
}

fn merge_pair(syms: Vec<String>, a: &str, b: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(syms.len());
    for s in syms {
        if s == b && out.last().is_some_and(|l| l == a) {
            out.last_mut().unwrap().push_str(b);
        } else {
            out.push(s);
        }
    }
    out
}

impl BpeModel {
    /// Rebuilds a model from its base symbols and ordered merges. The
    /// vocabulary is specials, then base symbols, then merge results in
    /// merge order.
    pub fn from_parts(base: Vec<String>, merges: Vec<(String, String)>) -> Result<Self> {
        let vocab = Vocab::new(
            base.iter()
                .cloned()
                .chain(merges.iter().map(|(a, b)| [a.as_str(), b.as_str()].concat())),
        );
        let mut table = BTreeMap::new();
        for (rank, (a, b)) in merges.iter().enumerate() {
            let (l, r) = (vocab.id(a), vocab.id(b));
            if l == UNK || r == UNK {
                return Err(Error::Invalid(alloc::format!("merge `{a} {b}` uses an unknown symbol")));
            }
            table.entry((l, r)).or_insert((rank, vocab.id(&[a.as_str(), b.as_str()].concat())));
        }
        Ok(BpeModel {
            base,
            merges,
            vocab,
            table,
        })
    }

    pub fn base_symbols(&self) -> &[String] {
        &self.base
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Changes whenever the merge list or the vocabulary changes.
    pub fn fingerprint(&self) -> u64 {
        let mut lines: Vec<String> = self.vocab.words().to_vec();
        lines.push(String::new());
        lines.extend(self.merges.iter().map(|(a, b)| alloc::format!("{a} {b}")));
        vocab::fingerprint(&lines)
    }

    fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        let mut ids: Vec<u32> = word.chars().map(|c| self.vocab.id(c.encode_utf8(&mut [0; 4]))).collect();
        ids.push(self.vocab.id(END_OF_WORD));
        loop {
            let best = ids
                .windows(2)
                .filter_map(|p| self.table.get(&(p[0], p[1])).map(|&(rank, m)| (rank, p[0], p[1], m)))
                .min();
            let Some((_, l, r, m)) = best else { break };
            let mut merged = Vec::with_capacity(ids.len());
            let mut i = 0;
            while i < ids.len() {
                if i + 1 < ids.len() && ids[i] == l && ids[i + 1] == r {
                    merged.push(m);
                    i += 2;
                } else {
                    merged.push(ids[i]);
                    i += 1;
                }
            }
            ids = merged;
        }
        out.extend(ids);
    }

    /// Subword ids of a whitespace-tokenized sentence (no BOS/EOS).
    pub fn encode(&self, sentence: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for w in sentence.split_whitespace() {
            self.encode_word(w, &mut out);
        }
        out
    }

    /// Subword strings of a sentence.
    pub fn apply(&self, sentence: &str) -> Vec<String> {
        self.encode(sentence).iter().map(|&i| self.vocab.token(i).to_string()).collect()
    }

    /// Marker-aware detokenization of subword strings.
    pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
        let mut out = String::new();
        let mut open = false;
        for t in tokens {
            let t = t.as_ref();
            if !open && !out.is_empty() {
                out.push(' ');
            }
            match t.strip_suffix(END_OF_WORD) {
                Some(stem) => {
                    out.push_str(stem);
                    open = false;
                }
                None => {
                    out.push_str(t);
                    open = true;
                }
            }
        }
        out
    }

    /// Text of an id sequence; BOS, EOS, PAD and MASK are dropped.
    pub fn decode(&self, ids: &[u32]) -> String {
        let tokens: Vec<&str> = ids
            .iter()
            .filter(|&&i| !matches!(i, BOS | EOS | PAD | MASK))
            .map(|&i| if (i as usize) < NUM_SPECIALS { self.vocab.token(UNK) } else { self.vocab.token(i) })
            .collect();
        Self::detokenize(&tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pairs(m: &BpeModel) -> Vec<(&str, &str)> {
        m.merges().iter().map(|(a, b)| (a.as_str(), b.as_str())).collect()
    }

    #[test]
    fn single_merge() {
        let m = learn_bpe(&["ab ab ab"], 1).unwrap();
        assert_eq!(pairs(&m), vec![("a", "b")]);
        assert_eq!(m.apply("ab"), vec!["ab", "</w>"]);
    }

    #[test]
    fn hand_traced_merges() {
        // pairs: (a,b)=5 (b,</w>)=3 (b,c)=2 (c,</w>)=2 -> merge a b
        // then (ab,</w>)=3 (ab,c)=2 (c,</w>)=2 -> ab </w>
        // then (ab,c)=2 (c,</w>)=2 -> tie, "ab" < "c"
        let m = learn_bpe(&["ab ab abc", "ab abc"], 10).unwrap();
        assert_eq!(
            pairs(&m),
            vec![("a", "b"), ("ab", "</w>"), ("ab", "c"), ("abc", "</w>")]
        );
        assert_eq!(m.apply("abc ab"), vec!["abc</w>", "ab</w>"]);
        assert_eq!(
            m.vocab().words()[NUM_SPECIALS..],
            ["</w>", "a", "b", "c", "ab", "ab</w>", "abc", "abc</w>"]
        );
    }

    #[test]
    fn zero_merges_gives_characters() {
        let m = learn_bpe(&["hello world"], 0).unwrap();
        assert_eq!(m.apply("hello"), vec!["h", "e", "l", "l", "o", "</w>"]);
        assert!(m.merges().is_empty());
    }

    #[test]
    fn errors() {
        assert_eq!(learn_bpe(&["a"], -1), Err(Error::NegativeMerges(-1)));
        assert_eq!(learn_bpe::<&str>(&[], 3), Err(Error::EmptyCorpus));
        assert_eq!(learn_bpe(&["  "], 3), Err(Error::EmptyCorpus));
    }

    #[test]
    fn unknown_characters_become_unk() {
        let m = learn_bpe(&["ab ab"], 2).unwrap();
        let ids = m.encode("aq");
        assert_eq!(ids[1], UNK);
        assert_eq!(m.decode(&ids), "a<unk>");
    }

    #[test]
    fn decode_skips_control_tokens() {
        let m = learn_bpe(&["ab ab cd"], 3).unwrap();
        let mut ids = vec![BOS];
        ids.extend(m.encode("ab cd ab"));
        ids.push(EOS);
        ids.push(PAD);
        assert_eq!(m.decode(&ids), "ab cd ab");
    }

    #[test]
    fn fingerprint_tracks_merges_and_vocab() {
        let a = learn_bpe(&["abc abc bcd"], 2).unwrap();
        let b = learn_bpe(&["abc abc bcd"], 2).unwrap();
        let c = learn_bpe(&["abc abc bcd"], 3).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        // same vocabulary, different merge list
        let base: Vec<String> = ["</w>", "a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let m = |v: &[(&str, &str)]| {
            BpeModel::from_parts(base.clone(), v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect())
                .unwrap()
        };
        let x = m(&[("a", "b"), ("b", "c"), ("ab", "c")]);
        let y = m(&[("a", "b"), ("b", "c"), ("a", "bc")]);
        assert_eq!(x.vocab(), y.vocab());
        assert_ne!(x.fingerprint(), y.fingerprint());
        assert_eq!(BpeModel::from_parts(base, x.merges().to_vec()).unwrap(), x);
    }
}
