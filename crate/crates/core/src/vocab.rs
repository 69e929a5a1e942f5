//! Token vocabularies with the reserved special indices and the 64-bit
//! FNV-1a fingerprint used to guard embedding grafts.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const BOS: u32 = 0;
pub const EOS: u32 = 1;
pub const PAD: u32 = 2;
pub const MASK: u32 = 3;
pub const UNK: u32 = 4;
pub const NUM_SPECIALS: usize = 5;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<s>", "</s>", "<pad>", "<mask>", "<unk>"];

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_extend(FNV_OFFSET, bytes)
}

fn fnv1a_extend(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Fingerprint of a word list: FNV-1a over every word's UTF-8 bytes, each
/// followed by a `\n` byte, in index order (specials included).
pub fn fingerprint<S: AsRef<str>>(words: &[S]) -> u64 {
    words.iter().fold(FNV_OFFSET, |h, w| {
        let h = fnv1a_extend(h, w.as_ref().as_bytes());
        fnv1a_extend(h, b"\n")
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocab {
    /// Builds a vocabulary with the specials at 0..5 followed by `symbols`
    /// (duplicates and specials are skipped, first occurrence wins).
    pub fn new<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            words: Vec::new(),
            index: BTreeMap::new(),
        };
        for s in SPECIAL_TOKENS {
            v.push(s.to_string());
        }
        for s in symbols {
            v.push(s.into());
        }
        v
    }

    /// Rebuilds a vocabulary from a full word list that must start with the specials.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < NUM_SPECIALS || words.iter().zip(SPECIAL_TOKENS).any(|(w, s)| w != s) {
            return Err(Error::VocabTooSmall(words.len()));
        }
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        Ok(Vocab { words, index })
    }

    fn push(&mut self, s: String) {
        if !self.index.contains_key(&s) {
            self.index.insert(s.clone(), self.words.len() as u32);
            self.words.push(s);
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        self.words.get(id as usize).map(String::as_str).unwrap_or(SPECIAL_TOKENS[UNK as usize])
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint(&self.words)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn fingerprint_tracks_order_and_content() {
        let a = Vocab::new(["ab", "c"]);
        let b = Vocab::new(["c", "ab"]);
        let c = Vocab::new(["ab", "c"]);
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.id("ab"), 5);
        assert_eq!(a.id("zz"), UNK);
        assert_eq!(a.token(PAD), "<pad>");
        assert_eq!(Vocab::from_words(a.words().to_vec()).unwrap(), a);
    }
}
