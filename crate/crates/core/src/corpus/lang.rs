use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vocab::fnv1a;

/// Word prepended to every Y sentence.
pub const Y_MARKER: &str = "QZ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Lang {
    X,
    Y,
    Z,
}

impl Lang {
    pub const ALL: [Lang; 3] = [Lang::X, Lang::Y, Lang::Z];

    pub fn tag(self) -> &'static str {
        match self {
            Lang::X => "X",
            Lang::Y => "Y",
            Lang::Z => "Z",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Lang> {
        Lang::ALL.into_iter().find(|l| l.tag() == tag)
    }

    fn alphabet(self) -> &'static [u8] {
        match self {
            Lang::Z => b"abcdefghijklm",
            Lang::X => b"nopqrstuvwxyz",
            Lang::Y => b"ABCDEFGHIJKLMNOPQRSTUVWXYZ",
        }
    }

    /// Word-final letter for even and odd sentence positions.
    fn suffixes(self) -> [char; 2] {
        match self {
            Lang::Z => ['a', 'e'],
            Lang::X => ['o', 'u'],
            Lang::Y => ['A', 'E'],
        }
    }

    /// Surface order of a concept sequence. Both rules are involutions, so
    /// applying them twice restores the input.
    pub fn reorder<T: Copy>(self, concepts: &[T]) -> Vec<T> {
        let mut out = concepts.to_vec();
        match self {
            Lang::Z => {}
            Lang::X => {
                for pair in out.chunks_mut(2) {
                    pair.reverse();
                }
            }
            Lang::Y => {
                for chunk in out.chunks_mut(3) {
                    chunk.reverse();
                }
            }
        }
        out
    }
}

/// Bijective concept-to-stem table of one language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    lang: Lang,
    stems: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Lexicon {
    /// Draws a distinct stem of 2 to 7 letters for each concept.
    pub fn generate(lang: Lang, concepts: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(lang.tag().as_bytes()));
        let alphabet = lang.alphabet();
        let mut stems = Vec::with_capacity(concepts);
        let mut index = BTreeMap::new();
        let mut misses = 0usize;
        while stems.len() < concepts {
            let len = rng.random_range(2..=7);
            let stem: String = (0..len)
                .map(|_| alphabet[rng.random_range(0..alphabet.len())] as char)
                .collect();
            if index.contains_key(&stem) {
                misses += 1;
                if misses > 100_000 {
                    return Err(Error::InventoryExhausted(format!("{} lexicon", lang.tag())));
                }
                continue;
            }
            index.insert(stem.clone(), stems.len());
            stems.push(stem);
        }
        Ok(Lexicon { lang, stems, index })
    }

    pub fn lang(&self) -> Lang {
        self.lang
    }

    pub fn len(&self) -> usize {
        self.stems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stems.is_empty()
    }

    pub fn word(&self, concept: usize, position: usize) -> String {
        let mut w = self.stems[concept].clone();
        w.push(self.lang.suffixes()[position % 2]);
        w
    }

    /// Surface words of a concept sentence.
    pub fn render(&self, concepts: &[u16]) -> Vec<String> {
        let ordered = self.lang.reorder(concepts);
        let mut words = Vec::with_capacity(ordered.len() + 1);
        if self.lang == Lang::Y {
            words.push(String::from(Y_MARKER));
        }
        for (i, &c) in ordered.iter().enumerate() {
            words.push(self.word(c as usize, i));
        }
        words
    }

    pub fn render_line(&self, concepts: &[u16]) -> String {
        self.render(concepts).join(" ")
    }

    /// Inverse of [`Lexicon::render`].
    pub fn parse(&self, words: &[&str]) -> Result<Vec<u16>> {
        let body = if self.lang == Lang::Y {
            match words.split_first() {
                Some((&m, rest)) if m == Y_MARKER => rest,
                _ => return Err(Error::Invalid("missing Y marker".into())),
            }
        } else {
            words
        };
        let suffixes = self.lang.suffixes();
        let mut ordered = Vec::with_capacity(body.len());
        for (i, w) in body.iter().enumerate() {
            let mut chars = w.chars();
            let last = chars.next_back();
            if last != Some(suffixes[i % 2]) {
                return Err(Error::Invalid(format!("`{w}` has the wrong suffix for position {i}")));
            }
            let stem = chars.as_str();
            let c = self
                .index
                .get(stem)
                .ok_or_else(|| Error::Invalid(format!("unknown {} word `{w}`", self.lang.tag())))?;
            ordered.push(*c as u16);
        }
        Ok(self.lang.reorder(&ordered))
    }

    pub fn parse_line(&self, line: &str) -> Result<Vec<u16>> {
        let words: Vec<&str> = line.split_whitespace().collect();
        self.parse(&words)
    }
}
