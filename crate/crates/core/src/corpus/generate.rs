use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use super::bpe::{learn_bpe, BpeModel};
use super::clean::{clean_indices, CleanReport};
use super::lang::{Lang, Lexicon};
use crate::error::{Error, Result};

/// Concept ids in canonical (pivot) order.
pub type ConceptSentence = Vec<u16>;

/// A parallel sentence pair of whitespace-separated words.
pub type Pair = (String, String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriangleSizes {
    pub xz: usize,
    pub zy: usize,
    pub xy: usize,
    /// Per language.
    pub mono: usize,
    /// Per pair.
    pub dev: usize,
    /// Per pair.
    pub test: usize,
}

impl Default for TriangleSizes {
    fn default() -> Self {
        TriangleSizes {
            xz: 30_000,
            zy: 30_000,
            xy: 1_000,
            mono: 50_000,
            dev: 500,
            test: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub sizes: TriangleSizes,
    pub concepts: usize,
    pub zipf_exponent: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// Merges of each per-language BPE; the joint X+Z model gets twice as many.
    pub merges: usize,
    pub max_subwords: usize,
    pub max_ratio: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 1,
            sizes: TriangleSizes::default(),
            concepts: 200,
            zipf_exponent: 1.0,
            min_len: 4,
            max_len: 16,
            merges: 500,
            max_subwords: 128,
            max_ratio: 1.5,
        }
    }
}

/// Training, dev and test splits of one language pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSplits {
    pub train: Vec<Pair>,
    pub dev: Vec<Pair>,
    pub test: Vec<Pair>,
    pub report: CleanReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleCorpus {
    pub config: GeneratorConfig,
    pub lexicons: [Lexicon; 3],
    pub xz: PairSplits,
    pub zy: PairSplits,
    pub xy: PairSplits,
    /// Monolingual text indexed like [`Lang::ALL`].
    pub mono: [Vec<String>; 3],
    pub bpe: [BpeModel; 3],
    /// Shared X+Z model.
    pub bpe_xz: BpeModel,
}

fn slot(lang: Lang) -> usize {
    lang as usize
}

impl TriangleCorpus {
    pub fn lexicon(&self, lang: Lang) -> &Lexicon {
        &self.lexicons[slot(lang)]
    }

    pub fn mono(&self, lang: Lang) -> &[String] {
        &self.mono[slot(lang)]
    }

    pub fn bpe(&self, lang: Lang) -> &BpeModel {
        &self.bpe[slot(lang)]
    }

    /// Splits of a pair in its stored direction: (X,Z), (Z,Y) or (X,Y).
    pub fn pair(&self, a: Lang, b: Lang) -> Option<&PairSplits> {
        match (a, b) {
            (Lang::X, Lang::Z) => Some(&self.xz),
            (Lang::Z, Lang::Y) => Some(&self.zy),
            (Lang::X, Lang::Y) => Some(&self.xy),
            _ => None,
        }
    }

    /// Re-renders a sentence of `from` in `to` through its concepts.
    pub fn map_sentence(&self, from: Lang, to: Lang, line: &str) -> Result<String> {
        let c = self.lexicon(from).parse_line(line)?;
        Ok(self.lexicon(to).render_line(&c))
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    zipf: Zipf<f64>,
    concepts: usize,
    min_len: usize,
    max_len: usize,
}

impl Sampler {
    fn sentence(&mut self) -> ConceptSentence {
        let len = self.rng.random_range(self.min_len..=self.max_len);
        (0..len)
            .map(|_| {
                let v = self.zipf.sample(&mut self.rng) as usize;
                (v.clamp(1, self.concepts) - 1) as u16
            })
            .collect()
    }

    /// Draws a sentence outside `avoid`, giving up after `limit` misses in a row.
    fn fresh(&mut self, avoid: &BTreeSet<ConceptSentence>, limit: usize, what: &str) -> Result<ConceptSentence> {
        for _ in 0..limit {
            let s = self.sentence();
            if !avoid.contains(&s) {
                return Ok(s);
            }
        }
        Err(Error::InventoryExhausted(format!("no fresh sentence for {what} after {limit} draws")))
    }
}

const MISS_LIMIT: usize = 10_000;

fn validate(cfg: &GeneratorConfig) -> Result<()> {
    let s = &cfg.sizes;
    if [s.xz, s.zy, s.xy, s.mono, s.dev, s.test].contains(&0) {
        return Err(Error::Invalid("corpus sizes must be positive".into()));
    }
    if cfg.concepts == 0 || cfg.concepts > u16::MAX as usize + 1 {
        return Err(Error::Invalid(format!("concept inventory of {}", cfg.concepts)));
    }
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::Invalid(format!("sentence length range {}..={}", cfg.min_len, cfg.max_len)));
    }
    if !(cfg.zipf_exponent >= 0.0 && cfg.zipf_exponent.is_finite()) || !(cfg.max_ratio >= 1.0) {
        return Err(Error::Invalid("zipf exponent or length ratio out of range".into()));
    }
    Ok(())
}

/// Generates the full triangle. Held-out concept sentences of every pair are
/// drawn first and excluded from all training and monolingual data.
/// Parallel sets are oversampled, cleaned on BPE lengths and truncated to
/// the requested sizes.
pub fn generate_triangle(cfg: &GeneratorConfig) -> Result<TriangleCorpus> {
    validate(cfg)?;
    let lexicons = [
        Lexicon::generate(Lang::X, cfg.concepts, cfg.seed)?,
        Lexicon::generate(Lang::Y, cfg.concepts, cfg.seed)?,
        Lexicon::generate(Lang::Z, cfg.concepts, cfg.seed)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut sampler = Sampler {
        rng,
        zipf: Zipf::new(cfg.concepts as f64, cfg.zipf_exponent)
            .map_err(|e| Error::Invalid(format!("zipf: {e}")))?,
        concepts: cfg.concepts,
        min_len: cfg.min_len,
        max_len: cfg.max_len,
    };
    let pairs = [(Lang::X, Lang::Z), (Lang::Z, Lang::Y), (Lang::X, Lang::Y)];
    let render = |(a, b): (Lang, Lang), c: &ConceptSentence| -> Pair {
        (lexicons[slot(a)].render_line(c), lexicons[slot(b)].render_line(c))
    };

    let mut held = BTreeSet::new();
    let mut held_out: Vec<(Vec<Pair>, Vec<Pair>)> = Vec::new();
    for p in pairs {
        let mut split = |n: usize, held: &mut BTreeSet<ConceptSentence>| -> Result<Vec<Pair>> {
            (0..n)
                .map(|_| {
                    let c = sampler.fresh(held, MISS_LIMIT, "held-out sets")?;
                    held.insert(c.clone());
                    Ok(render(p, &c))
                })
                .collect()
        };
        let dev = split(cfg.sizes.dev, &mut held)?;
        let test = split(cfg.sizes.test, &mut held)?;
        held_out.push((dev, test));
    }

    let mut mono: [Vec<String>; 3] = Default::default();
    for lang in Lang::ALL {
        for _ in 0..cfg.sizes.mono {
            let c = sampler.fresh(&held, MISS_LIMIT, "monolingual data")?;
            mono[slot(lang)].push(lexicons[slot(lang)].render_line(&c));
        }
    }
    let bpe = [
        learn_bpe(&mono[0], cfg.merges as i64)?,
        learn_bpe(&mono[1], cfg.merges as i64)?,
        learn_bpe(&mono[2], cfg.merges as i64)?,
    ];
    let joint: Vec<&String> = mono[slot(Lang::X)].iter().chain(&mono[slot(Lang::Z)]).collect();
    let bpe_xz = learn_bpe(&joint, 2 * cfg.merges as i64)?;

    let requested = [cfg.sizes.xz, cfg.sizes.zy, cfg.sizes.xy];
    let mut splits = Vec::new();
    for ((p, want), (dev, test)) in pairs.into_iter().zip(requested).zip(held_out) {
        let mut text: Vec<Pair> = Vec::new();
        let mut segmented: Vec<(Vec<u32>, Vec<u32>)> = Vec::new();
        let mut stalls = 0;
        let mut last_kept = 0;
        let (kept, report) = loop {
            let (kept, report) = clean_indices(&segmented, cfg.max_subwords, cfg.max_ratio);
            if kept.len() >= want {
                break (kept, report);
            }
            if kept.len() == last_kept && !segmented.is_empty() {
                stalls += 1;
                if stalls > 20 {
                    return Err(Error::InventoryExhausted(format!(
                        "only {} clean {}{} pairs of {want}",
                        kept.len(),
                        p.0.tag(),
                        p.1.tag()
                    )));
                }
            }
            last_kept = kept.len();
            let extra = (want - kept.len()) + (want - kept.len()) / 4 + 16;
            for _ in 0..extra {
                let c = sampler.fresh(&held, MISS_LIMIT, "parallel data")?;
                let pair = render(p, &c);
                segmented.push((bpe[slot(p.0)].encode(&pair.0), bpe[slot(p.1)].encode(&pair.1)));
                text.push(pair);
            }
        };
        let mut report = report;
        report.surplus = kept.len() - want;
        report.kept = want;
        let train = kept.into_iter().take(want).map(|i| text[i].clone()).collect();
        splits.push(PairSplits {
            train,
            dev,
            test,
            report,
        });
    }
    let xy = splits.pop().unwrap();
    let zy = splits.pop().unwrap();
    let xz = splits.pop().unwrap();
    Ok(TriangleCorpus {
        config: cfg.clone(),
        lexicons,
        xz,
        zy,
        xy,
        mono,
        bpe,
        bpe_xz,
    })
}
