//! The generated triangle, its subword encodings and its files on disk.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::rc::Rc;

use forge_core::corpus::{generate_triangle, BpeModel, Lang, Pair, PairSplits, TriangleCorpus};

use crate::config::ExperimentConfig;
use crate::error::{ForgeError, Result};
use crate::recipes::{Usage, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// Token id sequences of one side, without EOS.
pub type Encoded = Rc<Vec<Vec<u32>>>;

pub struct Workspace {
    pub corpus: TriangleCorpus,
    cache: RefCell<HashMap<String, Encoded>>,
}

fn lower(l: Lang) -> String {
    l.tag().to_lowercase()
}

impl Workspace {
    pub fn generate(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Workspace::new(generate_triangle(&cfg.corpus)?))
    }

    pub fn new(corpus: TriangleCorpus) -> Self {
        Workspace {
            corpus,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn bpe(&self, v: Vocabulary) -> &BpeModel {
        match v {
            Vocabulary::Own(l) => self.corpus.bpe(l),
            Vocabulary::JointXZ => &self.corpus.bpe_xz,
        }
    }

    pub fn fingerprint(&self, v: Vocabulary) -> u64 {
        self.bpe(v).vocab().fingerprint()
    }

    pub fn splits(&self, corpus: Usage) -> &PairSplits {
        let (a, b) = corpus.pair().expect("parallel corpus");
        self.corpus.pair(a, b).expect("stored direction")
    }

    pub fn pairs(&self, corpus: Usage, split: Split) -> &[Pair] {
        let s = self.splits(corpus);
        match split {
            Split::Train => &s.train,
            Split::Dev => &s.dev,
            Split::Test => &s.test,
        }
    }

    fn cached(&self, key: String, make: impl FnOnce() -> Vec<Vec<u32>>) -> Encoded {
        if let Some(v) = self.cache.borrow().get(&key) {
            return v.clone();
        }
        let v = Rc::new(make());
        self.cache.borrow_mut().insert(key, v.clone());
        v
    }

    pub fn mono(&self, lang: Lang, vocab: Vocabulary) -> Encoded {
        self.cached(format!("mono/{lang:?}/{vocab:?}"), || {
            let bpe = self.bpe(vocab);
            self.corpus.mono(lang).iter().map(|s| bpe.encode(s)).collect()
        })
    }

    /// One side (0 = first stored language) of a parallel split.
    pub fn side(&self, corpus: Usage, split: Split, side: usize, vocab: Vocabulary) -> Encoded {
        self.cached(format!("{corpus:?}/{split:?}/{side}/{vocab:?}"), || {
            let bpe = self.bpe(vocab);
            self.pairs(corpus, split)
                .iter()
                .map(|p| bpe.encode(if side == 0 { &p.0 } else { &p.1 }))
                .collect()
        })
    }

    /// Corpus files, BPE codes and a manifest under `dir`.
    pub fn write_files(&self, dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
        fs::create_dir_all(dir).map_err(ForgeError::io(dir))?;
        let write = |name: String, body: String| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(ForgeError::io(p))
        };
        let lines = |v: &mut dyn Iterator<Item = &String>| {
            let mut s = String::new();
            for l in v {
                s.push_str(l);
                s.push('\n');
            }
            s
        };
        for l in Lang::ALL {
            write(format!("mono.{}", lower(l)), lines(&mut self.corpus.mono(l).iter()))?;
        }
        for corpus in [Usage::XZ, Usage::ZY, Usage::XY] {
            let (a, b) = corpus.pair().unwrap();
            let stem = format!("{}{}", lower(a), lower(b));
            for split in [Split::Train, Split::Dev, Split::Test] {
                let pairs = self.pairs(corpus, split);
                write(format!("{stem}.{}.{}", split.name(), lower(a)), lines(&mut pairs.iter().map(|p| &p.0)))?;
                write(format!("{stem}.{}.{}", split.name(), lower(b)), lines(&mut pairs.iter().map(|p| &p.1)))?;
            }
        }
        for (name, v) in [
            ("x", Vocabulary::Own(Lang::X)),
            ("y", Vocabulary::Own(Lang::Y)),
            ("z", Vocabulary::Own(Lang::Z)),
            ("xz", Vocabulary::JointXZ),
        ] {
            write(format!("bpe.{name}.codes"), codes_text(self.bpe(v)))?;
        }
        write("manifest.txt".into(), self.manifest(cfg))
    }

    pub fn manifest(&self, cfg: &ExperimentConfig) -> String {
        let c = &self.corpus.config;
        let mut m = String::new();
        let _ = writeln!(m, "seed={}", c.seed);
        let s = c.sizes;
        let _ = writeln!(
            m,
            "sizes=xz:{} zy:{} xy:{} mono:{} dev:{} test:{}",
            s.xz, s.zy, s.xy, s.mono, s.dev, s.test
        );
        let _ = writeln!(m, "concepts={} lengths={}..={} merges={}", c.concepts, c.min_len, c.max_len, c.merges);
        for corpus in [Usage::XZ, Usage::ZY, Usage::XY] {
            let r = self.splits(corpus).report;
            let _ = writeln!(
                m,
                "clean.{corpus}=input:{} kept:{} too_long:{} bad_ratio:{} duplicate:{} surplus:{}",
                r.input, r.kept, r.too_long, r.bad_ratio, r.duplicate, r.surplus
            );
        }
        for (name, v) in [
            ("X", Vocabulary::Own(Lang::X)),
            ("Y", Vocabulary::Own(Lang::Y)),
            ("Z", Vocabulary::Own(Lang::Z)),
            ("X+Z", Vocabulary::JointXZ),
        ] {
            let b = self.bpe(v);
            let _ = writeln!(
                m,
                "bpe.{name}=vocab:{} merges:{} fingerprint:{:016x}",
                b.vocab().len(),
                b.merges().len(),
                b.vocab().fingerprint()
            );
        }
        let _ = writeln!(m, "config={:?}", cfg.corpus);
        m
    }
}

/// BPE codes: a `#base` line with the base symbols, then one merge per line.
pub fn codes_text(bpe: &BpeModel) -> String {
    let mut s = format!("#base {}\n", bpe.base_symbols().join(" "));
    for (a, b) in bpe.merges() {
        let _ = writeln!(s, "{a} {b}");
    }
    s
}

pub fn parse_codes(text: &str) -> Result<BpeModel> {
    let mut lines = text.lines();
    let base = lines
        .next()
        .and_then(|l| l.strip_prefix("#base "))
        .ok_or_else(|| ForgeError::Corpus("BPE codes must start with a #base line".into()))?;
    let base = base.split(' ').map(String::from).collect();
    let merges = lines
        .map(|l| {
            l.split_once(' ')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| ForgeError::Corpus(format!("bad merge line `{l}`")))
        })
        .collect::<Result<_>>()?;
    Ok(BpeModel::from_parts(base, merges)?)
}

/// Reads a pair of line-aligned files.
pub fn read_parallel(src: &Path, tgt: &Path) -> Result<Vec<Pair>> {
    let a = fs::read_to_string(src).map_err(ForgeError::io(src))?;
    let b = fs::read_to_string(tgt).map_err(ForgeError::io(tgt))?;
    let (a, b): (Vec<&str>, Vec<&str>) = (a.lines().collect(), b.lines().collect());
    if a.len() != b.len() {
        return Err(ForgeError::Corpus(format!(
            "{} has {} lines but {} has {}",
            src.display(),
            a.len(),
            tgt.display(),
            b.len()
        )));
    }
    Ok(a.into_iter().zip(b).map(|(x, y)| (x.to_string(), y.to_string())).collect())
}
