//! Deterministic synthetic triangle corpora (source X, target Y, pivot Z),
//! BPE subwords, parallel-data cleaning and back-translation mixing.

mod bpe;
mod bt;
mod clean;
mod generate;
mod lang;

pub use bpe::{learn_bpe, BpeModel, END_OF_WORD};
pub use bt::{generate_bt_synthetic, make_bt_mix, BtMix};
pub use clean::{clean_parallel, CleanReport};
pub use generate::{generate_triangle, ConceptSentence, GeneratorConfig, Pair, PairSplits, TriangleCorpus, TriangleSizes};
pub use lang::{Lang, Lexicon, Y_MARKER};
