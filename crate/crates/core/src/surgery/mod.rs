//! Checkpoints, parameter grafting between models, and freeze strategies.

mod freeze;
mod graft;

use alloc::string::String;

use crate::model::{ParamTree, Stack};

pub use freeze::{resolve_frozen_set, FreezeStrategy};
pub use graft::{graft, GraftMapping, GraftPlan, GraftReport, MissingPolicy};

/// Version written into and required from checkpoint files.
pub const FORMAT_VERSION: u32 = 1;

/// A model plus the metadata needed to reuse it safely elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParamTree,
    pub src_lang: String,
    pub tgt_lang: String,
    pub src_fingerprint: u64,
    pub tgt_fingerprint: u64,
}

impl Checkpoint {
    pub fn new(params: ParamTree, src_lang: &str, tgt_lang: &str, src_fingerprint: u64, tgt_fingerprint: u64) -> Self {
        Checkpoint {
            params,
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            src_fingerprint,
            tgt_fingerprint,
        }
    }

    /// Vocabulary fingerprint of the side a stack reads or writes.
    pub fn fingerprint(&self, stack: Stack) -> u64 {
        match stack {
            Stack::Encoder => self.src_fingerprint,
            Stack::Decoder => self.tgt_fingerprint,
        }
    }
}

/// Stack a canonical name belongs to.
pub fn stack_of(name: &str) -> Option<Stack> {
    if name.starts_with("encoder.") {
        Some(Stack::Encoder)
    } else if name.starts_with("decoder.") {
        Some(Stack::Decoder)
    } else {
        None
    }
}

/// True for tensors indexed by vocabulary entries.
pub fn is_vocab_tensor(name: &str) -> bool {
    name.ends_with(".embed.tokens") || name == crate::model::OUTPUT_PROJECTION
}

/// `name` equals `prefix` or continues it after a dot.
pub(crate) fn under(name: &str, prefix: &str) -> bool {
    prefix.is_empty() || name == prefix || (name.starts_with(prefix) && name.as_bytes().get(prefix.len()) == Some(&b'.'))
}

#[cfg(test)]
mod tests;
