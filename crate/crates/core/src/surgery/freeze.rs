use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Stack};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreezeStrategy {
    /// Embeddings and the lowest `L` layers of the pivot-side stack.
    LayerWise(usize),
    /// Trainable: layer norms, encoder self-attention, decoder
    /// cross-attention.
    LnaED,
    /// Trainable: the whole encoder, decoder layer norms and decoder
    /// cross-attention.
    LnaD,
    /// As `LnaD`, and in the pivot-target role (pivot on the encoder side)
    /// the encoder embeddings are frozen as well.
    LnaeD,
    FreezeAll,
    FreezeNone,
}

fn is_layer_norm(name: &str) -> bool {
    name.split('.').any(|part| part.starts_with("ln_"))
}

fn in_block(name: &str, stack: &str, block: &str) -> bool {
    name.starts_with(&format!("{stack}.layers.")) && name.split('.').nth(3) == Some(block)
}

/// Canonical names frozen by `strategy` on a model of `config`, where
/// `pivot_side` is the stack that reads or writes the pivot language.
pub fn resolve_frozen_set(strategy: FreezeStrategy, config: &ModelConfig, pivot_side: Stack) -> Result<BTreeSet<String>> {
    let names = config.canonical_names().into_iter().map(|(n, _)| n);
    let set = match strategy {
        FreezeStrategy::FreezeNone => BTreeSet::new(),
        FreezeStrategy::FreezeAll => names.collect(),
        FreezeStrategy::LayerWise(l) => {
            let available = config.layers(pivot_side);
            if l > available {
                return Err(Error::LayerOutOfRange { requested: l, available });
            }
            if pivot_side == Stack::Decoder && !config.has_decoder() {
                return Err(Error::InvalidConfig("model has no decoder".into()));
            }
            let s = pivot_side.prefix();
            let mut prefixes = alloc::vec![format!("{s}.embed.")];
            prefixes.extend((0..l).map(|i| format!("{s}.layers.{i}.")));
            if l == available {
                prefixes.push(format!("{s}.ln_final."));
            }
            names.filter(|n| prefixes.iter().any(|p| n.starts_with(p.as_str()))).collect()
        }
        FreezeStrategy::LnaED => names
            .filter(|n| !(is_layer_norm(n) || in_block(n, "encoder", "self_attn") || in_block(n, "decoder", "cross_attn")))
            .collect(),
        FreezeStrategy::LnaD | FreezeStrategy::LnaeD => {
            let extra = strategy == FreezeStrategy::LnaeD && pivot_side == Stack::Encoder;
            names
                .filter(|n| {
                    let trainable = if n.starts_with("encoder.") {
                        !(extra && n.starts_with("encoder.embed."))
                    } else {
                        is_layer_norm(n) || in_block(n, "decoder", "cross_attn")
                    };
                    !trainable
                })
                .collect()
        }
    };
    Ok(set)
}
