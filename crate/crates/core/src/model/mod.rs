//! Scaled-down pre-norm encoder-decoder Transformer addressed through
//! canonical parameter names.
//!
//! Name grammar, per stack `S` in `encoder`/`decoder`:
//!
//! ```text
//! S.embed.tokens                         [vocab x d_model]
//! S.embed.positions                      [max_positions x d_model]
//! S.layers.{i}.self_attn.{q|k|v|o}.weight/bias
//! decoder.layers.{i}.cross_attn.{q|k|v|o}.weight/bias
//! S.layers.{i}.ffn.{w1|w2}.weight/bias
//! S.layers.{i}.{ln_self|ln_ffn}.{gain|bias}
//! decoder.layers.{i}.ln_cross.{gain|bias}
//! S.ln_final.{gain|bias}
//! decoder.output_projection              [tgt_vocab x d_model], untied only
//! ```
//!
//! With tied decoder embeddings `decoder.output_projection` is an alias of
//! `decoder.embed.tokens` and not a canonical name of its own. A config with
//! `dec_layers == 0` is an encoder-only masked-LM model with no `decoder.*`
//! tensors; its prediction head is tied to `encoder.embed.tokens`.

mod forward;
mod gradcheck;
mod infer;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::vocab::{fnv1a, PAD};

pub use forward::{
    loss_and_grads, masked_lm_loss_graph, seq2seq_loss_graph, Gradients, Leaves, LossOutput, Objective, ParamSource,
    SeqBatch, TrainBatch,
};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use infer::{decode_logits, encode, encode_batch, EncoderOutput, IncrementalDecoder};

pub const OUTPUT_PROJECTION: &str = "decoder.output_projection";
pub const LN_EPS: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stack {
    Encoder,
    Decoder,
}

impl Stack {
    pub fn prefix(self) -> &'static str {
        match self {
            Stack::Encoder => "encoder",
            Stack::Decoder => "decoder",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub d_model: usize,
    pub d_ffn: usize,
    pub heads: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub max_positions: usize,
    pub dropout: f32,
    pub tie_decoder_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            enc_layers: 4,
            dec_layers: 4,
            d_model: 32,
            d_ffn: 64,
            heads: 2,
            src_vocab: 600,
            tgt_vocab: 600,
            max_positions: 130,
            dropout: 0.1,
            tie_decoder_embeddings: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.enc_layers == 0 {
            return bad("enc_layers must be at least 1".into());
        }
        if self.d_model == 0 || self.d_ffn == 0 || self.heads == 0 {
            return bad("d_model, d_ffn and heads must be positive".into());
        }
        if self.d_model % self.heads != 0 {
            return bad(format!("d_model {} not divisible by heads {}", self.d_model, self.heads));
        }
        if self.src_vocab <= crate::vocab::NUM_SPECIALS || (self.has_decoder() && self.tgt_vocab <= crate::vocab::NUM_SPECIALS) {
            return bad("vocabularies must extend past the reserved specials".into());
        }
        if self.max_positions < 2 {
            return bad("max_positions must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn has_decoder(&self) -> bool {
        self.dec_layers > 0
    }

    pub fn layers(&self, stack: Stack) -> usize {
        match stack {
            Stack::Encoder => self.enc_layers,
            Stack::Decoder => self.dec_layers,
        }
    }

    pub fn vocab(&self, stack: Stack) -> usize {
        match stack {
            Stack::Encoder => self.src_vocab,
            Stack::Decoder => self.tgt_vocab,
        }
    }

    /// Canonical names and dims generated by the naming grammar, in
    /// generation order.
    pub fn canonical_names(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let mut out = Vec::new();
        let stacks: &[Stack] = if self.has_decoder() {
            &[Stack::Encoder, Stack::Decoder]
        } else {
            &[Stack::Encoder]
        };
        for &stack in stacks {
            let s = stack.prefix();
            out.push((format!("{s}.embed.tokens"), vec![self.vocab(stack), d]));
            out.push((format!("{s}.embed.positions"), vec![self.max_positions, d]));
            for i in 0..self.layers(stack) {
                let mut attn = |kind: &str| {
                    for p in ["q", "k", "v", "o"] {
                        out.push((format!("{s}.layers.{i}.{kind}.{p}.weight"), vec![d, d]));
                        out.push((format!("{s}.layers.{i}.{kind}.{p}.bias"), vec![d]));
                    }
                };
                attn("self_attn");
                if stack == Stack::Decoder {
                    attn("cross_attn");
                }
                out.push((format!("{s}.layers.{i}.ffn.w1.weight"), vec![d, self.d_ffn]));
                out.push((format!("{s}.layers.{i}.ffn.w1.bias"), vec![self.d_ffn]));
                out.push((format!("{s}.layers.{i}.ffn.w2.weight"), vec![self.d_ffn, d]));
                out.push((format!("{s}.layers.{i}.ffn.w2.bias"), vec![d]));
                let norms: &[&str] = if stack == Stack::Decoder {
                    &["ln_self", "ln_cross", "ln_ffn"]
                } else {
                    &["ln_self", "ln_ffn"]
                };
                for ln in norms {
                    out.push((format!("{s}.layers.{i}.{ln}.gain"), vec![d]));
                    out.push((format!("{s}.layers.{i}.{ln}.bias"), vec![d]));
                }
            }
            out.push((format!("{s}.ln_final.gain"), vec![d]));
            out.push((format!("{s}.ln_final.bias"), vec![d]));
        }
        if self.has_decoder() && !self.tie_decoder_embeddings {
            out.push((OUTPUT_PROJECTION.into(), vec![self.tgt_vocab, d]));
        }
        out
    }
}

/// Seeded initial value of one named parameter. Each name draws from its own
/// stream, so re-initializing a single tensor is reproducible in isolation.
pub fn init_tensor(name: &str, dims: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()));
    let numel: usize = dims.iter().product();
    let values: Vec<f32> = if name.ends_with(".gain") {
        vec![1.0; numel]
    } else if name.ends_with(".bias") {
        vec![0.0; numel]
    } else if name.contains(".embed.") || name == OUTPUT_PROJECTION {
        let d = dims[1];
        let normal = Normal::new(0.0f32, 1.0 / num_traits::Float::sqrt(d as f32)).expect("valid std");
        let mut v: Vec<f32> = (0..numel).map(|_| normal.sample(&mut rng)).collect();
        if name.ends_with(".tokens") || name == OUTPUT_PROJECTION {
            v[PAD as usize * d..(PAD as usize + 1) * d].iter_mut().for_each(|x| *x = 0.0);
        }
        v
    } else {
        let limit = num_traits::Float::sqrt(6.0 / (dims[0] + dims[1]) as f32);
        (0..numel).map(|_| rng.random_range(-limit..limit)).collect()
    };
    Tensor::new(dims.to_vec(), values).expect("grammar dims are consistent")
}

/// Named parameters of one model plus the per-tensor freeze mask (carried
/// as `Tensor::requires_grad`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTree {
    config: ModelConfig,
    params: BTreeMap<String, Tensor>,
}

pub fn build_model(config: &ModelConfig, seed: u64) -> Result<ParamTree> {
    config.validate()?;
    let params = config
        .canonical_names()
        .into_iter()
        .map(|(name, dims)| {
            let t = init_tensor(&name, &dims, seed);
            (name, t)
        })
        .collect();
    Ok(ParamTree {
        config: config.clone(),
        params,
    })
}

impl ParamTree {
    /// Assembles a tree from explicit tensors; the names and dims must be
    /// exactly those of the config's grammar.
    pub fn from_tensors(config: ModelConfig, params: BTreeMap<String, Tensor>) -> Result<Self> {
        config.validate()?;
        let expected = config.canonical_names();
        if expected.len() != params.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, dims) in &expected {
            let t = params.get(name).ok_or_else(|| Error::UnknownParameter(name.clone()))?;
            if t.dims() != dims.as_slice() {
                return Err(Error::Shape(format!("`{name}` has dims {:?}, expected {dims:?}", t.dims())));
            }
        }
        Ok(ParamTree { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Resolves the tied output-projection alias to its storage name.
    pub fn resolve<'a>(&self, name: &'a str) -> &'a str {
        if name == OUTPUT_PROJECTION && self.config.tie_decoder_embeddings {
            "decoder.embed.tokens"
        } else {
            name
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(self.resolve(name))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let key = self.resolve(name);
        self.params.get_mut(key)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::UnknownParameter(name.into()))
    }

    /// Canonical names in ascending order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(self.resolve(name))
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Freezes exactly `frozen` (after alias resolution); everything else
    /// becomes trainable.
    pub fn set_frozen(&mut self, frozen: &BTreeSet<String>) -> Result<()> {
        let resolved: BTreeSet<&str> = frozen.iter().map(|n| self.resolve(n)).collect();
        for n in &resolved {
            if !self.params.contains_key(*n) {
                return Err(Error::UnknownParameter((*n).into()));
            }
        }
        for (name, t) in self.params.iter_mut() {
            t.requires_grad = !resolved.contains(name.as_str());
        }
        Ok(())
    }

    pub fn frozen_names(&self) -> BTreeSet<String> {
        self.params
            .iter()
            .filter(|(_, t)| !t.requires_grad)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn trainable_names(&self) -> BTreeSet<String> {
        self.params
            .iter()
            .filter(|(_, t)| t.requires_grad)
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Bitwise comparison of every tensor (dims and payload).
    pub fn bitwise_eq(&self, other: &ParamTree) -> bool {
        self.config == other.config
            && self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|((na, a), (nb, b))| na == nb && a.bitwise_eq(b))
    }
}
