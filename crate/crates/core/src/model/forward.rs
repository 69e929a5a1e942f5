//! Graph construction for the training objectives.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ParamTree, Stack, LN_EPS, OUTPUT_PROJECTION};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::kernels::AttnShape;
use crate::scalar::Scalar;
use crate::vocab::{BOS, PAD};

/// A padded `batch x len` block of token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqBatch {
    pub tokens: Vec<u32>,
    pub batch: usize,
    pub len: usize,
}

impl SeqBatch {
    pub fn from_sequences(seqs: &[&[u32]]) -> Self {
        let len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut tokens = Vec::with_capacity(seqs.len() * len);
        for s in seqs {
            tokens.extend_from_slice(s);
            tokens.extend(core::iter::repeat_n(PAD, len - s.len()));
        }
        SeqBatch {
            tokens,
            batch: seqs.len(),
            len,
        }
    }

    pub fn pad_mask(&self) -> Vec<bool> {
        self.tokens.iter().map(|&t| t == PAD).collect()
    }

    pub fn non_pad(&self) -> usize {
        self.tokens.iter().filter(|&&t| t != PAD).count()
    }
}

/// One optimization batch. For sequence-to-sequence objectives `tgt_in` is
/// the BOS-shifted decoder input and `targets` is aligned with it; for the
/// masked-LM objective `tgt_in` is `None` and `targets` is aligned with the
/// source (PAD marks positions that are not predicted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainBatch {
    pub src: SeqBatch,
    pub tgt_in: Option<SeqBatch>,
    pub targets: Vec<u32>,
}

impl TrainBatch {
    /// Builds a seq2seq batch: decoder input `BOS + tgt`, targets `tgt + EOS`
    /// (`tgt` must not contain BOS/EOS; sources should already end with EOS).
    pub fn seq2seq(pairs: &[(&[u32], &[u32])]) -> Self {
        let srcs: Vec<&[u32]> = pairs.iter().map(|p| p.0).collect();
        let tin: Vec<Vec<u32>> = pairs
            .iter()
            .map(|p| core::iter::once(BOS).chain(p.1.iter().copied()).collect())
            .collect();
        let tout: Vec<Vec<u32>> = pairs
            .iter()
            .map(|p| p.1.iter().copied().chain(core::iter::once(crate::vocab::EOS)).collect())
            .collect();
        let tin_refs: Vec<&[u32]> = tin.iter().map(Vec::as_slice).collect();
        let tout_refs: Vec<&[u32]> = tout.iter().map(Vec::as_slice).collect();
        TrainBatch {
            src: SeqBatch::from_sequences(&srcs),
            tgt_in: Some(SeqBatch::from_sequences(&tin_refs)),
            targets: SeqBatch::from_sequences(&tout_refs).tokens,
        }
    }

    pub fn loss_positions(&self) -> usize {
        self.targets.iter().filter(|&&t| t != PAD).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Encoder-decoder cross entropy (translation and denoising).
    Seq2Seq,
    /// Encoder-only prediction of masked source positions.
    MaskedLm,
}

/// Supplies parameter leaves to a graph in element type `T`.
pub trait ParamSource<T: Scalar> {
    fn model_config(&self) -> &ModelConfig;
    /// `(rows, cols, values, requires_grad)` for a (possibly aliased) name.
    fn leaf_data(&self, name: &str) -> Option<(usize, usize, Vec<T>, bool)>;
    fn storage_name<'a>(&self, name: &'a str) -> &'a str;
}

impl<T: Scalar> ParamSource<T> for ParamTree {
    fn model_config(&self) -> &ModelConfig {
        self.config()
    }

    fn leaf_data(&self, name: &str) -> Option<(usize, usize, Vec<T>, bool)> {
        let t = self.get(name)?;
        let (r, c) = t.matrix_dims();
        let vals = t.values().iter().map(|&v| T::from_f32(v)).collect();
        Some((r, c, vals, t.requires_grad))
    }

    fn storage_name<'a>(&self, name: &'a str) -> &'a str {
        self.resolve(name)
    }
}

/// Lazily created parameter leaves of one graph, keyed by storage name.
pub struct Leaves<'p, T: Scalar, P: ParamSource<T>> {
    source: &'p P,
    vars: BTreeMap<String, Var>,
    _t: core::marker::PhantomData<T>,
}

impl<'p, T: Scalar, P: ParamSource<T>> Leaves<'p, T, P> {
    pub fn new(source: &'p P) -> Self {
        Leaves {
            source,
            vars: BTreeMap::new(),
            _t: core::marker::PhantomData,
        }
    }

    pub fn get(&mut self, g: &mut Graph<T>, name: &str) -> Result<Var> {
        let key = self.source.storage_name(name);
        if let Some(&v) = self.vars.get(key) {
            return Ok(v);
        }
        let (r, c, vals, rg) = self
            .source
            .leaf_data(key)
            .ok_or_else(|| Error::UnknownParameter(key.into()))?;
        let v = g.leaf(r, c, vals, rg);
        self.vars.insert(key.into(), v);
        Ok(v)
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }
}

struct Ctx<'r> {
    rng: Option<&'r mut ChaCha8Rng>,
    dropout: f32,
}

impl Ctx<'_> {
    fn dropout<T: Scalar>(&mut self, g: &mut Graph<T>, x: Var) -> Var {
        let p = self.dropout;
        let Some(rng) = self.rng.as_deref_mut() else { return x };
        if p <= 0.0 {
            return x;
        }
        let (r, c) = g.shape(x);
        let keep = T::from_f32(1.0 / (1.0 - p));
        let mask = (0..r * c)
            .map(|_| if rng.random::<f32>() < p { T::zero() } else { keep })
            .collect();
        g.dropout(x, mask)
    }
}

fn check_tokens(b: &SeqBatch, vocab: usize, max_positions: usize) -> Result<()> {
    if b.len > max_positions {
        return Err(Error::SequenceTooLong {
            len: b.len,
            max: max_positions,
        });
    }
    if let Some(&t) = b.tokens.iter().find(|&&t| t as usize >= vocab) {
        return Err(Error::TokenOutOfRange { token: t, vocab });
    }
    Ok(())
}

fn embed<T: Scalar, P: ParamSource<T>>(
    g: &mut Graph<T>,
    p: &mut Leaves<'_, T, P>,
    ctx: &mut Ctx<'_>,
    stack: Stack,
    b: &SeqBatch,
) -> Result<Var> {
    let cfg = p.source.model_config();
    let s = stack.prefix();
    let d = cfg.d_model;
    let tok = p.get(g, &format!("{s}.embed.tokens"))?;
    let pos = p.get(g, &format!("{s}.embed.positions"))?;
    let idx: Vec<usize> = b.tokens.iter().map(|&t| t as usize).collect();
    let scale = T::from_usize(d).sqrt();
    let te = g.gather(tok, idx, scale);
    let pidx: Vec<usize> = (0..b.batch * b.len).map(|i| i % b.len).collect();
    let pe = g.gather(pos, pidx, T::one());
    let x = g.add(te, pe);
    Ok(ctx.dropout(g, x))
}

fn layer_norm<T: Scalar, P: ParamSource<T>>(g: &mut Graph<T>, p: &mut Leaves<'_, T, P>, x: Var, prefix: &str) -> Result<Var> {
    let gain = p.get(g, &format!("{prefix}.gain"))?;
    let bias = p.get(g, &format!("{prefix}.bias"))?;
    Ok(g.layer_norm(x, gain, bias, T::from_f32(LN_EPS)))
}

fn linear<T: Scalar, P: ParamSource<T>>(g: &mut Graph<T>, p: &mut Leaves<'_, T, P>, x: Var, prefix: &str) -> Result<Var> {
    let w = p.get(g, &format!("{prefix}.weight"))?;
    let b = p.get(g, &format!("{prefix}.bias"))?;
    Ok(g.linear(x, w, Some(b)))
}

#[allow(clippy::too_many_arguments)]
fn attention_block<T: Scalar, P: ParamSource<T>>(
    g: &mut Graph<T>,
    p: &mut Leaves<'_, T, P>,
    prefix: &str,
    q_in: Var,
    kv_in: Var,
    shape: AttnShape,
    key_pad: &[bool],
) -> Result<Var> {
    let q = linear(g, p, q_in, &format!("{prefix}.q"))?;
    let k = linear(g, p, kv_in, &format!("{prefix}.k"))?;
    let v = linear(g, p, kv_in, &format!("{prefix}.v"))?;
    let a = g.attention(q, k, v, shape, key_pad);
    linear(g, p, a, &format!("{prefix}.o"))
}

fn feed_forward<T: Scalar, P: ParamSource<T>>(g: &mut Graph<T>, p: &mut Leaves<'_, T, P>, x: Var, prefix: &str) -> Result<Var> {
    let h = linear(g, p, x, &format!("{prefix}.w1"))?;
    let h = g.relu(h);
    linear(g, p, h, &format!("{prefix}.w2"))
}

fn encoder_stack<T: Scalar, P: ParamSource<T>>(
    g: &mut Graph<T>,
    p: &mut Leaves<'_, T, P>,
    ctx: &mut Ctx<'_>,
    src: &SeqBatch,
) -> Result<Var> {
    let cfg = p.source.model_config().clone();
    check_tokens(src, cfg.src_vocab, cfg.max_positions)?;
    let pad = src.pad_mask();
    let mut x = embed(g, p, ctx, Stack::Encoder, src)?;
    let shape = AttnShape {
        batch: src.batch,
        q_len: src.len,
        k_len: src.len,
        heads: cfg.heads,
        d_model: cfg.d_model,
        causal: false,
        q_offset: 0,
    };
    for i in 0..cfg.enc_layers {
        let l = format!("encoder.layers.{i}");
        let h = layer_norm(g, p, x, &format!("{l}.ln_self"))?;
        let a = attention_block(g, p, &format!("{l}.self_attn"), h, h, shape, &pad)?;
        let a = ctx.dropout(g, a);
        x = g.add(x, a);
        let h = layer_norm(g, p, x, &format!("{l}.ln_ffn"))?;
        let f = feed_forward(g, p, h, &format!("{l}.ffn"))?;
        let f = ctx.dropout(g, f);
        x = g.add(x, f);
    }
    layer_norm(g, p, x, "encoder.ln_final")
}

fn decoder_stack<T: Scalar, P: ParamSource<T>>(
    g: &mut Graph<T>,
    p: &mut Leaves<'_, T, P>,
    ctx: &mut Ctx<'_>,
    tgt_in: &SeqBatch,
    enc: Var,
    src_len: usize,
    src_pad: &[bool],
) -> Result<Var> {
    let cfg = p.source.model_config().clone();
    check_tokens(tgt_in, cfg.tgt_vocab, cfg.max_positions)?;
    let tgt_pad = tgt_in.pad_mask();
    let mut x = embed(g, p, ctx, Stack::Decoder, tgt_in)?;
    let self_shape = AttnShape {
        batch: tgt_in.batch,
        q_len: tgt_in.len,
        k_len: tgt_in.len,
        heads: cfg.heads,
        d_model: cfg.d_model,
        causal: true,
        q_offset: 0,
    };
    let cross_shape = AttnShape {
        k_len: src_len,
        causal: false,
        ..self_shape
    };
    for i in 0..cfg.dec_layers {
        let l = format!("decoder.layers.{i}");
        let h = layer_norm(g, p, x, &format!("{l}.ln_self"))?;
        let a = attention_block(g, p, &format!("{l}.self_attn"), h, h, self_shape, &tgt_pad)?;
        let a = ctx.dropout(g, a);
        x = g.add(x, a);
        let h = layer_norm(g, p, x, &format!("{l}.ln_cross"))?;
        let c = attention_block(g, p, &format!("{l}.cross_attn"), h, enc, cross_shape, src_pad)?;
        let c = ctx.dropout(g, c);
        x = g.add(x, c);
        let h = layer_norm(g, p, x, &format!("{l}.ln_ffn"))?;
        let f = feed_forward(g, p, h, &format!("{l}.ffn"))?;
        let f = ctx.dropout(g, f);
        x = g.add(x, f);
    }
    layer_norm(g, p, x, "decoder.ln_final")
}

/// Eval-mode encoder on an explicit graph; used by the inference path.
pub(crate) fn encode_graph<T: Scalar, P: ParamSource<T>>(g: &mut Graph<T>, p: &mut Leaves<'_, T, P>, src: &SeqBatch) -> Result<Var> {
    let mut ctx = Ctx { rng: None, dropout: 0.0 };
    encoder_stack(g, p, &mut ctx, src)
}

/// Eval-mode decoder returning full logits for every prefix position.
pub(crate) fn decode_graph<T: Scalar, P: ParamSource<T>>(
    g: &mut Graph<T>,
    p: &mut Leaves<'_, T, P>,
    tgt_in: &SeqBatch,
    enc: Var,
    src_len: usize,
    src_pad: &[bool],
) -> Result<Var> {
    let mut ctx = Ctx { rng: None, dropout: 0.0 };
    let h = decoder_stack(g, p, &mut ctx, tgt_in, enc, src_len, src_pad)?;
    let out = p.get(g, OUTPUT_PROJECTION)?;
    Ok(g.matmul_t(h, out))
}

fn loss_rows(targets: &[u32]) -> (Vec<usize>, Vec<usize>) {
    targets
        .iter()
        .enumerate()
        .filter(|(_, &t)| t != PAD)
        .map(|(i, &t)| (i, t as usize))
        .unzip()
}

/// Builds the encoder-decoder loss. Dropout is active iff `rng` is given.
pub fn seq2seq_loss_graph<T: Scalar, P: ParamSource<T>>(
    g: &mut Graph<T>,
    p: &mut Leaves<'_, T, P>,
    batch: &TrainBatch,
    label_smoothing: T,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let cfg = p.source.model_config().clone();
    if !cfg.has_decoder() {
        return Err(Error::InvalidConfig("seq2seq objective needs a decoder".into()));
    }
    let tgt_in = batch
        .tgt_in
        .as_ref()
        .ok_or_else(|| Error::Invalid("seq2seq batch without decoder input".into()))?;
    if batch.targets.len() != tgt_in.tokens.len() {
        return Err(Error::Shape("targets not aligned with decoder input".into()));
    }
    let mut ctx = Ctx {
        rng,
        dropout: cfg.dropout,
    };
    let enc = encoder_stack(g, p, &mut ctx, &batch.src)?;
    let src_pad = batch.src.pad_mask();
    let h = decoder_stack(g, p, &mut ctx, tgt_in, enc, batch.src.len, &src_pad)?;
    let (rows, targets) = loss_rows(&batch.targets);
    if rows.is_empty() {
        return Err(Error::NoLossPositions);
    }
    let h = g.select_rows(h, rows);
    let out = p.get(g, OUTPUT_PROJECTION)?;
    let logits = g.matmul_t(h, out);
    g.cross_entropy(logits, targets, label_smoothing, PAD as usize)
}

/// Builds the encoder-only masked-LM loss over positions whose target is
/// not PAD; the prediction head is tied to `encoder.embed.tokens`.
pub fn masked_lm_loss_graph<T: Scalar, P: ParamSource<T>>(
    g: &mut Graph<T>,
    p: &mut Leaves<'_, T, P>,
    batch: &TrainBatch,
    label_smoothing: T,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let cfg = p.source.model_config().clone();
    if batch.targets.len() != batch.src.tokens.len() {
        return Err(Error::Shape("masked-LM targets not aligned with source".into()));
    }
    let mut ctx = Ctx {
        rng,
        dropout: cfg.dropout,
    };
    let enc = encoder_stack(g, p, &mut ctx, &batch.src)?;
    let (rows, targets) = loss_rows(&batch.targets);
    if rows.is_empty() {
        return Err(Error::NoLossPositions);
    }
    let h = g.select_rows(enc, rows);
    let head = p.get(g, "encoder.embed.tokens")?;
    let logits = g.matmul_t(h, head);
    g.cross_entropy(logits, targets, label_smoothing, PAD as usize)
}

/// Gradients keyed by canonical storage name, one entry per trainable tensor.
pub type Gradients = BTreeMap<String, Vec<f32>>;

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub positions: usize,
    pub grads: Gradients,
}

/// One forward/backward pass in `f32`. Trainable tensors that the loss does
/// not touch get explicit zero gradients; frozen tensors get none.
pub fn loss_and_grads(
    tree: &ParamTree,
    objective: Objective,
    batch: &TrainBatch,
    label_smoothing: f32,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<LossOutput> {
    let mut g = Graph::<f32>::new();
    let mut leaves = Leaves::new(tree);
    let loss = match objective {
        Objective::Seq2Seq => seq2seq_loss_graph(&mut g, &mut leaves, batch, label_smoothing, rng)?,
        Objective::MaskedLm => masked_lm_loss_graph(&mut g, &mut leaves, batch, label_smoothing, rng)?,
    };
    let value = g.value(loss)[0];
    if !value.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }
    g.backward(loss)?;
    let mut grads = Gradients::new();
    for (name, t) in tree.iter() {
        if !t.requires_grad {
            continue;
        }
        let grad = leaves
            .vars()
            .get(name)
            .and_then(|&v| g.take_grad(v))
            .unwrap_or_else(|| vec![0.0; t.numel()]);
        grads.insert(name.into(), grad);
    }
    Ok(LossOutput {
        loss: value as f64,
        positions: batch.loss_positions(),
        grads,
    })
}
