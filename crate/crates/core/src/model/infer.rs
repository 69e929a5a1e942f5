//! Eval-mode inference: full-sequence encode/decode on the graph, and an
//! incremental decoder with per-row key/value caches for search.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::forward::{decode_graph, encode_graph, Leaves, SeqBatch};
use super::{ParamTree, LN_EPS, OUTPUT_PROJECTION};
use crate::decode::StepModel;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::kernels::{self, AttnShape};
use crate::vocab::{BOS, PAD};

/// Encoder states of one source sentence, `len x d_model`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub states: Vec<f32>,
    pub len: usize,
    pub d_model: usize,
    pub pad: Vec<bool>,
}

/// Encodes one sequence. Positions flagged in `pad_mask` are treated as
/// padding and excluded from attention.
pub fn encode(tree: &ParamTree, src: &[u32], pad_mask: &[bool]) -> Result<EncoderOutput> {
    if src.len() != pad_mask.len() {
        return Err(Error::Shape(format!("{} tokens, {} mask entries", src.len(), pad_mask.len())));
    }
    let tokens: Vec<u32> = src
        .iter()
        .zip(pad_mask)
        .map(|(&t, &m)| if m { PAD } else { t })
        .collect();
    let batch = SeqBatch::from_sequences(&[&tokens]);
    let mut g = Graph::<f32>::new();
    let mut leaves = Leaves::new(tree);
    let v = encode_graph(&mut g, &mut leaves, &batch)?;
    Ok(EncoderOutput {
        states: g.value(v).to_vec(),
        len: src.len(),
        d_model: tree.config().d_model,
        pad: batch.pad_mask(),
    })
}

/// Encodes several sentences as one padded batch and splits the result back
/// into per-sentence outputs trimmed to their own lengths.
pub fn encode_batch(tree: &ParamTree, srcs: &[&[u32]]) -> Result<Vec<EncoderOutput>> {
    if srcs.is_empty() {
        return Ok(Vec::new());
    }
    let batch = SeqBatch::from_sequences(srcs);
    let mut g = Graph::<f32>::new();
    let mut leaves = Leaves::new(tree);
    let v = encode_graph(&mut g, &mut leaves, &batch)?;
    let d = tree.config().d_model;
    let states = g.value(v);
    Ok(srcs
        .iter()
        .enumerate()
        .map(|(b, s)| EncoderOutput {
            states: states[b * batch.len * d..(b * batch.len + s.len()) * d].to_vec(),
            len: s.len(),
            d_model: d,
            pad: s.iter().map(|&t| t == PAD).collect(),
        })
        .collect())
}

/// Logits `prefix_len x tgt_vocab` for a BOS-initial prefix.
pub fn decode_logits(tree: &ParamTree, enc: &EncoderOutput, prefix: &[u32]) -> Result<Vec<f32>> {
    if prefix.first() != Some(&BOS) {
        return Err(Error::BadPrefix);
    }
    let mut g = Graph::<f32>::new();
    let mut leaves = Leaves::new(tree);
    let e = g.leaf(enc.len, enc.d_model, enc.states.clone(), false);
    let tgt = SeqBatch::from_sequences(&[prefix]);
    let v = decode_graph(&mut g, &mut leaves, &tgt, e, enc.len, &enc.pad)?;
    Ok(g.value(v).to_vec())
}

struct Lin<'a> {
    w: &'a [f32],
    b: &'a [f32],
    dout: usize,
}

impl<'a> Lin<'a> {
    fn new(tree: &'a ParamTree, prefix: &str) -> Result<Self> {
        let w = tree.tensor(&format!("{prefix}.weight"))?;
        let b = tree.tensor(&format!("{prefix}.bias"))?;
        Ok(Lin {
            w: w.values(),
            b: b.values(),
            dout: w.dims()[1],
        })
    }

    fn apply(&self, x: &[f32], n: usize) -> Vec<f32> {
        let din = self.w.len() / self.dout;
        let mut out = vec![0.0; n * self.dout];
        kernels::linear_forward(x, n, din, self.w, self.dout, Some(self.b), &mut out);
        out
    }
}

struct Norm<'a> {
    gain: &'a [f32],
    bias: &'a [f32],
}

impl<'a> Norm<'a> {
    fn new(tree: &'a ParamTree, prefix: &str) -> Result<Self> {
        Ok(Norm {
            gain: tree.tensor(&format!("{prefix}.gain"))?.values(),
            bias: tree.tensor(&format!("{prefix}.bias"))?.values(),
        })
    }

    fn apply(&self, x: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; x.len()];
        kernels::layer_norm_forward(x, self.gain.len(), self.gain, self.bias, LN_EPS, &mut out, None);
        out
    }
}

struct Layer<'a> {
    ln_self: Norm<'a>,
    q: Lin<'a>,
    k: Lin<'a>,
    v: Lin<'a>,
    o: Lin<'a>,
    ln_cross: Norm<'a>,
    cq: Lin<'a>,
    co: Lin<'a>,
    /// Per source: projected encoder keys and values.
    cross_kv: Vec<(Vec<f32>, Vec<f32>)>,
    ln_ffn: Norm<'a>,
    w1: Lin<'a>,
    w2: Lin<'a>,
}

#[derive(Clone)]
struct Row {
    source: usize,
    /// Per layer: cached self-attention keys and values, `t x d`.
    kv: Vec<(Vec<f32>, Vec<f32>)>,
}

/// Incremental decoder over one or more encoded sources. Each row is a
/// live hypothesis bound to a source; rows start one per source.
pub struct IncrementalDecoder<'a> {
    d: usize,
    heads: usize,
    vocab: usize,
    max_positions: usize,
    tokens: &'a [f32],
    positions: &'a [f32],
    out_proj: &'a [f32],
    ln_final: Norm<'a>,
    layers: Vec<Layer<'a>>,
    sources: Vec<(usize, Vec<bool>)>,
    rows: Vec<Row>,
    step: usize,
}

impl<'a> IncrementalDecoder<'a> {
    pub fn new(tree: &'a ParamTree, encs: &[EncoderOutput]) -> Result<Self> {
        let cfg = tree.config();
        if !cfg.has_decoder() {
            return Err(Error::InvalidConfig("incremental decoding needs a decoder".into()));
        }
        let mut layers = Vec::with_capacity(cfg.dec_layers);
        for i in 0..cfg.dec_layers {
            let l = format!("decoder.layers.{i}");
            let ck = Lin::new(tree, &format!("{l}.cross_attn.k"))?;
            let cv = Lin::new(tree, &format!("{l}.cross_attn.v"))?;
            let cross_kv = encs
                .iter()
                .map(|e| (ck.apply(&e.states, e.len), cv.apply(&e.states, e.len)))
                .collect();
            layers.push(Layer {
                ln_self: Norm::new(tree, &format!("{l}.ln_self"))?,
                q: Lin::new(tree, &format!("{l}.self_attn.q"))?,
                k: Lin::new(tree, &format!("{l}.self_attn.k"))?,
                v: Lin::new(tree, &format!("{l}.self_attn.v"))?,
                o: Lin::new(tree, &format!("{l}.self_attn.o"))?,
                ln_cross: Norm::new(tree, &format!("{l}.ln_cross"))?,
                cq: Lin::new(tree, &format!("{l}.cross_attn.q"))?,
                co: Lin::new(tree, &format!("{l}.cross_attn.o"))?,
                cross_kv,
                ln_ffn: Norm::new(tree, &format!("{l}.ln_ffn"))?,
                w1: Lin::new(tree, &format!("{l}.ffn.w1"))?,
                w2: Lin::new(tree, &format!("{l}.ffn.w2"))?,
            });
        }
        Ok(IncrementalDecoder {
            d: cfg.d_model,
            heads: cfg.heads,
            vocab: cfg.tgt_vocab,
            max_positions: cfg.max_positions,
            tokens: tree.tensor("decoder.embed.tokens")?.values(),
            positions: tree.tensor("decoder.embed.positions")?.values(),
            out_proj: tree.tensor(OUTPUT_PROJECTION)?.values(),
            ln_final: Norm::new(tree, "decoder.ln_final")?,
            layers,
            sources: encs.iter().map(|e| (e.len, e.pad.clone())).collect(),
            rows: Vec::new(),
            step: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    fn run(&mut self, tokens: &[u32]) -> Result<Vec<f32>> {
        let n = tokens.len();
        let d = self.d;
        if self.step >= self.max_positions {
            return Err(Error::SequenceTooLong {
                len: self.step + 1,
                max: self.max_positions,
            });
        }
        let scale = num_traits::Float::sqrt(d as f32);
        let mut x = vec![0.0f32; n * d];
        for (r, &t) in tokens.iter().enumerate() {
            if t as usize >= self.vocab {
                return Err(Error::TokenOutOfRange { token: t, vocab: self.vocab });
            }
            let te = &self.tokens[t as usize * d..][..d];
            let pe = &self.positions[self.step * d..][..d];
            for i in 0..d {
                x[r * d + i] = te[i] * scale + pe[i];
            }
        }
        let t_len = self.step + 1;
        let mut probs = vec![0.0f32; self.heads * t_len.max(1)];
        for (li, layer) in self.layers.iter().enumerate() {
            let h = layer.ln_self.apply(&x);
            let q = layer.q.apply(&h, n);
            let k = layer.k.apply(&h, n);
            let v = layer.v.apply(&h, n);
            let mut att = vec![0.0f32; n * d];
            for r in 0..n {
                let cache = &mut self.rows[r].kv[li];
                cache.0.extend_from_slice(&k[r * d..(r + 1) * d]);
                cache.1.extend_from_slice(&v[r * d..(r + 1) * d]);
                let shape = AttnShape {
                    batch: 1,
                    q_len: 1,
                    k_len: t_len,
                    heads: self.heads,
                    d_model: d,
                    causal: false,
                    q_offset: 0,
                };
                probs.resize(self.heads * t_len, 0.0);
                kernels::attention_forward(
                    &shape,
                    &q[r * d..(r + 1) * d],
                    &cache.0,
                    &cache.1,
                    &vec![false; t_len],
                    &mut probs,
                    &mut att[r * d..(r + 1) * d],
                );
            }
            let a = layer.o.apply(&att, n);
            x.iter_mut().zip(&a).for_each(|(x, a)| *x += a);

            let h = layer.ln_cross.apply(&x);
            let q = layer.cq.apply(&h, n);
            let mut att = vec![0.0f32; n * d];
            for r in 0..n {
                let src = self.rows[r].source;
                let (src_len, ref pad) = self.sources[src];
                let (ref ck, ref cv) = layer.cross_kv[src];
                let shape = AttnShape {
                    batch: 1,
                    q_len: 1,
                    k_len: src_len,
                    heads: self.heads,
                    d_model: d,
                    causal: false,
                    q_offset: 0,
                };
                let mut p = vec![0.0f32; self.heads * src_len];
                kernels::attention_forward(&shape, &q[r * d..(r + 1) * d], ck, cv, pad, &mut p, &mut att[r * d..(r + 1) * d]);
            }
            let c = layer.co.apply(&att, n);
            x.iter_mut().zip(&c).for_each(|(x, c)| *x += c);

            let h = layer.ln_ffn.apply(&x);
            let mut f = layer.w1.apply(&h, n);
            f.iter_mut().for_each(|v| *v = v.max(0.0));
            let f = layer.w2.apply(&f, n);
            x.iter_mut().zip(&f).for_each(|(x, f)| *x += f);
        }
        let h = self.ln_final.apply(&x);
        let mut logits = vec![0.0f32; n * self.vocab];
        crate::scalar::matmul(n, d, self.vocab, &h, false, self.out_proj, true, &mut logits, false);
        for row in logits.chunks_exact_mut(self.vocab) {
            kernels::log_softmax_in_place(row);
        }
        self.step += 1;
        Ok(logits)
    }
}

impl StepModel for IncrementalDecoder<'_> {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn start(&mut self) -> Result<Vec<f32>> {
        let layers = self.layers.len();
        self.step = 0;
        self.rows = (0..self.sources.len())
            .map(|s| Row {
                source: s,
                kv: vec![(Vec::new(), Vec::new()); layers],
            })
            .collect();
        let bos = vec![BOS; self.rows.len()];
        self.run(&bos)
    }

    fn advance(&mut self, parents: &[usize], tokens: &[u32]) -> Result<Vec<f32>> {
        if parents.len() != tokens.len() {
            return Err(Error::Shape(format!("{} parents, {} tokens", parents.len(), tokens.len())));
        }
        let rows = parents
            .iter()
            .map(|&p| {
                self.rows
                    .get(p)
                    .cloned()
                    .ok_or_else(|| Error::Invalid(format!("parent row {p} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.rows = rows;
        self.run(tokens)
    }
}
