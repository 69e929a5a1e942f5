//! Training loops: supervised translation with dev-BLEU early stopping,
//! denoising pretraining (sequence-to-sequence or masked-LM), and embedding
//! adaptation against a frozen pretrained body.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decode::{translate_greedy_batch, SearchSettings};
use crate::error::{Error, Result};
use crate::eval::bleu;
use crate::model::{build_model, loss_and_grads, Objective, ParamTree, SeqBatch, TrainBatch};
use crate::optim::{lr_at, Adam, AdamConfig, Schedule};
use crate::vocab::{EOS, MASK, NUM_SPECIALS, PAD};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub schedule: Schedule,
    pub adam: AdamConfig,
    /// Cap on padded tokens per batch (longer side).
    pub max_tokens: usize,
    pub label_smoothing: f32,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    /// Optional hard cap on optimizer steps.
    pub max_steps: Option<u64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schedule: Schedule::InverseSqrt { peak: 5e-4, warmup: 200 },
            adam: AdamConfig::default(),
            max_tokens: 600,
            label_smoothing: 0.1,
            max_epochs: 10,
            patience: 10,
            max_steps: None,
            seed: 1,
        }
    }
}

/// One line of training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_bleu: Option<f64>,
    pub lr: f64,
}

impl fmt::Display for HistoryRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{:.6}\t", self.epoch, self.train_loss)?;
        match self.dev_bleu {
            Some(b) => write!(f, "{b:.4}")?,
            None => write!(f, "-")?,
        }
        write!(f, "\t{:e}", self.lr)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-dev model when a dev set was scored, otherwise the last one.
    pub model: ParamTree,
    pub history: Vec<HistoryRecord>,
    pub optimizer: Adam,
    pub best_epoch: Option<usize>,
}

/// Patience-based early stopping on a score where higher is better.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: None }
    }

    /// Records `score` for `epoch`; returns whether it is a new best.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        match self.best {
            Some((_, b)) if score <= b => false,
            _ => {
                self.best = Some((epoch, score));
                true
            }
        }
    }

    pub fn should_stop(&self, epoch: usize) -> bool {
        matches!(self.best, Some((e, _)) if epoch - e >= self.patience)
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Groups example indices into batches whose padded size (count times the
/// longest member) stays within `max_tokens`. Examples are shuffled, sorted
/// by length so batches hold similar lengths, and the batch order is
/// shuffled again.
pub fn make_batches(lens: &[usize], max_tokens: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..lens.len()).collect();
    idx.shuffle(rng);
    idx.sort_by_key(|&i| lens[i]);
    let mut batches = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut longest = 0;
    for i in idx {
        let l = lens[i].max(1);
        if !cur.is_empty() && (cur.len() + 1) * longest.max(l) > max_tokens {
            batches.push(core::mem::take(&mut cur));
            longest = 0;
        }
        cur.push(i);
        longest = longest.max(l);
    }
    if !cur.is_empty() {
        batches.push(cur);
    }
    batches.shuffle(rng);
    batches
}

/// Batches per epoch produced by [`make_batches`]; the count does not
/// depend on the shuffle.
pub fn batch_count(lens: &[usize], max_tokens: usize) -> usize {
    let mut sorted = lens.to_vec();
    sorted.sort_unstable();
    let (mut batches, mut count, mut longest) = (0, 0, 0);
    for l in sorted {
        let l = l.max(1);
        if count > 0 && (count + 1) * longest.max(l) > max_tokens {
            batches += 1;
            count = 0;
            longest = 0;
        }
        count += 1;
        longest = longest.max(l);
    }
    batches + usize::from(count > 0)
}

/// Batching length of each translation pair (the longer side plus EOS).
pub fn translation_lens(pairs: &[(Vec<u32>, Vec<u32>)]) -> Vec<usize> {
    pairs.iter().map(|p| (p.0.len() + 1).max(p.1.len() + 1)).collect()
}

/// Batching length of each denoising sentence.
pub fn denoising_lens(mono: &[Vec<u32>]) -> Vec<usize> {
    mono.iter().map(|s| s.len() + 1).collect()
}

/// Number of positions masked in a sentence of `len` tokens:
/// `floor(ratio * len + 0.5)`, at least 1 when the ratio is positive.
pub fn mask_count(len: usize, ratio: f64) -> usize {
    if ratio <= 0.0 || len == 0 {
        return 0;
    }
    let n = (ratio * len as f64 + 0.5) as usize;
    n.clamp(1, len)
}

/// Distinct masked positions in ascending order.
pub fn mask_positions(len: usize, ratio: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = mask_count(len, ratio);
    let mut pos: Vec<usize> = (0..len).collect();
    for i in 0..k {
        let j = rng.random_range(i..len);
        pos.swap(i, j);
    }
    let mut out = pos[..k].to_vec();
    out.sort_unstable();
    out
}

/// Source sentences (without EOS) and rendered references for dev scoring.
pub struct DevSet<'a> {
    pub sources: &'a [Vec<u32>],
    pub references: &'a [String],
    pub render: &'a dyn Fn(&[u32]) -> String,
}

const DEV_CHUNK: usize = 64;

/// Greedy-decodes every dev source and returns corpus BLEU.
pub fn dev_bleu(tree: &ParamTree, dev: &DevSet<'_>) -> Result<f64> {
    if dev.sources.is_empty() {
        return Err(Error::EmptyDevSet);
    }
    let settings = SearchSettings::default();
    let mut hyps = Vec::with_capacity(dev.sources.len());
    for chunk in dev.sources.chunks(DEV_CHUNK) {
        let refs: Vec<&[u32]> = chunk.iter().map(Vec::as_slice).collect();
        for out in translate_greedy_batch(tree, &refs, &settings)? {
            hyps.push((dev.render)(&out));
        }
    }
    Ok(bleu(&hyps, dev.references)?.score)
}

fn with_eos(s: &[u32]) -> Vec<u32> {
    let mut v = s.to_vec();
    v.push(EOS);
    v
}

fn run<B, E>(
    mut tree: ParamTree,
    cfg: &TrainConfig,
    objective: Objective,
    lens: &[usize],
    mut build: B,
    mut evaluate: E,
) -> Result<TrainOutcome>
where
    B: FnMut(&[usize], &mut ChaCha8Rng) -> TrainBatch,
    E: FnMut(&ParamTree) -> Result<Option<f64>>,
{
    cfg.schedule.validate()?;
    if lens.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6e6f_6973_65);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6472_6f70);
    let mut adam = Adam::new(cfg.adam);
    let mut history = Vec::new();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best: Option<ParamTree> = None;
    let mut lr = 0.0;
    'epochs: for epoch in 1..=cfg.max_epochs {
        let (mut loss_sum, mut positions) = (0.0f64, 0usize);
        let mut capped = false;
        for batch_idx in make_batches(lens, cfg.max_tokens, &mut order_rng) {
            let batch = build(&batch_idx, &mut noise_rng);
            if batch.loss_positions() == 0 {
                continue;
            }
            let out = loss_and_grads(&tree, objective, &batch, cfg.label_smoothing, Some(&mut drop_rng))?;
            lr = lr_at(&cfg.schedule, adam.steps() + 1);
            adam.step(&mut tree, &out.grads, lr)?;
            loss_sum += out.loss * out.positions as f64;
            positions += out.positions;
            if cfg.max_steps.is_some_and(|m| adam.steps() >= m) {
                capped = true;
                break;
            }
        }
        let score = evaluate(&tree)?;
        history.push(HistoryRecord {
            epoch,
            train_loss: if positions > 0 { loss_sum / positions as f64 } else { 0.0 },
            dev_bleu: score,
            lr,
        });
        if let Some(s) = score {
            if stopper.observe(epoch, s) {
                best = Some(tree.clone());
            }
            if stopper.should_stop(epoch) {
                break 'epochs;
            }
        }
        if capped {
            break;
        }
    }
    Ok(TrainOutcome {
        model: best.unwrap_or(tree),
        history,
        optimizer: adam,
        best_epoch: stopper.best().map(|b| b.0),
    })
}

/// Supervised training on `(source, target)` token pairs (no EOS; it is
/// added here), scoring dev BLEU after every epoch and returning the
/// best-dev model.
pub fn train_translation(
    tree: ParamTree,
    pairs: &[(Vec<u32>, Vec<u32>)],
    dev: &DevSet<'_>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if dev.sources.is_empty() {
        return Err(Error::EmptyDevSet);
    }
    if dev.sources.len() != dev.references.len() {
        return Err(Error::CountMismatch(dev.sources.len(), dev.references.len()));
    }
    let srcs: Vec<Vec<u32>> = pairs.iter().map(|p| with_eos(&p.0)).collect();
    let lens = translation_lens(pairs);
    run(
        tree,
        cfg,
        Objective::Seq2Seq,
        &lens,
        |idx, _| {
            let b: Vec<(&[u32], &[u32])> = idx.iter().map(|&i| (srcs[i].as_slice(), pairs[i].1.as_slice())).collect();
            TrainBatch::seq2seq(&b)
        },
        |t| dev_bleu(t, dev).map(Some),
    )
}

/// Noising for denoising pretraining.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Noise {
    pub mask_ratio: f64,
}

impl Default for Noise {
    fn default() -> Self {
        Noise { mask_ratio: 0.15 }
    }
}

/// Builds one denoising batch: masked sentences plus EOS as source. With a
/// decoder the target is the original sentence; without one only masked
/// positions are predicted.
pub fn denoising_batch(sentences: &[&[u32]], noise: Noise, has_decoder: bool, rng: &mut ChaCha8Rng) -> TrainBatch {
    let mut noisy: Vec<Vec<u32>> = Vec::with_capacity(sentences.len());
    let mut masked: Vec<Vec<usize>> = Vec::with_capacity(sentences.len());
    for s in sentences {
        let pos = mask_positions(s.len(), noise.mask_ratio, rng);
        let mut n = s.to_vec();
        for &p in &pos {
            n[p] = MASK;
        }
        n.push(EOS);
        noisy.push(n);
        masked.push(pos);
    }
    if has_decoder {
        let pairs: Vec<(&[u32], &[u32])> = noisy.iter().zip(sentences).map(|(n, s)| (n.as_slice(), *s)).collect();
        TrainBatch::seq2seq(&pairs)
    } else {
        let refs: Vec<&[u32]> = noisy.iter().map(Vec::as_slice).collect();
        let src = SeqBatch::from_sequences(&refs);
        let mut targets = vec![PAD; src.tokens.len()];
        for (b, (s, pos)) in sentences.iter().zip(&masked).enumerate() {
            for &p in pos {
                targets[b * src.len + p] = s[p];
            }
        }
        TrainBatch {
            src,
            tgt_in: None,
            targets,
        }
    }
}

/// Denoising pretraining on monolingual token sentences (no EOS). Models
/// with a decoder reconstruct the whole sentence; encoder-only models
/// predict the masked positions.
pub fn pretrain_denoising(tree: ParamTree, mono: &[Vec<u32>], noise: Noise, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if mono.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let has_decoder = tree.config().has_decoder();
    let objective = if has_decoder { Objective::Seq2Seq } else { Objective::MaskedLm };
    let lens = denoising_lens(mono);
    run(
        tree,
        cfg,
        objective,
        &lens,
        |idx, rng| {
            let b: Vec<&[u32]> = idx.iter().map(|&i| mono[i].as_slice()).collect();
            denoising_batch(&b, noise, has_decoder, rng)
        },
        |_| Ok(None),
    )
}

/// Mean per-token denoising loss (no dropout, no smoothing) with masks
/// drawn from `seed`.
pub fn denoising_loss(tree: &ParamTree, mono: &[Vec<u32>], noise: Noise, seed: u64) -> Result<f64> {
    let has_decoder = tree.config().has_decoder();
    let objective = if has_decoder { Objective::Seq2Seq } else { Objective::MaskedLm };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut n) = (0.0, 0usize);
    for chunk in mono.chunks(32) {
        let refs: Vec<&[u32]> = chunk.iter().map(Vec::as_slice).collect();
        let batch = denoising_batch(&refs, noise, has_decoder, &mut rng);
        if batch.loss_positions() == 0 {
            continue;
        }
        let out = loss_and_grads(tree, objective, &batch, 0.0, None)?;
        sum += out.loss * out.positions as f64;
        n += out.positions;
    }
    if n == 0 {
        return Err(Error::NoLossPositions);
    }
    Ok(sum / n as f64)
}

/// True for parameters that embedding adaptation replaces and trains.
pub fn is_token_embedding(name: &str) -> bool {
    name.ends_with(".embed.tokens")
}

/// A copy of `plm` for a new language: fresh token embeddings of size
/// `vocab`, every other tensor copied from `plm` and frozen.
pub fn embedding_transplant(plm: &ParamTree, vocab: usize, seed: u64) -> Result<ParamTree> {
    if vocab <= NUM_SPECIALS {
        return Err(Error::VocabTooSmall(vocab));
    }
    let mut cfg = plm.config().clone();
    cfg.src_vocab = vocab;
    cfg.tgt_vocab = vocab;
    let mut tree = build_model(&cfg, seed)?;
    let body: Vec<String> = tree.names().filter(|n| !is_token_embedding(n)).map(String::from).collect();
    for name in &body {
        let src = plm.tensor(name)?;
        tree.get_mut(name).expect("same grammar").values_mut().copy_from_slice(src.values());
    }
    let frozen: BTreeSet<String> = body.into_iter().collect();
    tree.set_frozen(&frozen)?;
    Ok(tree)
}

/// Trains new-language token embeddings against the frozen body of `plm`
/// with the denoising objective.
pub fn adapt_embeddings(
    plm: &ParamTree,
    vocab: usize,
    mono: &[Vec<u32>],
    noise: Noise,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let tree = embedding_transplant(plm, vocab, cfg.seed)?;
    pretrain_denoising(tree, mono, noise, cfg)
}

#[cfg(test)]
mod tests;
