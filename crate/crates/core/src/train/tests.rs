use super::*;
use crate::model::ModelConfig;
use crate::surgery::{resolve_frozen_set, FreezeStrategy};
use crate::model::Stack;
use alloc::format;
use proptest::prelude::*;

fn tiny(vocab: usize, dec: usize) -> ModelConfig {
    ModelConfig {
        enc_layers: 1,
        dec_layers: dec,
        d_model: 16,
        d_ffn: 32,
        heads: 2,
        src_vocab: vocab,
        tgt_vocab: vocab,
        max_positions: 24,
        dropout: 0.0,
        tie_decoder_embeddings: true,
    }
}

fn sentences(n: usize, vocab: u32, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(3..7);
            (0..len).map(|_| rng.random_range(NUM_SPECIALS as u32..vocab)).collect()
        })
        .collect()
}

fn render(t: &[u32]) -> String {
    t.iter().map(|v| format!("w{v}")).collect::<Vec<_>>().join(" ")
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        schedule: Schedule::InverseSqrt { peak: 1e-2, warmup: 20 },
        max_tokens: 128,
        label_smoothing: 0.0,
        max_epochs: epochs,
        patience: 100,
        ..TrainConfig::default()
    }
}

#[test]
fn early_stopping_example() {
    let mut s = EarlyStopping::new(10);
    let mut stopped = None;
    for epoch in 1..=100 {
        let score = if epoch <= 30 { epoch as f64 } else { 30.0 };
        s.observe(epoch, score);
        if s.should_stop(epoch) {
            stopped = Some(epoch);
            break;
        }
    }
    assert_eq!(stopped, Some(40));
    assert_eq!(s.best(), Some((30, 30.0)));
}

#[test]
fn mask_counts() {
    assert_eq!(mask_count(100, 0.15), 15);
    assert_eq!(mask_count(3, 0.15), 1);
    assert_eq!(mask_count(10, 0.15), 2);
    assert_eq!(mask_count(10, 0.0), 0);
    assert_eq!(mask_count(0, 0.5), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = mask_positions(100, 0.15, &mut rng);
    assert_eq!(p.len(), 15);
    assert!(p.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn history_line_format() {
    let r = HistoryRecord {
        epoch: 3,
        train_loss: 1.5,
        dev_bleu: Some(12.25),
        lr: 5e-4,
    };
    assert_eq!(r.to_string(), "3\t1.500000\t12.2500\t5e-4");
    let r = HistoryRecord { dev_bleu: None, ..r };
    assert_eq!(r.to_string(), "3\t1.500000\t-\t5e-4");
}

#[test]
fn denoising_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s: [&[u32]; 2] = [&[5, 6, 7, 8, 9, 10, 11, 12, 13, 14], &[5, 6]];
    let b = denoising_batch(&s, Noise { mask_ratio: 0.2 }, true, &mut rng);
    let masks = b.src.tokens.iter().filter(|&&t| t == MASK).count();
    assert_eq!(masks, 2 + 1);
    assert_eq!(b.loss_positions(), 11 + 3);
    let b = denoising_batch(&s, Noise { mask_ratio: 0.2 }, false, &mut rng);
    assert_eq!(b.loss_positions(), 3);
    assert!(b.tgt_in.is_none());
    for (i, &t) in b.targets.iter().enumerate() {
        if t != PAD {
            assert_eq!(b.src.tokens[i], MASK);
        }
    }
}

#[test]
fn copy_task_learns() {
    let mono = sentences(300, 12, 3);
    let tree = build_model(&tiny(12, 1), 1).unwrap();
    let out = pretrain_denoising(tree, &mono, Noise { mask_ratio: 0.0 }, &quick(30)).unwrap();
    let loss = denoising_loss(&out.model, &mono, Noise { mask_ratio: 0.0 }, 0).unwrap();
    assert!(loss < 0.1, "{loss}");
}

#[test]
fn denoising_loss_decreases() {
    let mono = sentences(2000, 40, 4);
    let tree = build_model(&tiny(40, 1), 2).unwrap();
    let out = pretrain_denoising(tree, &mono, Noise::default(), &quick(2)).unwrap();
    assert_eq!(out.history.len(), 2);
    assert!(out.history[1].train_loss < out.history[0].train_loss);
    assert!(out.history.iter().all(|h| h.dev_bleu.is_none()));
    assert!(pretrain_denoising(build_model(&tiny(40, 1), 2).unwrap(), &[], Noise::default(), &quick(1)).is_err());
}

#[test]
fn adaptation_keeps_body_and_helps() {
    let pivot = sentences(600, 30, 5);
    let plm = pretrain_denoising(build_model(&tiny(30, 1), 3).unwrap(), &pivot, Noise::default(), &quick(4))
        .unwrap()
        .model;
    // a "new language": the same sentences under a permuted vocabulary
    let remap = |s: &Vec<u32>| s.iter().map(|&t| 5 + (t - 5 + 7) % 25).collect::<Vec<u32>>();
    let new: Vec<Vec<u32>> = pivot.iter().map(remap).collect();
    let held: Vec<Vec<u32>> = sentences(100, 30, 6).iter().map(remap).collect();
    let out = adapt_embeddings(&plm, 30, &new, Noise::default(), &quick(4)).unwrap();
    let start = embedding_transplant(&plm, 30, quick(4).seed).unwrap();
    for (name, t) in out.model.iter() {
        if is_token_embedding(name) {
            assert!(!t.bitwise_eq(start.tensor(name).unwrap()), "{name} did not move");
        } else {
            assert!(t.bitwise_eq(plm.tensor(name).unwrap()), "{name} changed");
        }
    }
    let random = build_model(out.model.config(), 99).unwrap();
    let adapted = denoising_loss(&out.model, &held, Noise::default(), 1).unwrap();
    let baseline = denoising_loss(&random, &held, Noise::default(), 1).unwrap();
    assert!(adapted < baseline, "{adapted} vs {baseline}");
    assert_eq!(
        adapt_embeddings(&plm, 4, &new, Noise::default(), &quick(1)).err(),
        Some(Error::VocabTooSmall(4))
    );
}

fn reverse_pairs(n: usize, seed: u64) -> Vec<(Vec<u32>, Vec<u32>)> {
    sentences(n, 16, seed)
        .into_iter()
        .map(|s| {
            let mut t: Vec<u32> = s.iter().map(|&v| v + 2).collect();
            t.reverse();
            (s, t)
        })
        .collect()
}

#[test]
fn translation_contracts() {
    let train = reverse_pairs(400, 7);
    let dev_pairs = reverse_pairs(40, 8);
    let sources: Vec<Vec<u32>> = dev_pairs.iter().map(|p| p.0.clone()).collect();
    let references: Vec<String> = dev_pairs.iter().map(|p| render(&p.1)).collect();
    let dev = DevSet {
        sources: &sources,
        references: &references,
        render: &render,
    };
    let mut tree = build_model(&tiny(18, 1), 4).unwrap();
    let frozen = resolve_frozen_set(FreezeStrategy::LayerWise(1), tree.config(), Stack::Encoder).unwrap();
    tree.set_frozen(&frozen).unwrap();
    let init = tree.clone();
    let cfg = quick(6);
    let a = train_translation(tree.clone(), &train, &dev, &cfg).unwrap();
    for n in &frozen {
        assert!(a.model.tensor(n).unwrap().bitwise_eq(init.tensor(n).unwrap()));
        assert!(!a.optimizer.has_state(n));
    }
    let best = a.history.iter().filter_map(|h| h.dev_bleu).fold(f64::MIN, f64::max);
    assert!((dev_bleu(&a.model, &dev).unwrap() - best).abs() < 1e-12);
    let b = train_translation(tree, &train, &dev, &cfg).unwrap();
    assert!(a.model.bitwise_eq(&b.model));
    assert_eq!(a.history, b.history);
    let empty = DevSet {
        sources: &[],
        references: &[],
        render: &render,
    };
    assert_eq!(
        train_translation(init, &train, &empty, &cfg).err(),
        Some(Error::EmptyDevSet)
    );
}

#[test]
fn learns_simple_mapping() {
    let train = reverse_pairs(1500, 9);
    let dev_pairs = reverse_pairs(60, 10);
    let sources: Vec<Vec<u32>> = dev_pairs.iter().map(|p| p.0.clone()).collect();
    let references: Vec<String> = dev_pairs.iter().map(|p| render(&p.1)).collect();
    let dev = DevSet {
        sources: &sources,
        references: &references,
        render: &render,
    };
    let mut cfg = tiny(18, 1);
    cfg.enc_layers = 2;
    let out = train_translation(build_model(&cfg, 5).unwrap(), &train, &dev, &quick(12)).unwrap();
    let best = out.history.iter().filter_map(|h| h.dev_bleu).fold(f64::MIN, f64::max);
    assert!(best > 50.0, "{best}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn batches_partition_and_fit(lens in proptest::collection::vec(1usize..40, 1..200), cap in 40usize..400, seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batches = make_batches(&lens, cap, &mut rng);
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..lens.len()).collect::<Vec<_>>());
        for b in &batches {
            let longest = b.iter().map(|&i| lens[i]).max().unwrap();
            prop_assert!(b.len() == 1 || b.len() * longest <= cap);
        }
        prop_assert_eq!(batches.len(), batch_count(&lens, cap));
        let mut rng2 = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(batches, make_batches(&lens, cap, &mut rng2));
    }
}
