use super::*;
use crate::error::Error;
use crate::model::{build_model, ModelConfig, Stack};
use alloc::collections::BTreeSet;
use alloc::string::ToString;
use alloc::vec::Vec;
use proptest::prelude::*;

fn cfg(enc: usize, dec: usize) -> ModelConfig {
    ModelConfig {
        enc_layers: enc,
        dec_layers: dec,
        d_model: 8,
        d_ffn: 12,
        heads: 2,
        src_vocab: 11,
        tgt_vocab: 13,
        max_positions: 20,
        dropout: 0.0,
        tie_decoder_embeddings: true,
    }
}

fn ckpt(c: &ModelConfig, seed: u64, fp: (u64, u64)) -> Checkpoint {
    Checkpoint::new(build_model(c, seed).unwrap(), "X", "Z", fp.0, fp.1)
}

fn all_names(c: &ModelConfig) -> BTreeSet<String> {
    c.canonical_names().into_iter().map(|(n, _)| n).collect()
}

fn set(v: &[&str]) -> BTreeSet<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn layerwise_zero_freezes_only_embeddings() {
    let c = cfg(2, 2);
    let f = resolve_frozen_set(FreezeStrategy::LayerWise(0), &c, Stack::Encoder).unwrap();
    assert_eq!(f, set(&["encoder.embed.tokens", "encoder.embed.positions"]));
    let f = resolve_frozen_set(FreezeStrategy::LayerWise(0), &c, Stack::Decoder).unwrap();
    assert_eq!(f, set(&["decoder.embed.tokens", "decoder.embed.positions"]));
}

#[test]
fn layerwise_full_freezes_entire_stack() {
    let c = cfg(3, 2);
    let f = resolve_frozen_set(FreezeStrategy::LayerWise(3), &c, Stack::Encoder).unwrap();
    let enc: BTreeSet<String> = all_names(&c).into_iter().filter(|n| n.starts_with("encoder.")).collect();
    assert_eq!(f, enc);
}

#[test]
fn layerwise_out_of_range() {
    let c = cfg(2, 2);
    assert_eq!(
        resolve_frozen_set(FreezeStrategy::LayerWise(3), &c, Stack::Encoder),
        Err(Error::LayerOutOfRange { requested: 3, available: 2 })
    );
}

/// Trainable names for LNA-E,D on a 2+2 model, written out by hand.
fn lna_ed_trainable() -> BTreeSet<String> {
    let mut v: Vec<String> = Vec::new();
    for s in ["encoder", "decoder"] {
        v.push(format!("{s}.ln_final.gain"));
        v.push(format!("{s}.ln_final.bias"));
    }
    for i in 0..2 {
        for ln in ["ln_self", "ln_ffn"] {
            for p in ["gain", "bias"] {
                v.push(format!("encoder.layers.{i}.{ln}.{p}"));
            }
        }
        for ln in ["ln_self", "ln_cross", "ln_ffn"] {
            for p in ["gain", "bias"] {
                v.push(format!("decoder.layers.{i}.{ln}.{p}"));
            }
        }
        for q in ["q", "k", "v", "o"] {
            for w in ["weight", "bias"] {
                v.push(format!("encoder.layers.{i}.self_attn.{q}.{w}"));
                v.push(format!("decoder.layers.{i}.cross_attn.{q}.{w}"));
            }
        }
    }
    v.into_iter().collect()
}

#[test]
fn lna_ed_matches_hand_list() {
    let c = cfg(2, 2);
    let frozen = resolve_frozen_set(FreezeStrategy::LnaED, &c, Stack::Encoder).unwrap();
    let trainable: BTreeSet<String> = all_names(&c).difference(&frozen).cloned().collect();
    assert_eq!(trainable, lna_ed_trainable());
}

#[test]
fn lna_d_and_e_d() {
    let c = cfg(2, 2);
    let d = resolve_frozen_set(FreezeStrategy::LnaD, &c, Stack::Encoder).unwrap();
    assert!(d.iter().all(|n| n.starts_with("decoder.")));
    assert!(d.contains("decoder.embed.tokens"));
    assert!(d.contains("decoder.layers.1.self_attn.q.weight"));
    assert!(d.contains("decoder.layers.0.ffn.w2.bias"));
    assert!(!d.contains("decoder.layers.0.cross_attn.k.weight"));
    assert!(!d.contains("decoder.layers.0.ln_cross.gain"));
    let ed = resolve_frozen_set(FreezeStrategy::LnaeD, &c, Stack::Encoder).unwrap();
    let extra: BTreeSet<String> = ed.difference(&d).cloned().collect();
    assert_eq!(extra, set(&["encoder.embed.tokens", "encoder.embed.positions"]));
    let ed_dec = resolve_frozen_set(FreezeStrategy::LnaeD, &c, Stack::Decoder).unwrap();
    assert_eq!(ed_dec, d);
}

#[test]
fn all_and_none() {
    let c = cfg(2, 1);
    assert_eq!(
        resolve_frozen_set(FreezeStrategy::FreezeAll, &c, Stack::Encoder).unwrap(),
        all_names(&c)
    );
    assert!(resolve_frozen_set(FreezeStrategy::FreezeNone, &c, Stack::Encoder)
        .unwrap()
        .is_empty());
}

#[test]
fn mlm_source_leaves_cross_attention_random() {
    let mut mlm = cfg(2, 0);
    mlm.src_vocab = 13;
    let plm = ckpt(&mlm, 1, (7, 7));
    let mut dst = ckpt(&cfg(2, 2), 2, (5, 7));
    let before = dst.clone();
    let plan = GraftPlan {
        mappings: vec![GraftMapping::new(&plm, "encoder", "decoder")],
        missing: MissingPolicy::RandomInit,
    };
    let report = graft(&mut dst, &plan).unwrap();
    let expected: BTreeSet<String> = all_names(dst.params.config())
        .into_iter()
        .filter(|n| n.contains(".cross_attn.") || n.contains(".ln_cross."))
        .collect();
    assert_eq!(report.random_init.iter().cloned().collect::<BTreeSet<_>>(), expected);
    for n in &report.random_init {
        assert!(dst.params.tensor(n).unwrap().bitwise_eq(before.params.tensor(n).unwrap()));
    }
    for n in &report.grafted {
        let src = n.replacen("decoder", "encoder", 1);
        assert!(dst.params.tensor(n).unwrap().bitwise_eq(plm.params.tensor(&src).unwrap()));
    }
    assert!(report.untouched.iter().all(|n| n.starts_with("encoder.")));
    for n in &report.untouched {
        assert!(dst.params.tensor(n).unwrap().bitwise_eq(before.params.tensor(n).unwrap()));
    }
    let strict = GraftPlan {
        missing: MissingPolicy::Error,
        ..plan.clone()
    };
    assert!(matches!(graft(&mut dst, &strict), Err(Error::MissingSource(_))));
}

#[test]
fn identity_graft() {
    let src = ckpt(&cfg(2, 2), 1, (5, 7));
    let mut dst = ckpt(&cfg(2, 2), 2, (5, 7));
    let plan = GraftPlan {
        mappings: vec![GraftMapping::new(&src, "", "")],
        missing: MissingPolicy::Error,
    };
    let report = graft(&mut dst, &plan).unwrap();
    assert!(dst.params.bitwise_eq(&src.params));
    assert!(report.untouched.is_empty() && report.random_init.is_empty());
}

#[test]
fn embedding_fingerprint_checked() {
    let src = ckpt(&cfg(2, 2), 1, (5, 9));
    let mut dst = ckpt(&cfg(2, 2), 2, (5, 7));
    let before = dst.clone();
    let plan = GraftPlan {
        mappings: vec![GraftMapping::new(&src, "decoder", "decoder")],
        missing: MissingPolicy::Error,
    };
    assert_eq!(
        graft(&mut dst, &plan),
        Err(Error::VocabMismatch {
            name: "decoder.embed.tokens".into()
        })
    );
    assert!(dst.params.bitwise_eq(&before.params));
    let body = GraftPlan {
        mappings: vec![GraftMapping::new(&src, "decoder", "decoder").excluding("decoder.embed.tokens")],
        missing: MissingPolicy::Error,
    };
    let report = graft(&mut dst, &body).unwrap();
    assert!(report.untouched.contains(&"decoder.embed.tokens".to_string()));
    // the encoder side checks the source fingerprint
    let enc = GraftPlan {
        mappings: vec![GraftMapping::new(&src, "encoder", "encoder")],
        missing: MissingPolicy::Error,
    };
    assert!(graft(&mut dst, &enc).is_ok());
}

#[test]
fn shape_and_overlap_errors() {
    let mut wide = cfg(2, 2);
    wide.d_model = 16;
    let src = ckpt(&wide, 1, (5, 7));
    let mut dst = ckpt(&cfg(2, 2), 2, (5, 7));
    let plan = GraftPlan {
        mappings: vec![GraftMapping::new(&src, "encoder.layers.0", "encoder.layers.0")],
        missing: MissingPolicy::Error,
    };
    assert!(matches!(graft(&mut dst, &plan), Err(Error::GraftShape { .. })));
    let same = ckpt(&cfg(2, 2), 3, (5, 7));
    let plan = GraftPlan {
        mappings: vec![
            GraftMapping::new(&same, "encoder", "encoder"),
            GraftMapping::new(&same, "encoder.layers.1", "encoder.layers.1"),
        ],
        missing: MissingPolicy::Error,
    };
    assert!(matches!(graft(&mut dst, &plan), Err(Error::OverlappingDestinations(..))));
    // a wide mapping that excludes the narrow one's prefix does not conflict
    let other = ckpt(&cfg(2, 2), 4, (5, 7));
    let plan = GraftPlan {
        mappings: vec![
            GraftMapping::new(&same, "encoder", "encoder").excluding("encoder.layers.1"),
            GraftMapping::new(&other, "encoder.layers.1", "encoder.layers.1"),
        ],
        missing: MissingPolicy::Error,
    };
    graft(&mut dst, &plan).unwrap();
    for (name, t) in dst.params.iter().filter(|(n, _)| n.starts_with("encoder.")) {
        let from = if name.starts_with("encoder.layers.1.") { &other } else { &same };
        assert!(t.bitwise_eq(from.params.tensor(name).unwrap()), "{name}");
    }
    // `layers.1` does not cover `layers.10`
    assert!(!under("encoder.layers.10.ffn", "encoder.layers.1"));
    assert!(under("encoder.layers.1.ffn", "encoder.layers.1"));
}

#[test]
fn frozen_flags_survive_graft() {
    let src = ckpt(&cfg(1, 1), 1, (5, 7));
    let mut dst = ckpt(&cfg(1, 1), 2, (5, 7));
    let frozen = resolve_frozen_set(FreezeStrategy::LayerWise(1), dst.params.config(), Stack::Encoder).unwrap();
    dst.params.set_frozen(&frozen).unwrap();
    let plan = GraftPlan {
        mappings: vec![GraftMapping::new(&src, "", "")],
        missing: MissingPolicy::Error,
    };
    graft(&mut dst, &plan).unwrap();
    assert_eq!(dst.params.frozen_names(), frozen);
}

proptest! {
    #[test]
    fn layerwise_partitions_and_grows(enc in 1usize..5, dec in 1usize..5, side_dec in any::<bool>()) {
        let c = cfg(enc, dec);
        let side = if side_dec { Stack::Decoder } else { Stack::Encoder };
        let all = all_names(&c);
        let mut prev: Option<BTreeSet<String>> = None;
        for l in 0..=c.layers(side) {
            let f = resolve_frozen_set(FreezeStrategy::LayerWise(l), &c, side).unwrap();
            prop_assert!(f.is_subset(&all));
            if let Some(p) = &prev {
                prop_assert!(p.is_subset(&f) && p.len() < f.len());
            }
            prev = Some(f);
        }
    }

    #[test]
    fn symmetric_layer_counts(enc in 1usize..5, l in 0usize..5) {
        // source-pivot model freezes its decoder, pivot-target its encoder
        let sp = cfg(enc, enc);
        let pt = cfg(enc, enc);
        prop_assume!(l <= enc);
        let count = |s: &BTreeSet<String>, stack: &str| {
            s.iter()
                .filter_map(|n| n.strip_prefix(&format!("{stack}.layers.")))
                .filter_map(|r| r.split('.').next())
                .collect::<BTreeSet<_>>()
                .len()
        };
        let a = resolve_frozen_set(FreezeStrategy::LayerWise(l), &sp, Stack::Decoder).unwrap();
        let b = resolve_frozen_set(FreezeStrategy::LayerWise(l), &pt, Stack::Encoder).unwrap();
        prop_assert_eq!(count(&a, "decoder"), count(&b, "encoder"));
        prop_assert_eq!(count(&a, "decoder"), l);
    }

    #[test]
    fn every_strategy_partitions(kind in 0usize..6, l in 0usize..3, side_dec in any::<bool>()) {
        let c = cfg(2, 2);
        let strategy = [
            FreezeStrategy::LayerWise(l),
            FreezeStrategy::LnaED,
            FreezeStrategy::LnaD,
            FreezeStrategy::LnaeD,
            FreezeStrategy::FreezeAll,
            FreezeStrategy::FreezeNone,
        ][kind];
        let side = if side_dec { Stack::Decoder } else { Stack::Encoder };
        let frozen = resolve_frozen_set(strategy, &c, side).unwrap();
        let mut tree = build_model(&c, 0).unwrap();
        tree.set_frozen(&frozen).unwrap();
        let f = tree.frozen_names();
        let t = tree.trainable_names();
        prop_assert!(f.is_disjoint(&t));
        prop_assert_eq!(f.union(&t).cloned().collect::<BTreeSet<_>>(), all_names(&c));
        prop_assert_eq!(f, frozen);
    }

    #[test]
    fn graft_is_idempotent(seed in 0u64..1000, prefix in 0usize..4) {
        let src = ckpt(&cfg(2, 2), seed, (5, 7));
        let mut once = ckpt(&cfg(2, 2), seed + 1, (5, 7));
        let p = ["encoder", "decoder", "decoder.layers.1", "encoder.layers.0.ffn"][prefix];
        let plan = GraftPlan {
            mappings: vec![GraftMapping::new(&src, p, p)],
            missing: MissingPolicy::RandomInit,
        };
        graft(&mut once, &plan).unwrap();
        let mut twice = once.clone();
        graft(&mut twice, &plan).unwrap();
        prop_assert!(once.params.bitwise_eq(&twice.params));
    }
}
