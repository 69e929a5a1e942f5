//! Sectioned `key = value` experiment configuration.
//!
//! ```text
//! [experiment]  seed, output_dir, recipes, baseline
//! [corpus]      xz, zy, xy, mono, dev, test, concepts, zipf_exponent,
//!               min_len, max_len, merges, max_subwords, max_ratio
//! [model]       enc_layers, dec_layers, d_model, d_ffn, heads,
//!               max_positions, dropout, tie_decoder_embeddings
//! [train]       max_tokens, label_smoothing, patience, warmup,
//!               scratch_lr, transfer_lr, final_lr, plm_warmup,
//!               pretrain_epochs, adapt_epochs, aux_epochs, finetune_epochs,
//!               bt_epochs, mask_ratio, adam_beta1, adam_beta2, adam_eps
//! [freeze]      strategy (layer:N | lna-ed | lna-d | lna-e-d | all | none)
//! [decode]      beam, length_penalty, max_len_a, max_len_b, bootstrap_samples
//! [bt]          authentic, synthetic (mix ratio)
//! ```
//!
//! Every key is optional; unknown sections or keys are errors.

use std::path::{Path, PathBuf};

use forge_core::corpus::GeneratorConfig;
use forge_core::decode::SearchSettings;
use forge_core::model::ModelConfig;
use forge_core::optim::AdamConfig;
use forge_core::surgery::FreezeStrategy;
use ini::Ini;

use crate::error::{ForgeError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub max_tokens: usize,
    pub label_smoothing: f32,
    pub patience: usize,
    pub warmup: u64,
    /// Peak LR for models trained from scratch, auxiliary models and PLMs.
    pub scratch_lr: f64,
    /// Peak LR for the source-target finetune of step-wise and dual transfer.
    pub transfer_lr: f64,
    /// Peak LR for the final X→Y step of the triangular recipes.
    pub final_lr: f64,
    pub plm_warmup: u64,
    pub pretrain_epochs: usize,
    pub adapt_epochs: usize,
    pub aux_epochs: usize,
    pub finetune_epochs: usize,
    pub bt_epochs: usize,
    pub mask_ratio: f64,
    pub adam: AdamConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            max_tokens: 600,
            label_smoothing: 0.1,
            patience: 10,
            warmup: 200,
            scratch_lr: 5e-3,
            transfer_lr: 1e-3,
            final_lr: 7e-4,
            plm_warmup: 500,
            pretrain_epochs: 3,
            adapt_epochs: 2,
            aux_epochs: 4,
            finetune_epochs: 100,
            bt_epochs: 12,
            mask_ratio: 0.15,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeSettings {
    pub search: SearchSettings,
    pub bootstrap_samples: usize,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        DecodeSettings {
            search: SearchSettings::default(),
            bootstrap_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub recipes: Vec<String>,
    pub baseline: String,
    pub corpus: GeneratorConfig,
    /// Vocabulary sizes are filled in per model from the BPE vocabularies.
    pub model: ModelConfig,
    pub train: TrainSettings,
    pub freeze: FreezeStrategy,
    pub decode: DecodeSettings,
    pub bt_ratio: (usize, usize),
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        ExperimentConfig {
            seed: 1,
            output_dir: PathBuf::from("runs/default"),
            recipes: Vec::new(),
            baseline: "no-transfer".into(),
            corpus: GeneratorConfig::default(),
            freeze: FreezeStrategy::LayerWise(model.enc_layers / 2),
            model,
            train: TrainSettings::default(),
            decode: DecodeSettings::default(),
            bt_ratio: (1, 2),
        }
    }
}

pub fn parse_freeze(v: &str) -> Option<FreezeStrategy> {
    Some(match v {
        "lna-ed" => FreezeStrategy::LnaED,
        "lna-d" => FreezeStrategy::LnaD,
        "lna-e-d" => FreezeStrategy::LnaeD,
        "all" => FreezeStrategy::FreezeAll,
        "none" => FreezeStrategy::FreezeNone,
        _ => FreezeStrategy::LayerWise(v.strip_prefix("layer:")?.parse().ok()?),
    })
}

pub fn freeze_name(s: FreezeStrategy) -> String {
    match s {
        FreezeStrategy::LayerWise(l) => format!("layer:{l}"),
        FreezeStrategy::LnaED => "lna-ed".into(),
        FreezeStrategy::LnaD => "lna-d".into(),
        FreezeStrategy::LnaeD => "lna-e-d".into(),
        FreezeStrategy::FreezeAll => "all".into(),
        FreezeStrategy::FreezeNone => "none".into(),
    }
}

fn bad(section: &str, key: &str, value: &str, want: &str) -> ForgeError {
    ForgeError::Config(format!("[{section}] {key} = `{value}`: expected {want}"))
}

fn num<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(section, key, value, "a number"))
}

fn positive<T: std::str::FromStr + PartialOrd + Default>(section: &str, key: &str, value: &str) -> Result<T> {
    let v: T = num(section, key, value)?;
    if v <= T::default() {
        return Err(bad(section, key, value, "a positive number"));
    }
    Ok(v)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ForgeError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| ForgeError::Config(e.to_string()))?;
        let mut cfg = ExperimentConfig::default();
        let mut freeze_set = false;
        let mut seen = std::collections::BTreeSet::new();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(ForgeError::Config(format!("key `{k}` appears before any section")));
                }
                continue;
            };
            for (key, value) in props.iter() {
                if !seen.insert((section.to_string(), key.to_string())) {
                    return Err(ForgeError::Config(format!("[{section}] {key} is set twice")));
                }
                if key == "strategy" && section == "freeze" {
                    freeze_set = true;
                }
                cfg.set(section, key, value.trim())?;
            }
        }
        if !freeze_set {
            cfg.freeze = FreezeStrategy::LayerWise(cfg.model.enc_layers / 2);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        let s = section;
        match (section, key) {
            ("experiment", "seed") => {
                self.seed = num(s, key, v)?;
                self.corpus.seed = self.seed;
            }
            ("experiment", "output_dir") => self.output_dir = PathBuf::from(v),
            ("experiment", "recipes") => {
                self.recipes = v.split(',').map(|r| r.trim().to_string()).filter(|r| !r.is_empty()).collect()
            }
            ("experiment", "baseline") => self.baseline = v.to_string(),

            ("corpus", "xz") => self.corpus.sizes.xz = positive(s, key, v)?,
            ("corpus", "zy") => self.corpus.sizes.zy = positive(s, key, v)?,
            ("corpus", "xy") => self.corpus.sizes.xy = positive(s, key, v)?,
            ("corpus", "mono") => self.corpus.sizes.mono = positive(s, key, v)?,
            ("corpus", "dev") => self.corpus.sizes.dev = positive(s, key, v)?,
            ("corpus", "test") => self.corpus.sizes.test = positive(s, key, v)?,
            ("corpus", "concepts") => self.corpus.concepts = positive(s, key, v)?,
            ("corpus", "zipf_exponent") => self.corpus.zipf_exponent = num(s, key, v)?,
            ("corpus", "min_len") => self.corpus.min_len = positive(s, key, v)?,
            ("corpus", "max_len") => self.corpus.max_len = positive(s, key, v)?,
            ("corpus", "merges") => self.corpus.merges = num(s, key, v)?,
            ("corpus", "max_subwords") => self.corpus.max_subwords = positive(s, key, v)?,
            ("corpus", "max_ratio") => self.corpus.max_ratio = num(s, key, v)?,

            ("model", "enc_layers") => self.model.enc_layers = positive(s, key, v)?,
            ("model", "dec_layers") => self.model.dec_layers = positive(s, key, v)?,
            ("model", "d_model") => self.model.d_model = positive(s, key, v)?,
            ("model", "d_ffn") => self.model.d_ffn = positive(s, key, v)?,
            ("model", "heads") => self.model.heads = positive(s, key, v)?,
            ("model", "max_positions") => self.model.max_positions = positive(s, key, v)?,
            ("model", "dropout") => self.model.dropout = num(s, key, v)?,
            ("model", "tie_decoder_embeddings") => {
                self.model.tie_decoder_embeddings = v.parse().map_err(|_| bad(s, key, v, "true or false"))?
            }

            ("train", "max_tokens") => self.train.max_tokens = positive(s, key, v)?,
            ("train", "label_smoothing") => self.train.label_smoothing = num(s, key, v)?,
            ("train", "patience") => self.train.patience = positive(s, key, v)?,
            ("train", "warmup") => self.train.warmup = positive(s, key, v)?,
            ("train", "scratch_lr") => self.train.scratch_lr = positive(s, key, v)?,
            ("train", "transfer_lr") => self.train.transfer_lr = positive(s, key, v)?,
            ("train", "final_lr") => self.train.final_lr = positive(s, key, v)?,
            ("train", "plm_warmup") => self.train.plm_warmup = positive(s, key, v)?,
            ("train", "pretrain_epochs") => self.train.pretrain_epochs = positive(s, key, v)?,
            ("train", "adapt_epochs") => self.train.adapt_epochs = positive(s, key, v)?,
            ("train", "aux_epochs") => self.train.aux_epochs = positive(s, key, v)?,
            ("train", "finetune_epochs") => self.train.finetune_epochs = positive(s, key, v)?,
            ("train", "bt_epochs") => self.train.bt_epochs = positive(s, key, v)?,
            ("train", "mask_ratio") => self.train.mask_ratio = num(s, key, v)?,
            ("train", "adam_beta1") => self.train.adam.beta1 = num(s, key, v)?,
            ("train", "adam_beta2") => self.train.adam.beta2 = num(s, key, v)?,
            ("train", "adam_eps") => self.train.adam.eps = positive(s, key, v)?,

            ("freeze", "strategy") => {
                self.freeze = parse_freeze(v).ok_or_else(|| bad(s, key, v, "layer:N, lna-ed, lna-d, lna-e-d, all or none"))?
            }

            ("decode", "beam") => self.decode.search.beam = positive(s, key, v)?,
            ("decode", "length_penalty") => self.decode.search.length_penalty = num(s, key, v)?,
            ("decode", "max_len_a") => self.decode.search.max_len_a = num(s, key, v)?,
            ("decode", "max_len_b") => self.decode.search.max_len_b = num(s, key, v)?,
            ("decode", "bootstrap_samples") => self.decode.bootstrap_samples = positive(s, key, v)?,

            ("bt", "authentic") => self.bt_ratio.0 = positive(s, key, v)?,
            ("bt", "synthetic") => self.bt_ratio.1 = positive(s, key, v)?,

            (
                "experiment" | "corpus" | "model" | "train" | "freeze" | "decode" | "bt",
                _,
            ) => return Err(ForgeError::Config(format!("unknown key `{key}` in [{section}]"))),
            _ => return Err(ForgeError::Config(format!("unknown section [{section}]"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(ForgeError::Config(m));
        let c = &self.corpus;
        if c.min_len > c.max_len {
            return err(format!("corpus min_len {} exceeds max_len {}", c.min_len, c.max_len));
        }
        if !(c.max_ratio >= 1.0) {
            return err(format!("corpus max_ratio {} must be at least 1", c.max_ratio));
        }
        let mut m = self.model.clone();
        m.src_vocab = 16;
        m.tgt_vocab = 16;
        m.validate().map_err(|e| ForgeError::Config(e.to_string()))?;
        if !(0.0..1.0).contains(&self.model.dropout) {
            return err(format!("dropout {} outside [0, 1)", self.model.dropout));
        }
        if let FreezeStrategy::LayerWise(l) = self.freeze {
            if l > self.model.enc_layers.min(self.model.dec_layers) {
                return err(format!("freeze layer:{l} exceeds the model depth"));
            }
        }
        if !(0.0..1.0).contains(&self.train.mask_ratio) {
            return err(format!("mask_ratio {} outside [0, 1)", self.train.mask_ratio));
        }
        if self.model.max_positions < 2 * c.max_len + 4 {
            return err(format!(
                "max_positions {} is too small for sentences of up to {} concepts",
                self.model.max_positions, c.max_len
            ));
        }
        for r in &self.recipes {
            if crate::recipes::recipe(r).is_none() {
                return err(format!("unknown recipe `{r}`"));
            }
        }
        Ok(())
    }
}
