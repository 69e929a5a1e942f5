//! Executes recipes stage by stage with a content-keyed stage cache and a
//! data-usage audit.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::time::Instant;

use forge_core::corpus::{clean_parallel, generate_bt_synthetic, make_bt_mix, Lang};
use forge_core::decode::{translate, SearchSettings};
use forge_core::model::{build_model, ModelConfig, ParamTree};
use forge_core::optim::Schedule;
use forge_core::surgery::{graft, resolve_frozen_set, Checkpoint, GraftMapping, GraftPlan, MissingPolicy};
use forge_core::train::{
    adapt_embeddings, batch_count, denoising_lens, pretrain_denoising, train_translation, DevSet, HistoryRecord,
    Noise, TrainConfig,
};
use forge_core::vocab::fnv1a;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::ExperimentConfig;
use crate::data::{Split, Workspace};
use crate::error::{ForgeError, Result};
use crate::recipes::{Budget, Freeze, Graft, Op, Recipe, Side, Stage, Tier, TrainData, Usage};

pub type Pairs = Vec<(Vec<u32>, Vec<u32>)>;

#[derive(Debug, Clone)]
pub enum Artifact {
    Model {
        ck: Checkpoint,
        src: Side,
        tgt: Side,
        history: Vec<HistoryRecord>,
    },
    Synthetic(Pairs),
}

impl Artifact {
    pub fn checkpoint(&self) -> Option<&Checkpoint> {
        match self {
            Artifact::Model { ck, .. } => Some(ck),
            Artifact::Synthetic(_) => None,
        }
    }

    /// Best dev BLEU seen during training, if any was scored.
    pub fn best_dev(&self) -> Option<f64> {
        match self {
            Artifact::Model { history, .. } => history.iter().filter_map(|h| h.dev_bleu).reduce(f64::max),
            Artifact::Synthetic(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub name: String,
    pub key: String,
    pub cached: bool,
    pub reads: BTreeSet<Usage>,
    pub frozen: usize,
    pub best_dev: Option<f64>,
}

pub struct RecipeRun {
    pub recipe: Recipe,
    pub stages: Vec<StageRecord>,
    pub artifacts: BTreeMap<String, Rc<Artifact>>,
    pub observed: BTreeSet<Usage>,
}

impl RecipeRun {
    pub fn model(&self, stage: &str) -> Result<(&Checkpoint, Side, Side)> {
        match self.artifacts.get(stage).map(|a| &**a) {
            Some(Artifact::Model { ck, src, tgt, .. }) => Ok((ck, *src, *tgt)),
            _ => Err(ForgeError::Stage {
                stage: stage.into(),
                source: Box::new(ForgeError::Results("no model produced".into())),
            }),
        }
    }

    pub fn stage_key(&self, stage: &str) -> Option<&str> {
        self.stages.iter().find(|s| s.name == stage).map(|s| s.key.as_str())
    }

    /// Text form of the data-usage manifest and the stage trace.
    pub fn manifest(&self) -> String {
        let list = |s: &BTreeSet<Usage>| s.iter().map(Usage::to_string).collect::<Vec<_>>().join(" ");
        let mut m = format!(
            "recipe\t{}\ndeclared\t{}\nobserved\t{}\n",
            self.recipe.name,
            list(&self.recipe.usage),
            list(&self.observed)
        );
        for s in &self.stages {
            let _ = writeln!(
                m,
                "stage\t{}\t{}\treads={}\tfrozen={}\t{}",
                s.name,
                s.key,
                list(&s.reads),
                s.frozen,
                if s.cached { "cached" } else { "trained" }
            );
        }
        m
    }
}

/// Records every corpus a recipe reads and rejects undeclared ones at the
/// moment of access.
struct Audit<'r> {
    declared: &'r BTreeSet<Usage>,
    observed: RefCell<BTreeSet<Usage>>,
    stage_reads: RefCell<BTreeSet<Usage>>,
}

impl Audit<'_> {
    fn read(&self, stage: &str, corpus: Usage) -> Result<()> {
        if !self.declared.contains(&corpus) {
            return Err(ForgeError::Audit {
                stage: stage.into(),
                detail: format!("read undeclared corpus {corpus}"),
            });
        }
        self.observed.borrow_mut().insert(corpus);
        self.stage_reads.borrow_mut().insert(corpus);
        Ok(())
    }
}

fn lang_tag(l: Lang) -> &'static str {
    l.tag()
}

fn sides(op: &Op) -> Option<(Side, Side)> {
    match op {
        Op::Pretrain { lang } | Op::Adapt { lang, .. } => Some((Side::own(*lang), Side::own(*lang))),
        Op::Translate { src, tgt, .. } | Op::Assemble { src, tgt, .. } => Some((*src, *tgt)),
        Op::BackTranslate { .. } => None,
    }
}

pub struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    ws: &'a Workspace,
    stage_dir: Option<PathBuf>,
    memo: HashMap<String, (Rc<Artifact>, BTreeSet<Usage>)>,
    pub quiet: bool,
}

impl<'a> Runner<'a> {
    /// Stages are persisted under `stage_dir` and reused when their key
    /// matches; without it they only live in memory.
    pub fn new(cfg: &'a ExperimentConfig, ws: &'a Workspace, stage_dir: Option<PathBuf>) -> Self {
        Runner {
            cfg,
            ws,
            stage_dir,
            memo: HashMap::new(),
            quiet: false,
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        self.cfg
    }

    fn log(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn model_config(&self, src: Side, tgt: Side) -> ModelConfig {
        ModelConfig {
            src_vocab: self.ws.bpe(src.vocab).vocab().len(),
            tgt_vocab: self.ws.bpe(tgt.vocab).vocab().len(),
            ..self.cfg.model.clone()
        }
    }

    fn stage_seed(&self, name: &str) -> u64 {
        self.cfg.seed ^ fnv1a(name.as_bytes())
    }

    /// Everything a stage's output depends on, hashed.
    fn stage_key(&self, stage: &Stage, input_keys: &[String]) -> String {
        let t = &self.cfg.train;
        let mut d = format!(
            "{}\n{:?}\nseed={}\ncorpus={:?}\nmodel={:?}\n",
            stage.name,
            stage.op,
            self.stage_seed(&stage.name),
            self.cfg.corpus,
            self.cfg.model,
        );
        let _ = writeln!(
            d,
            "batch={} ls={} patience={} adam={:?}",
            t.max_tokens, t.label_smoothing, t.patience, t.adam
        );
        match &stage.op {
            Op::Pretrain { .. } => {
                let _ = writeln!(d, "plm={} {} {} {}", t.pretrain_epochs, t.scratch_lr, t.plm_warmup, t.mask_ratio);
            }
            Op::Adapt { .. } => {
                let _ = writeln!(d, "adapt={} {} {} {}", t.adapt_epochs, t.scratch_lr, t.plm_warmup, t.mask_ratio);
            }
            Op::Translate { tier, budget, .. } => {
                let tc = self.translation_config(&stage.name, *tier, *budget);
                let _ = writeln!(d, "schedule={:?} epochs={}", tc.schedule, tc.max_epochs);
            }
            _ => {}
        }
        match &stage.op {
            Op::Translate { freeze: Freeze::Pivot(_), .. } => {
                let _ = writeln!(d, "freeze={:?}", self.cfg.freeze);
            }
            Op::BackTranslate { .. } => {
                let _ = writeln!(d, "search={:?} filtered", self.cfg.decode.search);
            }
            _ => {}
        }
        if let Op::Translate { data: TrainData::BtMix { .. }, .. } = &stage.op {
            let _ = writeln!(d, "mix={:?}", self.cfg.bt_ratio);
        }
        for k in input_keys {
            let _ = writeln!(d, "input={k}");
        }
        format!("{:016x}", fnv1a(d.as_bytes()))
    }

    /// Runs every stage of `recipe` in order, then checks that the corpora
    /// read equal the declared usage.
    pub fn run_recipe(&mut self, recipe: &Recipe) -> Result<RecipeRun> {
        let audit = Audit {
            declared: &recipe.usage,
            observed: RefCell::new(BTreeSet::new()),
            stage_reads: RefCell::new(BTreeSet::new()),
        };
        let mut artifacts: BTreeMap<String, Rc<Artifact>> = BTreeMap::new();
        let mut keys: BTreeMap<String, String> = BTreeMap::new();
        let mut records = Vec::new();
        for stage in &recipe.stages {
            let mut input_keys = Vec::new();
            for input in stage.op.inputs() {
                let k = keys.get(input).ok_or_else(|| ForgeError::Audit {
                    stage: stage.name.clone(),
                    detail: format!("input `{input}` is not the output of an earlier stage"),
                })?;
                input_keys.push(format!("{input}:{k}"));
            }
            let key = self.stage_key(stage, &input_keys);
            audit.stage_reads.borrow_mut().clear();
            let (artifact, cached) = self
                .obtain(stage, &key, &artifacts, &audit)
                .map_err(|e| e.in_stage(&stage.name))?;
            let reads = audit.stage_reads.borrow().clone();
            let frozen = artifact.checkpoint().map_or(0, |c| c.params.frozen_names().len());
            records.push(StageRecord {
                name: stage.name.clone(),
                key: key.clone(),
                cached,
                reads,
                frozen,
                best_dev: artifact.best_dev(),
            });
            keys.insert(stage.name.clone(), key);
            artifacts.insert(stage.name.clone(), artifact);
        }
        let observed = audit.observed.into_inner();
        if observed != recipe.usage {
            let missing: Vec<String> = recipe.usage.difference(&observed).map(Usage::to_string).collect();
            return Err(ForgeError::Audit {
                stage: recipe.name.clone(),
                detail: format!("declared but never read: {}", missing.join(" ")),
            });
        }
        Ok(RecipeRun {
            recipe: recipe.clone(),
            stages: records,
            artifacts,
            observed,
        })
    }

    fn stage_path(&self, stage: &str, key: &str) -> Option<PathBuf> {
        self.stage_dir.as_ref().map(|d| d.join(format!("{stage}-{key}")))
    }

    fn obtain(
        &mut self,
        stage: &Stage,
        key: &str,
        artifacts: &BTreeMap<String, Rc<Artifact>>,
        audit: &Audit<'_>,
    ) -> Result<(Rc<Artifact>, bool)> {
        let replay = |reads: &BTreeSet<Usage>| reads.iter().try_for_each(|&u| audit.read(&stage.name, u));
        if let Some((a, reads)) = self.memo.get(key) {
            replay(reads)?;
            return Ok((a.clone(), true));
        }
        if let Some(dir) = self.stage_path(&stage.name, key) {
            if let Some((a, reads)) = load_stage(&dir, &stage.op)? {
                replay(&reads)?;
                let a = Rc::new(a);
                self.memo.insert(key.into(), (a.clone(), reads));
                self.log(&format!("[{}] reused {}", stage.name, dir.display()));
                return Ok((a, true));
            }
        }
        let start = Instant::now();
        let a = self.execute(stage, artifacts, audit)?;
        let reads = audit.stage_reads.borrow().clone();
        if let Some(dir) = self.stage_path(&stage.name, key) {
            store_stage(&dir, &a, &reads)?;
        }
        let dev = a.best_dev().map(|b| format!(", best dev BLEU {b:.2}")).unwrap_or_default();
        self.log(&format!("[{}] done in {:.1}s{dev}", stage.name, start.elapsed().as_secs_f64()));
        let a = Rc::new(a);
        self.memo.insert(key.into(), (a.clone(), reads));
        Ok((a, false))
    }

    fn noise(&self) -> Noise {
        Noise {
            mask_ratio: self.cfg.train.mask_ratio,
        }
    }

    fn plm_train_config(&self, name: &str, epochs: usize, mono: &[Vec<u32>]) -> TrainConfig {
        let t = &self.cfg.train;
        let steps = (epochs * batch_count(&denoising_lens(mono), t.max_tokens)) as u64;
        TrainConfig {
            schedule: Schedule::Polynomial {
                peak: t.scratch_lr,
                warmup: t.plm_warmup.min(steps / 2).max(1),
                total: steps.max(2),
                end: 0.0,
                power: 1.0,
            },
            adam: t.adam,
            max_tokens: t.max_tokens,
            label_smoothing: t.label_smoothing,
            max_epochs: epochs,
            patience: t.patience,
            max_steps: None,
            seed: self.stage_seed(name),
        }
    }

    fn translation_config(&self, name: &str, tier: Tier, budget: Budget) -> TrainConfig {
        let t = &self.cfg.train;
        let peak = match tier {
            Tier::Scratch => t.scratch_lr,
            Tier::Transfer => t.transfer_lr,
            Tier::Final => t.final_lr,
        };
        TrainConfig {
            schedule: Schedule::InverseSqrt { peak, warmup: t.warmup },
            adam: t.adam,
            max_tokens: t.max_tokens,
            label_smoothing: t.label_smoothing,
            max_epochs: match budget {
                Budget::Aux => t.aux_epochs,
                Budget::Finetune => t.finetune_epochs,
                Budget::BackTranslated => t.bt_epochs,
            },
            patience: t.patience,
            max_steps: None,
            seed: self.stage_seed(name),
        }
    }

    fn checkpoint(&self, params: ParamTree, src: Side, tgt: Side) -> Checkpoint {
        Checkpoint::new(
            params,
            lang_tag(src.lang),
            lang_tag(tgt.lang),
            self.ws.fingerprint(src.vocab),
            self.ws.fingerprint(tgt.vocab),
        )
    }

    fn fresh(&self, name: &str, src: Side, tgt: Side, grafts: &[Graft], artifacts: &BTreeMap<String, Rc<Artifact>>) -> Result<Checkpoint> {
        let tree = build_model(&self.model_config(src, tgt), self.stage_seed(name))?;
        let mut ck = self.checkpoint(tree, src, tgt);
        let sources: Vec<&Checkpoint> = grafts
            .iter()
            .map(|g| {
                artifacts
                    .get(&g.from)
                    .and_then(|a| a.checkpoint())
                    .ok_or_else(|| ForgeError::Results(format!("stage `{}` produced no model", g.from)))
            })
            .collect::<Result<_>>()?;
        if grafts.is_empty() {
            return Ok(ck);
        }
        let mappings = grafts
            .iter()
            .zip(&sources)
            .map(|(g, src)| {
                g.exclude
                    .iter()
                    .fold(GraftMapping::new(src, g.src_prefix, g.dst_prefix), |m, e| m.excluding(e))
            })
            .collect();
        graft(
            &mut ck,
            &GraftPlan {
                mappings,
                missing: MissingPolicy::Error,
            },
        )?;
        Ok(ck)
    }

    /// Training pairs of a parallel corpus split, oriented as requested.
    fn parallel(&self, corpus: Usage, split: Split, flip: bool, src: Side, tgt: Side) -> Pairs {
        let (s, t) = if flip { (1, 0) } else { (0, 1) };
        let a = self.ws.side(corpus, split, s, src.vocab);
        let b = self.ws.side(corpus, split, t, tgt.vocab);
        a.iter().cloned().zip(b.iter().cloned()).collect()
    }

    fn execute(&self, stage: &Stage, artifacts: &BTreeMap<String, Rc<Artifact>>, audit: &Audit<'_>) -> Result<Artifact> {
        let name = stage.name.as_str();
        match &stage.op {
            Op::Pretrain { lang } => {
                audit.read(name, Usage::mono(*lang))?;
                let side = Side::own(*lang);
                let mono = self.ws.mono(*lang, side.vocab);
                let tree = build_model(&self.model_config(side, side), self.stage_seed(name))?;
                let tc = self.plm_train_config(name, self.cfg.train.pretrain_epochs, &mono);
                let out = pretrain_denoising(tree, &mono, self.noise(), &tc)?;
                Ok(Artifact::Model {
                    ck: self.checkpoint(out.model, side, side),
                    src: side,
                    tgt: side,
                    history: out.history,
                })
            }
            Op::Adapt { plm, lang } => {
                audit.read(name, Usage::mono(*lang))?;
                let side = Side::own(*lang);
                let plm = artifacts
                    .get(plm)
                    .and_then(|a| a.checkpoint())
                    .ok_or_else(|| ForgeError::Results(format!("stage `{plm}` produced no model")))?;
                let mono = self.ws.mono(*lang, side.vocab);
                let tc = self.plm_train_config(name, self.cfg.train.adapt_epochs, &mono);
                let vocab = self.ws.bpe(side.vocab).vocab().len();
                let out = adapt_embeddings(&plm.params, vocab, &mono, self.noise(), &tc)?;
                Ok(Artifact::Model {
                    ck: self.checkpoint(out.model, side, side),
                    src: side,
                    tgt: side,
                    history: out.history,
                })
            }
            Op::Assemble { src, tgt, grafts } => {
                let ck = self.fresh(name, *src, *tgt, grafts, artifacts)?;
                Ok(Artifact::Model {
                    ck,
                    src: *src,
                    tgt: *tgt,
                    history: Vec::new(),
                })
            }
            Op::Translate {
                src,
                tgt,
                init,
                freeze,
                data,
                tier,
                budget,
            } => {
                let mut ck = self.fresh(name, *src, *tgt, init, artifacts)?;
                let frozen = match freeze {
                    Freeze::None => BTreeSet::new(),
                    Freeze::Pivot(stack) => resolve_frozen_set(self.cfg.freeze, ck.params.config(), *stack)?,
                    Freeze::WholeStack(stack) => {
                        ck.params.names().filter(|n| n.starts_with(stack.prefix())).map(String::from).collect()
                    }
                };
                ck.params.set_frozen(&frozen)?;
                let seed = self.stage_seed(name);
                let (train, dev_corpus, flip) = match data {
                    TrainData::Parallel { corpus, flip } => {
                        audit.read(name, *corpus)?;
                        (self.parallel(*corpus, Split::Train, *flip, *src, *tgt), *corpus, *flip)
                    }
                    TrainData::BtMix { synthetic } => {
                        audit.read(name, Usage::XY)?;
                        let syn = match artifacts.get(synthetic).map(|a| &**a) {
                            Some(Artifact::Synthetic(p)) => p,
                            _ => return Err(ForgeError::Results(format!("stage `{synthetic}` produced no synthetic data"))),
                        };
                        let auth = self.parallel(Usage::XY, Split::Train, false, *src, *tgt);
                        let mix = make_bt_mix(&auth, syn, self.cfg.bt_ratio, seed)?;
                        if let Some(w) = &mix.warning {
                            self.log(&format!("[{name}] {w}"));
                        }
                        (mix.pairs, Usage::XY, false)
                    }
                };
                let dev_pairs = self.ws.pairs(dev_corpus, Split::Dev);
                let sources: Vec<Vec<u32>> = {
                    let side = if flip { 1 } else { 0 };
                    self.ws.side(dev_corpus, Split::Dev, side, src.vocab).to_vec()
                };
                let references: Vec<String> = dev_pairs
                    .iter()
                    .map(|p| if flip { p.0.clone() } else { p.1.clone() })
                    .collect();
                let bpe = self.ws.bpe(tgt.vocab);
                let render = |ids: &[u32]| bpe.decode(ids);
                let dev = DevSet {
                    sources: &sources,
                    references: &references,
                    render: &render,
                };
                let out = train_translation(ck.params.clone(), &train, &dev, &self.translation_config(name, *tier, *budget))?;
                ck.params = out.model;
                Ok(Artifact::Model {
                    ck,
                    src: *src,
                    tgt: *tgt,
                    history: out.history,
                })
            }
            Op::BackTranslate { model } => {
                audit.read(name, Usage::ZY)?;
                let (ck, src, tgt) = match artifacts.get(model).map(|a| &**a) {
                    Some(Artifact::Model { ck, src, tgt, .. }) => (ck, *src, *tgt),
                    _ => return Err(ForgeError::Results(format!("stage `{model}` produced no model"))),
                };
                if src.lang != Lang::Z || tgt.lang != Lang::X {
                    return Err(ForgeError::Results(format!("back-translation needs a Z→X model, `{model}` is not one")));
                }
                let zy = self.parallel(Usage::ZY, Split::Train, false, src, Side::own(Lang::Y));
                let search = self.cfg.decode.search;
                let syn = generate_bt_synthetic(&zy, |z| Ok(translate(&ck.params, z, &search)?.content().to_vec()))?;
                // synthetic pairs pass the same length and ratio filter as authentic ones
                let limit = self.cfg.corpus.max_subwords.min(self.cfg.model.max_positions - 1);
                let (kept, report) = clean_parallel(&syn, limit, self.cfg.corpus.max_ratio);
                self.log(&format!("[{name}] kept {} of {} synthetic pairs", report.kept, report.input));
                Ok(Artifact::Synthetic(kept))
            }
        }
    }
}

/// Beam-decodes `sources` with `ck` and renders each output.
pub fn decode_all(ck: &Checkpoint, sources: &[Vec<u32>], search: &SearchSettings, render: impl Fn(&[u32]) -> String) -> Result<Vec<String>> {
    sources
        .iter()
        .map(|s| Ok(render(translate(&ck.params, s, search)?.content())))
        .collect()
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(ForgeError::io(path))
}

fn history_text(h: &[HistoryRecord]) -> String {
    let mut s = String::from("epoch\ttrain_loss\tdev_bleu\tlr\n");
    for r in h {
        let bleu = r.dev_bleu.map(|b| b.to_string()).unwrap_or_else(|| "-".into());
        let _ = writeln!(s, "{}\t{}\t{bleu}\t{}", r.epoch, r.train_loss, r.lr);
    }
    s
}

fn parse_history(text: &str) -> Option<Vec<HistoryRecord>> {
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 4 {
                return None;
            }
            Some(HistoryRecord {
                epoch: f[0].parse().ok()?,
                train_loss: f[1].parse().ok()?,
                dev_bleu: if f[2] == "-" { None } else { Some(f[2].parse().ok()?) },
                lr: f[3].parse().ok()?,
            })
        })
        .collect()
}

fn ids_text(ids: &[u32]) -> String {
    ids.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

fn parse_ids(s: &str) -> Option<Vec<u32>> {
    s.split(' ').filter(|t| !t.is_empty()).map(|t| t.parse().ok()).collect()
}

const READS_FILE: &str = "reads.txt";

fn store_stage(dir: &Path, a: &Artifact, reads: &BTreeSet<Usage>) -> Result<()> {
    fs::create_dir_all(dir).map_err(ForgeError::io(dir))?;
    match a {
        Artifact::Model { ck, history, .. } => {
            save_checkpoint(ck, &dir.join("model.ckpt"))?;
            write_file(&dir.join("history.tsv"), &history_text(history))?;
        }
        Artifact::Synthetic(pairs) => {
            let mut s = String::new();
            for (a, b) in pairs {
                let _ = writeln!(s, "{}\t{}", ids_text(a), ids_text(b));
            }
            write_file(&dir.join("synthetic.tsv"), &s)?;
        }
    }
    // written last: its presence marks a complete stage
    let r: Vec<String> = reads.iter().map(Usage::to_string).collect();
    write_file(&dir.join(READS_FILE), &(r.join(" ") + "\n"))
}

fn load_stage(dir: &Path, op: &Op) -> Result<Option<(Artifact, BTreeSet<Usage>)>> {
    let Ok(reads) = fs::read_to_string(dir.join(READS_FILE)) else {
        return Ok(None);
    };
    let bad = |what: &str| ForgeError::Corpus(format!("{}: unreadable {what}", dir.display()));
    let reads = reads
        .split_whitespace()
        .map(|u| Usage::parse(u).ok_or_else(|| bad(READS_FILE)))
        .collect::<Result<BTreeSet<_>>>()?;
    let artifact = match sides(op) {
        Some((src, tgt)) => {
            let ck = load_checkpoint(&dir.join("model.ckpt"))?;
            let p = dir.join("history.tsv");
            let text = fs::read_to_string(&p).map_err(ForgeError::io(&p))?;
            let history = parse_history(&text).ok_or_else(|| bad("history.tsv"))?;
            Artifact::Model { ck, src, tgt, history }
        }
        None => {
            let p = dir.join("synthetic.tsv");
            let text = fs::read_to_string(&p).map_err(ForgeError::io(&p))?;
            let pairs = text
                .lines()
                .map(|l| {
                    let (a, b) = l.split_once('\t')?;
                    Some((parse_ids(a)?, parse_ids(b)?))
                })
                .collect::<Option<Pairs>>()
                .ok_or_else(|| bad("synthetic.tsv"))?;
            Artifact::Synthetic(pairs)
        }
    };
    Ok(Some((artifact, reads)))
}
