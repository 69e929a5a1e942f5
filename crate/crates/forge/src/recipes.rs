//! Declarative recipes: ordered stages, their bindings and the data each
//! recipe is allowed to read.

use std::collections::BTreeSet;
use std::fmt;

use forge_core::corpus::Lang;
use forge_core::model::Stack;
use serde::{Deserialize, Serialize};

/// Corpus types of the data-usage manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Usage {
    X,
    Y,
    Z,
    XZ,
    ZY,
    XY,
}

impl Usage {
    pub const ALL: [Usage; 6] = [Usage::X, Usage::Y, Usage::Z, Usage::XZ, Usage::ZY, Usage::XY];

    pub fn mono(lang: Lang) -> Usage {
        match lang {
            Lang::X => Usage::X,
            Lang::Y => Usage::Y,
            Lang::Z => Usage::Z,
        }
    }

    /// Languages of a parallel corpus in stored order.
    pub fn pair(self) -> Option<(Lang, Lang)> {
        match self {
            Usage::XZ => Some((Lang::X, Lang::Z)),
            Usage::ZY => Some((Lang::Z, Lang::Y)),
            Usage::XY => Some((Lang::X, Lang::Y)),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Usage> {
        Usage::ALL.into_iter().find(|u| u.to_string() == s)
    }
}

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Usage::X => "X",
            Usage::Y => "Y",
            Usage::Z => "Z",
            Usage::XZ => "X-Z",
            Usage::ZY => "Z-Y",
            Usage::XY => "X-Y",
        })
    }
}

/// Subword vocabulary of one model side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vocabulary {
    Own(Lang),
    /// Shared source-pivot vocabulary.
    JointXZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Side {
    pub lang: Lang,
    pub vocab: Vocabulary,
}

impl Side {
    pub const fn own(lang: Lang) -> Side {
        Side {
            lang,
            vocab: Vocabulary::Own(lang),
        }
    }

    pub const fn joint(lang: Lang) -> Side {
        Side {
            lang,
            vocab: Vocabulary::JointXZ,
        }
    }
}

/// Copy `src_prefix.*` of stage `from` onto `dst_prefix.*`, skipping `exclude`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graft {
    pub from: String,
    pub src_prefix: &'static str,
    pub dst_prefix: &'static str,
    pub exclude: Vec<&'static str>,
}

fn graft(from: &str, prefix: &'static str) -> Graft {
    Graft {
        from: from.into(),
        src_prefix: prefix,
        dst_prefix: prefix,
        exclude: Vec::new(),
    }
}

fn graft_except(from: &str, prefix: &'static str, exclude: &'static str) -> Graft {
    Graft {
        exclude: vec![exclude],
        ..graft(from, prefix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freeze {
    None,
    /// The experiment's freeze strategy with the pivot on this stack.
    Pivot(Stack),
    /// Every parameter of this stack.
    WholeStack(Stack),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    /// From scratch, auxiliary models and PLMs.
    Scratch,
    /// Source-target finetune of step-wise and dual transfer.
    Transfer,
    /// Final X→Y step of the triangular recipes.
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Aux,
    Finetune,
    BackTranslated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainData {
    /// A parallel corpus, optionally read target-to-source.
    Parallel { corpus: Usage, flip: bool },
    /// Authentic X-Y mixed with the synthetic pairs of a stage.
    BtMix { synthetic: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    /// Denoising sequence-to-sequence PLM on monolingual text.
    Pretrain { lang: Lang },
    /// New-language embeddings against the frozen body of `plm`.
    Adapt { plm: String, lang: Lang },
    /// Supervised translation training of a freshly built model after grafts.
    Translate {
        src: Side,
        tgt: Side,
        init: Vec<Graft>,
        freeze: Freeze,
        data: TrainData,
        tier: Tier,
        budget: Budget,
    },
    /// Builds a model purely by grafting; no data.
    Assemble { src: Side, tgt: Side, grafts: Vec<Graft> },
    /// Translates the Z side of Z-Y with a Z→X model into synthetic X-Y.
    BackTranslate { model: String },
}

impl Op {
    /// Stages whose outputs this op consumes.
    pub fn inputs(&self) -> Vec<&str> {
        match self {
            Op::Pretrain { .. } => Vec::new(),
            Op::Adapt { plm, .. } => vec![plm],
            Op::Translate { init, data, .. } => {
                let mut v: Vec<&str> = init.iter().map(|g| g.from.as_str()).collect();
                if let TrainData::BtMix { synthetic } = data {
                    v.push(synthetic);
                }
                v
            }
            Op::Assemble { grafts, .. } => grafts.iter().map(|g| g.from.as_str()).collect(),
            Op::BackTranslate { model } => vec![model],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub name: String,
    pub op: Op,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Output {
    /// A trained X→Y model.
    Model(String),
    /// Two-pass decoding through Z.
    Pivot { first: String, second: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recipe {
    pub name: String,
    pub stages: Vec<Stage>,
    pub usage: BTreeSet<Usage>,
    pub output: Output,
    /// Auxiliary X→Z and Z→Y models reported next to the result.
    pub aux_xz: Option<String>,
    pub aux_zy: Option<String>,
}

pub const CORE_RECIPES: [&str; 7] = [
    "no-transfer",
    "pivot-translation",
    "stepwise",
    "shared-target-dual",
    "shared-source-dual",
    "simple-triangular",
    "triangular",
];

/// Every recipe name `recipe` accepts.
pub fn all_recipe_names() -> Vec<String> {
    let mut v: Vec<String> = CORE_RECIPES.iter().map(|s| s.to_string()).collect();
    for base in ["pivot-translation", "shared-target-dual", "shared-source-dual", "simple-triangular"] {
        v.push(format!("{base}+naive-mono"));
    }
    for base in ["no-transfer", "shared-target-dual", "shared-source-dual", "triangular"] {
        v.push(format!("{base}+bt"));
    }
    v
}

use Lang::{X, Y, Z};

struct Builder {
    stages: Vec<Stage>,
    usage: BTreeSet<Usage>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            stages: Vec::new(),
            usage: BTreeSet::new(),
        }
    }

    fn stage(&mut self, name: &str, op: Op) -> String {
        if !self.stages.iter().any(|s| s.name == name) {
            self.stages.push(Stage { name: name.into(), op });
        }
        name.into()
    }

    fn uses(&mut self, u: &[Usage]) {
        self.usage.extend(u.iter().copied());
    }

    fn plm(&mut self, lang: Lang) -> String {
        self.uses(&[Usage::mono(lang)]);
        let name = format!("plm-{}", lang.tag().to_lowercase());
        self.stage(&name, Op::Pretrain { lang })
    }

    fn adapt(&mut self, lang: Lang) -> String {
        let plm = self.plm(Z);
        self.uses(&[Usage::mono(lang)]);
        let name = format!("adapt-{}", lang.tag().to_lowercase());
        self.stage(&name, Op::Adapt { plm, lang })
    }

    #[allow(clippy::too_many_arguments)]
    fn translate(&mut self, name: &str, src: Side, tgt: Side, init: Vec<Graft>, freeze: Freeze, data: TrainData, tier: Tier, budget: Budget) -> String {
        match &data {
            TrainData::Parallel { corpus, .. } => self.uses(&[*corpus]),
            TrainData::BtMix { .. } => self.uses(&[Usage::XY]),
        }
        self.stage(
            name,
            Op::Translate {
                src,
                tgt,
                init,
                freeze,
                data,
                tier,
                budget,
            },
        )
    }

    fn aux(&mut self, name: &str, src: Lang, tgt: Lang, init: Vec<Graft>, freeze: Freeze) -> String {
        let (corpus, flip) = match (src, tgt) {
            (X, Z) => (Usage::XZ, false),
            (Z, X) => (Usage::XZ, true),
            (Z, Y) => (Usage::ZY, false),
            _ => unreachable!("no auxiliary corpus for {src:?}→{tgt:?}"),
        };
        self.translate(
            name,
            Side::own(src),
            Side::own(tgt),
            init,
            freeze,
            TrainData::Parallel { corpus, flip },
            Tier::Scratch,
            Budget::Aux,
        )
    }

    fn finish(self, name: &str, output: Output, aux_xz: Option<String>, aux_zy: Option<String>) -> Recipe {
        Recipe {
            name: name.into(),
            stages: self.stages,
            usage: self.usage,
            output,
            aux_xz,
            aux_zy,
        }
    }
}

fn xy_data(b: &mut Builder, bt: bool) -> TrainData {
    if bt {
        b.uses(&[Usage::XZ, Usage::ZY]);
        let model = b.aux("zx-bt", Z, X, Vec::new(), Freeze::None);
        let synthetic = b.stage("bt-data", Op::BackTranslate { model });
        TrainData::BtMix { synthetic }
    } else {
        TrainData::Parallel {
            corpus: Usage::XY,
            flip: false,
        }
    }
}

fn suffix(bt: bool, naive: bool) -> &'static str {
    match (bt, naive) {
        (true, _) => "-bt",
        (false, true) => "-naive",
        _ => "",
    }
}

fn finetune(b: &mut Builder, name: &str, from: &str, tier: Tier, bt: bool) -> String {
    let data = xy_data(b, bt);
    b.translate(
        name,
        Side::own(X),
        Side::own(Y),
        vec![graft(from, "")],
        Freeze::None,
        data,
        tier,
        if bt { Budget::BackTranslated } else { Budget::Finetune },
    )
}

/// Looks up a recipe by name, including the `+naive-mono` and `+bt` variants.
pub fn recipe(name: &str) -> Option<Recipe> {
    let (base, modifier) = match name.split_once('+') {
        Some((b, m)) => (b, Some(m)),
        None => (name, None),
    };
    let naive = modifier == Some("naive-mono");
    let bt = modifier == Some("bt");
    if modifier.is_some() && !naive && !bt {
        return None;
    }
    let sfx = suffix(bt, naive);
    let mut b = Builder::new();
    let r = match base {
        "no-transfer" if !naive => {
            let data = xy_data(&mut b, bt);
            let m = b.translate(
                &format!("xy-scratch{sfx}"),
                Side::own(X),
                Side::own(Y),
                Vec::new(),
                Freeze::None,
                data,
                Tier::Scratch,
                if bt { Budget::BackTranslated } else { Budget::Finetune },
            );
            b.finish(name, Output::Model(m), None, None)
        }
        "pivot-translation" if !bt => {
            let (xz_init, zy_init) = if naive {
                let (px, pz, py) = (b.plm(X), b.plm(Z), b.plm(Y));
                (
                    vec![graft(&px, "encoder"), graft(&pz, "decoder")],
                    vec![graft(&pz, "encoder"), graft(&py, "decoder")],
                )
            } else {
                (Vec::new(), Vec::new())
            };
            let xz = b.aux(&format!("xz-scratch{sfx}"), X, Z, xz_init, Freeze::None);
            let zy = b.aux(&format!("zy-scratch{sfx}"), Z, Y, zy_init, Freeze::None);
            b.finish(
                name,
                Output::Pivot {
                    first: xz.clone(),
                    second: zy.clone(),
                },
                Some(xz),
                Some(zy),
            )
        }
        "stepwise" if modifier.is_none() => {
            let xz = b.translate(
                "xz-joint",
                Side::joint(X),
                Side::joint(Z),
                Vec::new(),
                Freeze::None,
                TrainData::Parallel {
                    corpus: Usage::XZ,
                    flip: false,
                },
                Tier::Scratch,
                Budget::Aux,
            );
            let zy = b.translate(
                "zy-stepwise",
                Side::joint(Z),
                Side::own(Y),
                vec![graft(&xz, "encoder")],
                Freeze::WholeStack(Stack::Encoder),
                TrainData::Parallel {
                    corpus: Usage::ZY,
                    flip: false,
                },
                Tier::Scratch,
                Budget::Aux,
            );
            let xy = b.translate(
                "xy-stepwise",
                Side::joint(X),
                Side::own(Y),
                vec![graft(&zy, "")],
                Freeze::None,
                TrainData::Parallel {
                    corpus: Usage::XY,
                    flip: false,
                },
                Tier::Transfer,
                Budget::Finetune,
            );
            b.finish(name, Output::Model(xy), Some(xz), Some(zy))
        }
        "shared-target-dual" => {
            let pz = b.plm(Z);
            let ax = b.adapt(X);
            let decoder = if naive { graft(&b.plm(Y), "decoder") } else { graft_except(&pz, "decoder", "decoder.embed.tokens") };
            let zy = b.aux(
                &format!("zy-dual{}", if naive { "-naive" } else { "" }),
                Z,
                Y,
                vec![graft(&pz, "encoder"), decoder],
                Freeze::Pivot(Stack::Encoder),
            );
            let assembled = b.stage(
                &format!("xy-std-assemble{}", if naive { "-naive" } else { "" }),
                Op::Assemble {
                    src: Side::own(X),
                    tgt: Side::own(Y),
                    grafts: vec![
                        graft_except(&zy, "encoder", "encoder.embed.tokens"),
                        graft(&ax, "encoder.embed.tokens"),
                        graft(&zy, "decoder"),
                    ],
                },
            );
            let xy = finetune(&mut b, &format!("xy-std{sfx}"), &assembled, Tier::Transfer, bt);
            b.finish(name, Output::Model(xy), None, Some(zy))
        }
        "shared-source-dual" => {
            let pz = b.plm(Z);
            let ay = b.adapt(Y);
            let encoder = if naive { graft(&b.plm(X), "encoder") } else { graft_except(&pz, "encoder", "encoder.embed.tokens") };
            let xz = b.aux(
                &format!("xz-dual{}", if naive { "-naive" } else { "" }),
                X,
                Z,
                vec![encoder, graft(&pz, "decoder")],
                Freeze::Pivot(Stack::Decoder),
            );
            let assembled = b.stage(
                &format!("xy-ssd-assemble{}", if naive { "-naive" } else { "" }),
                Op::Assemble {
                    src: Side::own(X),
                    tgt: Side::own(Y),
                    grafts: vec![
                        graft(&xz, "encoder"),
                        graft_except(&xz, "decoder", "decoder.embed.tokens"),
                        graft(&ay, "decoder.embed.tokens"),
                    ],
                },
            );
            let xy = finetune(&mut b, &format!("xy-ssd{sfx}"), &assembled, Tier::Transfer, bt);
            b.finish(name, Output::Model(xy), Some(xz), None)
        }
        "simple-triangular" if !bt => {
            let pz = b.plm(Z);
            let (enc_x, dec_y) = if naive {
                (vec![graft(&b.plm(X), "encoder")], vec![graft(&b.plm(Y), "decoder")])
            } else {
                (Vec::new(), Vec::new())
            };
            let mut xz_init = enc_x;
            xz_init.push(graft(&pz, "decoder"));
            let mut zy_init = vec![graft(&pz, "encoder")];
            zy_init.extend(dec_y);
            let xz = b.aux(&format!("xz-simple{sfx}"), X, Z, xz_init, Freeze::Pivot(Stack::Decoder));
            let zy = b.aux(&format!("zy-simple{sfx}"), Z, Y, zy_init, Freeze::Pivot(Stack::Encoder));
            let assembled = combine(&mut b, &format!("xy-simple-assemble{sfx}"), &xz, &zy);
            let xy = finetune(&mut b, &format!("xy-simple{sfx}"), &assembled, Tier::Final, false);
            b.finish(name, Output::Model(xy), Some(xz), Some(zy))
        }
        "triangular" if !naive => {
            let pz = b.plm(Z);
            let ax = b.adapt(X);
            let ay = b.adapt(Y);
            let xz = b.aux("xz-tri", X, Z, vec![graft(&ax, "encoder"), graft(&pz, "decoder")], Freeze::Pivot(Stack::Decoder));
            let zy = b.aux("zy-tri", Z, Y, vec![graft(&pz, "encoder"), graft(&ay, "decoder")], Freeze::Pivot(Stack::Encoder));
            let assembled = combine(&mut b, "xy-tri-assemble", &xz, &zy);
            let xy = finetune(&mut b, &format!("xy-tri{sfx}"), &assembled, Tier::Final, bt);
            b.finish(name, Output::Model(xy), Some(xz), Some(zy))
        }
        _ => return None,
    };
    Some(r)
}

fn combine(b: &mut Builder, name: &str, xz: &str, zy: &str) -> String {
    b.stage(
        name,
        Op::Assemble {
            src: Side::own(X),
            tgt: Side::own(Y),
            grafts: vec![graft(xz, "encoder"), graft(zy, "decoder")],
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn usage(name: &str) -> Vec<String> {
        recipe(name).unwrap().usage.iter().map(|u| u.to_string()).collect()
    }

    #[test]
    fn every_listed_recipe_exists() {
        for n in all_recipe_names() {
            let r = recipe(&n).unwrap_or_else(|| panic!("{n}"));
            let mut seen = BTreeSet::new();
            for s in &r.stages {
                for i in s.op.inputs() {
                    assert!(seen.contains(i), "{n}: {} reads {i} before it exists", s.name);
                }
                assert!(seen.insert(s.name.as_str()), "{n}: duplicate stage {}", s.name);
            }
        }
        assert!(recipe("stepwise+bt").is_none());
        assert!(recipe("triangular+naive-mono").is_none());
        assert!(recipe("triangular+extra").is_none());
        assert!(recipe("bogus").is_none());
    }

    #[test]
    fn declared_usage_matches_the_data_table() {
        assert_eq!(usage("no-transfer"), ["X-Y"]);
        assert_eq!(usage("pivot-translation"), ["X-Z", "Z-Y"]);
        assert_eq!(usage("stepwise"), ["X-Z", "Z-Y", "X-Y"]);
        assert_eq!(usage("shared-target-dual"), ["X", "Z", "Z-Y", "X-Y"]);
        assert_eq!(usage("shared-source-dual"), ["Y", "Z", "X-Z", "X-Y"]);
        assert_eq!(usage("simple-triangular"), ["Z", "X-Z", "Z-Y", "X-Y"]);
        assert_eq!(usage("triangular"), ["X", "Y", "Z", "X-Z", "Z-Y", "X-Y"]);
        assert_eq!(usage("no-transfer+bt"), ["X-Z", "Z-Y", "X-Y"]);
        assert_eq!(usage("simple-triangular+naive-mono"), ["X", "Y", "Z", "X-Z", "Z-Y", "X-Y"]);
    }

    #[test]
    fn pivot_translation_has_no_source_target_model() {
        let r = recipe("pivot-translation").unwrap();
        assert!(matches!(r.output, Output::Pivot { .. }));
        for s in &r.stages {
            if let Op::Translate { src, tgt, .. } = &s.op {
                assert!(!(src.lang == X && tgt.lang == Y));
            }
        }
    }
}
