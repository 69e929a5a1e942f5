//! The four commands: corpus generation, recipe runs, the freeze sweep and
//! re-reporting a finished run.

use std::collections::BTreeMap;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use forge_core::corpus::Lang;
use forge_core::decode::{pivot_translate, SearchSettings};
use forge_core::eval::bleu;
use forge_core::surgery::FreezeStrategy;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::{Split, Workspace};
use crate::error::{ForgeError, Result};
use crate::recipes::{recipe, Output, Side, Usage};
use crate::results::{emit_results, ResultRow, ResultsTable};
use crate::runner::{decode_all, RecipeRun, Runner};

/// Test-set outputs of one recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub bleu: f64,
    pub hyps: Vec<String>,
    /// Pivot-language intermediates of a two-pass decode.
    pub pivots: Option<Vec<String>>,
    pub xz_bleu: Option<f64>,
    pub zy_bleu: Option<f64>,
}

fn aux_test_bleu(run: &RecipeRun, ws: &Workspace, stage: &Option<String>, corpus: Usage, search: &SearchSettings) -> Result<Option<f64>> {
    let Some(stage) = stage else { return Ok(None) };
    let (ck, src, tgt) = run.model(stage)?;
    let sources = ws.side(corpus, Split::Test, 0, src.vocab);
    let refs: Vec<String> = ws.pairs(corpus, Split::Test).iter().map(|p| p.1.clone()).collect();
    let bpe = ws.bpe(tgt.vocab);
    let hyps = decode_all(ck, &sources, search, |ids| bpe.decode(ids))?;
    Ok(Some(bleu(&hyps, &refs)?.score))
}

/// Beam-decodes the X→Y test set (through Z for pivot recipes) and the
/// auxiliary test sets.
pub fn evaluate(run: &RecipeRun, ws: &Workspace, search: &SearchSettings) -> Result<Evaluation> {
    let refs = test_references(ws);
    let y = ws.bpe(Side::own(Lang::Y).vocab);
    let (hyps, pivots) = match &run.recipe.output {
        Output::Model(stage) => {
            let (ck, src, _) = run.model(stage)?;
            let sources = ws.side(Usage::XY, Split::Test, 0, src.vocab);
            (decode_all(ck, &sources, search, |ids| y.decode(ids))?, None)
        }
        Output::Pivot { first, second } => {
            let (a, src, mid) = run.model(first)?;
            let (b, _, _) = run.model(second)?;
            let z = ws.bpe(mid.vocab);
            let sources = ws.side(Usage::XY, Split::Test, 0, src.vocab);
            let mut hyps = Vec::with_capacity(sources.len());
            let mut pivots = Vec::with_capacity(sources.len());
            for s in sources.iter() {
                let trace = pivot_translate(a, b, s, search)?;
                pivots.push(z.decode(&trace.pivot));
                hyps.push(y.decode(&trace.output));
            }
            (hyps, Some(pivots))
        }
    };
    Ok(Evaluation {
        bleu: bleu(&hyps, &refs)?.score,
        hyps,
        pivots,
        xz_bleu: aux_test_bleu(run, ws, &run.recipe.aux_xz, Usage::XZ, search)?,
        zy_bleu: aux_test_bleu(run, ws, &run.recipe.aux_zy, Usage::ZY, search)?,
    })
}

pub fn test_references(ws: &Workspace) -> Vec<String> {
    ws.pairs(Usage::XY, Split::Test).iter().map(|p| p.1.clone()).collect()
}

fn lines_text(v: &[String]) -> String {
    let mut s = v.join("\n");
    s.push('\n');
    s
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(ForgeError::io(path))?;
    Ok(text.lines().map(String::from).collect())
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(ForgeError::io(parent))?;
    }
    fs::write(path, body).map_err(ForgeError::io(path))
}

/// Writes the corpus files and manifest to `<output_dir>/data`.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let ws = Workspace::generate(cfg)?;
    let dir = cfg.output_dir.join("data");
    ws.write_files(&dir, cfg)?;
    Ok(dir)
}

fn checkpoint_paths(run: &RecipeRun) -> Vec<String> {
    let stages: Vec<&String> = match &run.recipe.output {
        Output::Model(s) => vec![s],
        Output::Pivot { first, second } => vec![first, second],
    };
    stages
        .into_iter()
        .map(|s| format!("stages/{s}-{}/model.ckpt", run.stage_key(s).unwrap_or_default()))
        .collect()
}

/// One recipe run plus its decoded test outputs, written under
/// `<dir>/recipes/<name>/`.
pub fn run_and_record(runner: &mut Runner<'_>, ws: &Workspace, name: &str, dir: &Path) -> Result<(RecipeRun, Evaluation, ResultRow)> {
    let r = recipe(name).ok_or_else(|| ForgeError::Config(format!("unknown recipe `{name}`")))?;
    let run = runner.run_recipe(&r)?;
    let rdir = dir.join("recipes").join(name);
    write(&rdir.join("manifest.txt"), &run.manifest())?;
    let eval = evaluate(&run, ws, &runner.config().decode.search).map_err(|e| e.in_stage("evaluate"))?;
    write(&rdir.join("hyps.txt"), &lines_text(&eval.hyps))?;
    if let Some(p) = &eval.pivots {
        write(&rdir.join("pivots.txt"), &lines_text(p))?;
    }
    let row = ResultRow {
        recipe: name.into(),
        usage: run.observed.iter().map(Usage::to_string).collect(),
        xz_bleu: eval.xz_bleu,
        zy_bleu: eval.zy_bleu,
        bleu: eval.bleu,
        p_value: None,
        checkpoints: checkpoint_paths(&run),
        hypotheses: format!("recipes/{name}/hyps.txt"),
    };
    Ok((run, eval, row))
}

/// Rebuilds the table of `dir` from stored hypotheses, against `baseline`.
pub fn report(dir: &Path, baseline: &str) -> Result<ResultsTable> {
    let old = ResultsTable::load(dir)?;
    let refs = read_lines(&dir.join("refs.txt"))?;
    let hyps = old
        .rows
        .iter()
        .map(|r| read_lines(&dir.join(&r.hypotheses)))
        .collect::<Result<Vec<_>>>()?;
    let t = emit_results(old.rows, &hyps, &refs, baseline, old.bootstrap_samples, old.bootstrap_seed)?;
    t.save(dir)?;
    Ok(t)
}

/// Runs `recipes` (the config's list when empty) and writes the merged
/// results table of the output directory.
pub fn run(cfg: &ExperimentConfig, recipes: &[String], quiet: bool) -> Result<ResultsTable> {
    let names: Vec<String> = if recipes.is_empty() { cfg.recipes.clone() } else { recipes.to_vec() };
    if names.is_empty() {
        return Err(ForgeError::Config("no recipes selected".into()));
    }
    let mut cfg = cfg.clone();
    cfg.recipes = names.clone();
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    let ws = Workspace::generate(&cfg)?;
    let refs = test_references(&ws);
    let refs_path = dir.join("refs.txt");
    // rows of earlier runs against the same test set are kept
    let mut rows: BTreeMap<String, (usize, ResultRow)> = BTreeMap::new();
    if read_lines(&refs_path).ok().as_ref() == Some(&refs) {
        if let Ok(old) = ResultsTable::load(&dir) {
            for (i, r) in old.rows.into_iter().enumerate() {
                rows.insert(r.recipe.clone(), (i, r));
            }
        }
    }
    write(&refs_path, &lines_text(&refs))?;
    let mut runner = Runner::new(&cfg, &ws, Some(dir.join("stages")));
    runner.quiet = quiet;
    for name in &names {
        let (_, _, row) = run_and_record(&mut runner, &ws, name, &dir)?;
        let order = rows.get(name).map_or(usize::MAX, |r| r.0);
        rows.insert(name.clone(), (order, row));
    }
    let mut ordered: Vec<(usize, ResultRow)> = rows.into_values().collect();
    ordered.sort_by_key(|(i, r)| (*i, names.iter().position(|n| *n == r.recipe)));
    let rows: Vec<ResultRow> = ordered.into_iter().map(|(_, r)| r).collect();
    let hyps = rows
        .iter()
        .map(|r| read_lines(&dir.join(&r.hypotheses)))
        .collect::<Result<Vec<_>>>()?;
    let t = emit_results(rows, &hyps, &refs, &cfg.baseline, cfg.decode.bootstrap_samples, cfg.seed)?;
    t.save(&dir)?;
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub layers: usize,
    /// Best dev BLEU of the auxiliary models during training.
    pub xz_dev: Option<f64>,
    pub zy_dev: Option<f64>,
    pub xy_test: f64,
}

/// Parses `a..b` (inclusive) or a single layer count.
pub fn parse_layer_range(s: &str) -> Result<RangeInclusive<usize>> {
    let bad = || ForgeError::Config(format!("layer range `{s}`: expected N or A..B"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.strip_prefix('=').unwrap_or(b)),
        None => (s, s),
    };
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok(a..=b)
}

/// Runs `name` once per layer-wise freeze depth in `layers` and writes
/// `sweep-<name>.tsv` and `.json`.
pub fn sweep_freeze(cfg: &ExperimentConfig, name: &str, layers: impl IntoIterator<Item = usize>, quiet: bool) -> Result<Vec<SweepRow>> {
    let layers: Vec<usize> = layers.into_iter().collect();
    let depth = cfg.model.enc_layers.min(cfg.model.dec_layers);
    if let Some(&l) = layers.iter().find(|&&l| l > depth) {
        return Err(ForgeError::Config(format!("--L {l} exceeds the model depth {depth}")));
    }
    let r = recipe(name).ok_or_else(|| ForgeError::Config(format!("unknown recipe `{name}`")))?;
    cfg.validate()?;
    let ws = Workspace::generate(cfg)?;
    let dir = cfg.output_dir.join(format!("sweep-{name}"));
    let mut out = Vec::new();
    for l in layers {
        let mut c = cfg.clone();
        c.freeze = FreezeStrategy::LayerWise(l);
        let mut runner = Runner::new(&c, &ws, Some(cfg.output_dir.join("stages")));
        runner.quiet = quiet;
        let (run, eval, _) = run_and_record(&mut runner, &ws, name, &dir.join(format!("L{l}")))?;
        let dev = |s: &Option<String>| s.as_ref().and_then(|s| run.artifacts.get(s)).and_then(|a| a.best_dev());
        out.push(SweepRow {
            layers: l,
            xz_dev: dev(&r.aux_xz),
            zy_dev: dev(&r.aux_zy),
            xy_test: eval.bleu,
        });
    }
    let cell = |v: Option<f64>| v.map(|b| format!("{b:.2}")).unwrap_or_else(|| "-".into());
    let mut tsv = String::from("L\tX→Z dev\tZ→Y dev\tX→Y test\n");
    for row in &out {
        tsv.push_str(&format!("{}\t{}\t{}\t{:.2}\n", row.layers, cell(row.xz_dev), cell(row.zy_dev), row.xy_test));
    }
    write(&cfg.output_dir.join(format!("sweep-{name}.tsv")), &tsv)?;
    write(
        &cfg.output_dir.join(format!("sweep-{name}.json")),
        &serde_json::to_string_pretty(&out).expect("plain data serializes"),
    )?;
    Ok(out)
}
