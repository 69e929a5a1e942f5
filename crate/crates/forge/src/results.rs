//! Result rows, significance against a baseline, and the text and JSON
//! forms of the table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use forge_core::eval::paired_bootstrap;
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub recipe: String,
    /// Corpora the recipe read, in manifest order.
    pub usage: Vec<String>,
    /// Test BLEU of the auxiliary X→Z model, when the recipe trains one.
    pub xz_bleu: Option<f64>,
    pub zy_bleu: Option<f64>,
    /// X→Y test BLEU.
    pub bleu: f64,
    /// Paired-bootstrap p of "this row is not better than the baseline".
    pub p_value: Option<f64>,
    /// Checkpoint(s) that produced the hypotheses, relative to the run directory.
    pub checkpoints: Vec<String>,
    /// Decoded test hypotheses, relative to the run directory.
    pub hypotheses: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub baseline: String,
    pub bootstrap_samples: usize,
    pub bootstrap_seed: u64,
    pub rows: Vec<ResultRow>,
}

/// Fills in p-values of `rows` (aligned with `hyps`) against the row named
/// `baseline`; the baseline row itself and every row of a table without
/// the baseline get none.
pub fn emit_results(
    mut rows: Vec<ResultRow>,
    hyps: &[Vec<String>],
    refs: &[String],
    baseline: &str,
    samples: usize,
    seed: u64,
) -> Result<ResultsTable> {
    if rows.is_empty() {
        return Err(ForgeError::Results("no rows to report".into()));
    }
    if rows.len() != hyps.len() {
        return Err(ForgeError::Results(format!("{} rows but {} hypothesis sets", rows.len(), hyps.len())));
    }
    let base = rows.iter().position(|r| r.recipe == baseline);
    for i in 0..rows.len() {
        rows[i].p_value = match base {
            Some(b) if b != i => Some(paired_bootstrap(&hyps[i], &hyps[b], refs, samples, seed)?.p_value),
            _ => None,
        };
    }
    Ok(ResultsTable {
        baseline: baseline.into(),
        bootstrap_samples: samples,
        bootstrap_seed: seed,
        rows,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|b| format!("{b:.2}")).unwrap_or_else(|| "-".into())
}

impl ResultsTable {
    pub fn row(&self, recipe: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.recipe == recipe)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<30} {:<24} {:>7} {:>7} {:>7} {:>7}\n",
            "recipe", "data", "X→Z", "Z→Y", "X→Y", "p"
        );
        for r in &self.rows {
            let p = r.p_value.map(|p| format!("{p:.3}")).unwrap_or_default();
            let _ = writeln!(
                s,
                "{:<30} {:<24} {:>7} {:>7} {:>7.2} {:>7}",
                r.recipe,
                r.usage.join(","),
                cell(r.xz_bleu),
                cell(r.zy_bleu),
                r.bleu,
                p
            );
        }
        let _ = writeln!(
            s,
            "p: paired bootstrap against {} ({} resamples, ties count against the row)",
            self.baseline, self.bootstrap_samples
        );
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ForgeError::Results(e.to_string()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for (name, body) in [("results.txt", self.to_text()), ("results.json", self.to_json())] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(ForgeError::io(p))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join("results.json");
        let text = fs::read_to_string(&p).map_err(ForgeError::io(&p))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, bleu: f64) -> ResultRow {
        ResultRow {
            recipe: name.into(),
            usage: vec!["X-Y".into()],
            xz_bleu: None,
            zy_bleu: None,
            bleu,
            p_value: None,
            checkpoints: vec![format!("stages/{name}/model.ckpt")],
            hypotheses: format!("recipes/{name}/hyps.txt"),
        }
    }

    fn lines(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_baseline_row_has_no_p() {
        let refs = lines(&["a b c d", "e f g h"]);
        let t = emit_results(vec![row("no-transfer", 50.0)], &[refs.clone()], &refs, "no-transfer", 1000, 1).unwrap();
        assert_eq!(t.rows[0].p_value, None);
        let last = t.to_text().lines().nth(1).unwrap().to_string();
        assert!(last.trim_end().ends_with("50.00"), "{last}");
    }

    #[test]
    fn identical_rows_tie() {
        let refs = lines(&["a b c d", "e f g h", "i j k l"]);
        let h = lines(&["a b c d", "e f x h", "i j k"]);
        let t = emit_results(
            vec![row("no-transfer", 1.0), row("triangular", 1.0)],
            &[h.clone(), h],
            &refs,
            "no-transfer",
            1000,
            3,
        )
        .unwrap();
        assert_eq!(t.rows[1].p_value, Some(1.0));
        assert_eq!(t.rows[0].p_value, None);
    }

    #[test]
    fn missing_baseline_and_empty() {
        let refs = lines(&["a b"]);
        let t = emit_results(vec![row("triangular", 1.0)], &[refs.clone()], &refs, "no-transfer", 1000, 3).unwrap();
        assert_eq!(t.rows[0].p_value, None);
        assert!(emit_results(Vec::new(), &[], &refs, "no-transfer", 1000, 3).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut a = row("triangular", 23.456789012345678);
        a.xz_bleu = Some(0.1 + 0.2);
        a.p_value = Some(1.0 / 3.0);
        let t = ResultsTable {
            baseline: "no-transfer".into(),
            bootstrap_samples: 1000,
            bootstrap_seed: 7,
            rows: vec![row("no-transfer", 12.0), a],
        };
        assert_eq!(ResultsTable::from_json(&t.to_json()).unwrap(), t);
        assert!(ResultsTable::from_json("{").is_err());
    }
}
