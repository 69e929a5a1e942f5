//! Finite-difference check of the seq2seq loss gradients in `f64`.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::forward::{seq2seq_loss_graph, Leaves, ParamSource, TrainBatch};
use super::{ModelConfig, ParamTree, OUTPUT_PROJECTION};
use crate::error::Result;
use crate::graph::{Graph, Var};

struct F64Params {
    config: ModelConfig,
    values: BTreeMap<String, (usize, usize, Vec<f64>)>,
}

impl F64Params {
    fn new(tree: &ParamTree) -> Self {
        F64Params {
            config: tree.config().clone(),
            values: tree
                .iter()
                .map(|(n, t)| {
                    let (r, c) = t.matrix_dims();
                    (n.to_string(), (r, c, t.values().iter().map(|&v| v as f64).collect()))
                })
                .collect(),
        }
    }

    fn loss(&self, batch: &TrainBatch, ls: f64) -> Result<(f64, Graph<f64>, BTreeMap<String, Var>)> {
        let mut g = Graph::<f64>::new();
        let mut leaves = Leaves::new(self);
        let l = seq2seq_loss_graph(&mut g, &mut leaves, batch, ls, None)?;
        let v = g.value(l)[0];
        g.backward(l)?;
        let vars = leaves.vars().clone();
        Ok((v, g, vars))
    }

    fn set(&mut self, name: &str, i: usize, v: f64) {
        if let Some(t) = self.values.get_mut(name) {
            t.2[i] = v;
        }
    }
}

impl ParamSource<f64> for F64Params {
    fn model_config(&self) -> &ModelConfig {
        &self.config
    }
    fn leaf_data(&self, name: &str) -> Option<(usize, usize, Vec<f64>, bool)> {
        self.values.get(name).map(|(r, c, v)| (*r, *c, v.clone(), true))
    }
    fn storage_name<'a>(&self, name: &'a str) -> &'a str {
        if self.config.tie_decoder_embeddings && name == OUTPUT_PROJECTION {
            "decoder.embed.tokens"
        } else {
            name
        }
    }
}

/// Outcome of [`gradient_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Tensors visited; every canonical name of the tree.
    pub tensors: usize,
    /// Scalar entries compared.
    pub entries: usize,
    pub worst_relative_error: f64,
    /// `(name, index)` of the worst entry.
    pub worst_at: Option<(String, usize)>,
}

/// Compares the analytic gradient of the dropout-free seq2seq loss with
/// central differences of step `h`, everything in `f64`.
///
/// Each tensor contributes at most `per_tensor` evenly spaced entries
/// (all of them when it is smaller). The relative error of an entry is
/// `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(
    tree: &ParamTree,
    batch: &TrainBatch,
    label_smoothing: f64,
    h: f64,
    per_tensor: usize,
    floor: f64,
) -> Result<GradCheckReport> {
    let mut p = F64Params::new(tree);
    let (_, g, vars) = p.loss(batch, label_smoothing)?;
    let names: Vec<String> = p.values.keys().cloned().collect();
    let mut report = GradCheckReport {
        tensors: 0,
        entries: 0,
        worst_relative_error: 0.0,
        worst_at: None,
    };
    for name in names {
        let n = p.values[&name].2.len();
        let analytic = vars
            .get(&name)
            .and_then(|&v| g.grad(v))
            .map(|v| v.to_vec())
            .unwrap_or_else(|| vec![0.0; n]);
        let stride = n.div_ceil(per_tensor.max(1)).max(1);
        report.tensors += 1;
        for i in (0..n).step_by(stride) {
            let orig = p.values[&name].2[i];
            p.set(&name, i, orig + h);
            let up = p.loss(batch, label_smoothing)?.0;
            p.set(&name, i, orig - h);
            let down = p.loss(batch, label_smoothing)?.0;
            p.set(&name, i, orig);
            let numeric = (up - down) / (2.0 * h);
            let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(floor);
            report.entries += 1;
            if err > report.worst_relative_error || report.worst_at.is_none() {
                report.worst_relative_error = err;
                report.worst_at = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}
