use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{is_vocab_tensor, stack_of, under, Checkpoint};
use crate::error::{Error, Result};

/// What to do when a mapped destination tensor has no source counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    /// Keep the destination's current (random) values and report the name.
    RandomInit,
    Error,
}

/// Copies every source tensor under `src_prefix` onto the destination name
/// obtained by swapping the prefix for `dst_prefix`. Destination names under
/// any `exclude` prefix are skipped.
#[derive(Debug, Clone)]
pub struct GraftMapping<'a> {
    pub source: &'a Checkpoint,
    pub src_prefix: String,
    pub dst_prefix: String,
    pub exclude: Vec<String>,
}

impl<'a> GraftMapping<'a> {
    pub fn new(source: &'a Checkpoint, src_prefix: &str, dst_prefix: &str) -> Self {
        GraftMapping {
            source,
            src_prefix: src_prefix.into(),
            dst_prefix: dst_prefix.into(),
            exclude: Vec::new(),
        }
    }

    pub fn excluding(mut self, prefix: &str) -> Self {
        self.exclude.push(prefix.into());
        self
    }

    fn source_name(&self, dst_name: &str) -> String {
        let rest = &dst_name[self.dst_prefix.len()..];
        format!("{}{}", self.src_prefix, rest)
    }
}

#[derive(Debug, Clone)]
pub struct GraftPlan<'a> {
    pub mappings: Vec<GraftMapping<'a>>,
    pub missing: MissingPolicy,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraftReport {
    pub grafted: Vec<String>,
    pub untouched: Vec<String>,
    pub random_init: Vec<String>,
}

/// Two mappings conflict when some name falls under both, unless the wider
/// one excludes the narrower one's prefix.
fn overlapping(a: &GraftMapping<'_>, b: &GraftMapping<'_>) -> bool {
    let carved = |wide: &GraftMapping<'_>, narrow: &GraftMapping<'_>| {
        under(&narrow.dst_prefix, &wide.dst_prefix) && wide.exclude.iter().any(|e| under(&narrow.dst_prefix, e))
    };
    (under(&a.dst_prefix, &b.dst_prefix) || under(&b.dst_prefix, &a.dst_prefix)) && !carved(a, b) && !carved(b, a)
}

/// Applies `plan` to `dst`. Validation runs before any tensor is written,
/// so on error `dst` is unchanged.
pub fn graft(dst: &mut Checkpoint, plan: &GraftPlan<'_>) -> Result<GraftReport> {
    for (i, a) in plan.mappings.iter().enumerate() {
        for b in &plan.mappings[i + 1..] {
            if overlapping(a, b) {
                return Err(Error::OverlappingDestinations(a.dst_prefix.clone(), b.dst_prefix.clone()));
            }
        }
    }
    let mut report = GraftReport::default();
    let mut copies: Vec<(String, Vec<f32>)> = Vec::new();
    let names: Vec<String> = dst.params.names().map(String::from).collect();
    for name in names {
        let mapping = plan
            .mappings
            .iter()
            .find(|m| under(&name, &m.dst_prefix) && !m.exclude.iter().any(|e| under(&name, e)));
        let Some(m) = mapping else {
            report.untouched.push(name);
            continue;
        };
        let src_name = m.source_name(&name);
        let Some(src) = m.source.params.get(&src_name) else {
            match plan.missing {
                MissingPolicy::RandomInit => {
                    report.random_init.push(name);
                    continue;
                }
                MissingPolicy::Error => return Err(Error::MissingSource(src_name)),
            }
        };
        let dst_t = dst.params.tensor(&name)?;
        if src.dims() != dst_t.dims() {
            return Err(Error::GraftShape {
                name,
                src: src.dims().to_vec(),
                dst: dst_t.dims().to_vec(),
            });
        }
        if is_vocab_tensor(&name) {
            let (Some(ds), Some(ss)) = (stack_of(&name), stack_of(&src_name)) else {
                return Err(Error::UnknownParameter(name));
            };
            if dst.fingerprint(ds) != m.source.fingerprint(ss) {
                return Err(Error::VocabMismatch { name });
            }
        }
        copies.push((name.clone(), src.values().to_vec()));
        report.grafted.push(name);
    }
    for (name, values) in copies {
        let t = dst.params.get_mut(&name).expect("validated above");
        t.values_mut().copy_from_slice(&values);
    }
    Ok(report)
}
