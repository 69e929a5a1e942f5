use alloc::collections::BTreeSet;
use alloc::vec::Vec;

/// Removal counts by cause. A pair is charged to the first cause that
/// applies, in the order length, ratio, duplicate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CleanReport {
    pub input: usize,
    pub kept: usize,
    pub too_long: usize,
    pub bad_ratio: usize,
    pub duplicate: usize,
    /// Clean pairs dropped to truncate an oversampled corpus.
    pub surplus: usize,
}

impl CleanReport {
    pub fn removed(&self) -> usize {
        self.too_long + self.bad_ratio + self.duplicate + self.surplus
    }
}

/// `max(a, b) / min(a, b) <= max_ratio` without dividing; an empty side fails.
fn ratio_ok(a: usize, b: usize, max_ratio: f64) -> bool {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    lo > 0 && hi as f64 <= max_ratio * lo as f64
}

/// Indices of the pairs that survive cleaning, in input order (the first
/// copy of a duplicate is kept).
pub(crate) fn clean_indices<T: Ord>(pairs: &[(Vec<T>, Vec<T>)], max_subwords: usize, max_ratio: f64) -> (Vec<usize>, CleanReport) {
    let mut report = CleanReport {
        input: pairs.len(),
        ..CleanReport::default()
    };
    let mut seen: BTreeSet<(&[T], &[T])> = BTreeSet::new();
    let mut kept = Vec::new();
    for (i, (a, b)) in pairs.iter().enumerate() {
        if a.len() > max_subwords || b.len() > max_subwords {
            report.too_long += 1;
        } else if !ratio_ok(a.len(), b.len(), max_ratio) {
            report.bad_ratio += 1;
        } else if !seen.insert((a, b)) {
            report.duplicate += 1;
        } else {
            kept.push(i);
        }
    }
    report.kept = kept.len();
    (kept, report)
}

/// Drops pairs with a side longer than `max_subwords`, pairs whose length
/// ratio exceeds `max_ratio` (a ratio equal to it is kept), and exact
/// duplicates.
pub fn clean_parallel<T: Ord + Clone>(
    pairs: &[(Vec<T>, Vec<T>)],
    max_subwords: usize,
    max_ratio: f64,
) -> (Vec<(Vec<T>, Vec<T>)>, CleanReport) {
    let (kept, report) = clean_indices(pairs, max_subwords, max_ratio);
    (kept.into_iter().map(|i| pairs[i].clone()).collect(), report)
}
