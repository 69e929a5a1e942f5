use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BtMix<T> {
    pub pairs: Vec<T>,
    /// Authentic pairs in the mix, counting duplicates.
    pub authentic: usize,
    pub synthetic: usize,
    pub warning: Option<String>,
}

/// Mixes authentic and synthetic pairs so that authentic:synthetic reaches
/// `ratio` by pair count. Authentic data is repeated as whole copies plus a
/// prefix; it is never subsampled. The result is shuffled by `seed`.
pub fn make_bt_mix<T: Clone>(authentic: &[T], synthetic: &[T], ratio: (usize, usize), seed: u64) -> Result<BtMix<T>> {
    if authentic.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if ratio.0 == 0 || ratio.1 == 0 {
        return Err(Error::Invalid(alloc::format!("mix ratio {}:{}", ratio.0, ratio.1)));
    }
    if synthetic.is_empty() {
        return Ok(BtMix {
            pairs: authentic.to_vec(),
            authentic: authentic.len(),
            synthetic: 0,
            warning: Some(String::from("no synthetic pairs; using authentic data only")),
        });
    }
    let target = (synthetic.len() * ratio.0).div_ceil(ratio.1).max(authentic.len());
    let mut pairs: Vec<T> = authentic.iter().cycle().take(target).cloned().collect();
    pairs.extend_from_slice(synthetic);
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(BtMix {
        pairs,
        authentic: target,
        synthetic: synthetic.len(),
        warning: None,
    })
}

/// Replaces the source side of every (source, target) pair with its
/// translation; targets are passed through untouched.
pub fn generate_bt_synthetic<A, B: Clone, X, F>(pairs: &[(A, B)], mut translate: F) -> Result<Vec<(X, B)>>
where
    F: FnMut(&A) -> Result<X>,
{
    pairs.iter().map(|(a, b)| Ok((translate(a)?, b.clone()))).collect()
}
