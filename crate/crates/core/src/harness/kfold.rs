use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::exec::derive_seed;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KFoldError {
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("cannot split {n} examples into {k} folds")]
    TooFewExamples { n: usize, k: usize },
}

/// Assignment of every example index to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: Vec<usize>,
}

/// Shuffles `0..n` with a seed-derived permutation and deals it round-robin
/// into `k` folds, so fold sizes are `⌊n/k⌋` or `⌈n/k⌉`.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan, KFoldError> {
    if k < 2 {
        return Err(KFoldError::TooFewFolds(k));
    }
    if n < k {
        return Err(KFoldError::TooFewExamples { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        &[0xf01d, n as u64, k as u64],
    )));
    let mut assignments = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan { k, seed, assignments })
}

impl FoldPlan {
    /// Indices validated in fold `f`, ascending.
    pub fn held_out(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == f)
            .collect()
    }

    /// Indices trained on in fold `f`, ascending.
    pub fn training(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != f)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}
