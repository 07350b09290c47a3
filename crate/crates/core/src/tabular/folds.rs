use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    /// Sorted ascending.
    pub train: Vec<usize>,
    /// Sorted ascending.
    pub test: Vec<usize>,
}

/// Seeded k-fold partition of `0..n_rows`. Rows are shuffled once and dealt
/// round-robin, so test sizes differ by at most one.
pub fn make_folds(n_rows: usize, n_folds: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if n_folds < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    if n_rows < n_folds {
        return Err(Error::invalid(format!(
            "cannot split {n_rows} rows into {n_folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut rng::stream(seed));
    let mut assignment = vec![0usize; n_rows];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % n_folds;
    }
    Ok((0..n_folds)
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..n_rows).partition(|&r| assignment[r] == fold);
            FoldSplit { fold, train, test }
        })
        .collect())
}
