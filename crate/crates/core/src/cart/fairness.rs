//! Per-leaf discrimination and accuracy bookkeeping for a binary target tree.
//!
//! Group 0 and group 1 are the sensitive-column codes 0 and 1; label 1 is the
//! positive outcome. The tree's hard prediction in a leaf is the leaf's
//! majority label, and its discrimination is
//! `P(pred = 1 | S = 0) - P(pred = 1 | S = 1)` over the training rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{ColumnKind, Table};

use super::CartTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafFairnessStats {
    pub n_s0: usize,
    pub n_s1: usize,
    pub n_y1_s0: usize,
    pub n_y1_s1: usize,
    pub majority_label: u32,
    /// Change in training discrimination if this leaf's label were flipped.
    pub delta_disc: f64,
    /// Training accuracy lost by the same flip (never negative).
    pub delta_acc: f64,
}

impl LeafFairnessStats {
    pub fn support(&self) -> usize {
        self.n_s0 + self.n_s1
    }

    pub fn n_y1(&self) -> usize {
        self.n_y1_s0 + self.n_y1_s1
    }

    /// Signed contribution of this leaf to a disparity when it emits label 1
    /// with probability one.
    pub fn disc_weight(&self, totals: &FairnessTotals) -> f64 {
        self.n_s0 as f64 / totals.n_s0 as f64 - self.n_s1 as f64 / totals.n_s1 as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessTotals {
    pub sensitive: String,
    pub n_s0: usize,
    pub n_s1: usize,
    pub n_train: usize,
    /// Discrimination of the tree's hard predictions on the training rows.
    pub disc: f64,
}

/// Routes the training rows through a binary target tree and stores, for every
/// leaf, the group counts, majority label, and the effect of flipping it.
pub fn compute_leaf_fairness(
    tree: &mut CartTree,
    train: &Table,
    s_col: &str,
    y_col: &str,
) -> Result<()> {
    if tree.target() != y_col {
        return Err(Error::invalid(format!(
            "tree predicts `{}`, not `{y_col}`",
            tree.target()
        )));
    }
    if tree.target_kind() != ColumnKind::Categorical
        || tree.leaves().iter().any(|l| l.distribution.probs().is_none_or(|p| p.len() != 2))
    {
        return Err(Error::invalid("leaf fairness needs a binary categorical target"));
    }
    let s_idx = train.schema().require(s_col)?;
    let y_idx = train.schema().require(y_col)?;
    let (Some(s), Some(y)) = (
        train.column(s_idx).as_categorical(),
        train.column(y_idx).as_categorical(),
    ) else {
        return Err(Error::invalid("sensitive and target columns must be categorical"));
    };
    if train.dictionary(s_idx).len() != 2 || train.dictionary(y_idx).len() != 2 {
        return Err(Error::invalid("sensitive and target columns must be binary"));
    }

    let router = tree.router(train)?;
    let n_leaves = tree.n_leaves();
    let mut counts = vec![[0usize; 4]; n_leaves]; // n_s0, n_s1, n_y1_s0, n_y1_s1
    for row in 0..train.n_rows() {
        let c = &mut counts[router.leaf(row)];
        let g = s[row] as usize;
        c[g] += 1;
        if y[row] == 1 {
            c[2 + g] += 1;
        }
    }
    let n_s0: usize = counts.iter().map(|c| c[0]).sum();
    let n_s1: usize = counts.iter().map(|c| c[1]).sum();
    if n_s0 == 0 {
        return Err(Error::GroupMissing(0));
    }
    if n_s1 == 0 {
        return Err(Error::GroupMissing(1));
    }
    let n_train = train.n_rows();

    let mut disc = 0.0;
    let mut per_leaf = Vec::with_capacity(n_leaves);
    for (leaf, c) in tree.leaves().iter().zip(&counts) {
        let majority = leaf.distribution.majority().expect("categorical leaf");
        let weight = c[0] as f64 / n_s0 as f64 - c[1] as f64 / n_s1 as f64;
        if majority == 1 {
            disc += weight;
        }
        let n_y1 = c[2] + c[3];
        let n_y0 = c[0] + c[1] - n_y1;
        let (keep, flip) = if majority == 1 { (n_y1, n_y0) } else { (n_y0, n_y1) };
        per_leaf.push(LeafFairnessStats {
            n_s0: c[0],
            n_s1: c[1],
            n_y1_s0: c[2],
            n_y1_s1: c[3],
            majority_label: majority,
            delta_disc: if majority == 0 { weight } else { -weight },
            delta_acc: keep.abs_diff(flip) as f64 / n_train as f64,
        });
    }
    let totals = FairnessTotals {
        sensitive: s_col.to_string(),
        n_s0,
        n_s1,
        n_train,
        disc,
    };
    tree.set_fairness(per_leaf, totals);
    Ok(())
}
