//! Fair leaf resampling for the target tree.
//!
//! Leaves whose label flip would reduce the training disparity are chosen
//! greedily by disparity gain per unit of accuracy lost, until the disparity
//! reaches the threshold. Their sampling probabilities are then interpolated
//! toward the flipped distribution with weight `lambda`.
//!
//! The search works on oriented quantities: when the baseline disparity is
//! negative, every disparity is multiplied by -1 so that the candidate set is
//! always "leaves that move the disparity toward zero".

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cart::CartTree;
use crate::error::{Error, Result};

pub const PLAN_FORMAT: u32 = 1;

/// Disparity/accuracy effect of flipping one leaf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafImpact {
    pub leaf: usize,
    pub delta_disc: f64,
    pub delta_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Leaf ids in selection order.
    pub leaves: Vec<usize>,
    pub baseline_disc: f64,
    pub new_disc: f64,
    /// +1 when the baseline disparity is non-negative, -1 otherwise.
    pub orientation: f64,
    /// False when every candidate was taken and the threshold is still unmet.
    pub feasible: bool,
    pub n_candidates: usize,
}

/// Greedy leaf search on raw impacts.
pub fn greedy_select_impacts(baseline_disc: f64, impacts: &[LeafImpact], thr_disc: f64) -> Selection {
    let orientation = if baseline_disc < 0.0 { -1.0 } else { 1.0 };
    let mut candidates: Vec<&LeafImpact> = impacts
        .iter()
        .filter(|i| orientation * i.delta_disc < 0.0)
        .collect();
    // Zero-cost leaves first (largest gain first), then by gain/cost ratio.
    candidates.sort_by(|a, b| {
        let (ga, gb) = (a.delta_disc.abs(), b.delta_disc.abs());
        match (a.delta_acc == 0.0, b.delta_acc == 0.0) {
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (true, true) => gb.total_cmp(&ga),
            (false, false) => (gb / b.delta_acc).total_cmp(&(ga / a.delta_acc)),
        }
        .then(a.leaf.cmp(&b.leaf))
    });

    let mut oriented = orientation * baseline_disc;
    let mut leaves = Vec::new();
    for c in &candidates {
        if oriented <= thr_disc {
            break;
        }
        oriented += orientation * c.delta_disc;
        leaves.push(c.leaf);
    }
    Selection {
        leaves,
        baseline_disc,
        new_disc: orientation * oriented,
        orientation,
        feasible: oriented <= thr_disc,
        n_candidates: candidates.len(),
    }
}

/// Per-leaf impacts of a tree whose leaf fairness statistics are populated.
pub fn leaf_impacts(tree: &CartTree) -> Result<(f64, Vec<LeafImpact>)> {
    let totals = tree
        .fairness_totals()
        .ok_or_else(|| Error::invalid("tree has no leaf fairness statistics"))?;
    let impacts = tree
        .leaves()
        .iter()
        .enumerate()
        .map(|(leaf, l)| {
            let f = l.fairness.as_ref().ok_or_else(|| {
                Error::Invariant(format!("leaf {leaf} lacks fairness statistics"))
            })?;
            Ok(LeafImpact {
                leaf,
                delta_disc: f.delta_disc,
                delta_acc: f.delta_acc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((totals.disc, impacts))
}

pub fn greedy_select(tree: &CartTree, thr_disc: f64) -> Result<Selection> {
    let (baseline, impacts) = leaf_impacts(tree)?;
    Ok(greedy_select_impacts(baseline, &impacts, thr_disc))
}

/// `p * (1 - lambda) + (1 - p) * lambda`, entry-wise.
pub fn interpolate(probs: &[f64], lambda: f64) -> Vec<f64> {
    probs
        .iter()
        .map(|&p| p * (1.0 - lambda) + (1.0 - p) * lambda)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafAdjustment {
    pub leaf: usize,
    pub original: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub delta_disc: f64,
    pub delta_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplingPlan {
    pub format: u32,
    pub lambda: f64,
    pub thr_disc: f64,
    pub baseline_disc: f64,
    pub new_disc: f64,
    pub feasible: bool,
    pub orientation: f64,
    pub n_candidates: usize,
    /// Leaf count of the tree the plan was built for.
    pub n_leaves: usize,
    pub leaves: Vec<LeafAdjustment>,
}

impl ResamplingPlan {
    /// Adjusted probabilities per selected leaf.
    pub fn adjusted_probs(&self) -> BTreeMap<usize, &[f64]> {
        self.leaves
            .iter()
            .map(|a| (a.leaf, a.adjusted.as_slice()))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: ResamplingPlan = serde_json::from_str(text)?;
        if plan.format != PLAN_FORMAT {
            return Err(Error::invalid(format!("unsupported plan format {}", plan.format)));
        }
        Ok(plan)
    }

    /// File name used when persisting the plan next to a model.
    pub fn file_name(lambda: f64) -> String {
        format!("plan_lambda{lambda}.json")
    }

    pub fn check_against(&self, tree: &CartTree) -> Result<()> {
        if self.n_leaves != tree.n_leaves() || self.leaves.iter().any(|a| a.leaf >= tree.n_leaves()) {
            return Err(Error::invalid("plan does not belong to this tree"));
        }
        Ok(())
    }
}

pub fn build_plan(tree: &CartTree, lambda: f64, thr_disc: f64) -> Result<ResamplingPlan> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    if !thr_disc.is_finite() {
        return Err(Error::invalid("thr_disc must be finite"));
    }
    let selection = greedy_select(tree, thr_disc)?;
    if !selection.feasible {
        log::warn!(
            "disparity threshold {thr_disc} unreachable: best achievable {:.6} with all {} candidates",
            selection.new_disc,
            selection.n_candidates
        );
    }
    let leaves = selection
        .leaves
        .iter()
        .map(|&leaf| {
            let l = &tree.leaves()[leaf];
            let original = l.distribution.probs().expect("binary target").to_vec();
            let f = l.fairness.as_ref().expect("checked by greedy_select");
            LeafAdjustment {
                leaf,
                adjusted: interpolate(&original, lambda),
                original,
                delta_disc: f.delta_disc,
                delta_acc: f.delta_acc,
            }
        })
        .collect();
    Ok(ResamplingPlan {
        format: PLAN_FORMAT,
        lambda,
        thr_disc,
        baseline_disc: selection.baseline_disc,
        new_disc: selection.new_disc,
        feasible: selection.feasible,
        orientation: selection.orientation,
        n_candidates: selection.n_candidates,
        n_leaves: tree.n_leaves(),
        leaves,
    })
}

/// Expected disparity of labels sampled through the plan, from training
/// group counts: `sum_l p'_l(1) * (n_l(S=0)/n(S=0) - n_l(S=1)/n(S=1))`.
pub fn expected_disc(tree: &CartTree, plan: &ResamplingPlan) -> Result<f64> {
    plan.check_against(tree)?;
    let totals = tree
        .fairness_totals()
        .ok_or_else(|| Error::invalid("tree has no leaf fairness statistics"))?;
    let adjusted = plan.adjusted_probs();
    let mut disc = 0.0;
    for (id, leaf) in tree.leaves().iter().enumerate() {
        let f = leaf
            .fairness
            .as_ref()
            .ok_or_else(|| Error::Invariant(format!("leaf {id} lacks fairness statistics")))?;
        let p1 = match adjusted.get(&id) {
            Some(p) => p[1],
            None => leaf.distribution.probs().expect("binary target")[1],
        };
        disc += p1 * f.disc_weight(totals);
    }
    Ok(disc)
}
