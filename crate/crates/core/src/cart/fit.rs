//! Greedy top-down tree growth.
//!
//! Every candidate split is scored by impurity decrease
//! `(I(node) - I(left) - I(right)) / n_node`, where `I` is the node's total
//! impurity (n times Gini / entropy, or the sum of squared deviations).
//! Categorical features are reduced to an ordinal scan by ordering their
//! categories by a per-category target statistic.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::tabular::{Column, Table};

use super::{CartTree, Criterion, Leaf, LeafDistribution, Node, SplitRule, SplitTest, TreeParams, TREE_FORMAT};

/// Gains closer than this are treated as equal.
const GAIN_TOLERANCE: f64 = 1e-12;

/// Fits a tree predicting `target` from `predictors` on every row of `table`.
pub fn fit_tree(
    table: &Table,
    target: &str,
    predictors: &[String],
    params: &TreeParams,
) -> Result<CartTree> {
    let rows: Vec<usize> = (0..table.n_rows()).collect();
    fit_tree_on_rows(table, &rows, target, predictors, params)
}

/// Fits on a row multiset (duplicates allowed, e.g. a bootstrap sample).
pub fn fit_tree_on_rows(
    table: &Table,
    rows: &[usize],
    target: &str,
    predictors: &[String],
    params: &TreeParams,
) -> Result<CartTree> {
    if predictors.is_empty() {
        return Err(Error::invalid("predictor list is empty"));
    }
    if predictors.iter().any(|p| p == target) {
        return Err(Error::invalid(format!("target `{target}` is also a predictor")));
    }
    if params.min_samples_leaf == 0 {
        return Err(Error::invalid("min_samples_leaf must be at least 1"));
    }
    if rows.len() < 2 * params.min_samples_leaf {
        return Err(Error::invalid(format!(
            "{} rows cannot fill two leaves of {} samples",
            rows.len(),
            params.min_samples_leaf
        )));
    }
    let schema = table.schema();
    let target_idx = schema.require(target)?;
    let mut features = Vec::with_capacity(predictors.len());
    let mut kinds = Vec::with_capacity(predictors.len());
    for p in predictors {
        let idx = schema.require(p)?;
        features.push(table.column(idx));
        kinds.push(schema.kind(idx));
    }
    let target_ref = match table.column(target_idx) {
        Column::Categorical(codes) => TargetRef::Class {
            codes,
            n_classes: table.dictionary(target_idx).len(),
        },
        Column::Numerical(values) => TargetRef::Reg(values),
    };

    let mut fitter = Fitter {
        features,
        target: target_ref,
        params,
        nodes: Vec::new(),
        leaves: Vec::new(),
    };
    fitter.grow(rows.to_vec());

    Ok(CartTree {
        format: TREE_FORMAT,
        target: target.to_string(),
        target_kind: schema.kind(target_idx),
        predictors: predictors.to_vec(),
        predictor_kinds: kinds,
        nodes: fitter.nodes,
        leaves: fitter.leaves,
        params: params.clone(),
        fairness: None,
    })
}

#[derive(Clone, Copy)]
enum TargetRef<'a> {
    Class { codes: &'a [u32], n_classes: usize },
    Reg(&'a [f64]),
}

struct Fitter<'a> {
    features: Vec<&'a Column>,
    target: TargetRef<'a>,
    params: &'a TreeParams,
    nodes: Vec<Node>,
    leaves: Vec<Leaf>,
}

struct Candidate {
    feature: usize,
    test: SplitTest,
    gain: f64,
}

impl<'a> Fitter<'a> {
    fn grow(&mut self, rows: Vec<usize>) {
        self.nodes.push(Node::Leaf { leaf: usize::MAX });
        let mut stack = vec![(0usize, rows, 0usize)];
        while let Some((node_id, rows, depth)) = stack.pop() {
            let split = self.try_split(&rows, depth);
            match split {
                None => {
                    let leaf = self.leaves.len();
                    self.leaves.push(Leaf {
                        distribution: self.distribution(&rows),
                        fairness: None,
                    });
                    self.nodes[node_id] = Node::Leaf { leaf };
                }
                Some(cand) => {
                    let rule = SplitRule {
                        feature: cand.feature,
                        test: cand.test,
                    };
                    let col = self.features[rule.feature];
                    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&r| rule.goes_left(col.value(r)));
                    let left = self.nodes.len();
                    let right = left + 1;
                    self.nodes.push(Node::Leaf { leaf: usize::MAX });
                    self.nodes.push(Node::Leaf { leaf: usize::MAX });
                    self.nodes[node_id] = Node::Split { rule, left, right };
                    stack.push((right, right_rows, depth + 1));
                    stack.push((left, left_rows, depth + 1));
                }
            }
        }
    }

    fn try_split(&self, rows: &[usize], depth: usize) -> Option<Candidate> {
        if self.params.max_depth.is_some_and(|d| depth >= d) {
            return None;
        }
        if rows.len() < 2 * self.params.min_samples_leaf || self.is_pure(rows) {
            return None;
        }
        let best = best_split(&self.features, self.target, self.params, rows)?;
        (best.gain >= self.params.min_impurity_decrease - GAIN_TOLERANCE).then_some(best)
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        match self.target {
            TargetRef::Class { codes, .. } => {
                let first = codes[rows[0]];
                rows.iter().all(|&r| codes[r] == first)
            }
            TargetRef::Reg(values) => {
                let first = values[rows[0]];
                rows.iter().all(|&r| values[r] == first)
            }
        }
    }

    fn distribution(&self, rows: &[usize]) -> LeafDistribution {
        match self.target {
            TargetRef::Class { codes, n_classes } => {
                let mut counts = vec![0usize; n_classes];
                for &r in rows {
                    counts[codes[r] as usize] += 1;
                }
                let n = rows.len() as f64;
                LeafDistribution::Categorical {
                    probs: counts.iter().map(|&c| c as f64 / n).collect(),
                    support: rows.len(),
                }
            }
            TargetRef::Reg(values) => LeafDistribution::Numerical {
                values: rows.iter().map(|&r| values[r]).collect(),
            },
        }
    }
}

/// Running impurity statistics for one side of a split.
#[derive(Clone)]
enum Side {
    Gini { counts: Vec<f64>, sum_sq: f64, n: f64 },
    Entropy { counts: Vec<f64>, c_log_c: f64, n: f64 },
    Var { sum: f64, sum_sq: f64, n: f64 },
}

fn x_log_x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

impl Side {
    fn empty(target: TargetRef<'_>, criterion: Criterion) -> Self {
        match (target, criterion) {
            (TargetRef::Class { n_classes, .. }, Criterion::Gini) => Side::Gini {
                counts: vec![0.0; n_classes],
                sum_sq: 0.0,
                n: 0.0,
            },
            (TargetRef::Class { n_classes, .. }, Criterion::Entropy) => Side::Entropy {
                counts: vec![0.0; n_classes],
                c_log_c: 0.0,
                n: 0.0,
            },
            (TargetRef::Reg(_), _) => Side::Var {
                sum: 0.0,
                sum_sq: 0.0,
                n: 0.0,
            },
        }
    }

    /// `class` is used for classification, `y` (already centred) for regression.
    #[inline]
    fn add(&mut self, class: usize, y: f64, sign: f64) {
        match self {
            Side::Gini { counts, sum_sq, n } => {
                let c = counts[class];
                let c2 = c + sign;
                *sum_sq += c2 * c2 - c * c;
                counts[class] = c2;
                *n += sign;
            }
            Side::Entropy { counts, c_log_c, n } => {
                let c = counts[class];
                let c2 = c + sign;
                *c_log_c += x_log_x(c2) - x_log_x(c);
                counts[class] = c2;
                *n += sign;
            }
            Side::Var { sum, sum_sq, n } => {
                *sum += sign * y;
                *sum_sq += sign * y * y;
                *n += sign;
            }
        }
    }

    fn n(&self) -> f64 {
        match self {
            Side::Gini { n, .. } | Side::Entropy { n, .. } | Side::Var { n, .. } => *n,
        }
    }

    /// n times the impurity of this side.
    fn total_impurity(&self) -> f64 {
        match self {
            Side::Gini { sum_sq, n, .. } => {
                if *n > 0.0 {
                    n - sum_sq / n
                } else {
                    0.0
                }
            }
            Side::Entropy { c_log_c, n, .. } => x_log_x(*n) - c_log_c,
            Side::Var { sum, sum_sq, n } => {
                if *n > 0.0 {
                    (sum_sq - sum * sum / n).max(0.0)
                } else {
                    0.0
                }
            }
        }
    }
}

fn target_parts(target: TargetRef<'_>, row: usize, mean: f64) -> (usize, f64) {
    match target {
        TargetRef::Class { codes, .. } => (codes[row] as usize, 0.0),
        TargetRef::Reg(values) => (0, values[row] - mean),
    }
}

/// Best split of `rows` over all features; ties keep the lowest feature index
/// and then the lowest threshold.
fn best_split(
    features: &[&Column],
    target: TargetRef<'_>,
    params: &TreeParams,
    rows: &[usize],
) -> Option<Candidate> {
    let mean = match target {
        TargetRef::Reg(values) => rows.iter().map(|&r| values[r]).sum::<f64>() / rows.len() as f64,
        TargetRef::Class { .. } => 0.0,
    };
    let mut parent = Side::empty(target, params.criterion);
    for &r in rows {
        let (c, y) = target_parts(target, r, mean);
        parent.add(c, y, 1.0);
    }
    let parent_total = parent.total_impurity();
    let n = rows.len() as f64;

    let mut best: Option<Candidate> = None;
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    for (f, col) in features.iter().enumerate() {
        keyed.clear();
        let ordered_categories = match col {
            Column::Numerical(values) => {
                keyed.extend(rows.iter().map(|&r| (values[r], r)));
                None
            }
            Column::Categorical(codes) => {
                let order = category_order(codes, target, rows, mean);
                let mut rank = vec![u32::MAX; order.iter().map(|&c| c as usize + 1).max().unwrap_or(0)];
                for (i, &c) in order.iter().enumerate() {
                    rank[c as usize] = i as u32;
                }
                keyed.extend(rows.iter().map(|&r| (rank[codes[r] as usize] as f64, r)));
                Some(order)
            }
        };
        keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut left = Side::empty(target, params.criterion);
        let mut right = parent.clone();
        let min_leaf = params.min_samples_leaf as f64;
        for i in 0..keyed.len() - 1 {
            let (key, row) = keyed[i];
            let (c, y) = target_parts(target, row, mean);
            left.add(c, y, 1.0);
            right.add(c, y, -1.0);
            let next_key = keyed[i + 1].0;
            if key == next_key || left.n() < min_leaf || right.n() < min_leaf {
                continue;
            }
            let gain = (parent_total - left.total_impurity() - right.total_impurity()) / n;
            if best.as_ref().is_some_and(|b| gain <= b.gain + GAIN_TOLERANCE) {
                continue;
            }
            let test = match &ordered_categories {
                None => {
                    let mid = key + (next_key - key) / 2.0;
                    let threshold = if mid < next_key { mid } else { key };
                    SplitTest::Threshold { threshold }
                }
                Some(order) => {
                    let mut categories = order[..=key as usize].to_vec();
                    categories.sort_unstable();
                    SplitTest::LeftSet { categories }
                }
            };
            best = Some(Candidate {
                feature: f,
                test,
                gain,
            });
        }
    }
    best
}

/// Categories present in `rows`, ordered by the share of the node's majority
/// class (classification) or the mean target (regression); ties by code.
fn category_order(codes: &[u32], target: TargetRef<'_>, rows: &[usize], mean: f64) -> Vec<u32> {
    let n_cats = rows.iter().map(|&r| codes[r] as usize + 1).max().unwrap_or(0);
    let mut count = vec![0.0f64; n_cats];
    let mut stat = vec![0.0f64; n_cats];
    match target {
        TargetRef::Class { codes: y, n_classes } => {
            let mut class_counts = vec![0usize; n_classes];
            for &r in rows {
                class_counts[y[r] as usize] += 1;
            }
            let mut majority = 0;
            for (k, &c) in class_counts.iter().enumerate() {
                if c > class_counts[majority] {
                    majority = k;
                }
            }
            for &r in rows {
                count[codes[r] as usize] += 1.0;
                if y[r] as usize == majority {
                    stat[codes[r] as usize] += 1.0;
                }
            }
        }
        TargetRef::Reg(values) => {
            for &r in rows {
                count[codes[r] as usize] += 1.0;
                stat[codes[r] as usize] += values[r] - mean;
            }
        }
    }
    let mut present: Vec<(u32, f64)> = (0..n_cats)
        .filter(|&c| count[c] > 0.0)
        .map(|c| (c as u32, stat[c] / count[c]))
        .collect();
    present.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    present.into_iter().map(|(c, _)| c).collect()
}
