//! CART trees whose leaves keep the empirical distribution of the target.
//!
//! A fitted [`CartTree`] is used two ways: routing a row to a leaf, and
//! drawing new target values from that leaf's [`LeafDistribution`].

mod fairness;
mod fit;

pub use fairness::{compute_leaf_fairness, FairnessTotals, LeafFairnessStats};
pub use fit::{fit_tree, fit_tree_on_rows};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{Column, ColumnKind, Table, Value};

pub const TREE_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

/// Growth limits. `criterion` applies to categorical targets; numerical
/// targets always use variance reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_impurity_decrease: f64,
    pub criterion: Criterion,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 20,
            min_impurity_decrease: 0.0,
            criterion: Criterion::Gini,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SplitTest {
    /// Left iff value <= threshold.
    Threshold { threshold: f64 },
    /// Left iff the category code is in the (sorted) set.
    LeftSet { categories: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    /// Index into the tree's predictor list.
    pub feature: usize,
    pub test: SplitTest,
}

impl SplitRule {
    pub fn goes_left(&self, value: Value) -> bool {
        match (&self.test, value) {
            (SplitTest::Threshold { threshold }, Value::Num(x)) => x <= *threshold,
            (SplitTest::LeftSet { categories }, Value::Cat(c)) => {
                categories.binary_search(&c).is_ok()
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        rule: SplitRule,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LeafDistribution {
    /// Probability per category code of the target dictionary.
    Categorical { probs: Vec<f64>, support: usize },
    /// Training target values routed to the leaf.
    Numerical { values: Vec<f64> },
}

impl LeafDistribution {
    pub fn support(&self) -> usize {
        match self {
            LeafDistribution::Categorical { support, .. } => *support,
            LeafDistribution::Numerical { values } => values.len(),
        }
    }

    pub fn probs(&self) -> Option<&[f64]> {
        match self {
            LeafDistribution::Categorical { probs, .. } => Some(probs),
            LeafDistribution::Numerical { .. } => None,
        }
    }

    /// Most probable category; ties go to the lowest code.
    pub fn majority(&self) -> Option<u32> {
        let probs = self.probs()?;
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        Some(best as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub distribution: LeafDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fairness: Option<LeafFairnessStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartTree {
    format: u32,
    target: String,
    target_kind: ColumnKind,
    predictors: Vec<String>,
    predictor_kinds: Vec<ColumnKind>,
    nodes: Vec<Node>,
    leaves: Vec<Leaf>,
    params: TreeParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fairness: Option<FairnessTotals>,
}

impl CartTree {
    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn target_kind(&self) -> ColumnKind {
        self.target_kind
    }

    pub fn predictors(&self) -> &[String] {
        &self.predictors
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn fairness_totals(&self) -> Option<&FairnessTotals> {
        self.fairness.as_ref()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Binds the predictor columns of `table` by name.
    pub fn router<'a>(&'a self, table: &'a Table) -> Result<Router<'a>> {
        let columns = self
            .predictors
            .iter()
            .map(|name| table.column_by_name(name))
            .collect::<Result<Vec<_>>>()?;
        Router::new(self, columns)
    }

    /// Leaf id for one row of `table`.
    pub fn route(&self, table: &Table, row: usize) -> Result<usize> {
        Ok(self.router(table)?.leaf(row))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tree: CartTree = serde_json::from_str(text)?;
        if tree.format != TREE_FORMAT {
            return Err(Error::invalid(format!("unsupported tree format {}", tree.format)));
        }
        tree.check_structure()?;
        Ok(tree)
    }

    fn check_structure(&self) -> Result<()> {
        if self.nodes.is_empty() || self.leaves.is_empty() {
            return Err(Error::Invariant("tree without nodes".into()));
        }
        if self.predictors.len() != self.predictor_kinds.len() {
            return Err(Error::Invariant("predictor kinds do not match predictors".into()));
        }
        for node in &self.nodes {
            match node {
                Node::Split { rule, left, right } => {
                    if *left >= self.nodes.len()
                        || *right >= self.nodes.len()
                        || rule.feature >= self.predictors.len()
                    {
                        return Err(Error::Invariant("dangling node reference".into()));
                    }
                }
                Node::Leaf { leaf } if *leaf >= self.leaves.len() => {
                    return Err(Error::Invariant("dangling leaf reference".into()));
                }
                Node::Leaf { .. } => {}
            }
        }
        Ok(())
    }

    pub(crate) fn set_fairness(&mut self, per_leaf: Vec<LeafFairnessStats>, totals: FairnessTotals) {
        for (leaf, stats) in self.leaves.iter_mut().zip(per_leaf) {
            leaf.fairness = Some(stats);
        }
        self.fairness = Some(totals);
    }
}

/// A tree bound to concrete predictor columns.
pub struct Router<'a> {
    tree: &'a CartTree,
    columns: Vec<&'a Column>,
}

impl<'a> Router<'a> {
    /// `columns` follow the tree's predictor order.
    pub fn new(tree: &'a CartTree, columns: Vec<&'a Column>) -> Result<Self> {
        if columns.len() != tree.predictors.len() {
            return Err(Error::invalid("predictor column count mismatch"));
        }
        for ((col, kind), name) in columns.iter().zip(&tree.predictor_kinds).zip(&tree.predictors) {
            if col.kind() != *kind {
                return Err(Error::invalid(format!("predictor `{name}` has the wrong kind")));
            }
        }
        Ok(Self { tree, columns })
    }

    pub fn leaf(&self, row: usize) -> usize {
        let nodes = &self.tree.nodes;
        let mut id = 0;
        loop {
            match &nodes[id] {
                Node::Leaf { leaf } => return *leaf,
                Node::Split { rule, left, right } => {
                    let v = self.columns[rule.feature].value(row);
                    id = if rule.goes_left(v) { *left } else { *right };
                }
            }
        }
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }
}

/// Draws `n` codes i.i.d. from `probs`.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], n: usize, rng: &mut R) -> Vec<u32> {
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cumulative.push(acc);
    }
    let last_positive = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let i = cumulative.partition_point(|&c| c <= u);
            i.min(last_positive) as u32
        })
        .collect()
}

/// Draws `n` values from a leaf: categorical leaves by their probabilities,
/// numerical leaves uniformly with replacement from the stored values.
pub fn sample_leaf<R: Rng + ?Sized>(dist: &LeafDistribution, n: usize, rng: &mut R) -> Column {
    match dist {
        LeafDistribution::Categorical { probs, .. } => {
            Column::Categorical(sample_categorical(probs, n, rng))
        }
        LeafDistribution::Numerical { values } => Column::Numerical(
            (0..n)
                .map(|_| values[rng.random_range(0..values.len())])
                .collect(),
        ),
    }
}
