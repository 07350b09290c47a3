//! Bagged CART forest used as the downstream and detection classifier.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::{fit_tree_on_rows, CartTree, Criterion, Router, TreeParams};
use crate::error::{Error, Result};
use crate::rng;
use crate::tabular::{Column, ColumnKind, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Share of the eligible features given to each tree; `None` means
    /// `ceil(sqrt(d))` features.
    pub feature_fraction: Option<f64>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: Some(12),
            min_samples_leaf: 5,
            feature_fraction: None,
        }
    }
}

impl ForestParams {
    pub fn describe(&self) -> String {
        let depth = self.max_depth.map_or("none".to_string(), |d| d.to_string());
        format!(
            "bagged-cart-forest(n_trees={},max_depth={depth},min_leaf={})",
            self.n_trees, self.min_samples_leaf
        )
    }

    fn features_per_tree(&self, d: usize) -> usize {
        let m = match self.feature_fraction {
            Some(f) => (f * d as f64).round() as usize,
            None => (d as f64).sqrt().ceil() as usize,
        };
        m.clamp(1, d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    target: String,
    /// Label whose probability the forest predicts (code 1 of the target).
    positive_label: String,
    /// Training dictionaries of the categorical predictors.
    dictionaries: BTreeMap<String, Vec<String>>,
    trees: Vec<CartTree>,
    tree_seeds: Vec<u64>,
    params: ForestParams,
}

/// Fits `params.n_trees` trees, each on a bootstrap resample of `train` and a
/// random feature subset drawn from every column except `target` and `exclude`.
pub fn fit_forest(
    train: &Table,
    target: &str,
    exclude: &[String],
    params: &ForestParams,
    seed: u64,
) -> Result<Forest> {
    if params.n_trees == 0 {
        return Err(Error::invalid("a forest needs at least one tree"));
    }
    if exclude.iter().any(|e| e == target) {
        return Err(Error::invalid(format!("target `{target}` cannot be excluded")));
    }
    let schema = train.schema();
    let target_idx = schema.require(target)?;
    let dictionary = train.dictionary(target_idx);
    if schema.kind(target_idx) != ColumnKind::Categorical || dictionary.len() != 2 {
        return Err(Error::invalid(format!("forest target `{target}` must be binary")));
    }
    for e in exclude {
        schema.require(e)?;
    }
    let eligible: Vec<String> = schema
        .columns
        .iter()
        .map(|c| c.name.clone())
        .filter(|n| n != target && !exclude.contains(n))
        .collect();
    if eligible.is_empty() {
        return Err(Error::invalid("no predictor columns left for the forest"));
    }
    let m = params.features_per_tree(eligible.len());
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        min_impurity_decrease: 0.0,
        criterion: Criterion::Gini,
    };
    let n = train.n_rows();
    let tree_seeds: Vec<u64> = (0..params.n_trees as u64).map(|t| rng::derive_seed(seed, t)).collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut r = rng::stream(s);
            let rows: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            let mut picked = index::sample(&mut r, eligible.len(), m).into_vec();
            picked.sort_unstable();
            let predictors: Vec<String> = picked.into_iter().map(|i| eligible[i].clone()).collect();
            fit_tree_on_rows(train, &rows, target, &predictors, &tree_params)
        })
        .collect::<Result<Vec<_>>>()?;

    let dictionaries = eligible
        .iter()
        .filter_map(|name| {
            let idx = schema.index_of(name)?;
            (schema.kind(idx) == ColumnKind::Categorical)
                .then(|| (name.clone(), train.dictionary(idx).to_vec()))
        })
        .collect();
    Ok(Forest {
        target: target.to_string(),
        positive_label: dictionary[1].clone(),
        dictionaries,
        trees,
        tree_seeds,
        params: params.clone(),
    })
}

impl Forest {
    /// Assembles a forest from already fitted binary trees. `dictionaries`
    /// maps each categorical predictor to the labels its codes refer to.
    pub fn from_trees(
        target: &str,
        positive_label: &str,
        dictionaries: BTreeMap<String, Vec<String>>,
        trees: Vec<CartTree>,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::invalid("a forest needs at least one tree"));
        }
        let mut forest = Self {
            target: target.to_string(),
            positive_label: positive_label.to_string(),
            dictionaries,
            trees: Vec::new(),
            tree_seeds: Vec::new(),
            params: ForestParams::default(),
        };
        for tree in trees {
            forest.push_tree(tree)?;
        }
        forest.params.n_trees = forest.trees.len();
        Ok(forest)
    }

    /// Adds a fitted tree predicting the same target.
    pub fn push_tree(&mut self, tree: CartTree) -> Result<()> {
        if tree.target() != self.target || tree.target_kind() != ColumnKind::Categorical {
            return Err(Error::invalid("tree predicts a different target"));
        }
        self.trees.push(tree);
        self.tree_seeds.push(0);
        Ok(())
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn positive_label(&self) -> &str {
        &self.positive_label
    }

    pub fn trees(&self) -> &[CartTree] {
        &self.trees
    }

    pub fn tree_seeds(&self) -> &[u64] {
        &self.tree_seeds
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    /// Mean over trees of the leaf probability of the positive label.
    ///
    /// Categorical predictors are matched by label, so `rows` may use its own
    /// dictionaries; labels unseen at fit time route right.
    pub fn predict_proba(&self, rows: &Table) -> Result<Vec<f64>> {
        let mut bound: BTreeMap<&str, Column> = BTreeMap::new();
        for tree in &self.trees {
            for name in tree.predictors() {
                if bound.contains_key(name.as_str()) {
                    continue;
                }
                let idx = rows.schema().require(name)?;
                let column = match (rows.column(idx), self.dictionaries.get(name)) {
                    (Column::Categorical(codes), Some(dict)) => {
                        let lookup: BTreeMap<&str, u32> =
                            dict.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect();
                        let map: Vec<u32> = rows
                            .dictionary(idx)
                            .iter()
                            .map(|l| lookup.get(l.as_str()).copied().unwrap_or(u32::MAX))
                            .collect();
                        Column::Categorical(codes.iter().map(|&c| map[c as usize]).collect())
                    }
                    (col, _) => col.clone(),
                };
                bound.insert(name.as_str(), column);
            }
        }
        let per_tree = self
            .trees
            .par_iter()
            .map(|tree| {
                let columns = tree.predictors().iter().map(|p| &bound[p.as_str()]).collect();
                let router = Router::new(tree, columns)?;
                let leaf_p1: Vec<f64> = tree
                    .leaves()
                    .iter()
                    .map(|l| l.distribution.probs().and_then(|p| p.get(1).copied()).unwrap_or(0.0))
                    .collect();
                Ok((0..rows.n_rows()).map(|r| leaf_p1[router.leaf(r)]).collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let n_trees = per_tree.len() as f64;
        Ok((0..rows.n_rows())
            .into_par_iter()
            .map(|r| {
                let votes: Vec<f64> = per_tree.iter().map(|t| t[r]).collect();
                (pairwise_sum(&votes) / n_trees).clamp(0.0, 1.0)
            })
            .collect())
    }

    /// Hard predictions: probability at least 0.5.
    pub fn predict(&self, rows: &Table) -> Result<Vec<u32>> {
        Ok(self
            .predict_proba(rows)?
            .into_iter()
            .map(|p| u32::from(p >= 0.5))
            .collect())
    }
}

/// Summation whose rounding does not depend on how work was scheduled.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}
