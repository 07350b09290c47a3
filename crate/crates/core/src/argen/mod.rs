//! Autoregressive generation with one tree per column.
//!
//! Columns are generated in a fixed order: the first feature is bootstrapped
//! from its training values, every later column is drawn from the leaf its
//! partially generated row falls into. The sensitive column comes after all
//! features and the target comes last, so a [`ResamplingPlan`] only ever
//! changes the target.

mod order;

pub use order::{association, cramers_v, resolve_order, OrderingStrategy};

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::{compute_leaf_fairness, fit_tree, sample_leaf, CartTree, LeafDistribution, Router, TreeParams};
use crate::error::{Error, Result};
use crate::fairlift::ResamplingPlan;
use crate::rng;
use crate::tabular::{format_g17, Column, ColumnKind, Schema, Table};

pub const MODEL_FORMAT: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub tree: TreeParams,
    /// Let the target tree split on the sensitive column.
    pub y_tree_include_s: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    schema: Schema,
    dictionaries: Vec<Vec<String>>,
    ordering: OrderingStrategy,
    order: Vec<String>,
    bootstrap: Column,
    /// One tree per column of `order[1..]`; the target tree is last.
    trees: Vec<CartTree>,
    seed: u64,
    config: GeneratorConfig,
}

/// Fits the chain on real data: tree `j` maps real `X_<j` to real `X_j`.
pub fn fit_generator(
    train: &Table,
    ordering: OrderingStrategy,
    config: &GeneratorConfig,
    seed: u64,
) -> Result<GeneratorModel> {
    let schema = train.schema();
    if schema.feature_names().is_empty() {
        return Err(Error::invalid("the table has no feature columns besides S and Y"));
    }
    let order = resolve_order(train, ordering);
    let first = schema.require(&order[0])?;
    let bootstrap = train.column(first).clone();

    let sensitive = schema.sensitive.as_str();
    let target = schema.target.as_str();
    let trees = (1..order.len())
        .into_par_iter()
        .map(|j| {
            let column = &order[j];
            let predictors: Vec<String> = order[..j]
                .iter()
                .filter(|p| column != target || config.y_tree_include_s || p.as_str() != sensitive)
                .cloned()
                .collect();
            let mut tree = fit_tree(train, column, &predictors, &config.tree)?;
            if column == target {
                compute_leaf_fairness(&mut tree, train, sensitive, target)?;
            }
            Ok(tree)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GeneratorModel {
        schema: schema.clone(),
        dictionaries: train.dictionaries().to_vec(),
        ordering,
        order,
        bootstrap,
        trees,
        seed,
        config: config.clone(),
    })
}

impl GeneratorModel {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn dictionaries(&self) -> &[Vec<String>] {
        &self.dictionaries
    }

    pub fn ordering(&self) -> OrderingStrategy {
        self.ordering
    }

    /// Generation order, ending with S then Y.
    pub fn order(&self) -> &[String] {
        &self.order
    }

    pub fn bootstrap(&self) -> &Column {
        &self.bootstrap
    }

    pub fn trees(&self) -> &[CartTree] {
        &self.trees
    }

    pub fn tree_for(&self, column: &str) -> Option<&CartTree> {
        self.trees.iter().find(|t| t.target() == column)
    }

    pub fn y_tree(&self) -> &CartTree {
        self.trees.last().expect("model has a target tree")
    }

    pub fn s_tree(&self) -> &CartTree {
        &self.trees[self.trees.len() - 2]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    /// Writes `model.json`, one `tree_<column>.json` per tree and
    /// `bootstrap_<column>.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut used = std::collections::HashSet::new();
        let mut tree_files = Vec::with_capacity(self.trees.len());
        for (j, tree) in self.trees.iter().enumerate() {
            let mut name = format!("tree_{}.json", file_stem(tree.target()));
            if !used.insert(name.clone()) {
                name = format!("tree_{}_{}.json", file_stem(tree.target()), j + 1);
                used.insert(name.clone());
            }
            write_file(&dir.join(&name), &tree.to_json()?)?;
            tree_files.push(name);
        }
        let bootstrap_file = format!("bootstrap_{}.csv", file_stem(&self.order[0]));
        self.write_bootstrap(&dir.join(&bootstrap_file))?;
        let manifest = Manifest {
            format: MODEL_FORMAT,
            schema: self.schema.clone(),
            dictionaries: self.dictionaries.clone(),
            ordering: self.ordering,
            order: self.order.clone(),
            seed: self.seed,
            config: self.config.clone(),
            bootstrap_file,
            tree_files,
        };
        write_file(&dir.join("model.json"), &serde_json::to_string_pretty(&manifest)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&read_file(&dir.join("model.json"))?)?;
        if manifest.format != MODEL_FORMAT {
            return Err(Error::invalid(format!("unsupported model format {}", manifest.format)));
        }
        manifest.schema.validate()?;
        if manifest.order.len() != manifest.tree_files.len() + 1
            || manifest.dictionaries.len() != manifest.schema.len()
        {
            return Err(Error::Invariant("model manifest is inconsistent".into()));
        }
        let trees = manifest
            .tree_files
            .iter()
            .map(|f| CartTree::from_json(&read_file(&dir.join(f))?))
            .collect::<Result<Vec<_>>>()?;
        for (tree, column) in trees.iter().zip(&manifest.order[1..]) {
            if tree.target() != column {
                return Err(Error::Invariant(format!(
                    "tree file for `{column}` predicts `{}`",
                    tree.target()
                )));
            }
        }
        let first = manifest.schema.require(&manifest.order[0])?;
        let bootstrap = read_bootstrap(
            &dir.join(&manifest.bootstrap_file),
            manifest.schema.kind(first),
            &manifest.dictionaries[first],
        )?;
        Ok(Self {
            schema: manifest.schema,
            dictionaries: manifest.dictionaries,
            ordering: manifest.ordering,
            order: manifest.order,
            bootstrap,
            trees,
            seed: manifest.seed,
            config: manifest.config,
        })
    }

    fn write_bootstrap(&self, path: &Path) -> Result<()> {
        let first = self.schema.require(&self.order[0])?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([&self.order[0]])?;
        match &self.bootstrap {
            Column::Numerical(v) => {
                for x in v {
                    w.write_record([format_g17(*x)])?;
                }
            }
            Column::Categorical(v) => {
                for &c in v {
                    w.write_record([&self.dictionaries[first][c as usize]])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: u32,
    schema: Schema,
    dictionaries: Vec<Vec<String>>,
    ordering: OrderingStrategy,
    order: Vec<String>,
    seed: u64,
    config: GeneratorConfig,
    bootstrap_file: String,
    tree_files: Vec<String>,
}

fn file_stem(column: &str) -> String {
    column
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_bootstrap(path: &Path, kind: ColumnKind, dictionary: &[String]) -> Result<Column> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    })?;
    let lookup: std::collections::HashMap<&str, u32> = dictionary
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as u32))
        .collect();
    let mut nums = Vec::new();
    let mut cats = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(0).unwrap_or("");
        let bad = || Error::ParseError {
            row: r + 1,
            col: path.display().to_string(),
            value: cell.to_string(),
        };
        match kind {
            ColumnKind::Numerical => nums.push(cell.parse::<f64>().map_err(|_| bad())?),
            ColumnKind::Categorical => cats.push(*lookup.get(cell).ok_or_else(bad)?),
        }
    }
    let col = match kind {
        ColumnKind::Numerical => Column::Numerical(nums),
        ColumnKind::Categorical => Column::Categorical(cats),
    };
    if col.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(col)
}

/// Draws `n` synthetic rows. With a plan, the target is drawn from the plan's
/// adjusted probabilities in the selected leaves.
///
/// Column `j` uses the substream `derive(seed, j)` and leaf `l` of that column
/// uses `derive(derive(seed, j), l)`, so every column except the target is
/// identical with and without a plan.
pub fn sample_synthetic(
    model: &GeneratorModel,
    n: usize,
    plan: Option<&ResamplingPlan>,
    seed: u64,
) -> Result<Table> {
    if n == 0 {
        return Err(Error::invalid("cannot sample zero rows"));
    }
    if let Some(plan) = plan {
        plan.check_against(model.y_tree())?;
    }
    let schema = &model.schema;
    let mut columns: Vec<Option<Column>> = vec![None; schema.len()];

    let first = schema.require(&model.order[0])?;
    let mut boot_rng = rng::substream(seed, 0);
    let pool = model.bootstrap.len();
    let picks: Vec<usize> = (0..n).map(|_| boot_rng.random_range(0..pool)).collect();
    columns[first] = Some(model.bootstrap.take(&picks));

    let y_position = model.trees.len() - 1;
    for (j, tree) in model.trees.iter().enumerate() {
        let column_seed = rng::derive_seed(seed, j as u64 + 1);
        let overrides = match plan {
            Some(p) if j == y_position => p.adjusted_probs(),
            _ => Default::default(),
        };
        let generated = {
            let inputs = tree
                .predictors()
                .iter()
                .map(|p| {
                    let idx = schema.require(p)?;
                    columns[idx]
                        .as_ref()
                        .ok_or_else(|| Error::Invariant(format!("`{p}` used before generation")))
                })
                .collect::<Result<Vec<_>>>()?;
            let router = Router::new(tree, inputs)?;
            let leaf_of: Vec<usize> = (0..n).into_par_iter().map(|r| router.leaf(r)).collect();
            let groups = group_by_leaf(&leaf_of, tree.n_leaves());
            let draws: Vec<(usize, Column)> = groups
                .par_iter()
                .enumerate()
                .filter(|(_, idx)| !idx.is_empty())
                .map(|(leaf, idx)| {
                    let mut leaf_rng = rng::substream(column_seed, leaf as u64);
                    let dist = &tree.leaves()[leaf].distribution;
                    let values = match overrides.get(&leaf) {
                        Some(p) => sample_leaf(
                            &LeafDistribution::Categorical {
                                probs: p.to_vec(),
                                support: dist.support(),
                            },
                            idx.len(),
                            &mut leaf_rng,
                        ),
                        None => sample_leaf(dist, idx.len(), &mut leaf_rng),
                    };
                    (leaf, values)
                })
                .collect();
            scatter(tree.target_kind(), n, &groups, draws)
        };
        let idx = schema.require(tree.target())?;
        columns[idx] = Some(generated);
    }

    let columns = columns
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| Error::Invariant(format!("column {i} was never generated"))))
        .collect::<Result<Vec<_>>>()?;
    Table::new(schema.clone(), columns, model.dictionaries.clone())
}

/// Row indices per leaf; together they partition `0..leaf_of.len()`.
fn group_by_leaf(leaf_of: &[usize], n_leaves: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); n_leaves];
    for (row, &leaf) in leaf_of.iter().enumerate() {
        groups[leaf].push(row);
    }
    groups
}

fn scatter(kind: ColumnKind, n: usize, groups: &[Vec<usize>], draws: Vec<(usize, Column)>) -> Column {
    match kind {
        ColumnKind::Numerical => {
            let mut out = vec![0.0; n];
            for (leaf, values) in draws {
                let Column::Numerical(v) = values else { unreachable!() };
                for (&row, x) in groups[leaf].iter().zip(v) {
                    out[row] = x;
                }
            }
            Column::Numerical(out)
        }
        ColumnKind::Categorical => {
            let mut out = vec![0u32; n];
            for (leaf, values) in draws {
                let Column::Categorical(v) = values else { unreachable!() };
                for (&row, c) in groups[leaf].iter().zip(v) {
                    out[row] = c;
                }
            }
            Column::Categorical(out)
        }
    }
}
