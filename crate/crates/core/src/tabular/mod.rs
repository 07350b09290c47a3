//! Columnar tables with per-column type metadata.
//!
//! A [`Table`] stores numerical columns as `f64` and categorical columns as
//! `u32` codes into a per-column dictionary of labels. Dictionaries built by
//! [`load_csv`] are the sorted set of observed labels, so code assignment does
//! not depend on row or column order. For the binary sensitive and target
//! columns this makes code `1` the lexicographically larger label.

mod encode;
mod folds;
mod io;

pub use encode::{encode_for_distance, ColumnStats, DenseMatrix, EncodingStats};
pub use folds::{make_folds, FoldSplit};
pub use io::{format_g17, load_csv, write_csv, LoadOptions};

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numerical,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    pub fn numerical(name: impl Into<String>) -> Self {
        Self::new(name, ColumnKind::Numerical)
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Self::new(name, ColumnKind::Categorical)
    }
}

/// Ordered column list plus the sensitive (S) and target (Y) designations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    pub sensitive: String,
    pub target: String,
}

impl Schema {
    pub fn new(
        columns: Vec<ColumnSpec>,
        sensitive: impl Into<String>,
        target: impl Into<String>,
    ) -> Result<Self> {
        let schema = Self {
            columns,
            sensitive: sensitive.into(),
            target: target.into(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
        }
        if self.sensitive == self.target {
            return Err(Error::Schema(
                "sensitive and target must be different columns".into(),
            ));
        }
        for role in [&self.sensitive, &self.target] {
            let spec = self
                .columns
                .iter()
                .find(|c| &c.name == role)
                .ok_or_else(|| Error::Schema(format!("column `{role}` is not in the schema")))?;
            if spec.kind != ColumnKind::Categorical {
                return Err(Error::Schema(format!("column `{role}` must be categorical")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn kind(&self, index: usize) -> ColumnKind {
        self.columns[index].kind
    }

    pub fn sensitive_index(&self) -> usize {
        self.index_of(&self.sensitive).expect("validated schema")
    }

    pub fn target_index(&self) -> usize {
        self.index_of(&self.target).expect("validated schema")
    }

    /// Names of the non-sensitive, non-target columns in schema order.
    pub fn feature_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.name != self.sensitive && c.name != self.target)
            .map(|c| c.name.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numerical(Vec<f64>),
    Categorical(Vec<u32>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numerical(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Numerical(_) => ColumnKind::Numerical,
            Column::Categorical(_) => ColumnKind::Categorical,
        }
    }

    pub fn value(&self, row: usize) -> Value {
        match self {
            Column::Numerical(v) => Value::Num(v[row]),
            Column::Categorical(v) => Value::Cat(v[row]),
        }
    }

    pub fn as_numerical(&self) -> Option<&[f64]> {
        match self {
            Column::Numerical(v) => Some(v),
            Column::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&[u32]> {
        match self {
            Column::Categorical(v) => Some(v),
            Column::Numerical(_) => None,
        }
    }

    pub fn take(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numerical(v) => Column::Numerical(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    Cat(u32),
}

/// An immutable, schema-conforming dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Schema,
    columns: Vec<Column>,
    /// One dictionary per schema column; empty for numerical columns.
    dictionaries: Vec<Vec<String>>,
    n_rows: usize,
}

impl Table {
    /// Assembles a table from typed columns. Columns and dictionaries follow
    /// schema order.
    pub fn new(schema: Schema, columns: Vec<Column>, dictionaries: Vec<Vec<String>>) -> Result<Self> {
        schema.validate()?;
        if columns.len() != schema.len() || dictionaries.len() != schema.len() {
            return Err(Error::invalid(format!(
                "expected {} columns and dictionaries, got {} and {}",
                schema.len(),
                columns.len(),
                dictionaries.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Column::len);
        if n_rows == 0 {
            return Err(Error::EmptyTable);
        }
        for (i, (col, spec)) in columns.iter().zip(&schema.columns).enumerate() {
            if col.kind() != spec.kind {
                return Err(Error::invalid(format!("column `{}` has the wrong kind", spec.name)));
            }
            if col.len() != n_rows {
                return Err(Error::invalid(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    spec.name,
                    col.len()
                )));
            }
            match col {
                Column::Numerical(v) => {
                    if let Some(r) = v.iter().position(|x| !x.is_finite()) {
                        return Err(Error::ParseError {
                            row: r + 1,
                            col: spec.name.clone(),
                            value: v[r].to_string(),
                        });
                    }
                    if !dictionaries[i].is_empty() {
                        return Err(Error::invalid(format!(
                            "numerical column `{}` cannot carry a dictionary",
                            spec.name
                        )));
                    }
                }
                Column::Categorical(v) => {
                    let size = dictionaries[i].len() as u32;
                    if let Some(&bad) = v.iter().find(|&&c| c >= size) {
                        return Err(Error::invalid(format!(
                            "code {bad} outside the dictionary of `{}`",
                            spec.name
                        )));
                    }
                }
            }
        }
        let table = Self {
            schema,
            columns,
            dictionaries,
            n_rows,
        };
        table.check_binary_roles()?;
        Ok(table)
    }

    /// Builds a table from string cells given in schema order. Dictionaries are
    /// the sorted observed labels.
    pub fn from_string_rows(schema: Schema, rows: &[Vec<String>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyTable);
        }
        let mut columns = Vec::with_capacity(schema.len());
        let mut dictionaries = Vec::with_capacity(schema.len());
        for (j, spec) in schema.columns.iter().enumerate() {
            match spec.kind {
                ColumnKind::Numerical => {
                    let mut values = Vec::with_capacity(rows.len());
                    for (r, row) in rows.iter().enumerate() {
                        let cell = row[j].trim();
                        let v: f64 = cell.parse().map_err(|_| Error::ParseError {
                            row: r + 1,
                            col: spec.name.clone(),
                            value: cell.to_string(),
                        })?;
                        if !v.is_finite() {
                            return Err(Error::ParseError {
                                row: r + 1,
                                col: spec.name.clone(),
                                value: cell.to_string(),
                            });
                        }
                        values.push(v);
                    }
                    columns.push(Column::Numerical(values));
                    dictionaries.push(Vec::new());
                }
                ColumnKind::Categorical => {
                    let labels: BTreeSet<&str> = rows.iter().map(|r| r[j].trim()).collect();
                    let dict: Vec<String> = labels.into_iter().map(str::to_string).collect();
                    let lookup: HashMap<&str, u32> = dict
                        .iter()
                        .enumerate()
                        .map(|(i, s)| (s.as_str(), i as u32))
                        .collect();
                    let codes = rows.iter().map(|r| lookup[r[j].trim()]).collect();
                    columns.push(Column::Categorical(codes));
                    dictionaries.push(dict);
                }
            }
        }
        Self::new(schema, columns, dictionaries)
    }

    fn check_binary_roles(&self) -> Result<()> {
        for role in [&self.schema.sensitive, &self.schema.target] {
            let idx = self.schema.require(role)?;
            if self.dictionaries[idx].len() != 2 {
                return Err(Error::Schema(format!(
                    "column `{role}` must be binary, found {} categories",
                    self.dictionaries[idx].len()
                )));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    pub fn column_by_name(&self, name: &str) -> Result<&Column> {
        Ok(&self.columns[self.schema.require(name)?])
    }

    pub fn dictionaries(&self) -> &[Vec<String>] {
        &self.dictionaries
    }

    pub fn dictionary(&self, index: usize) -> &[String] {
        &self.dictionaries[index]
    }

    /// The string form of a cell, as written to CSV.
    pub fn cell_string(&self, col: usize, row: usize) -> String {
        match &self.columns[col] {
            Column::Numerical(v) => format_g17(v[row]),
            Column::Categorical(v) => self.dictionaries[col][v[row] as usize].clone(),
        }
    }

    /// Binary 0/1 codes of the sensitive column.
    pub fn sensitive_codes(&self) -> &[u32] {
        self.columns[self.schema.sensitive_index()]
            .as_categorical()
            .expect("validated schema")
    }

    /// Binary 0/1 codes of the target column.
    pub fn target_codes(&self) -> &[u32] {
        self.columns[self.schema.target_index()]
            .as_categorical()
            .expect("validated schema")
    }

    /// Row subset (duplicates allowed) sharing this table's dictionaries.
    pub fn take_rows(&self, rows: &[usize]) -> Result<Table> {
        if rows.is_empty() {
            return Err(Error::EmptyTable);
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_rows) {
            return Err(Error::invalid(format!("row {bad} out of range")));
        }
        Ok(Table {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            dictionaries: self.dictionaries.clone(),
            n_rows: rows.len(),
        })
    }

    /// Re-expresses categorical codes in the given dictionaries (schema order).
    /// Labels missing from a target dictionary are appended to it, so the
    /// result is lossless; numerical columns are unchanged.
    pub fn recode_to(&self, dictionaries: &[Vec<String>]) -> Result<Table> {
        if dictionaries.len() != self.schema.len() {
            return Err(Error::invalid("dictionary count does not match the schema"));
        }
        let mut columns = Vec::with_capacity(self.columns.len());
        let mut dicts = Vec::with_capacity(self.columns.len());
        for (j, col) in self.columns.iter().enumerate() {
            match col {
                Column::Numerical(v) => {
                    columns.push(Column::Numerical(v.clone()));
                    dicts.push(Vec::new());
                }
                Column::Categorical(codes) => {
                    let mut dict = dictionaries[j].clone();
                    let mut lookup: HashMap<String, u32> = dict
                        .iter()
                        .enumerate()
                        .map(|(i, s)| (s.clone(), i as u32))
                        .collect();
                    let mapping: Vec<u32> = self.dictionaries[j]
                        .iter()
                        .map(|label| {
                            *lookup.entry(label.clone()).or_insert_with(|| {
                                dict.push(label.clone());
                                (dict.len() - 1) as u32
                            })
                        })
                        .collect();
                    columns.push(Column::Categorical(
                        codes.iter().map(|&c| mapping[c as usize]).collect(),
                    ));
                    dicts.push(dict);
                }
            }
        }
        Ok(Table {
            schema: self.schema.clone(),
            columns,
            dictionaries: dicts,
            n_rows: self.n_rows,
        })
    }

    /// Checks that `other` has the same column names, kinds and roles.
    pub fn check_compatible(&self, other: &Table) -> Result<()> {
        if self.schema != other.schema {
            return Err(Error::Schema("tables have different schemas".into()));
        }
        Ok(())
    }

    /// Stacks `other` below `self`; categorical dictionaries are merged.
    pub fn concat(&self, other: &Table) -> Result<Table> {
        self.check_compatible(other)?;
        let other = other.recode_to(&self.dictionaries)?;
        let mut left = self.recode_to(&other.dictionaries)?;
        for (dst, src) in left.columns.iter_mut().zip(other.columns) {
            match (dst, src) {
                (Column::Numerical(a), Column::Numerical(b)) => a.extend(b),
                (Column::Categorical(a), Column::Categorical(b)) => a.extend(b),
                _ => unreachable!("schemas checked"),
            }
        }
        left.n_rows += other.n_rows;
        Ok(left)
    }

    /// Adds a categorical column at the end of the schema, keeping S and Y.
    pub fn with_categorical_column(
        &self,
        name: &str,
        codes: Vec<u32>,
        dictionary: Vec<String>,
    ) -> Result<Table> {
        if codes.len() != self.n_rows {
            return Err(Error::invalid("new column has the wrong length"));
        }
        let mut schema = self.schema.clone();
        schema.columns.push(ColumnSpec::categorical(name));
        let mut columns = self.columns.clone();
        columns.push(Column::Categorical(codes));
        let mut dictionaries = self.dictionaries.clone();
        dictionaries.push(dictionary);
        Table::new(schema, columns, dictionaries)
    }

    /// Same data under a schema with different S/Y designations.
    pub fn with_roles(&self, sensitive: &str, target: &str) -> Result<Table> {
        let schema = Schema::new(self.schema.columns.clone(), sensitive, target)?;
        Table::new(schema, self.columns.clone(), self.dictionaries.clone())
    }
}
