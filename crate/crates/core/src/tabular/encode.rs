//! Mixed-type rows as points in a Euclidean space: numerical columns are
//! min-max scaled, categorical columns are one-hot expanded.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Column, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnStats {
    Numerical { min: f64, max: f64 },
    Categorical { dictionary: Vec<String> },
}

/// Encoding frame fitted on a reference table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingStats {
    pub columns: Vec<ColumnStats>,
}

impl EncodingStats {
    pub fn fit(table: &Table) -> Self {
        let columns = table
            .columns()
            .iter()
            .enumerate()
            .map(|(j, col)| match col {
                Column::Numerical(v) => {
                    let (min, max) = v
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                            (lo.min(x), hi.max(x))
                        });
                    ColumnStats::Numerical { min, max }
                }
                Column::Categorical(_) => ColumnStats::Categorical {
                    dictionary: table.dictionary(j).to_vec(),
                },
            })
            .collect();
        Self { columns }
    }

    pub fn width(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c {
                ColumnStats::Numerical { .. } => 1,
                ColumnStats::Categorical { dictionary } => dictionary.len(),
            })
            .sum()
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        Self {
            n_rows: rows.len(),
            n_cols,
            data: rows.concat(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

/// Encodes `table` in the frame given by `fit_stats`, or in its own frame when
/// none is supplied. Constant reference columns encode as 0.5; categories
/// absent from the reference dictionary encode as an all-zero block.
pub fn encode_for_distance(
    table: &Table,
    fit_stats: Option<&EncodingStats>,
) -> (DenseMatrix, EncodingStats) {
    let stats = fit_stats.cloned().unwrap_or_else(|| EncodingStats::fit(table));
    assert_eq!(stats.columns.len(), table.columns().len(), "frame/schema mismatch");
    let width = stats.width();
    let n = table.n_rows();
    let mut data = vec![0.0; n * width];
    let mut offset = 0;
    for (j, (col, cs)) in table.columns().iter().zip(&stats.columns).enumerate() {
        match (col, cs) {
            (Column::Numerical(v), ColumnStats::Numerical { min, max }) => {
                let range = max - min;
                for (r, &x) in v.iter().enumerate() {
                    data[r * width + offset] = if range > 0.0 { (x - min) / range } else { 0.5 };
                }
                offset += 1;
            }
            (Column::Categorical(codes), ColumnStats::Categorical { dictionary }) => {
                let position: HashMap<&str, usize> = dictionary
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (s.as_str(), i))
                    .collect();
                let slot: Vec<Option<usize>> = table
                    .dictionary(j)
                    .iter()
                    .map(|s| position.get(s.as_str()).copied())
                    .collect();
                for (r, &c) in codes.iter().enumerate() {
                    if let Some(k) = slot[c as usize] {
                        data[r * width + offset + k] = 1.0;
                    }
                }
                offset += dictionary.len();
            }
            _ => panic!("column kind does not match the encoding frame"),
        }
    }
    (
        DenseMatrix {
            n_rows: n,
            n_cols: width,
            data,
        },
        stats,
    )
}
