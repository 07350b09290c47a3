#![allow(dead_code)]

use fairgdt::tabular::{Column, ColumnSpec, Schema, Table};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn strings(row: &[&str]) -> Vec<String> {
    row.iter().map(|s| s.to_string()).collect()
}

/// Builds a table from string rows; `specs` gives (name, is_numerical).
pub fn table(specs: &[(&str, bool)], s: &str, y: &str, rows: &[Vec<String>]) -> Table {
    let columns = specs
        .iter()
        .map(|&(n, num)| if num { ColumnSpec::numerical(n) } else { ColumnSpec::categorical(n) })
        .collect();
    Table::from_string_rows(Schema::new(columns, s, y).unwrap(), rows).unwrap()
}

/// `n` rows: x0 numerical, x1 categorical (a..e), s, y with P(y=1) depending
/// on both x0 and s.
pub fn mixed_table(n: usize, seed: u64) -> Table {
    let mut r = rng(seed);
    let rows: Vec<Vec<String>> = (0..n)
        .map(|_| {
            let s = r.random_bool(0.5);
            let x0: f64 = (r.random::<f64>() * 100.0).round() / 2.0;
            let x1 = ["a", "b", "c", "d", "e"][r.random_range(0..5)];
            let p = 0.2 + 0.4 * f64::from(u8::from(s)) + if x0 > 25.0 { 0.2 } else { 0.0 };
            let y = r.random_bool(p);
            vec![
                x0.to_string(),
                x1.to_string(),
                if s { "m" } else { "f" }.to_string(),
                if y { "yes" } else { "no" }.to_string(),
            ]
        })
        .collect();
    table(&[("x0", true), ("x1", false), ("s", false), ("y", false)], "s", "y", &rows)
}

/// Row-major copy of a categorical column's labels.
pub fn labels(t: &Table, name: &str) -> Vec<String> {
    let j = t.schema().index_of(name).unwrap();
    (0..t.n_rows()).map(|r| t.cell_string(j, r)).collect()
}

pub fn numbers(t: &Table, name: &str) -> Vec<f64> {
    match t.column_by_name(name).unwrap() {
        Column::Numerical(v) => v.clone(),
        Column::Categorical(_) => panic!("`{name}` is categorical"),
    }
}
