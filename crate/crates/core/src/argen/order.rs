use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::tabular::{Column, Table};

/// Generation order of the feature columns. The sensitive column is always
/// generated after every feature, and the target last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingStrategy {
    Original,
    #[serde(rename = "asc-y")]
    AscCorrY,
    #[serde(rename = "desc-y")]
    DescCorrY,
    #[serde(rename = "asc-s")]
    AscCorrS,
    #[serde(rename = "desc-s")]
    DescCorrS,
}

impl OrderingStrategy {
    pub const ALL: [OrderingStrategy; 5] = [
        OrderingStrategy::Original,
        OrderingStrategy::AscCorrY,
        OrderingStrategy::DescCorrY,
        OrderingStrategy::AscCorrS,
        OrderingStrategy::DescCorrS,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OrderingStrategy::Original => "original",
            OrderingStrategy::AscCorrY => "asc-y",
            OrderingStrategy::DescCorrY => "desc-y",
            OrderingStrategy::AscCorrS => "asc-s",
            OrderingStrategy::DescCorrS => "desc-s",
        }
    }
}

impl fmt::Display for OrderingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrderingStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| format!("unknown ordering `{s}`"))
    }
}

const DISCRETIZATION_BINS: usize = 10;

/// Equal-frequency bin index per value: `floor(rank * bins / n)` over the
/// sorted order, with tied values sharing the bin of their first occurrence.
fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<u32> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0u32; n];
    let mut prev: Option<(f64, u32)> = None;
    for (rank, &i) in order.iter().enumerate() {
        let bin = match prev {
            Some((v, b)) if v == values[i] => b,
            _ => (rank * bins / n) as u32,
        };
        out[i] = bin;
        prev = Some((values[i], bin));
    }
    out
}

/// Cramér's V between two code sequences.
pub fn cramers_v(a: &[u32], b: &[u32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let mut table: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut row_tot: BTreeMap<u32, f64> = BTreeMap::new();
    let mut col_tot: BTreeMap<u32, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *row_tot.entry(x).or_default() += 1.0;
        *col_tot.entry(y).or_default() += 1.0;
    }
    let k = row_tot.len().min(col_tot.len());
    if k < 2 {
        return 0.0;
    }
    let mut chi2 = 0.0;
    for (x, &rt) in &row_tot {
        for (y, &ct) in &col_tot {
            let expected = rt * ct / n;
            let observed = table.get(&(*x, *y)).copied().unwrap_or(0.0);
            chi2 += (observed - expected).powi(2) / expected;
        }
    }
    (chi2 / (n * (k - 1) as f64)).sqrt().min(1.0)
}

/// Association of a column with a binary reference column.
pub fn association(column: &Column, reference: &[u32]) -> f64 {
    match column {
        Column::Categorical(codes) => cramers_v(codes, reference),
        Column::Numerical(values) => {
            cramers_v(&equal_frequency_bins(values, DISCRETIZATION_BINS), reference)
        }
    }
}

/// Full generation order: features (ordered per strategy), then S, then Y.
pub fn resolve_order(train: &Table, strategy: OrderingStrategy) -> Vec<String> {
    let schema = train.schema();
    let mut features = schema.feature_names();
    let reference = match strategy {
        OrderingStrategy::Original => None,
        OrderingStrategy::AscCorrY | OrderingStrategy::DescCorrY => Some(train.target_codes()),
        OrderingStrategy::AscCorrS | OrderingStrategy::DescCorrS => Some(train.sensitive_codes()),
    };
    if let Some(reference) = reference {
        let scores: BTreeMap<String, f64> = features
            .iter()
            .map(|name| {
                let col = train.column_by_name(name).expect("schema column");
                (name.clone(), association(col, reference))
            })
            .collect();
        let descending = matches!(strategy, OrderingStrategy::DescCorrY | OrderingStrategy::DescCorrS);
        features.sort_by(|a, b| {
            let ord = scores[a].total_cmp(&scores[b]);
            if descending {
                ord.reverse()
            } else {
                ord
            }
        });
    }
    features.push(schema.sensitive.clone());
    features.push(schema.target.clone());
    features
}
