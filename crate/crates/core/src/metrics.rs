//! Fairness, utility and fidelity metrics for a synthetic table.
//!
//! Quality metrics compare the synthetic table against the real training
//! split. Distances live in the min-max / one-hot frame of the real data.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::downstream::{fit_forest, ForestParams};
use crate::error::{Error, Result};
use crate::rng;
use crate::tabular::{encode_for_distance, Column, ColumnKind, DenseMatrix, Table};

/// Neighbourhood size for the sphere metrics.
pub const DEFAULT_K: usize = 5;

/// Column order of the results CSV.
pub const RESULTS_HEADER: [&str; 17] = [
    "fold", "lambda", "ordering", "seed", "roc_auc", "stat_parity", "detection", "ks", "tv",
    "precision", "recall", "density", "coverage", "dcr", "fit_s", "sample_s", "status",
];

/// `P(pred = 1 | S = 0) - P(pred = 1 | S = 1)`.
pub fn stat_parity(y_pred: &[u32], s: &[u32]) -> Result<f64> {
    if y_pred.len() != s.len() || y_pred.is_empty() {
        return Err(Error::invalid("predictions and groups must be equally long and nonempty"));
    }
    let mut n = [0usize; 2];
    let mut pos = [0usize; 2];
    for (&y, &g) in y_pred.iter().zip(s) {
        let g = g as usize;
        if g > 1 {
            return Err(Error::invalid("group codes must be 0 or 1"));
        }
        n[g] += 1;
        pos[g] += usize::from(y == 1);
    }
    if let Some(g) = n.iter().position(|&c| c == 0) {
        return Err(Error::GroupMissing(g as u32));
    }
    Ok(pos[0] as f64 / n[0] as f64 - pos[1] as f64 / n[1] as f64)
}

/// Mann-Whitney AUC with tied scores counted as one half.
pub fn roc_auc(scores: &[f64], labels: &[u32]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let positives = order[i..=j].iter().filter(|&&r| labels[r] == 1).count();
        rank_sum += mid * positives as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// `1 - sup |F_a - F_b|` over the two empirical CDFs.
pub fn ks_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS needs two nonempty samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(1.0 - d)
}

/// `1 - TV` between the two empirical category distributions.
pub fn tv_score<T: Ord>(a: &[T], b: &[T]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("TV needs two nonempty samples"));
    }
    let mut counts: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    for x in a {
        counts.entry(x).or_default().0 += 1;
    }
    for x in b {
        counts.entry(x).or_default().1 += 1;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let tv: f64 = counts
        .values()
        .map(|&(ca, cb)| (ca as f64 / na - cb as f64 / nb).abs())
        .sum::<f64>()
        / 2.0;
    Ok((1.0 - tv).clamp(0.0, 1.0))
}

/// Fidelity of one column: KS score for numerical, TV score for categorical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScore {
    pub name: String,
    pub kind: ColumnKind,
    pub score: f64,
}

pub fn column_scores(real: &Table, synth: &Table) -> Result<Vec<ColumnScore>> {
    real.check_compatible(synth)?;
    real.schema()
        .columns
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let score = match (real.column(j), synth.column(j)) {
                (Column::Numerical(a), Column::Numerical(b)) => ks_score(a, b)?,
                (Column::Categorical(a), Column::Categorical(b)) => {
                    let la: Vec<&str> = a.iter().map(|&c| real.dictionary(j)[c as usize].as_str()).collect();
                    let lb: Vec<&str> = b.iter().map(|&c| synth.dictionary(j)[c as usize].as_str()).collect();
                    tv_score(&la, &lb)?
                }
                _ => unreachable!("schemas checked"),
            };
            Ok(ColumnScore {
                name: spec.name.clone(),
                kind: spec.kind,
                score,
            })
        })
        .collect()
}

/// AUC of a forest telling real rows (0) from synthetic rows (1) on a 30%
/// hold-out, stratified by class and grouped by identical row content.
pub fn detection_score(real: &Table, synth: &Table, params: &ForestParams, seed: u64) -> Result<f64> {
    real.check_compatible(synth)?;
    if real.n_rows() < 10 || synth.n_rows() < 10 {
        return Err(Error::invalid("detection needs at least 10 rows per side"));
    }
    let mixed = real.concat(synth)?;
    let mut label_name = String::from("is_synthetic");
    while mixed.schema().index_of(&label_name).is_some() {
        label_name.insert(0, '_');
    }
    let labels: Vec<u32> = (0..mixed.n_rows()).map(|r| u32::from(r >= real.n_rows())).collect();
    let mixed = mixed.with_categorical_column(
        &label_name,
        labels.clone(),
        vec!["real".to_string(), "synthetic".to_string()],
    )?;

    // Identical rows stay on one side of the split; otherwise a copied row
    // leaks its label across the split and pushes the score below 0.5.
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for r in 0..mixed.n_rows() {
        let key: Vec<String> = (0..real.schema().len()).map(|j| mixed.cell_string(j, r)).collect();
        groups.entry(key.join("\u{1f}")).or_default().push(r);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    groups.shuffle(&mut rng::substream(seed, 0));
    let n_real = real.n_rows() as f64;
    let n_synth = synth.n_rows() as f64;
    let (mut real_taken, mut synth_taken) = (0.0, 0.0);
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for g in groups {
        let g_synth = g.iter().filter(|&&r| labels[r] == 1).count() as f64;
        let g_real = g.len() as f64 - g_synth;
        // fill each class up to 70% of its rows
        let room = (g_real == 0.0 || real_taken + g_real <= 0.7 * n_real + 0.5)
            && (g_synth == 0.0 || synth_taken + g_synth <= 0.7 * n_synth + 0.5);
        if room {
            real_taken += g_real;
            synth_taken += g_synth;
            train_rows.extend(g);
        } else {
            test_rows.extend(g);
        }
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    let train = mixed.take_rows(&train_rows)?;
    let test = mixed.take_rows(&test_rows)?;
    let forest = fit_forest(&train, &label_name, &[], params, rng::derive_seed(seed, 1))?;
    let scores = forest.predict_proba(&test)?;
    let truth: Vec<u32> = test_rows.iter().map(|&r| labels[r]).collect();
    roc_auc(&scores, &truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub precision: f64,
    pub recall: f64,
    pub density: f64,
    pub coverage: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance from each point to its k-th nearest other point; zero
/// when `k` is zero.
fn knn_radii_sq(points: &DenseMatrix, k: usize) -> Vec<f64> {
    if k == 0 {
        return vec![0.0; points.n_rows];
    }
    (0..points.n_rows)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..points.n_rows)
                .filter(|&j| j != i)
                .map(|j| sq_dist(points.row(i), points.row(j)))
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect()
}

/// Number of spheres (centers, squared radii) containing each query point.
fn sphere_hits(queries: &DenseMatrix, centers: &DenseMatrix, radii_sq: &[f64]) -> Vec<usize> {
    (0..queries.n_rows)
        .into_par_iter()
        .map(|q| {
            (0..centers.n_rows)
                .filter(|&c| sq_dist(queries.row(q), centers.row(c)) <= radii_sq[c])
                .count()
        })
        .collect()
}

/// Precision, recall, density and coverage of `synth` against `real`, both
/// already encoded in the same frame.
///
/// A synthetic set with `k` rows or fewer gets spheres of its largest
/// available neighbour rank for recall (radius zero for a single row).
pub fn neighborhood_points(real: &DenseMatrix, synth: &DenseMatrix, k: usize) -> Result<Neighborhood> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if real.n_rows <= k || synth.n_rows == 0 {
        return Err(Error::invalid(format!(
            "neighbourhood metrics need more than {k} real rows and one synthetic row"
        )));
    }
    if real.n_cols != synth.n_cols {
        return Err(Error::invalid("point sets have different dimensions"));
    }
    let real_r = knn_radii_sq(real, k);
    let synth_r = knn_radii_sq(synth, k.min(synth.n_rows - 1));
    let synth_in_real = sphere_hits(synth, real, &real_r);
    let real_in_synth = sphere_hits(real, synth, &synth_r);
    let precision = synth_in_real.iter().filter(|&&h| h > 0).count() as f64 / synth.n_rows as f64;
    let recall = real_in_synth.iter().filter(|&&h| h > 0).count() as f64 / real.n_rows as f64;
    let density = synth_in_real.iter().sum::<usize>() as f64 / (k as f64 * synth.n_rows as f64);
    let covered = (0..real.n_rows)
        .into_par_iter()
        .filter(|&c| (0..synth.n_rows).any(|s| sq_dist(synth.row(s), real.row(c)) <= real_r[c]))
        .count();
    Ok(Neighborhood {
        precision,
        recall,
        density,
        coverage: covered as f64 / real.n_rows as f64,
    })
}

pub fn neighborhood_metrics(real: &Table, synth: &Table, k: usize) -> Result<Neighborhood> {
    real.check_compatible(synth)?;
    let (r, stats) = encode_for_distance(real, None);
    let (s, _) = encode_for_distance(synth, Some(&stats));
    neighborhood_points(&r, &s, k)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median synthetic-to-real nearest distance over median real-to-real
/// nearest distance.
pub fn dcr_points(real: &DenseMatrix, synth: &DenseMatrix) -> Result<f64> {
    if real.n_rows < 2 || synth.n_rows == 0 {
        return Err(Error::invalid("DCR needs two real rows and one synthetic row"));
    }
    let nearest = |q: &[f64], skip: Option<usize>| {
        (0..real.n_rows)
            .filter(|&j| Some(j) != skip)
            .map(|j| sq_dist(q, real.row(j)))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    };
    let mut reference: Vec<f64> = (0..real.n_rows)
        .into_par_iter()
        .map(|i| nearest(real.row(i), Some(i)))
        .collect();
    let mut generated: Vec<f64> = (0..synth.n_rows)
        .into_par_iter()
        .map(|i| nearest(synth.row(i), None))
        .collect();
    let denominator = median(&mut reference);
    if denominator == 0.0 {
        return Err(Error::DegenerateReference);
    }
    Ok(median(&mut generated) / denominator)
}

pub fn dcr(real: &Table, synth: &Table) -> Result<f64> {
    real.check_compatible(synth)?;
    let (r, stats) = encode_for_distance(real, None);
    let (s, _) = encode_for_distance(synth, Some(&stats));
    dcr_points(&r, &s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub forest: ForestParams,
    pub k: usize,
    /// Let the downstream classifier read the sensitive column.
    pub downstream_include_s: bool,
    /// Compute the fidelity and privacy metrics; when off, only the
    /// downstream utility and fairness scores are filled in.
    #[serde(default = "default_true")]
    pub quality: bool,
}

fn default_true() -> bool {
    true
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            k: DEFAULT_K,
            downstream_include_s: false,
            quality: true,
        }
    }
}

/// Wall-clock timings, kept apart from everything that must be reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub fit_s: f64,
    pub sample_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub fold: Option<usize>,
    pub lambda: Option<f64>,
    pub ordering: Option<String>,
    pub seed: u64,
    pub classifier: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub roc_auc: f64,
    /// Signed; reports show the magnitude.
    pub stat_parity: f64,
    /// Quality metrics below are `None` when they were not requested.
    pub detection_score: Option<f64>,
    /// Mean over numerical columns; also `None` without numerical columns.
    pub ks_score: Option<f64>,
    /// Mean over categorical columns.
    pub tv_score: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub density: Option<f64>,
    pub coverage: Option<f64>,
    /// Also `None` when the real data's nearest-neighbour distances are all zero.
    pub dcr: Option<f64>,
    pub metadata: ReportMetadata,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

impl EvalReport {
    /// One results CSV record in [`RESULTS_HEADER`] order.
    pub fn csv_record(&self) -> Vec<String> {
        let m = &self.metadata;
        vec![
            m.fold.map_or("all".to_string(), |f| f.to_string()),
            opt_cell(m.lambda),
            m.ordering.clone().unwrap_or_default(),
            m.seed.to_string(),
            self.roc_auc.to_string(),
            self.stat_parity.abs().to_string(),
            opt_cell(self.detection_score),
            opt_cell(self.ks_score),
            opt_cell(self.tv_score),
            opt_cell(self.precision),
            opt_cell(self.recall),
            opt_cell(self.density),
            opt_cell(self.coverage),
            opt_cell(self.dcr),
            opt_cell(m.timing.map(|t| t.fit_s)),
            opt_cell(m.timing.map(|t| t.sample_s)),
            "ok".to_string(),
        ]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Human-readable summary.
    pub fn to_table_string(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        let rows = [
            ("ROC AUC", Some(self.roc_auc)),
            ("|Stat. Par.|", Some(self.stat_parity.abs())),
            ("Detection", self.detection_score),
            ("KS", self.ks_score),
            ("TV", self.tv_score),
            ("Precision", self.precision),
            ("Recall", self.recall),
            ("Density", self.density),
            ("Coverage", self.coverage),
            ("DCR", self.dcr),
        ];
        let mut out = String::new();
        for (name, v) in rows {
            out.push_str(&format!("{name:<14}{:>10}\n", fmt(v)));
        }
        if self.dcr == Some(0.0) {
            out.push_str("warning: DCR is 0, synthetic rows copy real rows\n");
        }
        out
    }
}

/// Appends one record to a results CSV, writing the header first when the
/// file is new or empty.
pub fn append_results_row(path: &Path, record: &[String]) -> Result<()> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(RESULTS_HEADER)?;
    }
    w.write_record(record)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Trains the downstream forest on `synth` and scores it on `real_test`;
/// measures fidelity and privacy of `synth` against `real_train`.
pub fn full_report(
    real_test: &Table,
    synth: &Table,
    real_train: &Table,
    params: &EvalParams,
    seed: u64,
) -> Result<EvalReport> {
    real_train.check_compatible(synth)?;
    real_train.check_compatible(real_test)?;
    let schema = synth.schema();
    let exclude = if params.downstream_include_s {
        Vec::new()
    } else {
        vec![schema.sensitive.clone()]
    };
    let forest = fit_forest(synth, &schema.target, &exclude, &params.forest, rng::derive_seed(seed, 1))?;
    let scores = forest.predict_proba(real_test)?;
    let y_idx = schema.target_index();
    let truth: Vec<u32> = real_test
        .target_codes()
        .iter()
        .map(|&c| u32::from(real_test.dictionary(y_idx)[c as usize] == forest.positive_label()))
        .collect();
    let roc = roc_auc(&scores, &truth)?;
    let y_pred: Vec<u32> = scores.iter().map(|&p| u32::from(p >= 0.5)).collect();
    let parity = stat_parity(&y_pred, real_test.sensitive_codes())?;

    let mut report = EvalReport {
        roc_auc: roc,
        stat_parity: parity,
        detection_score: None,
        ks_score: None,
        tv_score: None,
        precision: None,
        recall: None,
        density: None,
        coverage: None,
        dcr: None,
        metadata: ReportMetadata {
            seed,
            classifier: params.forest.describe(),
            ..Default::default()
        },
    };
    if !params.quality {
        return Ok(report);
    }

    let columns = column_scores(real_train, synth)?;
    let by_kind = |kind| columns.iter().filter(|c| c.kind == kind).map(|c| c.score).collect::<Vec<_>>();
    report.ks_score = mean(&by_kind(ColumnKind::Numerical));
    report.tv_score = mean(&by_kind(ColumnKind::Categorical));
    report.detection_score = Some(detection_score(real_train, synth, &params.forest, rng::derive_seed(seed, 2))?);
    let hood = neighborhood_metrics(real_train, synth, params.k)?;
    report.precision = Some(hood.precision);
    report.recall = Some(hood.recall);
    report.density = Some(hood.density);
    report.coverage = Some(hood.coverage);
    report.dcr = match dcr(real_train, synth) {
        Ok(v) => Some(v),
        Err(Error::DegenerateReference) => None,
        Err(e) => return Err(e),
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_examples() {
        assert_eq!(stat_parity(&[1, 1, 1, 1], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(stat_parity(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(stat_parity(&[1, 0, 1, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert!(matches!(stat_parity(&[1, 0], &[0, 0]), Err(Error::GroupMissing(1))));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_score(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(ks_score(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        let v = ks_score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_score(&["A", "B"], &["B", "A"]).unwrap(), 1.0);
        assert_eq!(tv_score(&["A", "A"], &["B", "B"]).unwrap(), 0.0);
        assert_eq!(tv_score(&["A", "B"], &["A", "A", "A", "B"]).unwrap(), 0.75);
    }

    #[test]
    fn one_dimensional_spheres() {
        let real = DenseMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let synth = DenseMatrix::from_rows(&[vec![0.4]]);
        let n = neighborhood_points(&real, &synth, 1).unwrap();
        assert_eq!(n.precision, 1.0);
        assert_eq!(n.density, 2.0);
        assert_eq!(n.coverage, 0.5);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
