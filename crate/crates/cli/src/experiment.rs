//! Fold × λ × ordering experiments.
//!
//! A cell group is one (seed, fold, ordering) triple. The generator is fitted
//! once per group and every λ of the sweep reuses it with the same sampling
//! seed, so within a group only the target column differs between λ values.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, Context};
use fairgdt::metrics::{full_report, EvalParams, EvalReport, Timing, RESULTS_HEADER};
use fairgdt::tabular::{make_folds, Table};
use fairgdt::{build_plan, expected_disc, fit_generator, rng, sample_synthetic, GeneratorConfig, OrderingStrategy};
use rayon::prelude::*;

#[derive(Debug, Clone, Default)]
pub struct PipelineParams {
    pub generator: GeneratorConfig,
    pub thr_disc: f64,
    pub eval: EvalParams,
    /// Synthetic rows per cell; `None` means the training split size.
    pub n_synthetic: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaOutcome {
    pub lambda: f64,
    /// Expected discrimination of the target tree under the plan.
    pub expected_disc: f64,
    pub report: EvalReport,
}

fn ordering_tag(ordering: OrderingStrategy) -> u64 {
    OrderingStrategy::ALL.iter().position(|&o| o == ordering).expect("known ordering") as u64
}

/// Seed shared by every λ of one (seed, fold, ordering) group.
pub fn group_seed(seed: u64, fold: usize, ordering: OrderingStrategy) -> u64 {
    rng::derive_seed(rng::derive_seed(seed, fold as u64), ordering_tag(ordering))
}

/// Fits the generator on `train` and, for each λ, builds the plan, samples and
/// evaluates against `test`. A fitting failure fails every λ.
pub fn run_split(
    train: &Table,
    test: &Table,
    ordering: OrderingStrategy,
    lambdas: &[f64],
    params: &PipelineParams,
    seed: u64,
) -> Vec<anyhow::Result<LambdaOutcome>> {
    let started = Instant::now();
    let model = match fit_generator(train, ordering, &params.generator, rng::derive_seed(seed, 0)) {
        Ok(m) => m,
        Err(e) => {
            let msg = format!("fitting failed: {e}");
            return lambdas.iter().map(|_| Err(anyhow!(msg.clone()))).collect();
        }
    };
    let fit_base = started.elapsed().as_secs_f64();
    let n = params.n_synthetic.unwrap_or(train.n_rows());
    lambdas
        .iter()
        .map(|&lambda| {
            let t0 = Instant::now();
            let plan = build_plan(model.y_tree(), lambda, params.thr_disc)?;
            let fit_s = fit_base + t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let synth = sample_synthetic(&model, n, Some(&plan), rng::derive_seed(seed, 1))?;
            let sample_s = t1.elapsed().as_secs_f64();
            let mut report = full_report(test, &synth, train, &params.eval, rng::derive_seed(seed, 2))?;
            report.metadata.lambda = Some(lambda);
            report.metadata.ordering = Some(ordering.to_string());
            report.metadata.timing = Some(Timing { fit_s, sample_s });
            Ok(LambdaOutcome {
                lambda,
                expected_disc: expected_disc(model.y_tree(), &plan)?,
                report,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub orderings: Vec<OrderingStrategy>,
    /// One full k-fold repetition per seed.
    pub seeds: Vec<u64>,
    pub n_folds: usize,
    /// Parallel worker limit; `None` uses the ambient pool.
    pub jobs: Option<usize>,
    pub params: PipelineParams,
}

/// The data handed to a group runner.
pub struct CellGroup<'a> {
    pub seed: u64,
    pub fold: usize,
    pub ordering: OrderingStrategy,
    pub train: &'a Table,
    pub test: &'a Table,
    pub lambdas: &'a [f64],
    pub params: &'a PipelineParams,
}

impl CellGroup<'_> {
    pub fn derived_seed(&self) -> u64 {
        group_seed(self.seed, self.fold, self.ordering)
    }
}

/// Produces one outcome per λ of the group, in order.
pub type GroupRunner<'r> = dyn Fn(&CellGroup<'_>) -> Vec<anyhow::Result<LambdaOutcome>> + Sync + 'r;

pub fn default_runner(group: &CellGroup<'_>) -> Vec<anyhow::Result<LambdaOutcome>> {
    run_split(
        group.train,
        group.test,
        group.ordering,
        group.lambdas,
        group.params,
        group.derived_seed(),
    )
}

#[derive(Debug)]
pub struct CellResult {
    pub seed: u64,
    pub fold: usize,
    pub lambda: f64,
    pub ordering: OrderingStrategy,
    pub outcome: Result<LambdaOutcome, String>,
}

impl CellResult {
    /// Record in the results CSV layout.
    pub fn csv_record(&self) -> Vec<String> {
        match &self.outcome {
            Ok(o) => {
                let mut record = o.report.csv_record();
                record[0] = self.fold.to_string();
                record[3] = self.seed.to_string();
                record
            }
            Err(_) => {
                let mut record = vec![String::new(); RESULTS_HEADER.len()];
                record[0] = self.fold.to_string();
                record[1] = self.lambda.to_string();
                record[2] = self.ordering.to_string();
                record[3] = self.seed.to_string();
                record[RESULTS_HEADER.len() - 1] = "failed".to_string();
                record
            }
        }
    }
}

/// Writes records in index order no matter in which order they complete.
struct OrderedAppender<W: std::io::Write> {
    next: usize,
    pending: BTreeMap<usize, Vec<Vec<String>>>,
    writer: csv::Writer<W>,
}

impl<W: std::io::Write> OrderedAppender<W> {
    fn push(&mut self, index: usize, records: Vec<Vec<String>>) -> csv::Result<()> {
        self.pending.insert(index, records);
        while let Some(records) = self.pending.remove(&self.next) {
            for r in records {
                self.writer.write_record(&r)?;
            }
            self.next += 1;
        }
        self.writer.flush()?;
        Ok(())
    }
}

/// Runs the sweep with the default pipeline. See [`run_sweep_with`].
pub fn run_sweep(data: &Table, config: &SweepConfig, results: Option<&Path>) -> anyhow::Result<Vec<CellResult>> {
    run_sweep_with(data, config, results, &default_runner)
}

/// Runs every (seed, fold, ordering) group in parallel. Folds are drawn once
/// per seed and shared by all λ and orderings. Cell failures are recorded,
/// not propagated. When `results` is given, data rows are streamed there in
/// deterministic order as groups finish.
pub fn run_sweep_with(
    data: &Table,
    config: &SweepConfig,
    results: Option<&Path>,
    runner: &GroupRunner<'_>,
) -> anyhow::Result<Vec<CellResult>> {
    if config.lambdas.is_empty() || config.orderings.is_empty() || config.seeds.is_empty() {
        anyhow::bail!("sweep needs at least one λ, ordering and seed");
    }
    if let Some(bad) = config.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        anyhow::bail!("λ = {bad} is outside [0, 1]");
    }
    let mut splits = Vec::new();
    for &seed in &config.seeds {
        for fold in make_folds(data.n_rows(), config.n_folds, seed)? {
            let train = data.take_rows(&fold.train)?;
            let test = data.take_rows(&fold.test)?;
            splits.push((seed, fold.fold, train, test));
        }
    }
    let groups: Vec<CellGroup<'_>> = splits
        .iter()
        .flat_map(|(seed, fold, train, test)| {
            config.orderings.iter().map(move |&ordering| CellGroup {
                seed: *seed,
                fold: *fold,
                ordering,
                train,
                test,
                lambdas: &config.lambdas,
                params: &config.params,
            })
        })
        .collect();

    let appender = match results {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            let mut writer = csv::Writer::from_writer(file);
            writer.write_record(RESULTS_HEADER)?;
            Some(Mutex::new(OrderedAppender {
                next: 0,
                pending: BTreeMap::new(),
                writer,
            }))
        }
        None => None,
    };

    let run_group = |(index, group): (usize, &CellGroup<'_>)| -> anyhow::Result<Vec<CellResult>> {
        let mut outcomes = runner(group);
        if outcomes.len() != group.lambdas.len() {
            outcomes = group
                .lambdas
                .iter()
                .map(|_| Err(anyhow!("runner returned the wrong number of outcomes")))
                .collect();
        }
        let cells: Vec<CellResult> = group
            .lambdas
            .iter()
            .zip(outcomes)
            .map(|(&lambda, outcome)| CellResult {
                seed: group.seed,
                fold: group.fold,
                lambda,
                ordering: group.ordering,
                outcome: outcome.map_err(|e| format!("{e:#}")),
            })
            .collect();
        for cell in &cells {
            if let Err(msg) = &cell.outcome {
                log::warn!(
                    "cell seed={} fold={} λ={} ordering={} failed: {msg}",
                    cell.seed,
                    cell.fold,
                    cell.lambda,
                    cell.ordering
                );
            }
        }
        if let Some(appender) = &appender {
            let records = cells.iter().map(CellResult::csv_record).collect();
            appender
                .lock()
                .map_err(|_| anyhow!("results writer poisoned"))?
                .push(index, records)?;
        }
        Ok(cells)
    };
    let run_all = || -> anyhow::Result<Vec<CellResult>> {
        let nested = groups
            .par_iter()
            .enumerate()
            .map(run_group)
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok(nested.into_iter().flatten().collect())
    };
    let cells = match config.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.min(rayon::current_num_threads()).max(1))
            .build()?
            .install(run_all)?,
        None => run_all()?,
    };

    if let Some(appender) = appender {
        let mut appender = appender.into_inner().map_err(|_| anyhow!("results writer poisoned"))?;
        for record in aggregate_records(&cells, config) {
            appender.writer.write_record(&record)?;
        }
        appender.writer.flush()?;
    }
    Ok(cells)
}

/// Metric columns of the results CSV that are averaged (everything between
/// `seed` and `status`).
const METRIC_RANGE: std::ops::Range<usize> = 4..16;

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub lambda: f64,
    pub ordering: OrderingStrategy,
    pub n_ok: usize,
    pub n_failed: usize,
    /// Mean and sample standard deviation per metric column, `None` where no
    /// successful cell has a value.
    pub metrics: Vec<(Option<f64>, Option<f64>)>,
    pub expected_disc: (Option<f64>, Option<f64>),
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

/// One aggregate per (λ, ordering), in configuration order.
pub fn aggregate(cells: &[CellResult], config: &SweepConfig) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for &lambda in &config.lambdas {
        for &ordering in &config.orderings {
            let matching: Vec<&CellResult> = cells
                .iter()
                .filter(|c| c.lambda == lambda && c.ordering == ordering)
                .collect();
            let ok: Vec<&LambdaOutcome> = matching.iter().filter_map(|c| c.outcome.as_ref().ok()).collect();
            let records: Vec<Vec<String>> = ok.iter().map(|o| o.report.csv_record()).collect();
            let metrics = METRIC_RANGE
                .map(|j| {
                    let values: Vec<f64> = records.iter().filter_map(|r| r[j].parse().ok()).collect();
                    mean_std(&values)
                })
                .collect();
            let discs: Vec<f64> = ok.iter().map(|o| o.expected_disc).collect();
            out.push(Aggregate {
                lambda,
                ordering,
                n_ok: ok.len(),
                n_failed: matching.len() - ok.len(),
                metrics,
                expected_disc: mean_std(&discs),
            });
        }
    }
    out
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn aggregate_records(cells: &[CellResult], config: &SweepConfig) -> Vec<Vec<String>> {
    aggregate(cells, config)
        .into_iter()
        .map(|a| {
            let mut record = vec!["mean".to_string(), a.lambda.to_string(), a.ordering.to_string(), "all".to_string()];
            record.extend(a.metrics.iter().map(|(m, _)| cell(*m)));
            let total = a.n_ok + a.n_failed;
            record.push(if a.n_failed == 0 {
                "ok".to_string()
            } else {
                format!("partial({}/{total})", a.n_ok)
            });
            record
        })
        .collect()
}

/// `<stem>.summary.csv` next to the results file.
pub fn summary_path(results: &Path) -> PathBuf {
    let stem = results.file_stem().map_or("results".into(), |s| s.to_string_lossy().into_owned());
    results.with_file_name(format!("{stem}.summary.csv"))
}

/// Means, standard deviations and counts per (λ, ordering).
pub fn write_summary(path: &Path, cells: &[CellResult], config: &SweepConfig) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut header = vec!["lambda".to_string(), "ordering".to_string(), "n_ok".to_string(), "n_failed".to_string()];
    for name in &RESULTS_HEADER[METRIC_RANGE] {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    header.push("expected_disc_mean".to_string());
    header.push("expected_disc_std".to_string());
    w.write_record(&header)?;
    for a in aggregate(cells, config) {
        let mut record = vec![
            a.lambda.to_string(),
            a.ordering.to_string(),
            a.n_ok.to_string(),
            a.n_failed.to_string(),
        ];
        for (m, s) in a.metrics.iter().chain(std::iter::once(&a.expected_disc)) {
            record.push(cell(*m));
            record.push(cell(*s));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
