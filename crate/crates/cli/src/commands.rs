//! `fit`, `generate`, `evaluate` and `make-data`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use fairgdt::cart::TreeParams;
use fairgdt::fairlift::ResamplingPlan;
use fairgdt::metrics::{append_results_row, full_report, EvalParams, EvalReport, RESULTS_HEADER};
use fairgdt::tabular::{load_csv, write_csv, LoadOptions, Schema, Table};
use fairgdt::{build_plan, fit_generator, sample_synthetic, GeneratorConfig, GeneratorModel, OrderingStrategy};

use crate::datasets;
use crate::InputError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum DataFormat {
    /// CSV with a header row, described by `--schema`.
    #[default]
    Csv,
    /// Raw UCI Adult file; the schema is built in.
    Adult,
}

#[derive(Debug, Clone)]
pub struct DataSource {
    pub path: PathBuf,
    pub schema: Option<PathBuf>,
    pub format: DataFormat,
    pub drop_na: bool,
}

impl DataSource {
    pub fn csv(path: impl Into<PathBuf>, schema: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            schema: Some(schema.into()),
            format: DataFormat::Csv,
            drop_na: false,
        }
    }

    pub fn schema(&self) -> anyhow::Result<Schema> {
        match (self.format, &self.schema) {
            (DataFormat::Adult, _) => Ok(datasets::adult_schema()),
            (DataFormat::Csv, Some(path)) => Schema::from_json_file(path)
                .with_context(|| format!("cannot read schema {}", path.display()))
                .context(InputError),
            (DataFormat::Csv, None) => Err(anyhow::anyhow!("--schema is required for CSV data").context(InputError)),
        }
    }

    pub fn load(&self) -> anyhow::Result<Table> {
        match self.format {
            DataFormat::Adult => datasets::load_adult(&self.path).context(InputError),
            DataFormat::Csv => {
                let schema = self.schema()?;
                load_csv(&self.path, &schema, LoadOptions { drop_na: self.drop_na })
                    .with_context(|| format!("cannot load {}", self.path.display()))
                    .context(InputError)
            }
        }
    }

    fn check_paths(&self) -> anyhow::Result<()> {
        let mut paths = vec![&self.path];
        if self.format == DataFormat::Csv {
            paths.extend(&self.schema);
        }
        for p in paths {
            if !p.is_file() {
                return Err(anyhow::anyhow!("no such file: {}", p.display()).context(InputError));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: DataSource,
    pub out: PathBuf,
    pub lambda: f64,
    pub thr_disc: f64,
    pub ordering: OrderingStrategy,
    pub generator: GeneratorConfig,
    /// `None` means the training size.
    pub n_synthetic: Option<usize>,
    pub seed: u64,
    pub n_folds: usize,
}

impl RunConfig {
    pub fn new(data: DataSource, out: impl Into<PathBuf>) -> Self {
        Self {
            data,
            out: out.into(),
            lambda: 1.0,
            thr_disc: 0.0,
            ordering: OrderingStrategy::Original,
            generator: GeneratorConfig::default(),
            n_synthetic: None,
            seed: 0,
            n_folds: 3,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let bad = |msg: String| Err(anyhow::anyhow!(msg).context(InputError));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("--lambda {} is outside [0, 1]", self.lambda));
        }
        if !self.thr_disc.is_finite() {
            return bad("--thr-disc must be finite".into());
        }
        if self.n_folds < 2 {
            return bad(format!("--folds must be at least 2, got {}", self.n_folds));
        }
        if self.n_synthetic == Some(0) {
            return bad("--n must be positive".into());
        }
        if self.generator.tree.min_samples_leaf == 0 {
            return bad("--min-leaf must be positive".into());
        }
        self.data.check_paths()
    }
}

/// Tree parameters from the command-line knobs.
pub fn tree_params(min_leaf: usize, max_depth: Option<usize>) -> TreeParams {
    TreeParams {
        min_samples_leaf: min_leaf,
        max_depth,
        ..TreeParams::default()
    }
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub model_dir: PathBuf,
    pub plan_file: PathBuf,
    pub n_rows: usize,
    /// (column, leaves, depth); the first column is bootstrapped.
    pub columns: Vec<(String, Option<(usize, usize)>)>,
    pub plan: ResamplingPlan,
    pub fit_s: f64,
}

impl fmt::Display for FitSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model      {}", self.model_dir.display())?;
        writeln!(f, "rows       {}", self.n_rows)?;
        writeln!(f, "columns    (generation order)")?;
        for (name, tree) in &self.columns {
            match tree {
                Some((leaves, depth)) => writeln!(f, "  {name:<24} tree: {leaves} leaves, depth {depth}")?,
                None => writeln!(f, "  {name:<24} bootstrap")?,
            }
        }
        let p = &self.plan;
        writeln!(f, "baseline disc  {:.6}", p.baseline_disc)?;
        writeln!(
            f,
            "new disc       {:.6} ({} of {} candidate leaves, {})",
            p.new_disc,
            p.leaves.len(),
            p.n_candidates,
            if p.feasible { "feasible" } else { "threshold not reached" }
        )?;
        writeln!(f, "lambda         {}", p.lambda)?;
        writeln!(f, "plan           {}", self.plan_file.display())?;
        write!(f, "fit time       {:.3}s", self.fit_s)
    }
}

/// Fits the generator and the resampling plan; writes both into `config.out`.
pub fn cmd_fit(config: &RunConfig) -> anyhow::Result<FitSummary> {
    config.validate()?;
    let train = config.data.load()?;
    let started = Instant::now();
    let model = fit_generator(&train, config.ordering, &config.generator, config.seed)?;
    let plan = build_plan(model.y_tree(), config.lambda, config.thr_disc)?;
    let fit_s = started.elapsed().as_secs_f64();
    model
        .save(&config.out)
        .with_context(|| format!("cannot write model to {}", config.out.display()))?;
    let plan_file = config.out.join(ResamplingPlan::file_name(config.lambda));
    std::fs::write(&plan_file, plan.to_json()?).with_context(|| format!("cannot write {}", plan_file.display()))?;

    let mut columns = vec![(model.order()[0].clone(), None)];
    columns.extend(
        model
            .trees()
            .iter()
            .map(|t| (t.target().to_string(), Some((t.n_leaves(), t.depth())))),
    );
    Ok(FitSummary {
        model_dir: config.out.clone(),
        plan_file,
        n_rows: train.n_rows(),
        columns,
        plan,
        fit_s,
    })
}

/// Which resampling plan `generate` applies.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanChoice {
    /// The only plan file in the model directory, if there is exactly one.
    Auto,
    NoPlan,
    Lambda(f64),
    File(PathBuf),
}

fn plan_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("plan_lambda") && n.ends_with(".json"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn resolve_plan(dir: &Path, choice: &PlanChoice) -> anyhow::Result<Option<PathBuf>> {
    Ok(match choice {
        PlanChoice::NoPlan => None,
        PlanChoice::File(p) => Some(p.clone()),
        PlanChoice::Lambda(l) => Some(dir.join(ResamplingPlan::file_name(*l))),
        PlanChoice::Auto => {
            let files = plan_files(dir)?;
            match files.len() {
                0 => {
                    log::warn!("no plan in {}, sampling without fairness adjustment", dir.display());
                    None
                }
                1 => files.into_iter().next(),
                _ => bail!(
                    "{} holds several plans; pick one with --lambda or --plan",
                    dir.display()
                ),
            }
        }
    })
}

pub fn load_model(dir: &Path) -> anyhow::Result<GeneratorModel> {
    GeneratorModel::load(dir)
        .with_context(|| format!("cannot load model from {}", dir.display()))
        .context(InputError)
}

/// Samples `n` rows (default: the training size) and writes them to `out`.
pub fn cmd_generate(model_dir: &Path, n: Option<usize>, seed: u64, out: &Path, plan: &PlanChoice) -> anyhow::Result<Table> {
    let model = load_model(model_dir)?;
    let plan = match resolve_plan(model_dir, plan).context(InputError)? {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("cannot read plan {}", path.display()))
                .context(InputError)?;
            let plan = ResamplingPlan::from_json(&text)
                .with_context(|| format!("invalid plan {}", path.display()))
                .context(InputError)?;
            Some(plan)
        }
        None => None,
    };
    let n = n.unwrap_or(model.bootstrap().len());
    if n == 0 {
        return Err(anyhow::anyhow!("--n must be positive").context(InputError));
    }
    let synth = sample_synthetic(&model, n, plan.as_ref(), seed)?;
    write_csv(&synth, out).with_context(|| format!("cannot write {}", out.display()))?;
    Ok(synth)
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    /// Held-out real rows used to score the downstream classifier.
    pub real: DataSource,
    pub synth: PathBuf,
    /// Real rows the synthetic data is compared against; defaults to `real`.
    pub train: Option<PathBuf>,
    pub seed: u64,
    pub params: EvalParams,
    /// Results CSV to append to.
    pub out: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<EvalReport> {
    args.real.check_paths()?;
    if !args.synth.is_file() {
        return Err(anyhow::anyhow!("no such file: {}", args.synth.display()).context(InputError));
    }
    let real = args.real.load()?;
    let schema = real.schema().clone();
    let synth = load_csv(&args.synth, &schema, LoadOptions::default())
        .with_context(|| format!("cannot load {}", args.synth.display()))
        .context(InputError)?;
    let train = match &args.train {
        Some(path) => DataSource {
            path: path.clone(),
            ..args.real.clone()
        }
        .load()?,
        None => real.clone(),
    };
    let report = full_report(&real, &synth, &train, &args.params, args.seed)?;
    if let Some(out) = &args.out {
        append_results_row(out, &report.csv_record()).with_context(|| format!("cannot append to {}", out.display()))?;
    }
    if let Some(json) = &args.json {
        std::fs::write(json, report.to_json()?).with_context(|| format!("cannot write {}", json.display()))?;
    }
    Ok(report)
}

/// Header plus one record, as printed when no results file is given.
pub fn csv_lines(report: &EvalReport) -> String {
    format!("{}\n{}", RESULTS_HEADER.join(","), report.csv_record().join(","))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BuiltinData {
    /// Outcome rates of about 0.6 / 0.3 across the two groups.
    Biased,
    /// Category `c` occurs only in group `s0`.
    Exclusive,
    /// Runtime benchmark recipe with 10 features.
    Bench,
}

/// Writes a built-in dataset to `out` and its schema to `<stem>.schema.json`.
pub fn cmd_make_data(kind: BuiltinData, n: usize, seed: u64, out: &Path) -> anyhow::Result<PathBuf> {
    if n < 2 {
        return Err(anyhow::anyhow!("--n must be at least 2").context(InputError));
    }
    let table = match kind {
        BuiltinData::Biased => datasets::biased_population(n, seed),
        BuiltinData::Exclusive => datasets::exclusive_category_table(n, seed),
        BuiltinData::Bench => datasets::bench_table(10, n, seed),
    };
    write_csv(&table, out).with_context(|| format!("cannot write {}", out.display()))?;
    let stem = out.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned());
    let schema_path = out.with_file_name(format!("{stem}.schema.json"));
    std::fs::write(&schema_path, serde_json::to_string_pretty(table.schema())?)
        .with_context(|| format!("cannot write {}", schema_path.display()))?;
    Ok(schema_path)
}
