use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fairgdt::metrics::EvalParams;
use fairgdt::OrderingStrategy;
use fairgdt_cli::bench::{run_bench, write_bench_csv};
use fairgdt_cli::commands::{
    cmd_evaluate, cmd_fit, cmd_generate, cmd_make_data, csv_lines, tree_params, BuiltinData, DataFormat, DataSource,
    EvaluateArgs, PlanChoice, RunConfig,
};
use fairgdt_cli::experiment::{run_sweep, summary_path, PipelineParams, SweepConfig};
use fairgdt_cli::{configure_threads, exit_code, render_error, InputError, EXIT_INTERNAL};

#[derive(Parser)]
#[command(name = "fairgdt", version, about = "Fair synthetic tabular data from autoregressive decision trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Input table.
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON (column kinds, sensitive and target column).
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DataFormat::Csv)]
    format: DataFormat,
    /// Drop rows with missing values instead of failing.
    #[arg(long)]
    drop_na: bool,
}

impl DataArgs {
    fn source(&self) -> DataSource {
        DataSource {
            path: self.data.clone(),
            schema: self.schema.clone(),
            format: self.format,
            drop_na: self.drop_na,
        }
    }
}

#[derive(Args, Clone)]
struct TreeArgs {
    /// Minimum rows per leaf of the generator trees.
    #[arg(long, default_value_t = 20)]
    min_leaf: usize,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Let the target tree split on the sensitive column.
    #[arg(long)]
    y_tree_include_s: bool,
}

impl TreeArgs {
    fn config(&self) -> fairgdt::GeneratorConfig {
        fairgdt::GeneratorConfig {
            tree: tree_params(self.min_leaf, self.max_depth),
            y_tree_include_s: self.y_tree_include_s,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the generator and the resampling plan.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// Model directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        thr_disc: f64,
        #[arg(long, default_value = "original")]
        ordering: OrderingStrategy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        tree: TreeArgs,
    },
    /// Sample synthetic rows from a fitted model.
    Generate {
        /// Model directory written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Number of rows; defaults to the training size.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
        /// Use `plan_lambda<λ>.json` from the model directory.
        #[arg(long, conflicts_with_all = ["plan", "no_plan"])]
        lambda: Option<f64>,
        /// Use this plan file.
        #[arg(long, conflicts_with = "no_plan")]
        plan: Option<PathBuf>,
        /// Sample the target without fairness adjustment.
        #[arg(long)]
        no_plan: bool,
    },
    /// Score synthetic data against real data.
    Evaluate {
        /// Real rows the downstream classifier is tested on.
        #[command(flatten)]
        data: DataArgs,
        /// Synthetic CSV.
        #[arg(long)]
        synth: PathBuf,
        /// Real rows the generator saw, for fidelity and privacy metrics
        /// (defaults to --data).
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Results CSV to append a row to.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Let the downstream classifier read the sensitive column.
        #[arg(long)]
        downstream_include_s: bool,
    },
    /// Cross-validated λ × ordering experiment.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        /// Output directory for results.csv and results.summary.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        lambda: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "original")]
        ordering: Vec<OrderingStrategy>,
        /// One k-fold repetition per seed.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seed: Vec<u64>,
        #[arg(long, default_value_t = 3)]
        folds: usize,
        /// Concurrent cells.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        thr_disc: f64,
        /// Synthetic rows per cell; defaults to the training split size.
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        tree: TreeArgs,
        #[arg(long)]
        downstream_include_s: bool,
        /// Only compute downstream ROC AUC and parity.
        #[arg(long)]
        skip_quality: bool,
    },
    /// Time fitting and sampling on generated tables.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "10")]
        features: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "10000")]
        rows: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        min_leaf: usize,
        /// Timing CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a built-in dataset and its schema.
    MakeData {
        #[arg(long, value_enum)]
        kind: BuiltinData,
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Fit {
            data,
            out,
            lambda,
            thr_disc,
            ordering,
            seed,
            tree,
        } => {
            let config = RunConfig {
                lambda,
                thr_disc,
                ordering,
                seed,
                generator: tree.config(),
                ..RunConfig::new(data.source(), out)
            };
            println!("{}", cmd_fit(&config)?);
        }
        Command::Generate {
            model,
            n,
            seed,
            out,
            lambda,
            plan,
            no_plan,
        } => {
            let choice = match (lambda, plan, no_plan) {
                (Some(l), _, _) => PlanChoice::Lambda(l),
                (_, Some(p), _) => PlanChoice::File(p),
                (_, _, true) => PlanChoice::NoPlan,
                _ => PlanChoice::Auto,
            };
            let synth = cmd_generate(&model, n, seed, &out, &choice)?;
            eprintln!("wrote {} rows to {}", synth.n_rows(), out.display());
        }
        Command::Evaluate {
            data,
            synth,
            train,
            seed,
            out,
            json,
            downstream_include_s,
        } => {
            let args = EvaluateArgs {
                real: data.source(),
                synth,
                train,
                seed,
                params: EvalParams {
                    downstream_include_s,
                    ..EvalParams::default()
                },
                out: out.clone(),
                json,
            };
            let report = cmd_evaluate(&args)?;
            print!("{}", report.to_table_string());
            if out.is_none() {
                println!("{}", csv_lines(&report));
            }
        }
        Command::Sweep {
            data,
            out,
            lambda,
            ordering,
            seed,
            folds,
            jobs,
            thr_disc,
            n,
            tree,
            downstream_include_s,
            skip_quality,
        } => {
            let run_config = RunConfig {
                thr_disc,
                n_folds: folds,
                n_synthetic: n,
                generator: tree.config(),
                ..RunConfig::new(data.source(), &out)
            };
            run_config.validate()?;
            if jobs == Some(0) {
                return Err(anyhow::anyhow!("--jobs must be positive").context(InputError));
            }
            let table = run_config.data.load()?;
            let config = SweepConfig {
                lambdas: lambda,
                orderings: ordering,
                seeds: seed,
                n_folds: folds,
                jobs,
                params: PipelineParams {
                    generator: run_config.generator.clone(),
                    thr_disc,
                    eval: EvalParams {
                        downstream_include_s,
                        quality: !skip_quality,
                        ..EvalParams::default()
                    },
                    n_synthetic: n,
                },
            };
            std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            let results = out.join("results.csv");
            let cells = run_sweep(&table, &config, Some(&results)).context(InputError)?;
            let summary = summary_path(&results);
            fairgdt_cli::experiment::write_summary(&summary, &cells, &config)?;
            let failed = cells.iter().filter(|c| c.outcome.is_err()).count();
            if failed > 0 {
                log::warn!("{failed} of {} cells failed; see the status column", cells.len());
                eprintln!("warning: {failed} of {} cells failed", cells.len());
            }
            println!("{}", results.display());
            println!("{}", summary.display());
        }
        Command::Bench {
            features,
            rows,
            seed,
            min_leaf,
            out,
        } => {
            let config = fairgdt::GeneratorConfig {
                tree: tree_params(min_leaf, None),
                ..Default::default()
            };
            let timings = run_bench(&features, &rows, &config, seed).context(InputError)?;
            match out {
                Some(path) => {
                    let file =
                        std::fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
                    write_bench_csv(file, &timings)?;
                }
                None => write_bench_csv(std::io::stdout().lock(), &timings)?,
            }
        }
        Command::MakeData { kind, n, seed, out } => {
            let schema = cmd_make_data(kind, n, seed, &out)?;
            println!("{}", out.display());
            println!("{}", schema.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = std::panic::catch_unwind(|| configure_threads().and_then(|()| run(cli)));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("{}", render_error(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL as u8),
    }
}
