//! Fit and sampling runtimes on generated tables.

use std::io::Write;
use std::time::Instant;

use fairgdt::{build_plan, fit_generator, sample_synthetic, GeneratorConfig, OrderingStrategy};

use crate::datasets::bench_table;

pub const BENCH_HEADER: [&str; 5] = ["n_features", "n_rows", "fit_s", "sample_s", "total_s"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub n_features: usize,
    pub n_rows: usize,
    /// Generator fit plus plan construction at λ = 1.
    pub fit_s: f64,
    /// Drawing `n_rows` synthetic rows with the plan.
    pub sample_s: f64,
    pub total_s: f64,
}

/// Times one table size. Generating the table is not timed.
pub fn bench_one(n_features: usize, n_rows: usize, config: &GeneratorConfig, seed: u64) -> fairgdt::Result<BenchRow> {
    let table = bench_table(n_features, n_rows, seed);
    let t0 = Instant::now();
    let model = fit_generator(&table, OrderingStrategy::Original, config, seed)?;
    let plan = build_plan(model.y_tree(), 1.0, 0.0)?;
    let fit_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let synth = sample_synthetic(&model, n_rows, Some(&plan), seed)?;
    let sample_s = t1.elapsed().as_secs_f64();
    debug_assert_eq!(synth.n_rows(), n_rows);
    Ok(BenchRow {
        n_features,
        n_rows,
        fit_s,
        sample_s,
        total_s: fit_s + sample_s,
    })
}

/// Every combination of `features` × `rows`, features outermost.
pub fn run_bench(
    features: &[usize],
    rows: &[usize],
    config: &GeneratorConfig,
    seed: u64,
) -> anyhow::Result<Vec<BenchRow>> {
    if features.is_empty() || rows.is_empty() {
        anyhow::bail!("bench needs at least one feature count and one row count");
    }
    if features.contains(&0) || rows.iter().any(|&n| n < 2) {
        anyhow::bail!("feature counts must be positive and row counts at least 2");
    }
    let mut out = Vec::new();
    for &f in features {
        for &n in rows {
            let row = bench_one(f, n, config, seed)?;
            log::info!("bench {f} features x {n} rows: {:.3}s", row.total_s);
            out.push(row);
        }
    }
    Ok(out)
}

pub fn write_bench_csv<W: Write>(out: W, rows: &[BenchRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_HEADER)?;
    for r in rows {
        w.write_record([
            r.n_features.to_string(),
            r.n_rows.to_string(),
            format!("{:.6}", r.fit_s),
            format!("{:.6}", r.sample_s),
            format!("{:.6}", r.total_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}
