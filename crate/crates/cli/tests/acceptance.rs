//! End-to-end acceptance checks. Prints one PASS/FAIL/SKIP line per criterion
//! and exits non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use fairgdt::cart::{compute_leaf_fairness, fit_tree, CartTree, TreeParams};
use fairgdt::fairlift::{greedy_select_impacts, leaf_impacts, LeafImpact};
use fairgdt::metrics::{
    column_scores, dcr, detection_score, ks_score, neighborhood_points, roc_auc, stat_parity, tv_score, EvalParams,
    EvalReport,
};
use fairgdt::tabular::{make_folds, Column, ColumnKind, ColumnSpec, DenseMatrix, Schema, Table};
use fairgdt::{
    build_plan, fit_generator, full_report, rng, sample_synthetic, ForestParams, GeneratorConfig, OrderingStrategy,
};
use fairgdt_cli::bench::bench_one;
use fairgdt_cli::datasets::{biased_population, exclusive_category_table, load_adult};
use fairgdt_cli::experiment::{run_sweep, CellResult, PipelineParams, SweepConfig};
use rand::Rng;

const LAMBDAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const BIASED_ROWS: usize = 5000;
const BIASED_SEED: u64 = 7;
const SEEDS: [u64; 3] = [0, 1, 2];
const FOLDS: usize = 3;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn range(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn string_table(specs: &[(&str, bool)], rows: &[Vec<String>]) -> Table {
    let columns = specs
        .iter()
        .map(|&(n, num)| if num { ColumnSpec::numerical(n) } else { ColumnSpec::categorical(n) })
        .collect();
    Table::from_string_rows(Schema::new(columns, "s", "y").unwrap(), rows).unwrap()
}

fn y_tree(t: &Table, predictors: &[&str], params: &TreeParams) -> CartTree {
    let predictors: Vec<String> = predictors.iter().map(|p| p.to_string()).collect();
    let mut tree = fit_tree(t, "y", &predictors, params).unwrap();
    compute_leaf_fairness(&mut tree, t, "s", "y").unwrap();
    tree
}

// 1

fn worked_example() -> Verdict {
    // x=a: 8 of 10 positive, all in group s0; x=b: 1 of 10 positive, all s1.
    let rows: Vec<Vec<String>> = (0..20)
        .map(|i| {
            let (x, s, y) = if i < 10 { ("a", "s0", i < 8) } else { ("b", "s1", i == 10) };
            vec![x.into(), s.into(), if y { "1" } else { "0" }.into()]
        })
        .collect();
    let t = string_table(&[("x", false), ("s", false), ("y", false)], &rows);
    let tree = y_tree(
        &t,
        &["x"],
        &TreeParams {
            min_samples_leaf: 1,
            ..TreeParams::default()
        },
    );
    let adjusted = |lambda: f64| {
        let plan = build_plan(&tree, lambda, 0.0).unwrap();
        let leaf = plan
            .leaves
            .iter()
            .find(|l| (l.original[1] - 0.8).abs() < 1e-12)
            .expect("the 0.8 leaf is selected");
        (leaf.adjusted[1], leaf.adjusted[0])
    };
    let soft = adjusted(0.3);
    let hard = adjusted(1.0);
    let soft_ok = (soft.0 - 0.62).abs() <= 1e-12 && (soft.1 - 0.38).abs() <= 1e-12;
    let hard_ok = hard.0.abs() <= 1e-12 && (hard.1 - 1.0).abs() <= 1e-12;
    verdict(
        soft_ok && hard_ok,
        format!(
            "lambda=0.3 -> {{1:{:.12}, 0:{:.12}}} (want 0.62/0.38); lambda=1.0 -> {{1:{:.12}, 0:{:.12}}} (want 0/1)",
            soft.0, soft.1, hard.0, hard.1
        ),
    )
}

// 2 and 3

/// Random table with a numerical and a categorical feature and a biased target.
fn random_tree_table(seed: u64) -> (Table, TreeParams) {
    let mut r = rng::stream(seed);
    let n = r.random_range(150..700);
    let levels = r.random_range(2..7);
    let coef: Vec<f64> = (0..levels).map(|_| r.random_range(-1.5..1.5)).collect();
    let bias = r.random_range(-2.0..2.0);
    let slope = r.random_range(-0.1..0.1);
    let rows: Vec<Vec<String>> = (0..n)
        .map(|_| {
            let s = r.random_bool(0.5);
            let g = r.random_range(0..levels);
            let x: f64 = r.random_range(0..40u32).into();
            let logit = coef[g] + slope * (x - 20.0) + if s { bias } else { 0.0 };
            let y = r.random_bool(1.0 / (1.0 + (-logit).exp()));
            vec![
                x.to_string(),
                format!("g{g}"),
                if s { "s0" } else { "s1" }.into(),
                if y { "1" } else { "0" }.into(),
            ]
        })
        .collect();
    let t = string_table(&[("x", true), ("g", false), ("s", false), ("y", false)], &rows);
    let params = TreeParams {
        min_samples_leaf: r.random_range(3..30),
        max_depth: Some(r.random_range(1..6)),
        ..TreeParams::default()
    };
    (t, params)
}

fn exhaustive_feasible(baseline: f64, candidates: &[LeafImpact], thr: f64) -> bool {
    let o = if baseline < 0.0 { -1.0 } else { 1.0 };
    (0u32..1 << candidates.len()).any(|mask| {
        let d: f64 = candidates
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, c)| o * c.delta_disc)
            .sum::<f64>()
            + o * baseline;
        d <= thr
    })
}

struct Corpus {
    trees: Vec<(CartTree, Table)>,
}

fn greedy_vs_exhaustive(corpus: &mut Corpus) -> Verdict {
    // Negative thresholds ask for overshoot and produce infeasible cases.
    let thresholds = [-0.3, -0.1, 0.0, 0.01, 0.03, 0.05];
    let started = Instant::now();
    let (mut cases, mut agree, mut exhaustive_ok, mut seed) = (0, 0, 0, 0u64);
    let mut sizes = std::collections::BTreeSet::new();
    while cases < 240 && seed < 5000 {
        seed += 1;
        let (t, params) = random_tree_table(seed);
        let tree = y_tree(&t, &["x", "g"], &params);
        let (baseline, impacts) = leaf_impacts(&tree).unwrap();
        let o = if baseline < 0.0 { -1.0 } else { 1.0 };
        let candidates: Vec<LeafImpact> = impacts.iter().copied().filter(|i| o * i.delta_disc < 0.0).collect();
        if candidates.len() > 12 {
            continue;
        }
        let thr = thresholds[seed as usize % thresholds.len()];
        let greedy = greedy_select_impacts(baseline, &impacts, thr);
        let optimum = exhaustive_feasible(baseline, &candidates, thr);
        cases += 1;
        sizes.insert(tree.n_leaves());
        exhaustive_ok += usize::from(optimum);
        if greedy.feasible == optimum && (!optimum || greedy.orientation * greedy.new_disc <= thr) {
            agree += 1;
        }
        corpus.trees.push((tree, t));
    }
    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        cases >= 200 && agree == cases && elapsed < 10.0,
        format!(
            "{agree}/{cases} trees agree ({exhaustive_ok} exhaustively feasible, leaf counts {:?}..{:?}), {elapsed:.2}s",
            sizes.first().unwrap_or(&0),
            sizes.last().unwrap_or(&0)
        ),
    )
}

/// Disparity of the hard leaf labels with `flipped` leaves inverted,
/// recomputed from routed training rows.
fn relabeled_disc(tree: &CartTree, t: &Table, flipped: &[usize]) -> f64 {
    let router = tree.router(t).unwrap();
    let preds: Vec<u32> = (0..t.n_rows())
        .map(|r| {
            let leaf = router.leaf(r);
            let m = tree.leaves()[leaf].distribution.majority().unwrap();
            if flipped.contains(&leaf) {
                1 - m
            } else {
                m
            }
        })
        .collect();
    stat_parity(&preds, t.sensitive_codes()).unwrap()
}

fn hard_relabel(corpus: &mut Corpus) -> Verdict {
    // Target trees of fitted generators join the random trees.
    let data = biased_population(BIASED_ROWS, BIASED_SEED);
    for &seed in &SEEDS {
        for split in make_folds(data.n_rows(), FOLDS, seed).unwrap() {
            let train = data.take_rows(&split.train).unwrap();
            let model = fit_generator(&train, OrderingStrategy::Original, &GeneratorConfig::default(), seed).unwrap();
            corpus.trees.push((model.y_tree().clone(), train));
        }
    }
    let excl = exclusive_category_table(2000, 3);
    let model = fit_generator(&excl, OrderingStrategy::Original, &GeneratorConfig::default(), 3).unwrap();
    corpus.trees.push((model.y_tree().clone(), excl));

    let (mut checked, mut feasible, mut bad) = (0, 0, Vec::new());
    for (i, (tree, t)) in corpus.trees.iter().enumerate() {
        for thr in [0.0, 0.02, 0.05] {
            let plan = build_plan(tree, 1.0, thr).unwrap();
            let flipped: Vec<usize> = plan.leaves.iter().map(|l| l.leaf).collect();
            let disc = relabeled_disc(tree, t, &flipped);
            checked += 1;
            if plan.feasible {
                feasible += 1;
                // Oriented, so a negative baseline is judged by its magnitude.
                if plan.orientation * disc > thr + 1e-12 {
                    bad.push(format!("tree {i} thr {thr}: {disc}"));
                }
            }
        }
    }
    verdict(
        bad.is_empty(),
        format!(
            "{} trees, {checked} plans, {feasible} feasible, {} violations {:?}",
            corpus.trees.len(),
            bad.len(),
            bad.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

// 4 and 8

fn downstream_params() -> PipelineParams {
    PipelineParams {
        eval: EvalParams {
            quality: false,
            ..EvalParams::default()
        },
        ..PipelineParams::default()
    }
}

fn sweep(data: &Table, lambdas: &[f64], orderings: &[OrderingStrategy]) -> Vec<CellResult> {
    let config = SweepConfig {
        lambdas: lambdas.to_vec(),
        orderings: orderings.to_vec(),
        seeds: SEEDS.to_vec(),
        n_folds: FOLDS,
        jobs: None,
        params: downstream_params(),
    };
    run_sweep(data, &config, None).unwrap()
}

/// (mean AUC, mean |parity|, mean expected disc) over the successful cells.
fn cell_means<'a>(
    cells: impl IntoIterator<Item = &'a CellResult>,
    lambda: f64,
    ordering: OrderingStrategy,
) -> (f64, f64, f64, usize) {
    let ok: Vec<_> = cells
        .into_iter()
        .filter(|c| c.lambda == lambda && c.ordering == ordering)
        .filter_map(|c| c.outcome.as_ref().ok())
        .collect();
    let auc: Vec<f64> = ok.iter().map(|o| o.report.roc_auc).collect();
    let sp: Vec<f64> = ok.iter().map(|o| o.report.stat_parity.abs()).collect();
    let ed: Vec<f64> = ok.iter().map(|o| o.expected_disc).collect();
    (mean(&auc), mean(&sp), mean(&ed), ok.len())
}

fn lambda_sweep(cells: &[CellResult]) -> Verdict {
    let expected = SEEDS.len() * FOLDS;
    let mut lines = Vec::new();
    let mut means = Vec::new();
    for &l in &LAMBDAS {
        let (auc, sp, ed, n) = cell_means(cells, l, OrderingStrategy::Original);
        lines.push(format!("l={l}: auc {auc:.4} |sp| {sp:.4} disc {ed:.4} ({n} cells)"));
        means.push((auc, sp, ed, n));
    }
    for line in &lines {
        println!("    {line}");
    }
    let complete = means.iter().all(|m| m.3 == expected);
    // Per group as well as on average.
    let mut per_group_monotone = true;
    for &seed in &SEEDS {
        for fold in 0..FOLDS {
            let discs: Vec<f64> = LAMBDAS
                .iter()
                .filter_map(|&l| {
                    cells
                        .iter()
                        .find(|c| c.seed == seed && c.fold == fold && c.lambda == l)
                        .and_then(|c| c.outcome.as_ref().ok())
                        .map(|o| o.expected_disc)
                })
                .collect();
            per_group_monotone &= discs.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        }
    }
    let monotone = per_group_monotone && means.windows(2).all(|w| w[1].2 <= w[0].2 + 1e-12);
    let (auc0, sp0, _, _) = means[0];
    let (auc1, sp1, _, _) = means[LAMBDAS.len() - 1];
    let reduction = 1.0 - sp1 / sp0;
    let auc_drop = auc0 - auc1;
    verdict(
        complete && monotone && reduction >= 0.40 && auc_drop <= 0.04,
        format!(
            "expected_disc non-increasing: {monotone}; |sp| {sp0:.4} -> {sp1:.4} ({:.1}% reduction, need >= 40%); \
             auc {auc0:.4} -> {auc1:.4} (drop {:.2} pts, limit 4)",
            100.0 * reduction,
            100.0 * auc_drop
        ),
    )
}

fn ordering_invariance(original: &[CellResult], others: &[CellResult]) -> Verdict {
    let mut summary = Vec::new();
    let mut ranges = Vec::new();
    for lambda in [0.0, 1.0] {
        let per: Vec<(f64, f64, f64, usize)> =
            OrderingStrategy::ALL.iter().map(|&o| cell_means(original.iter().chain(others), lambda, o)).collect();
        let aucs: Vec<f64> = per.iter().map(|p| p.0).collect();
        let sps: Vec<f64> = per.iter().map(|p| p.1).collect();
        let complete = per.iter().all(|p| p.3 == SEEDS.len() * FOLDS);
        summary.push(format!(
            "l={lambda}: auc range {:.4}, |sp| range {:.4}",
            range(&aucs),
            range(&sps)
        ));
        ranges.push((range(&aucs), range(&sps), complete));
    }
    // The fairness-adjusted setting (lambda = 1) is the one being compared.
    let (auc_r, sp_r, complete) = ranges[1];
    verdict(
        complete && auc_r <= 0.01 && sp_r <= 0.02,
        format!("{} (limits 0.01 / 0.02 at l=1; l=0 informational)", summary.join("; ")),
    )
}

// 5

fn adult_reproduction() -> Verdict {
    let Ok(path) = std::env::var("FAIRGDT_ADULT_DATA") else {
        return Verdict::Skip("set FAIRGDT_ADULT_DATA to the adult.data file to run".into());
    };
    let data = match load_adult(Path::new(&path)) {
        Ok(t) => t,
        Err(e) => return Verdict::Fail(format!("cannot load {path}: {e:#}")),
    };
    let config = SweepConfig {
        lambdas: vec![0.0, 1.0],
        orderings: vec![OrderingStrategy::Original],
        seeds: vec![0],
        n_folds: 3,
        jobs: None,
        params: downstream_params(),
    };
    let cells = run_sweep(&data, &config, None).unwrap();
    let (auc0, _, _, _) = cell_means(&cells, 0.0, OrderingStrategy::Original);
    let (auc1, sp1, _, n) = cell_means(&cells, 1.0, OrderingStrategy::Original);
    let ok = n == 3 && sp1 <= 0.11 && auc1 >= 0.87;
    let detail = format!("l=1: |sp| {sp1:.4} (<= 0.11), auc {auc1:.4} (>= 0.87); l=0 auc {auc0:.4}");
    if !ok && (auc0 - 0.926).abs() > 0.03 {
        println!("WARN  [5] classifier baseline off by more than 0.03 AUC from 0.926: {detail}");
        return Verdict::Pass(format!("downgraded to warning: {detail}"));
    }
    verdict(ok, detail)
}

// 6

fn quality_suite() -> Verdict {
    let data = biased_population(BIASED_ROWS, BIASED_SEED);
    let config = GeneratorConfig {
        tree: TreeParams {
            min_samples_leaf: 20,
            ..TreeParams::default()
        },
        ..GeneratorConfig::default()
    };
    let (mut det, mut dcrs) = (Vec::new(), Vec::new());
    let mut per_column: Vec<(String, ColumnKind, Vec<f64>)> = Vec::new();
    for split in make_folds(data.n_rows(), FOLDS, 0).unwrap() {
        let train = data.take_rows(&split.train).unwrap();
        let test = data.take_rows(&split.test).unwrap();
        let seed = split.fold as u64;
        let model = fit_generator(&train, OrderingStrategy::Original, &config, seed).unwrap();
        let plan = build_plan(model.y_tree(), 1.0, 0.0).unwrap();
        let synth = sample_synthetic(&model, train.n_rows(), Some(&plan), seed).unwrap();
        let report = full_report(&test, &synth, &train, &EvalParams::default(), seed).unwrap();
        det.push(report.detection_score.unwrap());
        dcrs.push(report.dcr.unwrap());
        for (j, c) in column_scores(&train, &synth).unwrap().into_iter().enumerate() {
            if per_column.len() <= j {
                per_column.push((c.name.clone(), c.kind, Vec::new()));
            }
            per_column[j].2.push(c.score);
        }
    }
    let of_kind = |kind: ColumnKind| -> Vec<(String, f64)> {
        per_column
            .iter()
            .filter(|c| c.1 == kind)
            .map(|c| (c.0.clone(), mean(&c.2)))
            .collect()
    };
    let tv = of_kind(ColumnKind::Categorical);
    let ks = of_kind(ColumnKind::Numerical);
    let worst = |v: &[(String, f64)]| {
        v.iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
            .unwrap()
    };
    let (tv_name, tv_min) = worst(&tv);
    let (ks_name, ks_min) = worst(&ks);
    let (d, r) = (mean(&det), mean(&dcrs));
    verdict(
        d <= 0.65 && tv_min >= 0.95 && ks_min >= 0.90 && (0.8..=1.3).contains(&r),
        format!(
            "detection {d:.3} (<= 0.65); min TV {tv_min:.4} [{tv_name}] (>= 0.95); min KS {ks_min:.4} [{ks_name}] \
             (>= 0.90); DCR {r:.3} (0.8..1.3)"
        ),
    )
}

// 7

fn ood_exclusion() -> Verdict {
    let data = exclusive_category_table(3000, 11);
    let rel = data.schema().index_of("rel").unwrap();
    let s = data.schema().sensitive_index();
    let code = |j: usize, label: &str| data.dictionary(j).iter().position(|l| l == label).unwrap() as u32;
    let (c, s1) = (code(rel, "c"), code(s, "s1"));
    let real_ood = (0..data.n_rows())
        .filter(|&r| data.column(rel).as_categorical().unwrap()[r] == c && data.sensitive_codes()[r] == s1)
        .count();
    let (mut ood, mut total, mut c_rows) = (0, 0, 0);
    for seed in 0..10 {
        let model = fit_generator(&data, OrderingStrategy::Original, &GeneratorConfig::default(), seed).unwrap();
        let plan = build_plan(model.y_tree(), 1.0, 0.0).unwrap();
        let synth = sample_synthetic(&model, data.n_rows(), Some(&plan), seed).unwrap();
        let rels = synth.column(rel).as_categorical().unwrap();
        c_rows += rels.iter().filter(|&&v| v == c).count();
        ood += (0..synth.n_rows())
            .filter(|&r| rels[r] == c && synth.sensitive_codes()[r] == s1)
            .count();
        total += synth.n_rows();
    }
    verdict(
        real_ood == 0 && ood == 0 && c_rows > 0,
        format!("{ood} (s1, c) rows in {total} synthetic rows over 10 seeds ({c_rows} rows with c)"),
    )
}

// 9

fn runtime() -> Verdict {
    let config = GeneratorConfig::default();
    let rows = [1_000, 10_000, 50_000];
    let timings: Vec<f64> = rows
        .iter()
        .map(|&n| bench_one(10, n, &config, 0).unwrap().total_s)
        .collect();
    let main = timings[1];
    let monotone = timings.windows(2).all(|w| w[0] < w[1]);
    verdict(
        main <= 5.0 && monotone,
        format!(
            "10x10k fit+sample {main:.3}s (<= 5s); 10x1k {:.3}s, 10x10k {main:.3}s, 10x50k {:.3}s",
            timings[0], timings[2]
        ),
    )
}

// 10

fn shifted(t: &Table, column: &str, by: f64) -> Table {
    let j = t.schema().index_of(column).unwrap();
    let cols: Vec<Column> = t
        .columns()
        .iter()
        .enumerate()
        .map(|(i, c)| match c {
            Column::Numerical(v) if i == j => Column::Numerical(v.iter().map(|x| x + by).collect()),
            other => other.clone(),
        })
        .collect();
    Table::new(t.schema().clone(), cols, t.dictionaries().to_vec()).unwrap()
}

fn grid_points(r: &mut impl Rng) -> DenseMatrix {
    let n = r.random_range(5..14);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..2).map(|_| f64::from(r.random_range(-20..20i8)) / 4.0).collect())
        .collect();
    DenseMatrix::from_rows(&rows)
}

fn metric_oracles() -> Verdict {
    let mut failures: Vec<String> = Vec::new();
    let mut oracle = Vec::new();
    let mut expect = |name: &str, got: f64, want: f64, tol: f64| {
        if (got - want).abs() > tol || got.is_nan() {
            oracle.push(format!("{name}: {got} != {want}"));
        }
    };
    expect("parity constant", stat_parity(&[1, 1, 1, 1], &[0, 0, 1, 1]).unwrap(), 0.0, 0.0);
    expect("parity separated", stat_parity(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 1.0, 0.0);
    expect("parity equal", stat_parity(&[1, 0, 1, 0], &[0, 0, 1, 1]).unwrap(), 0.0, 0.0);
    expect("auc perfect", roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0, 0.0);
    expect("auc ties", roc_auc(&[0.5; 4], &[0, 1, 0, 1]).unwrap(), 0.5, 0.0);
    expect("auc pairs", roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75, 0.0);
    expect("ks identical", ks_score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0, 0.0);
    expect("ks disjoint", ks_score(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0, 0.0);
    expect("ks gap", ks_score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), 2.0 / 3.0, 1e-12);
    expect("tv identical", tv_score(&["A", "B"], &["B", "A"]).unwrap(), 1.0, 0.0);
    expect("tv disjoint", tv_score(&["A", "A"], &["B", "B"]).unwrap(), 0.0, 0.0);
    expect("tv shift", tv_score(&["A", "B"], &["A", "A", "A", "B"]).unwrap(), 0.75, 0.0);
    let line = DenseMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
    let nb = neighborhood_points(&line, &DenseMatrix::from_rows(&[vec![0.4]]), 1).unwrap();
    expect("precision 1-d", nb.precision, 1.0, 0.0);
    expect("density 1-d", nb.density, 2.0, 0.0);
    expect("coverage 1-d", nb.coverage, 0.5, 0.0);

    let real = biased_population(3000, 21);
    let forest = ForestParams {
        n_trees: 30,
        ..ForestParams::default()
    };
    let mut r = rng::stream(22);
    let boot: Vec<usize> = (0..real.n_rows()).map(|_| r.random_range(0..real.n_rows())).collect();
    let bootstrap = real.take_rows(&boot).unwrap();
    let det_boot = detection_score(&real, &bootstrap, &forest, 3).unwrap();
    if !(0.45..=0.60).contains(&det_boot) {
        failures.push(format!("bootstrap detection {det_boot}"));
    }
    let det_shift = detection_score(&real, &shifted(&real, "age", 1000.0), &forest, 4).unwrap();
    if det_shift < 0.99 {
        failures.push(format!("shifted detection {det_shift}"));
    }
    let copy = real.take_rows(&(0..1000).collect::<Vec<_>>()).unwrap();
    expect("dcr copy", dcr(&copy, &copy).unwrap(), 0.0, 0.0);
    failures.append(&mut oracle);
    let fresh = biased_population(1000, 23);
    let ratio = dcr(&copy, &fresh).unwrap();
    if !(0.8..=1.2).contains(&ratio) {
        failures.push(format!("same-distribution dcr {ratio}"));
    }

    let mut r = rng::stream(24);
    let mut counts = [0usize; 4];
    // Parity antisymmetry under swapped groups.
    while counts[0] < 1000 {
        let n = r.random_range(2..30);
        let y: Vec<u32> = (0..n).map(|_| r.random_range(0..2)).collect();
        let s: Vec<u32> = (0..n).map(|_| r.random_range(0..2)).collect();
        if !s.contains(&0) || !s.contains(&1) {
            continue;
        }
        let flipped: Vec<u32> = s.iter().map(|v| 1 - v).collect();
        let (a, b) = (stat_parity(&y, &s).unwrap(), stat_parity(&y, &flipped).unwrap());
        if a != -b {
            failures.push(format!("parity antisymmetry: {a} vs {b}"));
        }
        counts[0] += 1;
    }
    // AUC complement under swapped labels.
    while counts[1] < 1000 {
        let n = r.random_range(2..40);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..8u8))).collect();
        let labels: Vec<u32> = (0..n).map(|_| r.random_range(0..2)).collect();
        if !labels.contains(&0) || !labels.contains(&1) {
            continue;
        }
        let inverted: Vec<u32> = labels.iter().map(|v| 1 - v).collect();
        let sum = roc_auc(&scores, &labels).unwrap() + roc_auc(&scores, &inverted).unwrap();
        if (sum - 1.0).abs() > 1e-12 {
            failures.push(format!("auc complement sums to {sum}"));
        }
        counts[1] += 1;
    }
    // TV against a brute-force frequency table.
    while counts[2] < 1000 {
        let a: Vec<u8> = (0..r.random_range(1..20)).map(|_| r.random_range(0..5)).collect();
        let b: Vec<u8> = (0..r.random_range(1..20)).map(|_| r.random_range(0..5)).collect();
        let freq = |v: &[u8], k: u8| v.iter().filter(|&&x| x == k).count() as f64 / v.len() as f64;
        let brute = 1.0 - 0.5 * (0..5).map(|k| (freq(&a, k) - freq(&b, k)).abs()).sum::<f64>();
        let got = tv_score(&a, &b).unwrap();
        if (got - brute).abs() > 1e-12 {
            failures.push(format!("tv {got} vs brute force {brute}"));
        }
        counts[2] += 1;
    }
    // Precision of (real, synth) is recall of (synth, real).
    while counts[3] < 1000 {
        let real = grid_points(&mut r);
        let synth = grid_points(&mut r);
        let fwd = neighborhood_points(&real, &synth, 3).unwrap();
        let back = neighborhood_points(&synth, &real, 3).unwrap();
        if fwd.precision != back.recall || fwd.recall != back.precision {
            failures.push(format!("precision/recall symmetry: {fwd:?} vs {back:?}"));
        }
        counts[3] += 1;
    }
    let n_failures = failures.len();
    verdict(
        failures.is_empty(),
        format!(
            "hand oracles, detection {det_boot:.3}/{det_shift:.3}, dcr {ratio:.3}, {} randomized cases each; \
             {n_failures} failures {:?}",
            counts[0],
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

// 11

fn run_cli(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_fairgdt"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "fairgdt {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn pipeline_once(dir: &Path) -> (Vec<u8>, EvalReport) {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    run_cli(&["make-data", "--kind", "biased", "--n", "1500", "--seed", "5", "--out", &p("data.csv")]);
    run_cli(&[
        "fit", "--data", &p("data.csv"), "--schema", &p("data.schema.json"), "--out", &p("model"), "--seed", "9",
    ]);
    run_cli(&["generate", "--model", &p("model"), "--seed", "13", "--out", &p("synth.csv")]);
    run_cli(&[
        "evaluate", "--data", &p("data.csv"), "--schema", &p("data.schema.json"), "--synth", &p("synth.csv"),
        "--seed", "17", "--json", &p("report.json"),
    ]);
    let synth = std::fs::read(dir.join("synth.csv")).unwrap();
    let report = EvalReport::from_json(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    (synth, report)
}

fn determinism() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (synth_a, report_a) = pipeline_once(a.path());
    let (synth_b, report_b) = pipeline_once(b.path());
    verdict(
        synth_a == synth_b && report_a == report_b,
        format!(
            "synthetic CSV {} bytes, identical: {}; reports identical: {}",
            synth_a.len(),
            synth_a == synth_b,
            report_a == report_b
        ),
    )
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        }
    }
}

struct Runner {
    only: Option<Vec<usize>>,
    failed: usize,
}

impl Runner {
    /// `ACCEPTANCE_ONLY=2,7` restricts the run to the listed criteria.
    fn from_env() -> Self {
        let only = std::env::var("ACCEPTANCE_ONLY")
            .ok()
            .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
        Runner { only, failed: 0 }
    }

    fn enabled(&self, id: usize) -> bool {
        self.only.as_ref().is_none_or(|ids: &Vec<usize>| ids.contains(&id))
    }

    fn run(&mut self, id: usize, name: &str, f: impl FnOnce() -> Verdict) {
        if !self.enabled(id) {
            println!("SKIP  [{id}] {name}: not selected");
            return;
        }
        let started = Instant::now();
        let v = guarded(f);
        let secs = started.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                self.failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag}  [{id}] {name} ({secs:.1}s): {detail}");
    }
}

fn main() {
    let mut runner = Runner::from_env();
    let mut corpus = Corpus { trees: Vec::new() };
    runner.run(1, "worked resampling example", worked_example);
    runner.run(2, "greedy vs exhaustive search", || greedy_vs_exhaustive(&mut corpus));
    runner.run(3, "hard relabel soundness", || hard_relabel(&mut corpus));

    let data = biased_population(BIASED_ROWS, BIASED_SEED);
    // Shared by the lambda sweep and the ordering comparison.
    let mut original: Option<Vec<CellResult>> = None;
    if runner.enabled(4) || runner.enabled(8) {
        original = catch_unwind(AssertUnwindSafe(|| sweep(&data, &LAMBDAS, &[OrderingStrategy::Original]))).ok();
    }
    runner.run(4, "lambda sweep", || match &original {
        Some(cells) => lambda_sweep(cells),
        None => Verdict::Fail("sweep panicked".into()),
    });
    runner.run(5, "Adult reproduction", adult_reproduction);
    runner.run(6, "quality suite", quality_suite);
    runner.run(7, "out-of-distribution exclusion", ood_exclusion);
    runner.run(8, "ordering invariance", || match &original {
        Some(cells) => {
            let others: Vec<OrderingStrategy> = OrderingStrategy::ALL[1..].to_vec();
            ordering_invariance(cells, &sweep(&data, &[0.0, 1.0], &others))
        }
        None => Verdict::Fail("baseline sweep panicked".into()),
    });
    runner.run(9, "runtime", runtime);
    runner.run(10, "metric oracles", metric_oracles);
    runner.run(11, "determinism", determinism);

    if runner.failed > 0 {
        println!("{} criteria failed", runner.failed);
        std::process::exit(1);
    }
    println!("all selected criteria passed");
}
