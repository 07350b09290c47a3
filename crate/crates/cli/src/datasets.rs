//! Built-in dataset recipes: the biased population used by the experiment
//! suite, the runtime benchmark tables and a loader for the Adult census files.

use std::path::Path;

use anyhow::{bail, Context};
use fairgdt::rng;
use fairgdt::tabular::{Column, ColumnSpec, Schema, Table};
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn sorted_labels(labels: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
    v.sort();
    v
}

fn code_of(dict: &[String], label: &str) -> u32 {
    dict.iter().position(|l| l == label).expect("label in dictionary") as u32
}

pub const PRIVILEGED: &str = "privileged";
pub const UNPRIVILEGED: &str = "unprivileged";
const OCCUPATIONS: [&str; 6] = ["occ_a", "occ_b", "occ_c", "occ_d", "occ_e", "occ_f"];
const OCCUPATION_EFFECT: [f64; 6] = [0.5, 0.3, 0.1, -0.1, -0.3, -0.5];
const OCCUPATION_MIX: [[f64; 6]; 2] = [
    [0.25, 0.20, 0.20, 0.15, 0.10, 0.10],
    [0.10, 0.10, 0.15, 0.20, 0.20, 0.25],
];
const EDUCATION: [&str; 4] = ["basic", "highschool", "college", "graduate"];
const EDUCATION_MIX: [f64; 4] = [0.30, 0.35, 0.20, 0.15];
const HOUSEHOLDS: [&str; 3] = ["partner_x", "partner_y", "single"];
const HOUSEHOLD_MIX: [[f64; 3]; 2] = [[0.55, 0.05, 0.40], [0.05, 0.55, 0.40]];
const REGIONS: [&str; 5] = ["central", "east", "north", "south", "west"];
/// Log-odds bonus of the privileged group.
const GROUP_BIAS: f64 = 1.4;

fn draw_index<R: Rng>(weights: &[f64], r: &mut R) -> usize {
    let u: f64 = r.random::<f64>() * weights.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Schema of [`biased_population`].
pub fn biased_schema() -> Schema {
    Schema::new(
        vec![
            ColumnSpec::numerical("age"),
            ColumnSpec::categorical("education"),
            ColumnSpec::categorical("occupation"),
            ColumnSpec::categorical("household"),
            ColumnSpec::numerical("hours"),
            ColumnSpec::numerical("score"),
            ColumnSpec::categorical("region"),
            ColumnSpec::categorical("group"),
            ColumnSpec::categorical("outcome"),
        ],
        "group",
        "outcome",
    )
    .expect("static schema")
}

/// Population with outcome rates of about 0.6 in the privileged group and 0.3
/// in the other. The outcome is logistic in a merit score, education, age,
/// hours and occupation plus a direct bonus for the privileged group.
/// Occupation and hours depend mildly on the group and `household` is a
/// strong proxy for it; `region` is noise.
pub fn biased_population(n: usize, seed: u64) -> Table {
    let mut r = rng::stream(seed);
    let age_noise = Normal::new(0.0, 11.0).expect("valid sd");
    let hours_noise = Normal::new(0.0, 8.0).expect("valid sd");
    let unit = Normal::new(0.0, 1.0).expect("valid sd");
    let education = sorted_labels(&EDUCATION);
    let occupation = sorted_labels(&OCCUPATIONS);
    let households = sorted_labels(&HOUSEHOLDS);
    let regions = sorted_labels(&REGIONS);
    let groups = sorted_labels(&[PRIVILEGED, UNPRIVILEGED]);
    let outcomes = sorted_labels(&["no", "yes"]);

    let (mut age, mut edu, mut occ, mut house) = (vec![], vec![], vec![], vec![]);
    let (mut hours, mut score, mut region, mut group, mut outcome) = (vec![], vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let g = usize::from(r.random_bool(0.5));
        let a = (40.0_f64 + age_noise.sample(&mut r)).clamp(18.0, 80.0).round();
        let e = draw_index(&EDUCATION_MIX, &mut r);
        let o = draw_index(&OCCUPATION_MIX[g], &mut r);
        let hh = draw_index(&HOUSEHOLD_MIX[g], &mut r);
        let h = (if g == 0 { 42.0_f64 } else { 38.0 } + hours_noise.sample(&mut r))
            .clamp(5.0, 90.0)
            .round();
        let merit: f64 = unit.sample(&mut r);
        let logit = -1.5
            + 1.2 * merit
            + 0.45 * e as f64
            + 0.02 * (a - 40.0)
            + 0.03 * (h - 40.0)
            + OCCUPATION_EFFECT[o]
            + if g == 0 { GROUP_BIAS } else { 0.0 };
        let y = r.random_bool(1.0 / (1.0 + (-logit).exp()));

        age.push(a);
        edu.push(code_of(&education, EDUCATION[e]));
        occ.push(code_of(&occupation, OCCUPATIONS[o]));
        house.push(code_of(&households, HOUSEHOLDS[hh]));
        hours.push(h);
        score.push((merit * 1000.0).round() / 1000.0);
        region.push(code_of(&regions, REGIONS[r.random_range(0..REGIONS.len())]));
        group.push(code_of(&groups, [PRIVILEGED, UNPRIVILEGED][g]));
        outcome.push(code_of(&outcomes, if y { "yes" } else { "no" }));
    }
    Table::new(
        biased_schema(),
        vec![
            Column::Numerical(age),
            Column::Categorical(edu),
            Column::Categorical(occ),
            Column::Categorical(house),
            Column::Numerical(hours),
            Column::Numerical(score),
            Column::Categorical(region),
            Column::Categorical(group),
            Column::Categorical(outcome),
        ],
        vec![vec![], education, occupation, households, vec![], vec![], regions, groups, outcomes],
    )
    .expect("generated table is valid")
}

/// Timing table: `n_features` columns, the first half (rounded up) numerical
/// as a Gaussian chain `x_j = 0.6 x_{j-1} + e_j`, the rest categorical with 8
/// levels cut from a noisy copy of a numerical column, plus uniform binary
/// `s` and `y`.
pub fn bench_table(n_features: usize, n_rows: usize, seed: u64) -> Table {
    assert!(n_features > 0 && n_rows > 0);
    let mut r = rng::stream(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid sd");
    let n_num = n_features.div_ceil(2);
    let n_cat = n_features - n_num;
    let levels: Vec<String> = (0..8).map(|k| format!("k{k}")).collect();
    let binary = vec!["0".to_string(), "1".to_string()];

    let mut num = vec![Vec::with_capacity(n_rows); n_num];
    let mut cat = vec![Vec::with_capacity(n_rows); n_cat];
    let mut s = Vec::with_capacity(n_rows);
    let mut y = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let mut prev = 0.0;
        for col in num.iter_mut() {
            prev = 0.6 * prev + unit.sample(&mut r);
            col.push(prev);
        }
        for (j, col) in cat.iter_mut().enumerate() {
            let latent: f64 = num[j % n_num].last().copied().unwrap_or(0.0) + 0.5 * unit.sample(&mut r);
            col.push(((latent + 2.0) * 2.0).floor().clamp(0.0, 7.0) as u32);
        }
        s.push(u32::from(r.random_bool(0.5)));
        y.push(u32::from(r.random_bool(0.5)));
    }

    let mut specs = Vec::new();
    let mut columns = Vec::new();
    let mut dictionaries = Vec::new();
    for (j, col) in num.into_iter().enumerate() {
        specs.push(ColumnSpec::numerical(format!("x{j}")));
        columns.push(Column::Numerical(col));
        dictionaries.push(vec![]);
    }
    for (j, col) in cat.into_iter().enumerate() {
        specs.push(ColumnSpec::categorical(format!("c{j}")));
        columns.push(Column::Categorical(col));
        dictionaries.push(levels.clone());
    }
    specs.push(ColumnSpec::categorical("s"));
    specs.push(ColumnSpec::categorical("y"));
    columns.push(Column::Categorical(s));
    columns.push(Column::Categorical(y));
    dictionaries.push(binary.clone());
    dictionaries.push(binary);
    let schema = Schema::new(specs, "s", "y").expect("generated schema");
    Table::new(schema, columns, dictionaries).expect("generated table is valid")
}

/// Table where category `c` of `rel` only ever occurs in group `s0`.
pub fn exclusive_category_table(n: usize, seed: u64) -> Table {
    let mut r = rng::stream(seed);
    let rels = sorted_labels(&["a", "b", "c"]);
    let binary = sorted_labels(&["s0", "s1"]);
    let ys = sorted_labels(&["0", "1"]);
    let (mut rel, mut noise, mut s, mut y) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let k = r.random_range(0..3u32);
        let g = u32::from(k != 2 && r.random_bool(0.5));
        rel.push(k);
        noise.push(r.random::<f64>());
        s.push(g);
        y.push(u32::from(r.random_bool(if g == 0 { 0.6 } else { 0.3 })));
    }
    let schema = Schema::new(
        vec![
            ColumnSpec::categorical("rel"),
            ColumnSpec::numerical("noise"),
            ColumnSpec::categorical("s"),
            ColumnSpec::categorical("y"),
        ],
        "s",
        "y",
    )
    .expect("static schema");
    Table::new(
        schema,
        vec![
            Column::Categorical(rel),
            Column::Numerical(noise),
            Column::Categorical(s),
            Column::Categorical(y),
        ],
        vec![rels, vec![], binary, ys],
    )
    .expect("generated table is valid")
}

const ADULT_COLUMNS: [(&str, bool); 15] = [
    ("age", true),
    ("workclass", false),
    ("fnlwgt", true),
    ("education", false),
    ("education-num", true),
    ("marital-status", false),
    ("occupation", false),
    ("relationship", false),
    ("race", false),
    ("sex", false),
    ("capital-gain", true),
    ("capital-loss", true),
    ("hours-per-week", true),
    ("native-country", false),
    ("income", false),
];

/// Adult schema: `sex` is sensitive, `income` the target.
pub fn adult_schema() -> Schema {
    let columns = ADULT_COLUMNS
        .iter()
        .map(|&(n, num)| if num { ColumnSpec::numerical(n) } else { ColumnSpec::categorical(n) })
        .collect();
    Schema::new(columns, "sex", "income").expect("static schema")
}

/// Reads the raw UCI files (`adult.data`, `adult.test`): no header, 15
/// comma-separated fields, `?` for missing values. Rows with missing values
/// are dropped; the trailing period of the test file's labels is removed, so
/// `income` is `<=50K` / `>50K` and `>50K` is the positive class.
pub fn load_adult(path: &Path) -> anyhow::Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'|'))
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut rows = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record.with_context(|| format!("reading {}", path.display()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != ADULT_COLUMNS.len() {
            bail!(
                "{}: line {} has {} fields, expected {}",
                path.display(),
                record.position().map_or(0, |p| p.line()),
                record.len(),
                ADULT_COLUMNS.len()
            );
        }
        if record.iter().any(|c| c == "?" || c.is_empty()) {
            dropped += 1;
            continue;
        }
        let mut row: Vec<String> = record.iter().map(str::to_string).collect();
        let last = row.len() - 1;
        row[last] = row[last].trim_end_matches('.').to_string();
        rows.push(row);
    }
    if dropped > 0 {
        log::info!("{}: dropped {dropped} rows with missing values", path.display());
    }
    Table::from_string_rows(adult_schema(), &rows).with_context(|| format!("parsing {}", path.display()))
}
