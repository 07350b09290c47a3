use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::{Schema, Table};

/// Cell contents treated as missing values.
const MISSING_TOKENS: &[&str] = &["", "NA", "N/A", "NaN", "nan", "?"];

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Drop rows containing missing values instead of rejecting the file.
    pub drop_na: bool,
}

/// Reads an RFC-4180 CSV with a header row. Columns may appear in any order;
/// they are reordered to schema order. Header columns not named in the schema
/// are ignored. Cells are trimmed of surrounding whitespace.
pub fn load_csv(path: &Path, schema: &Schema, options: LoadOptions) -> Result<Table> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::invalid(format!("{}: {other:?}", path.display())),
        })?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(Error::EmptyFile);
    }
    let positions: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();
    let mapping: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| {
            positions
                .get(c.name.as_str())
                .copied()
                .ok_or_else(|| Error::MissingColumn(c.name.clone()))
        })
        .collect::<Result<_>>()?;
    if headers.len() > mapping.len() {
        log::info!(
            "{}: ignoring {} column(s) not named in the schema",
            path.display(),
            headers.len() - mapping.len()
        );
    }

    let mut rows = Vec::new();
    let mut dropped = 0usize;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(mapping.len());
        let mut missing = None;
        for (spec, &pos) in schema.columns.iter().zip(&mapping) {
            let cell = record.get(pos).unwrap_or("").trim();
            if missing.is_none() && MISSING_TOKENS.contains(&cell) {
                missing = Some(spec.name.clone());
            }
            row.push(cell.to_string());
        }
        match missing {
            Some(col) if !options.drop_na => {
                return Err(Error::MissingValue { row: r + 1, col });
            }
            Some(_) => dropped += 1,
            None => rows.push(row),
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} row(s) with missing values", path.display());
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    Table::from_string_rows(schema.clone(), &rows)
}

/// Writes the table as CSV in schema order. Numerical cells use a
/// 17-significant-digit representation so that reading them back is exact.
pub fn write_csv(table: &Table, path: &Path) -> Result<()> {
    if table.n_rows() == 0 {
        return Err(Error::EmptyTable);
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new().from_writer(std::io::BufWriter::new(file));
    writer.write_record(table.schema().columns.iter().map(|c| c.name.as_str()))?;
    let n_cols = table.schema().len();
    let mut record = Vec::with_capacity(n_cols);
    for row in 0..table.n_rows() {
        record.clear();
        record.extend((0..n_cols).map(|c| table.cell_string(c, row)));
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Formats `x` like C's `printf("%.17g", x)`.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();

    if !(-4..17).contains(&exp) {
        let frac = digits[1..].trim_end_matches('0');
        let mut out = format!("{sign}{}", &digits[..1]);
        if !frac.is_empty() {
            out.push('.');
            out.push_str(frac);
        }
        let esign = if exp < 0 { '-' } else { '+' };
        out.push_str(&format!("e{esign}{:02}", exp.abs()));
        return out;
    }
    if exp >= 0 {
        let split = exp as usize + 1;
        let int_part = &digits[..split];
        let frac = digits[split..].trim_end_matches('0');
        if frac.is_empty() {
            format!("{sign}{int_part}")
        } else {
            format!("{sign}{int_part}.{frac}")
        }
    } else {
        let zeros = "0".repeat((-exp - 1) as usize);
        format!("{sign}0.{zeros}{}", digits.trim_end_matches('0'))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{Column, ColumnSpec};
    use proptest::prelude::*;
    use std::io::Write;

    fn schema() -> Schema {
        Schema::new(
            vec![
                ColumnSpec::numerical("age"),
                ColumnSpec::categorical("sex"),
                ColumnSpec::categorical("income"),
            ],
            "sex",
            "income",
        )
        .unwrap()
    }

    fn write_tmp(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn g17_matches_printf() {
        assert_eq!(format_g17(39.0), "39");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(-2.5), "-2.5");
        assert_eq!(format_g17(1e20), "1e+20");
        assert_eq!(format_g17(1.5e-7), "1.4999999999999999e-07");
        assert_eq!(format_g17(0.00012), "0.00012");
        assert_eq!(format_g17(12345678901234567.0), "12345678901234568");
        assert_eq!(format_g17(0.0), "0");
    }

    proptest! {
        #[test]
        fn g17_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            prop_assert_eq!(format_g17(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn load_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "age,sex,income\n25,F,low\n40,M,high\n33,F,high\n");
        let t = load_csv(&p, &schema(), LoadOptions::default()).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.dictionary(1), ["F", "M"]);
        assert_eq!(t.column(0), &Column::Numerical(vec![25.0, 40.0, 33.0]));
    }

    #[test]
    fn permuted_header_gives_identical_table() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_tmp(&dir, "a.csv", "age,sex,income\n25,F,low\n40,M,high\n");
        let b = write_tmp(&dir, "b.csv", "income,age,sex\nlow,25,F\nhigh,40,M\n");
        let ta = load_csv(&a, &schema(), LoadOptions::default()).unwrap();
        let tb = load_csv(&b, &schema(), LoadOptions::default()).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn unparsable_numeric_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "age,sex,income\n25,F,low\nabc,M,high\n");
        match load_csv(&p, &schema(), LoadOptions::default()) {
            Err(Error::ParseError { row, col, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(col, "age");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "age,sex\n25,F\n");
        assert!(matches!(
            load_csv(&p, &schema(), LoadOptions::default()),
            Err(Error::MissingColumn(c)) if c == "income"
        ));
        let e = write_tmp(&dir, "e.csv", "");
        assert!(matches!(load_csv(&e, &schema(), LoadOptions::default()), Err(Error::EmptyFile)));
        let h = write_tmp(&dir, "h.csv", "age,sex,income\n");
        assert!(matches!(load_csv(&h, &schema(), LoadOptions::default()), Err(Error::EmptyFile)));
    }

    #[test]
    fn missing_values_rejected_or_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "a.csv",
            "age,sex,income\n25,F,low\n,M,high\n40,?,low\n41,M,high\n",
        );
        assert!(matches!(
            load_csv(&p, &schema(), LoadOptions::default()),
            Err(Error::MissingValue { row: 2, .. })
        ));
        let t = load_csv(&p, &schema(), LoadOptions { drop_na: true }).unwrap();
        assert_eq!(t.n_rows(), 2);
    }

    #[test]
    fn write_quotes_commas_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<Vec<String>> = vec![
            vec!["0.1".into(), "F".into(), "a, b".into()],
            vec!["1e-300".into(), "M".into(), "c\"d".into()],
        ];
        let t = Table::from_string_rows(schema(), &rows).unwrap();
        let p = dir.path().join("out.csv");
        write_csv(&t, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"a, b\""));
        assert!(text.contains("\"c\"\"d\""));
        assert_eq!(load_csv(&p, &schema(), LoadOptions::default()).unwrap(), t);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv(Path::new("/nonexistent/x.csv"), &schema(), LoadOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn empty_table_cannot_be_built() {
        let err = Table::from_string_rows(schema(), &[]).unwrap_err();
        assert!(matches!(err, Error::EmptyTable));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn csv_round_trip(
            cells in proptest::collection::vec(
                (-1e6f64..1e6, "[a-z][a-z ,\"]{0,6}[a-z]", any::<bool>(), any::<bool>()), 2..30)
        ) {
            let mut rows: Vec<Vec<String>> = cells
                .iter()
                .map(|(x, c, s, y)| vec![
                    format_g17(*x),
                    c.clone(),
                    (*s as u8).to_string(),
                    (*y as u8).to_string(),
                ])
                .collect();
            rows[0][2] = "0".into();
            rows[1][2] = "1".into();
            rows[0][3] = "0".into();
            rows[1][3] = "1".into();
            let schema = Schema::new(
                vec![
                    ColumnSpec::numerical("x"),
                    ColumnSpec::categorical("c"),
                    ColumnSpec::categorical("s"),
                    ColumnSpec::categorical("y"),
                ],
                "s",
                "y",
            ).unwrap();
            let t = Table::from_string_rows(schema.clone(), &rows).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("t.csv");
            write_csv(&t, &p).unwrap();
            prop_assert_eq!(load_csv(&p, &schema, LoadOptions::default()).unwrap(), t);
        }
    }
}
