//! Command-line front end and experiment harness for `fairgdt`.

pub mod bench;
pub mod commands;
pub mod datasets;
pub mod experiment;

use std::fmt;

/// Context marker for errors caused by user input (exit code 2).
#[derive(Debug, Clone, Copy)]
pub struct InputError;

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("input error")
    }
}

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// 2 for bad input, 3 for a violated internal invariant.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<InputError>().is_some() {
        return EXIT_INPUT;
    }
    let invariant = err
        .chain()
        .any(|c| matches!(c.downcast_ref::<fairgdt::Error>(), Some(fairgdt::Error::Invariant(_))));
    if invariant {
        EXIT_INTERNAL
    } else {
        EXIT_INPUT
    }
}

/// `error: a: b: c`, leaving out the input marker.
pub fn render_error(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    let marker = InputError.to_string();
    for cause in err.chain() {
        let text = cause.to_string();
        if text == marker {
            continue;
        }
        // Some errors already print their source.
        if !parts.last().is_some_and(|p| p.ends_with(&text)) {
            parts.push(text);
        }
    }
    format!("error: {}", parts.join(": "))
}

/// Applies `FAIRGDT_THREADS` to the global worker pool.
pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("FAIRGDT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow::anyhow!("FAIRGDT_THREADS must be a positive integer, got `{value}`").context(InputError))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}
