use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Numeric CSV with a header row; every record must have `columns` fields.
pub fn read_table(path: &Path, columns: usize) -> CliResult<Vec<Vec<f64>>> {
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{shown}: {e}")))?;
    let header_len = reader.headers().map_err(|e| CliError::Config(format!("{shown}: {e}")))?.len();
    if header_len != columns {
        return Err(CliError::Parse {
            path: shown,
            line: 1,
            message: format!("expected {columns} columns, header has {header_len}"),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Parse {
            path: shown.clone(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != columns {
            return Err(CliError::Parse {
                path: shown,
                line,
                message: format!("expected {columns} fields, found {}", record.len()),
            });
        }
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| CliError::Parse {
                    path: shown.clone(),
                    line,
                    message: format!("`{field}` is not a finite number"),
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Parse { path: shown, line: 2, message: "no data rows".into() });
    }
    Ok(rows)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: shown.clone(), source })?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: shown,
        line: e.line() as u64,
        message: e.to_string(),
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Writes to `path`, or standard output when absent.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io { path: p.display().to_string(), source }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io { path: "<stdout>".into(), source })
        }
    }
}
