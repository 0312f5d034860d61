//! Result files: `<command>.csv` (LF line endings, header row) and
//! `<command>.json` (config echo plus summary).

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::Settings;
use crate::error::CliError;

/// Bumped whenever a CSV column list changes.
pub const SCHEMA_VERSION: u32 = 1;

/// A CSV table held in memory until the run succeeds, so a failed run
/// leaves no partial file behind.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &'static [&'static str]) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::io("csv", e);
        w.write_record(self.columns).map_err(fail)?;
        for row in &self.rows {
            w.write_record(row).map_err(fail)?;
        }
        w.into_inner().map_err(|e| CliError::io("csv", e.error()))
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    x.to_string()
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Written {
    pub csv: PathBuf,
    pub json: PathBuf,
}

pub fn write_artifacts(settings: &Settings, table: &Table, results: Value) -> Result<Written, CliError> {
    let dir: &Path = &settings.output;
    fs::create_dir_all(dir).map_err(|e| CliError::io(&format!("creating {}", dir.display()), e))?;
    let name = settings.command.as_str();
    let csv_path = dir.join(format!("{name}.csv"));
    let json_path = dir.join(format!("{name}.json"));
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": name,
        "csv": { "file": format!("{name}.csv"), "columns": table.columns },
        "config": settings,
        "config_text": settings.to_kv(),
        "results": results,
    });
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::io("json", e))?;
    text.push('\n');
    fs::write(&csv_path, table.to_csv()?).map_err(|e| CliError::io(&format!("writing {}", csv_path.display()), e))?;
    fs::write(&json_path, text).map_err(|e| CliError::io(&format!("writing {}", json_path.display()), e))?;
    Ok(Written {
        csv: csv_path,
        json: json_path,
    })
}
