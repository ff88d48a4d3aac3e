use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::Format;
use crate::error::CliResult;
use crate::experiments::Table;

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn write_csv<W: Write>(table: &Table, out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(cell))?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_json(table: &Table) -> Value {
    Value::Array(
        table
            .rows
            .iter()
            .map(|row| {
                let m: Map<String, Value> = table
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| (c.to_string(), v.clone()))
                    .collect();
                Value::Object(m)
            })
            .collect(),
    )
}

pub fn write_table(table: &Table, format: Format, path: &Path) -> CliResult<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        Format::Csv => write_csv(table, file),
        Format::Json => {
            let mut file = file;
            serde_json::to_writer_pretty(&mut file, &to_json(table))?;
            writeln!(file)?;
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master_seed: u64,
    /// How per-realization seeds derive from the master seed.
    pub scheme: String,
}

/// Everything needed to rerun an experiment. Feeding the file back through
/// `--config` reproduces the table bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    /// The validated configuration after command-line overrides.
    pub config: Value,
    pub derived: Map<String, Value>,
    pub seeds: Seeds,
    pub warnings: Vec<String>,
    pub threads: usize,
    pub output: PathBuf,
    pub format: Format,
    pub rows: usize,
    pub started_unix_s: f64,
    pub wall_clock_s: f64,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn write_manifest(m: &RunManifest, path: &Path) -> CliResult<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut file, m)?;
    writeln!(file)?;
    Ok(())
}
