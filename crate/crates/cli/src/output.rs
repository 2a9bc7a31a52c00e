//! CSV tables and JSON summaries.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::config::{Format, RunConfig};
use crate::CliError;

/// Column-named table of real values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn to_json(&self) -> Value {
        let cols: Map<String, Value> = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| (c.clone(), Value::from(self.rows.iter().map(|r| number(r[j])).collect::<Vec<_>>())))
            .collect();
        Value::Object(cols)
    }
}

/// 17 significant digits; empty for NaN (missing values).
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

/// JSON number, or null when not finite.
pub fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

fn write_csv(path: &Path, table: &Table) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(&table.columns).map_err(io)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|&v| format_number(v))).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes the tables and the summary of one run and returns the created paths.
///
/// CSV format gives one `<prefix>_<table>.csv` per table plus `<prefix>_summary.json`;
/// JSON format gives a single `<prefix>.json` with the tables under "data".
pub fn emit(cfg: &RunConfig, prefix: &str, result: Value, tables: &[Table]) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(&cfg.output).map_err(|e| CliError::Io(format!("{}: {e}", cfg.output.display())))?;
    let meta = json!({
        "program": "radial-aggregation",
        "version": env!("CARGO_PKG_VERSION"),
        "config": serde_json::to_value(cfg).map_err(|e| CliError::Io(e.to_string()))?,
    });
    let mut written = Vec::new();
    match cfg.format {
        Format::Csv => {
            for t in tables {
                let path = cfg.output.join(format!("{prefix}_{}.csv", t.name));
                write_csv(&path, t)?;
                written.push(path);
            }
            let path = cfg.output.join(format!("{prefix}_summary.json"));
            write_json(&path, &json!({ "meta": meta, "result": result }))?;
            written.push(path);
        }
        Format::Json => {
            let data: Map<String, Value> = tables.iter().map(|t| (t.name.clone(), t.to_json())).collect();
            let path = cfg.output.join(format!("{prefix}.json"));
            write_json(&path, &json!({ "meta": meta, "result": result, "data": data }))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Reads a two-column r,rho CSV with a header row.
pub fn read_profile_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let err = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| err(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (ir, iv) = match (col("r"), col("rho")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(err("expected columns r and rho".into())),
    };
    let mut r = Vec::new();
    let mut rho = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let parse = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| err(format!("bad number in data row {}", line + 1)))
        };
        r.push(parse(ir)?);
        rho.push(parse(iv)?);
    }
    Ok((r, rho))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(format_number(0.1), "1.0000000000000001e-1");
        assert_eq!(format_number(-2.0), "-2.0000000000000000e0");
        assert_eq!(format_number(f64::NAN), "");
        let v = 1.0 / 3.0;
        assert_eq!(format_number(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn table_json_is_columnar() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec![1.0, 2.0]);
        t.push(vec![3.0, f64::INFINITY]);
        assert_eq!(t.to_json(), json!({"a": [1.0, 3.0], "b": [2.0, null]}));
    }
}
