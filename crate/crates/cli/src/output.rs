//! Tables and documents, written as CSV or JSON.

use std::io::Write;

use clap::ValueEnum;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

pub enum Report {
    /// Rows of numbers plus free-form metadata (JSON only).
    Table {
        columns: Vec<&'static str>,
        rows: Vec<Vec<Value>>,
        meta: Value,
    },
    Doc(Value),
}

pub fn complex(z: Complex64) -> Value {
    json!({ "re": z.re, "im": z.im })
}

pub fn complexes(zs: &[Complex64]) -> Value {
    Value::Array(zs.iter().map(|z| complex(*z)).collect())
}

/// `null` for non-finite values, as JSON has no infinity.
pub fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

impl Report {
    pub fn write(&self, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
        match format {
            Format::Json => {
                let v = match self {
                    Report::Table { columns, rows, meta } => {
                        let rows: Vec<Value> = rows
                            .iter()
                            .map(|r| Value::Object(columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect()))
                            .collect();
                        let mut m = match meta {
                            Value::Object(m) => m.clone(),
                            Value::Null => Map::new(),
                            other => Map::from_iter([("meta".to_string(), other.clone())]),
                        };
                        m.insert("rows".into(), Value::Array(rows));
                        Value::Object(m)
                    }
                    Report::Doc(v) => v.clone(),
                };
                serde_json::to_writer_pretty(&mut *out, &v).map_err(CliError::io)?;
                writeln!(out).map_err(CliError::io)
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                match self {
                    Report::Table { columns, rows, .. } => {
                        w.write_record(columns).map_err(CliError::io)?;
                        for r in rows {
                            w.write_record(r.iter().map(cell)).map_err(CliError::io)?;
                        }
                    }
                    Report::Doc(v) => {
                        w.write_record(["key", "value"]).map_err(CliError::io)?;
                        let mut flat = Vec::new();
                        flatten("", v, &mut flat);
                        for (k, v) in flat {
                            w.write_record([k, v]).map_err(CliError::io)?;
                        }
                    }
                }
                w.flush().map_err(CliError::io)
            }
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(&key(k), x, out);
            }
        }
        Value::Array(a) => {
            for (j, x) in a.iter().enumerate() {
                flatten(&key(&j.to_string()), x, out);
            }
        }
        other => out.push((prefix.to_string(), cell(other))),
    }
}
