//! Byte-stable report emission: JSON with sorted keys and CSV tables, all
//! floats written with 17 significant digits.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::{ExperimentConfig, OutputFormat};
use crate::CliError;

pub const ARTIFACT: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `x` with 17 significant digits; non-finite values spelled out.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&fmt_f64(n.as_f64().expect("f64 number")));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, x);
            }
            out.push(']');
        }
        Value::Object(m) => {
            // serde_json's default map is ordered by key
            out.push('{');
            for (i, (k, x)) in m.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push(':');
                write_value(out, x);
            }
            out.push('}');
        }
    }
}

/// Canonical JSON text of any serializable value.
pub fn to_canonical_json<T: Serialize>(data: &T) -> Result<String, CliError> {
    let v = serde_json::to_value(data).map_err(|e| CliError::Internal(format!("serialization failed: {e}")))?;
    let mut s = String::new();
    write_value(&mut s, &v);
    s.push('\n');
    Ok(s)
}

/// Plot-ready table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// A report: structured result, optional table view, and status.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub inputs: Value,
    pub result: Value,
    pub table: Option<Table>,
    pub partial: bool,
    pub error: Option<Value>,
}

#[derive(Serialize)]
struct Envelope<'a> {
    artifact: Artifact,
    command: &'a str,
    config: &'a ExperimentConfig,
    inputs: &'a Value,
    partial: bool,
    result: &'a Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: &'a Option<Value>,
}

#[derive(Serialize)]
struct Artifact {
    name: &'static str,
    version: &'static str,
}

/// Report text in the configured format.
pub fn render(report: &Report, cfg: &ExperimentConfig) -> Result<String, CliError> {
    let env = Envelope {
        artifact: Artifact { name: ARTIFACT, version: VERSION },
        command: report.command,
        config: cfg,
        inputs: &report.inputs,
        partial: report.partial,
        result: &report.result,
        error: &report.error,
    };
    match (cfg.output_format, &report.table) {
        (OutputFormat::Csv, Some(t)) => {
            let meta = to_canonical_json(&env_meta(&env))?;
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(&t.header).map_err(|e| CliError::Internal(e.to_string()))?;
            for r in &t.rows {
                w.write_record(r).map_err(|e| CliError::Internal(e.to_string()))?;
            }
            let body = String::from_utf8(w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            Ok(format!("# {}", meta) + &body)
        }
        _ => to_canonical_json(&env),
    }
}

/// Metadata line for CSV output: everything except the result body.
fn env_meta(env: &Envelope<'_>) -> Value {
    serde_json::json!({
        "artifact": {"name": env.artifact.name, "version": env.artifact.version},
        "command": env.command,
        "config": env.config,
        "inputs": env.inputs,
        "partial": env.partial,
        "error": env.error,
    })
}

/// Writes the report to `path`, or standard output when `path` is `None`.
pub fn emit_report(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}")))?;
            out.flush().map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_json_sorts_and_formats() {
        let v = serde_json::json!({"b": 0.1, "a": [1, 2.5], "c": null});
        let s = to_canonical_json(&v).unwrap();
        assert_eq!(s, "{\"a\":[1,2.5000000000000000e0],\"b\":1.0000000000000001e-1,\"c\":null}\n");
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["b"].as_f64(), Some(0.1));
    }

    #[test]
    fn float_format_round_trips() {
        for x in [std::f64::consts::PI, 1e-300, -2.0 / 3.0, 123456789.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }
}
