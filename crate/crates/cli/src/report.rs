//! Report emission as CSV or JSON.
//!
//! A report body is a struct of scalar fields, or a struct with a single
//! `rows` array of such structs. JSON output is the body flattened into one
//! object next to `seed` and `config`. CSV output has one line per row, with
//! `seed` as the first column; the config echo is JSON-only.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// The emitted JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub seed: u64,
    pub config: RunConfig,
    #[serde(flatten)]
    pub body: T,
}

pub fn render<T: Serialize>(envelope: &Envelope<T>, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => serde_json::to_string_pretty(envelope).map(|s| s + "\n").map_err(output),
        Format::Csv => csv_text(envelope),
    }
}

pub fn emit(text: &str, out: Option<&std::path::Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(output),
    }
}

fn output(e: impl std::fmt::Display) -> CliError {
    CliError::Output(e.to_string())
}

fn csv_text<T: Serialize>(envelope: &Envelope<T>) -> Result<String, CliError> {
    let body = match serde_json::to_value(&envelope.body).map_err(output)? {
        Value::Object(map) => map,
        _ => return Err(output("report body is not an object")),
    };
    let rows: Vec<Map<String, Value>> = match body.get("rows") {
        Some(Value::Array(items)) if body.len() == 1 => items
            .iter()
            .map(|v| v.as_object().cloned().ok_or_else(|| output("report row is not an object")))
            .collect::<Result<_, _>>()?,
        _ => vec![body],
    };
    let mut writer = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("seed")
        .chain(rows.first().into_iter().flat_map(|r| r.keys().map(String::as_str)))
        .collect();
    writer.write_record(&header).map_err(output)?;
    for row in &rows {
        let mut record = vec![envelope.seed.to_string()];
        for v in row.values() {
            record.push(cell(v)?);
        }
        writer.write_record(&record).map_err(output)?;
    }
    String::from_utf8(writer.into_inner().map_err(output)?).map_err(output)
}

fn cell(v: &Value) -> Result<String, CliError> {
    Ok(match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) if n.is_f64() => significant(n.as_f64().expect("f64 number")),
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        _ => return Err(output("nested value in a CSV cell")),
    })
}

/// Formats `x` with 12 significant digits, trailing zeros trimmed.
pub fn significant(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
