//! One-column datasets: plain one-value-per-line text, or CSV with header `x`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn parse_dataset(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut seen_header = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header && out.is_empty() && line.trim_matches('"') == "x" {
            seen_header = true;
            continue;
        }
        let value: f64 = line
            .trim_matches('"')
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: '{line}' is not a number", lineno + 1)))?;
        if !value.is_finite() {
            return Err(Error::Parse(format!("line {}: non-finite value", lineno + 1)));
        }
        out.push(value);
    }
    if out.is_empty() {
        return Err(Error::Parse("dataset is empty".into()));
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<f64>> {
    parse_dataset(&fs::read_to_string(path)?)
}

/// CSV with header `x`; values use Rust's shortest round-trip formatting.
pub fn format_dataset(data: &[f64]) -> String {
    let mut s = String::with_capacity(data.len() * 20 + 2);
    s.push_str("x\n");
    for v in data {
        s.push_str(&format!("{v:?}\n"));
    }
    s
}

pub fn write_dataset(path: &Path, data: &[f64]) -> Result<()> {
    fs::write(path, format_dataset(data))?;
    Ok(())
}
