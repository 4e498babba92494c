//! `key = value` problem files.
//!
//! ```text
//! # fractional test problem
//! alpha = 0.5
//! M = 1
//! N = 1
//! a = 0
//! b = 1
//! x_a = 0
//! x_b = 1
//! L = (u^2 - 4*x)^2
//! f = u + 2/gamma(2.5) * t^1.5
//! ```
//!
//! `x_b` is optional; leaving it out frees the final state. Everything after
//! a `#` is a comment.

use std::collections::BTreeMap;

use focsolve_core::focp::{parse_expr, Expr, ParseError};
use focsolve_core::{Focp, ProblemError};
use thiserror::Error;

const NUMERIC: [&str; 7] = ["alpha", "M", "N", "a", "b", "x_a", "x_b"];
const REQUIRED: [&str; 8] = ["alpha", "M", "N", "a", "b", "x_a", "L", "f"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemFileError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("invalid problem: {0}")]
    Invalid(#[from] ProblemError),
}

impl ProblemFileError {
    pub fn is_syntax(&self) -> bool {
        !matches!(self, ProblemFileError::Invalid(_))
    }
}

struct Entry {
    line: usize,
    column: usize,
    value: String,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ProblemFileError {
    ProblemFileError::Syntax { line, column, message: message.into() }
}

fn char_column(text: &str, byte: usize) -> usize {
    text.get(..byte).map_or(byte, |s| s.chars().count()) + 1
}

fn expr_error(entry: &Entry, err: &ParseError) -> ProblemFileError {
    let column = entry.column + char_column(&entry.value, err.offset()) - 1;
    let message = match err {
        ParseError::Syntax { message, .. } => message.clone(),
        ParseError::UnknownIdentifier { name, .. } => format!("unknown identifier `{name}`"),
    };
    syntax(entry.line, column, message)
}

/// Parse and validate a problem file.
pub fn parse_problem(text: &str) -> Result<Focp, ProblemFileError> {
    let mut entries: BTreeMap<&'static str, Entry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let Some(eq) = content.find('=') else {
            let col = char_column(content, content.len() - content.trim_start().len());
            return Err(syntax(line, col, "expected `key = value`"));
        };
        let key_part = &content[..eq];
        let key = key_part.trim();
        let key_col = char_column(content, key_part.len() - key_part.trim_start().len());
        let Some(&known) = NUMERIC.iter().chain(["L", "f"].iter()).find(|k| **k == key) else {
            return Err(syntax(line, key_col, format!("unknown key `{key}`")));
        };
        let value_part = &content[eq + 1..];
        let value = value_part.trim();
        let value_start = eq + 1 + (value_part.len() - value_part.trim_start().len());
        let column = char_column(content, value_start);
        if value.is_empty() {
            return Err(syntax(line, column, format!("empty value for `{key}`")));
        }
        if NUMERIC.contains(&known) && value.parse::<f64>().is_err() {
            return Err(syntax(line, column, format!("`{value}` is not a number")));
        }
        if entries.contains_key(known) {
            return Err(syntax(line, key_col, format!("duplicate key `{key}`")));
        }
        entries.insert(known, Entry { line, column, value: value.to_string() });
    }

    for key in REQUIRED {
        if !entries.contains_key(key) {
            return Err(ProblemFileError::MissingKey(key));
        }
    }
    let number = |key: &'static str| entries.get(key).map(|e| e.value.parse::<f64>().expect("checked while reading"));
    let expr = |key: &'static str| -> Result<Expr, ProblemFileError> {
        let entry = &entries[key];
        parse_expr(&entry.value).map_err(|e| expr_error(entry, &e))
    };
    let req = |key: &'static str| number(key).expect("required key checked above");

    let running_cost = expr("L")?;
    let dynamics = expr("f")?;
    Ok(Focp::new(
        req("alpha"),
        req("M"),
        req("N"),
        req("a"),
        req("b"),
        req("x_a"),
        number("x_b"),
        running_cost,
        dynamics,
    )?)
}
