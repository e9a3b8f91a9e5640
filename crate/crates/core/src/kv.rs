//! Minimal `key = value` text format shared by the sensor and campaign files.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! line    := blank | comment | entry
//! comment := '#' any*
//! entry   := key ws* '=' ws* value (ws* comment)?
//! ```
//!
//! Keys are case-sensitive identifiers. A key may appear at most once.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub(crate) fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut entries: Vec<Entry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Parse {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::Parse {
                line,
                message: format!("invalid key `{key}`"),
            });
        }
        if value.is_empty() {
            return Err(Error::Parse {
                line,
                message: format!("key `{key}` has an empty value"),
            });
        }
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            return Err(Error::Parse {
                line,
                message: format!("key `{key}` already set on line {}", prev.line),
            });
        }
        entries.push(Entry {
            line,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(entries)
}

pub(crate) fn parse_f64(entry: &Entry, token: &str) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| Error::Parse {
        line: entry.line,
        message: format!("key `{}`: `{token}` is not a number", entry.key),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line: entry.line,
            message: format!("key `{}`: value must be finite", entry.key),
        });
    }
    Ok(v)
}

pub(crate) fn parse_numbers(entry: &Entry) -> Result<Vec<f64>> {
    entry
        .value
        .split_whitespace()
        .map(|tok| parse_f64(entry, tok))
        .collect()
}

pub(crate) fn find<'a>(entries: &'a [Entry], key: &str) -> Option<&'a Entry> {
    entries.iter().find(|e| e.key == key)
}

pub(crate) fn require<'a>(entries: &'a [Entry], key: &str) -> Result<&'a Entry> {
    find(entries, key).ok_or_else(|| Error::MissingKey(key.to_string()))
}
