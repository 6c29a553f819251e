//! `key = value` config files with `[section]` headers and `#` comments.
//!
//! Lookups mark entries as used; [`Config::finish`] fails on anything left
//! over, so misspelled or unsupported keys never pass silently.

use std::cell::Cell;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
    used: Cell<bool>,
}

#[derive(Debug, Default)]
pub struct Config {
    entries: Vec<Entry>,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut section = String::new();
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {line}: unterminated section header")))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::Config(format!("line {line}: empty section name")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected `key = value`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {line}: missing key")));
            }
            entries.push(Entry {
                section: section.clone(),
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
                used: Cell::new(false),
            });
        }
        Ok(Self { entries })
    }

    fn matching(&self, section: &str, key: &str) -> Vec<&Entry> {
        self.entries
            .iter()
            .filter(|e| e.section == section && e.key == key)
            .collect()
    }

    /// Raw value of a key that may appear at most once.
    pub fn raw(&self, section: &str, key: &str) -> Result<Option<&str>> {
        let found = self.matching(section, key);
        let first = found.first();
        if let Some(dup) = found.get(1) {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{key}` in [{section}]",
                dup.line
            )));
        }
        Ok(first.map(|e| {
            e.used.set(true);
            e.value.as_str()
        }))
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        let Some(raw) = self.raw(section, key)? else {
            return Ok(None);
        };
        let line = self.matching(section, key).first().map_or(0, |e| e.line);
        raw.parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("line {line}: invalid value `{raw}` for [{section}] {key}")))
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T> {
        self.get(section, key)?
            .ok_or_else(|| Error::Config(format!("missing required key [{section}] {key}")))
    }

    /// Every value of a repeatable key, as `(line, value)`.
    pub fn all(&self, section: &str, key: &str) -> Vec<(usize, &str)> {
        self.matching(section, key)
            .into_iter()
            .map(|e| {
                e.used.set(true);
                (e.line, e.value.as_str())
            })
            .collect()
    }

    pub fn finish(&self) -> Result<()> {
        match self.entries.iter().find(|e| !e.used.get()) {
            Some(e) => Err(Error::Config(format!(
                "line {}: unknown key `{}` in [{}]",
                e.line, e.key, e.section
            ))),
            None => Ok(()),
        }
    }
}

/// Parses a comma-separated list of floats.
pub fn float_list(line: usize, value: &str, expected: usize) -> Result<Vec<f64>> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("line {line}: expected comma-separated numbers, got `{value}`")))?;
    if parts.len() != expected {
        return Err(Error::Config(format!(
            "line {line}: expected {expected} values, got {}",
            parts.len()
        )));
    }
    Ok(parts)
}
