//! Flat `name = value` text files.
//!
//! Used for parameter cards and experiment configs. Blank lines and anything
//! after `#` are ignored. Keys are unique; order is preserved for rendering.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    entries: Vec<(String, String)>,
}

impl KvFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse { path: origin.to_string(), line: idx + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `name = value`, found `{line}`")))?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(parse_err("empty key".into()));
            }
            if entries.iter().any(|(k, _)| k == key) {
                return Err(parse_err(format!("duplicate key `{key}`")));
            }
            entries.push((key.to_string(), value.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn insert(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::key(key, "missing"))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::key(key, format!("cannot parse `{v}`: {e}"))))
            .transpose()
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Comma-separated list of floats.
    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(raw) = self.get(key) else { return Ok(None) };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| Error::key(key, format!("cannot parse `{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Shortest representation that parses back to the identical `f64`.
pub(crate) fn fmt_exact(x: f64) -> String {
    format!("{x:e}")
}
