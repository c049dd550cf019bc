//! Flat `key = value` text records.
//!
//! Used for checkpoint headers, MPI manifests and configuration files. Blank
//! lines and lines starting with `#` are ignored; keys keep their file order.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut kv = KeyValues::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::format(
                    "key=value record",
                    path,
                    format!("line {}: expected `key = value`, got {line:?}", lineno + 1),
                ));
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::format("key=value record", path, format!("line {}: empty key", lineno + 1)));
            }
            kv.set(key, v.trim());
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Inserts or replaces `key`.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn set_list<T: ToString>(&mut self, key: &str, values: &[T]) {
        let joined = values.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ");
        self.set(key, joined);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn require(&self, key: &str, path: &Path) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::format("key=value record", path, format!("missing key `{key}`")))
    }

    pub fn parse_value<T: FromStr>(&self, key: &str, path: &Path) -> Result<T> {
        let raw = self.require(key, path)?;
        raw.parse()
            .map_err(|_| Error::format("key=value record", path, format!("bad value for `{key}`: {raw:?}")))
    }

    pub fn parse_optional<T: FromStr>(&self, key: &str, path: &Path) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(_) => self.parse_value(key, path).map(Some),
        }
    }

    pub fn parse_list<T: FromStr>(&self, key: &str, path: &Path) -> Result<Vec<T>> {
        let raw = self.require(key, path)?;
        raw.split_whitespace()
            .map(|tok| {
                tok.parse().map_err(|_| {
                    Error::format("key=value record", path, format!("bad list entry for `{key}`: {tok:?}"))
                })
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
