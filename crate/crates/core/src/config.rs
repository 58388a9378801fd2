//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Later keys override earlier ones.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    name: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(name, i + 1, format!("expected `key = value`, found `{line}`")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::parse(name, i + 1, "empty key"));
            }
            entries.insert(k.to_string(), (i + 1, v.trim().to_string()));
        }
        Ok(KeyValues {
            name: name.to_string(),
            entries,
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::parse(&self.name, *line, format!("cannot parse value `{v}` for `{key}`"))),
        }
    }

    /// Comma-separated list, e.g. `anchors = 0,1,2`.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some((line, v)) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|_| Error::parse(&self.name, *line, format!("cannot parse list item `{s}` for `{key}`")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

pub fn format_list<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
