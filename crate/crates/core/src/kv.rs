//! Flat `key = value` text files with optional `[section]` headers.
//!
//! Keys inside a section are addressed as `section.key`. Lines starting with
//! `#` are comments. Every key must be consumed by a reader, so typos surface
//! as [`Error::UnknownKey`] instead of being silently ignored.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub struct KvMap {
    map: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(KvMap {
            map,
            used: RefCell::default(),
        })
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(raw) = self.map.get(key) else {
            return Ok(None);
        };
        self.used.borrow_mut().insert(key.to_string());
        raw.parse()
            .map(Some)
            .map_err(|e| Error::Config(format!("key `{key}`: cannot parse `{raw}`: {e}")))
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Fails on the first key no reader asked for.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        match self.map.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(Error::UnknownKey(k.clone())),
            None => Ok(()),
        }
    }
}

/// Renders `(key, value)` pairs under an optional section header.
pub fn render_section(section: Option<&str>, pairs: &[(&str, String)]) -> String {
    let mut out = String::new();
    if let Some(s) = section {
        out.push_str(&format!("[{s}]\n"));
    }
    for (k, v) in pairs {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}
