//! Flat `key = value` configuration files and the parameter presets.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored. Keys may
//! use `-` or `_` interchangeably. Command-line flags override file values,
//! which override preset defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed key/value pairs with typed accessors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_").to_ascii_lowercase()
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!("line {}", n + 1), format!("expected key = value, got `{line}`")));
            };
            let key = normalize_key(key);
            if key.is_empty() {
                return Err(Error::config(format!("line {}", n + 1), "empty key"));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::config(key, "duplicate key"));
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get_str(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    /// Comma-separated list of values.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get_str(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| {
                    let p = p.trim();
                    p.parse::<T>()
                        .map_err(|e| Error::config(key, format!("cannot parse `{p}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    /// Sets `key`, replacing any previous value.
    pub fn insert(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(normalize_key(key), value.into());
    }

    /// Entries of `other` override those of `self`.
    pub fn merged(mut self, other: &KeyValues) -> Self {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
        self
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on the first key not in `known`, so typos surface as errors.
    pub fn ensure_known(&self, known: &[&str]) -> Result<()> {
        for key in self.keys() {
            if !known.iter().any(|k| normalize_key(k) == key) {
                return Err(Error::config(key, "unknown key"));
            }
        }
        Ok(())
    }
}

/// Parameter regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    /// Layered-sheet regime: 8x8x4 blocks, 256 atoms, beta 0.1.
    #[default]
    Tshape,
    /// Tablet regime: 2x2x128 blocks, 64 atoms, beta 0.2.
    Tablet,
    Custom,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tshape" => Ok(Self::Tshape),
            "tablet" => Ok(Self::Tablet),
            "custom" => Ok(Self::Custom),
            other => Err(Error::config("preset", format!("expected tshape, tablet or custom, got `{other}`"))),
        }
    }
}

/// Block, dictionary and fusion parameters of one regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeParams {
    pub block: (usize, usize, usize),
    pub stride: (usize, usize, usize),
    pub atoms: usize,
    pub l: usize,
    pub lambda: f64,
    pub beta: f64,
    pub max_atoms: usize,
    /// Pursuit noise-floor gain (0 disables the bound).
    pub noise_gain: f64,
}

impl Preset {
    pub fn params(self) -> RegimeParams {
        match self {
            Preset::Tshape | Preset::Custom => RegimeParams {
                block: (8, 8, 4),
                stride: (1, 1, 1),
                atoms: 256,
                l: 10,
                lambda: 0.5,
                beta: 0.1,
                max_atoms: 8,
                noise_gain: 1.0,
            },
            Preset::Tablet => RegimeParams {
                block: (2, 2, 128),
                stride: (1, 1, 1),
                atoms: 64,
                l: 10,
                lambda: 0.5,
                beta: 0.2,
                max_atoms: 12,
                noise_gain: 1.0,
            },
        }
    }
}

/// Parses `a x b x c` / `a,b,c` triples.
pub fn parse_triple(key: &str, s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(['x', ',']).map(str::trim).collect();
    let parsed: Vec<usize> = parts
        .iter()
        .map(|p| p.parse::<usize>().map_err(|e| Error::config(key, format!("cannot parse `{p}`: {e}"))))
        .collect::<Result<_>>()?;
    match parsed[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::config(key, format!("expected three values like 8x8x4, got `{s}`"))),
    }
}

/// Parses a decibel value; `inf` selects the noiseless bypass.
pub fn parse_db(key: &str, s: &str) -> Result<f64> {
    match s.trim() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        v => v
            .parse::<f64>()
            .ok()
            .filter(|x| !x.is_nan())
            .ok_or_else(|| Error::config(key, format!("expected a number or inf, got `{v}`"))),
    }
}
