use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::Failure;

const KNOWN_KEYS: &[&str] = &[
    "input",
    "rules",
    "out_dir",
    "backend",
    "ledger",
    "tsa_endpoint",
    "policy_oid",
    "repetitions",
    "target_seconds",
    "max_allowed_seconds",
    "salt",
    "max_repetitions",
    "n",
    "rotations_per_day",
    "days",
    "hash_size",
    "token_size",
    "overhead",
    "price",
    "hash_bits",
    "window_log2",
    "retention_seconds",
    "handling_seconds",
    "rate_log2",
    "rate_hps",
];

/// Defaults read from a `key=value` file. Command-line flags win.
#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|m| Failure::usage(format!("config {}: {m}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
            let k = k.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(format!("line {}: unknown key `{k}`", i + 1));
            }
            values.insert(k, v.trim().to_string());
        }
        Ok(Config { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Failure::usage(format!("config value `{key}={v}` is not valid"))),
        }
    }

    /// Flag value if given, else the config value.
    pub fn or<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Failure> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.values.get(key).map(PathBuf::from))
    }
}
