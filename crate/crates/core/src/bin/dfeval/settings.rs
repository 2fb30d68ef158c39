//! Flat `key = value` config files and flag/config/default resolution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use dfeval::{Error, Result};

/// Keys accepted in a config file; they mirror the long flag names.
const KNOWN_KEYS: &[&str] = &[
    "ports",
    "grid",
    "candidate-grid",
    "snr",
    "snr-reference",
    "trials",
    "seed",
    "out",
    "workers",
    "keep-trials",
    "adaptive-stop",
    "adaptive-tol",
    "max-trials",
    "bin-width",
    "structure",
    "max-eigenvalue",
    "track",
    "threshold",
    "step",
    "theta-max",
];

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut values = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Malformed(format!("config line {}: expected key = value", n + 1))
        })?;
        let key = k.trim().replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::InvalidParameter(format!(
                "config line {}: unknown key '{}'",
                n + 1,
                k.trim()
            )));
        }
        if values.insert(key, v.trim().to_string()).is_some() {
            return Err(Error::InvalidParameter(format!(
                "config line {}: duplicate key '{}'",
                n + 1,
                k.trim()
            )));
        }
    }
    Ok(values)
}

/// Resolves settings as flag > config file > default and records the
/// effective values for echoing into outputs.
pub struct Resolver {
    file: BTreeMap<String, String>,
    effective: BTreeMap<String, String>,
    hidden: BTreeSet<String>,
}

impl Resolver {
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Self {
            file,
            effective: BTreeMap::new(),
            hidden: BTreeSet::new(),
        }
    }

    fn file_value<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.file
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::InvalidParameter(format!("config key '{key}': {e}")))
            })
            .transpose()
    }

    pub fn optional<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        if let Some(v) = &v {
            self.effective.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn value<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T>
    where
        T::Err: Display,
    {
        let v = self.optional(key, flag)?.unwrap_or(default);
        self.effective.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T::Err: Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| Error::InvalidParameter(format!("missing required setting '{key}'")))
    }

    /// A boolean switch: set by the flag or by `key = true` in the config file.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool> {
        let v = flag || self.file_value::<bool>(key)?.unwrap_or(false);
        self.effective.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Keeps `key` out of the echoed configuration. Used for settings that
    /// cannot change results, such as the worker count and output location.
    pub fn hide(&mut self, key: &str) {
        self.hidden.insert(key.to_string());
    }

    pub fn effective(&self) -> BTreeMap<String, String> {
        self.effective
            .iter()
            .filter(|(k, _)| !self.hidden.contains(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// Effective settings as `key=value` comment lines, led by the workflow name.
    pub fn comment_lines(&self, workflow: &str) -> Vec<String> {
        let mut lines = vec![format!("dfeval {} {workflow}", env!("CARGO_PKG_VERSION"))];
        lines.extend(
            self.effective()
                .into_iter()
                .map(|(k, v)| format!("{k}={v}")),
        );
        lines
    }
}
