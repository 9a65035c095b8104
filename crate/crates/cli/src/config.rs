//! Flat `key=value` configuration files.
//!
//! One assignment per line, `#` starts a comment, blank lines are
//! ignored. Values read here act as defaults; command-line flags win.

use std::path::Path;
use std::str::FromStr;

use crate::{CliError, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: Vec<(String, String)>,
}

impl Config {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut entries: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::parse(path, lineno + 1, "expected key=value"));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(CliError::parse(path, lineno + 1, "empty key"));
            }
            if entries.iter().any(|(k, _)| *k == key) {
                return Err(CliError::parse(
                    path,
                    lineno + 1,
                    format!("duplicate key '{key}'"),
                ));
            }
            entries.push((key, value));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Parsed lookup; a present but malformed value is an error, an
    /// absent key is `None`.
    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::invalid(format!("config key '{key}': cannot parse '{raw}'"))
            }),
        }
    }

    /// Comma-separated list variant of [`Config::parse`].
    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => parse_comma_list(raw).map(Some).map_err(|item| {
                CliError::invalid(format!("config key '{key}': cannot parse '{item}'"))
            }),
        }
    }
}

/// Splits on commas and parses every item, returning the offending item
/// on failure.
pub fn parse_comma_list<T: FromStr>(raw: &str) -> std::result::Result<Vec<T>, String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| s.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_keys_comments_and_blanks() {
        let f = write_config("# experiment\nseed = 7\n\ntrials=50 # fifty\nalphas = 0.25, 0.5\n");
        let cfg = Config::load(f.path()).unwrap();
        assert_eq!(cfg.parse::<u64>("seed").unwrap(), Some(7));
        assert_eq!(cfg.parse::<usize>("trials").unwrap(), Some(50));
        assert_eq!(
            cfg.parse_list::<f64>("alphas").unwrap(),
            Some(vec![0.25, 0.5])
        );
        assert_eq!(cfg.get("missing"), None);
    }

    #[test]
    fn rejects_duplicate_keys_and_bad_lines() {
        let dup = write_config("seed=1\nseed=2\n");
        assert!(Config::load(dup.path()).is_err());
        let bad = write_config("just a line\n");
        let err = Config::load(bad.path()).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn malformed_value_is_reported_with_key() {
        let f = write_config("trials=soon\n");
        let cfg = Config::load(f.path()).unwrap();
        let err = cfg.parse::<usize>("trials").unwrap_err();
        assert!(err.to_string().contains("trials"), "{err}");
    }
}
