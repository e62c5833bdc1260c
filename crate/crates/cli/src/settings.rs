//! `key = value` configuration files merged under command-line flags.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// Values from an optional config file. A flag given on the command line always wins.
#[derive(Debug, Default)]
pub struct Settings {
    values: HashMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped; keys may be written
/// with or without leading dashes and with `_` for `-`.
pub fn parse_config(text: &str) -> Result<HashMap<String, String>> {
    let mut values = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key = value, got '{raw}'", i + 1);
        };
        let key = normalize(key);
        if key.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        if values.insert(key.clone(), value.trim().to_string()).is_some() {
            bail!("line {}: duplicate key '{key}'", i + 1);
        }
    }
    Ok(values)
}

fn normalize(key: &str) -> String {
    key.trim().trim_start_matches('-').replace('_', "-")
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let values = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                parse_config(&text).with_context(|| format!("in config {}", p.display()))?
            }
            None => HashMap::new(),
        };
        Ok(Settings { values, used: RefCell::default() })
    }

    #[cfg(test)]
    pub fn from_map(values: HashMap<String, String>) -> Self {
        Settings { values, used: RefCell::default() }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let v = self.values.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(v)
    }

    pub fn optional<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let from_file = self.raw(key);
        if flag.is_some() {
            return Ok(flag);
        }
        from_file.map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("config key '{key}': {e}"))).transpose()
    }

    pub fn value<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.optional(key, flag)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list<T>(&self, key: &str, flag: Option<Vec<T>>, default: Vec<T>) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let from_file = self.raw(key);
        if let Some(v) = flag {
            return Ok(v);
        }
        match from_file {
            Some(text) => text
                .split(',')
                .map(|s| s.trim().parse::<T>().map_err(|e| anyhow::anyhow!("config key '{key}': {e}")))
                .collect(),
            None => Ok(default),
        }
    }

    /// A switch is on when the flag is given or the file sets it to `true`.
    pub fn switch(&self, key: &str, flag: bool) -> Result<bool> {
        let from_file = self.raw(key).map(|v| v.parse::<bool>().with_context(|| format!("config key '{key}'")));
        Ok(flag || from_file.transpose()?.unwrap_or(false))
    }

    /// Fails on config keys that no option consumed, which are almost always typos.
    pub fn ensure_all_used(&self) -> Result<()> {
        let used = self.used.borrow();
        let mut unknown: Vec<&String> = self.values.keys().filter(|k| !used.contains(*k)).collect();
        unknown.sort();
        if !unknown.is_empty() {
            bail!("unknown config keys: {}", unknown.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", "));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_normalizes_keys() {
        let map = parse_config("# header\nalpha = 0.5\n--tau_min=1e-3 # trailing\n\n").unwrap();
        assert_eq!(map["alpha"], "0.5");
        assert_eq!(map["tau-min"], "1e-3");
        assert!(parse_config("alpha 0.5").is_err());
        assert!(parse_config("a=1\na=2").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let s = Settings::from_map(parse_config("alpha = 0.3\nN = 10,20\nadaptive = true").unwrap());
        assert_eq!(s.value("alpha", Some(0.7), 0.5).unwrap(), 0.7);
        assert_eq!(s.value::<f64>("alpha", None, 0.5).unwrap(), 0.3);
        assert_eq!(s.list::<usize>("N", None, vec![1]).unwrap(), vec![10, 20]);
        assert!(s.switch("adaptive", false).unwrap());
        assert_eq!(s.value::<f64>("eta", None, 1e3).unwrap(), 1e3);
        s.ensure_all_used().unwrap();
    }

    #[test]
    fn reports_unknown_and_malformed_keys() {
        let s = Settings::from_map(parse_config("alpah = 0.3\nkappa = x").unwrap());
        assert!(s.value::<f64>("kappa", None, 1.0).is_err());
        assert!(s.ensure_all_used().unwrap_err().to_string().contains("alpah"));
    }
}
