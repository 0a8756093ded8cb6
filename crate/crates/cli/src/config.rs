//! Flat `key = value` configuration files and flag/file/env resolution.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

pub const SEED_ENV: &str = "EXPLAINKIT_SEED";

/// Keys are normalized so `max_depth` and `max-depth` name the same setting.
pub fn normalize_key(key: &str) -> String {
    key.trim().replace('_', "-").to_ascii_lowercase()
}

/// Parse `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; a repeated key is an error.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected `key = value`", n + 1))?;
        let key = normalize_key(key);
        if key.is_empty() {
            bail!("config line {}: empty key", n + 1);
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            bail!("config line {}: `{key}` set twice", n + 1);
        }
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

/// Resolves each setting from, in order: command-line flag, config file,
/// (for the seed only) the environment, then the built-in default. Every
/// resolved value is remembered for the echo file.
#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    env_seed: Option<String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(file: BTreeMap<String, String>, env_seed: Option<String>) -> Self {
        Self {
            file,
            env_seed,
            resolved: BTreeMap::new(),
        }
    }

    fn from_file<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.file
            .get(key)
            .map(|raw| {
                raw.parse::<T>()
                    .map_err(|e| anyhow!("config key `{key}`: cannot parse `{raw}`: {e}"))
            })
            .transpose()
    }

    pub fn optional<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    pub fn value<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        let v = self.optional(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T::Err: Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| anyhow!("missing required setting `--{key}` (flag or config file)"))
    }

    pub fn seed(&mut self, flag: Option<u64>) -> Result<u64> {
        let seed = match flag {
            Some(s) => s,
            None => match self.from_file::<u64>("seed")? {
                Some(s) => s,
                None => match &self.env_seed {
                    Some(raw) => raw
                        .trim()
                        .parse()
                        .map_err(|e| anyhow!("{SEED_ENV}=`{raw}`: {e}"))?,
                    None => explainkit::DEFAULT_SEED,
                },
            },
        };
        self.resolved.insert("seed".into(), seed.to_string());
        Ok(seed)
    }

    /// Config file keys that no setting asked for.
    pub fn unused_keys(&self) -> Vec<&str> {
        self.file
            .keys()
            .filter(|k| !self.resolved.contains_key(*k))
            .map(String::as_str)
            .collect()
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    /// The resolved settings as a config file that reproduces the run.
    pub fn echo(&self, command: &str) -> String {
        let mut out = format!("# explainkit {command}\n");
        for (k, v) in &self.resolved {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_normalizes_keys() {
        let cfg = parse_config("# top\n\nmax_depth = 3\n  Rows=10 \n").unwrap();
        assert_eq!(cfg["max-depth"], "3");
        assert_eq!(cfg["rows"], "10");
        assert_eq!(cfg.len(), 2);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_config("rows 10").is_err());
        assert!(parse_config("= 3").is_err());
        assert!(parse_config("a = 1\na = 2").is_err());
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let file = parse_config("rows = 10\ndepth = 4").unwrap();
        let mut r = Resolver::new(file, None);
        assert_eq!(r.value("rows", Some(7usize), 1).unwrap(), 7);
        assert_eq!(r.value("depth", None::<usize>, 1).unwrap(), 4);
        assert_eq!(r.value("folds", None::<usize>, 3).unwrap(), 3);
        assert!(r.unused_keys().is_empty());
        assert_eq!(r.echo("x"), "# explainkit x\ndepth = 4\nfolds = 3\nrows = 7\n");
    }

    #[test]
    fn seed_precedence() {
        let with_file = || parse_config("seed = 5").unwrap();
        assert_eq!(Resolver::new(with_file(), Some("9".into())).seed(Some(1)).unwrap(), 1);
        assert_eq!(Resolver::new(with_file(), Some("9".into())).seed(None).unwrap(), 5);
        assert_eq!(Resolver::new(BTreeMap::new(), Some("9".into())).seed(None).unwrap(), 9);
        assert_eq!(
            Resolver::new(BTreeMap::new(), None).seed(None).unwrap(),
            explainkit::DEFAULT_SEED
        );
        assert!(Resolver::new(BTreeMap::new(), Some("x".into())).seed(None).is_err());
    }

    #[test]
    fn bad_file_values_and_missing_required() {
        let mut r = Resolver::new(parse_config("rows = many").unwrap(), None);
        assert!(r.value("rows", None::<usize>, 1).is_err());
        let mut r = Resolver::new(BTreeMap::new(), None);
        assert!(r.required::<String>("model", None).is_err());
    }

    #[test]
    fn unused_keys_are_reported() {
        let mut r = Resolver::new(parse_config("rows = 1\ntypo = 2").unwrap(), None);
        r.value("rows", None::<usize>, 0).unwrap();
        assert_eq!(r.unused_keys(), vec!["typo"]);
    }
}
