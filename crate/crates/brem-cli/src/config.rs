//! Key-value config files mirroring the command-line flags.
//!
//! One `key = value` pair per line, `#` starts a comment. Keys are the long
//! flag names without the leading dashes. Values given on the command line
//! win; keys that do not apply to the invoked subcommand are ignored.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected `key = value`, got {raw:?}", path.display(), lineno + 1);
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// Resolve one setting: the command-line flag wins, then the config file,
/// then the built-in default.
pub fn resolve<T>(flag: Option<T>, config: &ConfigFile, key: &str, default: T) -> Result<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    match config.raw(key) {
        Some(text) => text
            .parse::<T>()
            .map_err(|e| anyhow::anyhow!("config key {key:?}: cannot parse {text:?}: {e}")),
        None => Ok(default),
    }
}

/// Like [`resolve`] but for values parsed with a custom function.
pub fn resolve_with<T>(
    flag: Option<String>,
    config: &ConfigFile,
    key: &str,
    default: &str,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<T> {
    let text = flag
        .or_else(|| config.raw(key).map(String::from))
        .unwrap_or_else(|| default.to_string());
    parse(&text).with_context(|| format!("setting {key:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# experiment\n tau = 4.0 \nvideos=25\nnms-threshold = 0.6 # inline\n").unwrap();
        let cfg = ConfigFile::load(&path).unwrap();
        assert_eq!(cfg.raw("tau"), Some("4.0"));
        assert_eq!(cfg.raw("videos"), Some("25"));
        assert_eq!(cfg.raw("nms-threshold"), Some("0.6"));
        assert_eq!(cfg.raw("absent"), None);
    }

    #[test]
    fn flags_beat_config_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "tau = 4.0\n").unwrap();
        let cfg = ConfigFile::load(&path).unwrap();
        assert_eq!(resolve(Some(1.5f64), &cfg, "tau", 2.0).unwrap(), 1.5);
        assert_eq!(resolve(None::<f64>, &cfg, "tau", 2.0).unwrap(), 4.0);
        assert_eq!(resolve(None::<f64>, &cfg, "other", 2.0).unwrap(), 2.0);
    }

    #[test]
    fn malformed_line_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "tau 4.0\n").unwrap();
        assert!(ConfigFile::load(&path).is_err());
    }
}
