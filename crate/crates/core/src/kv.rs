//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    entries: BTreeMap<String, (String, usize)>,
    source: String,
}

impl KvFile {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                location: format!("{source}:{}", i + 1),
                message: format!("expected key=value, found '{line}'"),
            })?;
            let key = k.trim().to_string();
            if entries.insert(key.clone(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(Error::Parse {
                    location: format!("{source}:{}", i + 1),
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        Ok(Self {
            entries,
            source: source.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    /// Typed lookup; `Ok(None)` when absent.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| Error::Parse {
                location: format!("{}:{line}", self.source),
                message: format!("bad value '{v}' for '{key}': {e}"),
            }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| Error::Parse {
            location: self.source.clone(),
            message: format!("missing field '{key}'"),
        })
    }

    /// Fails on the first key not in `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for (k, (_, line)) in &self.entries {
            if !known.contains(&k.as_str()) {
                return Err(Error::Config(format!(
                    "{}:{line}: unknown key '{k}'",
                    self.source
                )));
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, (v, _)) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_lookup() {
        let kv = KvFile::parse("# c\nsteps = 10\nmode=ciwgan\n\n", "t").unwrap();
        assert_eq!(kv.require::<u32>("steps").unwrap(), 10);
        assert_eq!(kv.get_str("mode"), Some("ciwgan"));
        assert!(kv.get::<u32>("nope").unwrap().is_none());
        assert!(kv.reject_unknown(&["steps"]).is_err());
        assert!(kv.reject_unknown(&["steps", "mode"]).is_ok());
    }

    #[test]
    fn errors_carry_location() {
        let err = KvFile::parse("a=1\nb\n", "cfg").unwrap_err().to_string();
        assert!(err.contains("cfg:2"), "{err}");
        let kv = KvFile::parse("a=x\n", "cfg").unwrap();
        assert!(kv.require::<u32>("a").unwrap_err().to_string().contains("'a'"));
        assert!(KvFile::parse("a=1\na=2", "cfg").is_err());
    }
}
