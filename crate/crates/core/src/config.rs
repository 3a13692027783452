//! Flat `key=value` configuration files.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// Keys that may appear more than once.
const REPEATABLE: &[&str] = &["term"];

/// Parsed entries with their line numbers. Every key must be read before
/// [`finish`](Self::finish), which rejects the leftovers.
#[derive(Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, Vec<(usize, String)>>,
    used: RefCell<BTreeSet<String>>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: n + 1,
                    message: "empty key".into(),
                });
            }
            let slot = entries.entry(key.to_string()).or_default();
            if !slot.is_empty() && !REPEATABLE.contains(&key) {
                return Err(Error::Parse {
                    line: n + 1,
                    message: format!("duplicate key {key}"),
                });
            }
            slot.push((n + 1, value.trim().to_string()));
        }
        Ok(Self {
            entries,
            used: RefCell::default(),
        })
    }

    /// Replaces or inserts a value, e.g. from a command-line flag.
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), vec![(0, value.to_string())]);
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(|v| v[0].1.as_str())
    }

    pub fn all(&self, key: &str) -> Vec<(usize, &str)> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries
            .get(key)
            .map(|v| v.iter().map(|(l, s)| (*l, s.as_str())).collect())
            .unwrap_or_default()
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.used.borrow_mut().insert(key.to_string());
        let Some(v) = self.entries.get(key) else { return Ok(None) };
        let (line, text) = &v[0];
        text.parse::<T>().map(Some).map_err(|e| Error::Parse {
            line: *line,
            message: format!("{key}: {e}"),
        })
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| invalid(format!("missing required key {key}")))
    }

    /// Fails on keys that were never read.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .entries
            .keys()
            .filter(|k| !used.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(invalid(format!("unknown keys: {}", unknown.join(", "))))
        }
    }

    /// Sorted `key=value` lines, independent of the file's layout.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, vs) in &self.entries {
            for (_, v) in vs {
                out.push_str(k);
                out.push('=');
                out.push_str(v);
                out.push('\n');
            }
        }
        out
    }
}

/// Parses `a,b,c` into numbers.
pub fn parse_list<T>(text: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| invalid(format!("bad list entry {s:?}: {e}"))))
        .collect()
}

/// Parses `a,b;c,d` into rows.
pub fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    text.split(';').map(parse_list).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_tracks_keys() {
        let kv = KeyValues::parse("# header\nn = 3\n\nrho=4.5\nextra=1\n").unwrap();
        assert_eq!(kv.require::<usize>("n").unwrap(), 3);
        assert_eq!(kv.get::<f64>("rho").unwrap(), Some(4.5));
        assert_eq!(kv.get_or("seed", 7u64).unwrap(), 7);
        assert!(kv.finish().is_err());
        kv.raw("extra");
        assert!(kv.finish().is_ok());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(KeyValues::parse("n 3"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(KeyValues::parse("n=1\nn=2"), Err(Error::Parse { line: 2, .. })));
        let kv = KeyValues::parse("n=three").unwrap();
        assert!(matches!(kv.get::<usize>("n"), Err(Error::Parse { .. })));
        assert!(KeyValues::parse("term=1@1,2\nterm=2@2,3").is_ok());
    }

    #[test]
    fn canonical_ignores_layout() {
        let a = KeyValues::parse("b=2\na=1\n").unwrap();
        let b = KeyValues::parse("# c\na = 1\n\nb= 2").unwrap();
        assert_eq!(a.canonical(), b.canonical());
    }

    #[test]
    fn rows() {
        assert_eq!(parse_rows("1,0;0,1").unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(parse_rows("1,x").is_err());
    }
}
