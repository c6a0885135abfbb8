//! Flat `key = value` configuration text with optional `[section]` headers.
//!
//! Lines starting with `#` are comments. Keys appearing before the first
//! header belong to the unnamed section `""`. Every key must be consumed by
//! its reader; leftovers are reported as unknown keys.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigText {
    sections: BTreeMap<String, Section>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Section {
    name: String,
    entries: BTreeMap<String, String>,
}

impl ConfigText {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ConfigText::default();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| {
                    Error::Config(format!("line {}: unterminated section header", lineno + 1))
                })?;
                current = name.trim().to_string();
                cfg.section_entry(&current);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            let section = cfg.section_entry(&current);
            if section
                .entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}` in section [{current}]",
                    lineno + 1
                )));
            }
        }
        Ok(cfg)
    }

    fn section_entry(&mut self, name: &str) -> &mut Section {
        self.sections
            .entry(name.to_string())
            .or_insert_with(|| Section {
                name: name.to_string(),
                entries: BTreeMap::new(),
            })
    }

    /// Removes and returns a section (empty if absent).
    pub fn take_section(&mut self, name: &str) -> Section {
        self.sections.remove(name).unwrap_or_else(|| Section {
            name: name.to_string(),
            entries: BTreeMap::new(),
        })
    }

    /// Fails if any section or key was left unconsumed.
    pub fn finish(self) -> Result<()> {
        for (name, section) in self.sections {
            if !name.is_empty() {
                return Err(Error::Config(format!("unknown section [{name}]")));
            }
            section.finish()?;
        }
        Ok(())
    }
}

impl Section {
    pub fn from_pairs(name: &str, pairs: &[(&str, &str)]) -> Self {
        Section {
            name: name.to_string(),
            entries: pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("[{}] {key}: cannot parse `{v}`", self.name))),
        }
    }

    /// Fails if any key was left unconsumed.
    pub fn finish(self) -> Result<()> {
        if let Some(key) = self.entries.keys().next() {
            return Err(Error::Config(format!(
                "unknown key `{key}` in section [{}]",
                self.name
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_rejects_leftovers() {
        let mut cfg = ConfigText::parse(
            "# comment\n[particle]\nkind = sphere\nradius = 0.125\n\n[run]\ngrid=16\n",
        )
        .unwrap();
        let mut p = cfg.take_section("particle");
        assert_eq!(p.take("kind").as_deref(), Some("sphere"));
        assert_eq!(p.take_parsed::<f64>("radius").unwrap(), Some(0.125));
        p.finish().unwrap();
        let mut run = cfg.take_section("run");
        assert!(run.take_parsed::<f64>("dt").unwrap().is_none());
        assert!(run.clone().finish().is_err());
        assert_eq!(run.take_parsed::<usize>("grid").unwrap(), Some(16));
        run.finish().unwrap();
        cfg.finish().unwrap();
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(ConfigText::parse("[a\nx=1").is_err());
        assert!(ConfigText::parse("novalue").is_err());
        assert!(ConfigText::parse("x=1\nx=2").is_err());
        let cfg = ConfigText::parse("[extra]\nk=v").unwrap();
        assert!(cfg.finish().is_err());
    }
}
