//! Tiny `--flag value` argument parser with strict unknown-flag rejection.

use std::collections::BTreeMap;

use crate::{CliError, Result};

#[derive(Debug, Default)]
pub struct Flags {
    values: BTreeMap<String, String>,
}

impl Flags {
    /// Parses `--name value` pairs (`-o` is accepted for `--out`). Every
    /// flag must be in `allowed`; repeated flags keep the last value.
    pub fn parse(args: &[String], allowed: &[&str]) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut i = 0;
        while i < args.len() {
            let raw = &args[i];
            let name = if raw == "-o" {
                "out".to_string()
            } else if let Some(stripped) = raw.strip_prefix("--") {
                stripped.to_string()
            } else {
                return Err(CliError::Validation(format!(
                    "expected a --flag, found '{raw}'"
                )));
            };
            if !allowed.contains(&name.as_str()) {
                return Err(CliError::Validation(format!(
                    "unknown flag --{name}; allowed: {}",
                    allowed
                        .iter()
                        .map(|a| format!("--{a}"))
                        .collect::<Vec<_>>()
                        .join(" ")
                )));
            }
            let value = args.get(i + 1).ok_or_else(|| {
                CliError::Validation(format!("flag --{name} is missing its value"))
            })?;
            values.insert(name, value.clone());
            i += 2;
        }
        Ok(Flags { values })
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(|s| s.as_str())
    }

    pub fn require(&self, name: &str) -> Result<&str> {
        self.get(name)
            .ok_or_else(|| CliError::Validation(format!("missing required flag --{name}")))
    }

    pub fn parse_num<T: std::str::FromStr>(&self, name: &str) -> Result<Option<T>> {
        match self.get(name) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::Validation(format!("flag --{name}: cannot parse '{raw}'"))
            }),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}
