//! Layered settings: command-line flag, then the subcommand's section of the
//! config file, then the file's top-level keys, then the built-in default.

use std::path::Path;

use anyhow::{bail, Context, Result};
use toml::{Table, Value};

#[derive(Debug, Default)]
pub struct ConfigFile {
    table: Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: Table = text.parse()?;
        Ok(Self { table })
    }

    fn lookup(&self, section: &str, key: &str) -> Option<&Value> {
        self.table
            .get(section)
            .and_then(Value::as_table)
            .and_then(|t| t.get(key))
            .or_else(|| self.table.get(key).filter(|v| !v.is_table()))
    }
}

/// Settings for one subcommand.
pub struct Settings<'a> {
    file: Option<&'a ConfigFile>,
    section: &'static str,
}

impl<'a> Settings<'a> {
    pub fn new(file: Option<&'a ConfigFile>, section: &'static str) -> Self {
        Self { file, section }
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.file.and_then(|f| f.lookup(self.section, key))
    }

    fn where_(&self, key: &str) -> String {
        format!("config key `{}` (section [{}])", key, self.section)
    }

    /// A text value; numbers are accepted and rendered back to text.
    pub fn string(&self, key: &str, flag: Option<String>) -> Result<Option<String>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(Value::Integer(i)) => Ok(Some(i.to_string())),
            Some(Value::Float(x)) => Ok(Some(x.to_string())),
            Some(Value::Array(items)) => {
                let parts: Result<Vec<String>> = items.iter().map(|v| scalar_text(v, &self.where_(key))).collect();
                Ok(Some(parts?.join(",")))
            }
            Some(_) => bail!("{} must be a string", self.where_(key)),
        }
    }

    pub fn real(&self, key: &str, flag: Option<f64>) -> Result<Option<f64>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(Value::String(s)) => s
                .trim()
                .parse()
                .map(Some)
                .with_context(|| format!("{} is not a number", self.where_(key))),
            Some(_) => bail!("{} must be a number", self.where_(key)),
        }
    }

    pub fn integer(&self, key: &str, flag: Option<u64>) -> Result<Option<u64>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(Value::String(s)) => s
                .trim()
                .parse()
                .map(Some)
                .with_context(|| format!("{} is not a nonnegative integer", self.where_(key))),
            Some(_) => bail!("{} must be a nonnegative integer", self.where_(key)),
        }
    }

    pub fn flag(&self, key: &str, flag: bool) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        match self.raw(key) {
            None => Ok(false),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => bail!("{} must be true or false", self.where_(key)),
        }
    }

    /// Repeatable values: flags replace the file's list entirely.
    pub fn list(&self, key: &str, flags: Vec<String>) -> Result<Vec<String>> {
        if !flags.is_empty() {
            return Ok(flags);
        }
        match self.raw(key) {
            None => Ok(Vec::new()),
            Some(Value::String(s)) => Ok(vec![s.clone()]),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    _ => bail!("{} must be a list of strings", self.where_(key)),
                })
                .collect(),
            Some(_) => bail!("{} must be a string or a list of strings", self.where_(key)),
        }
    }
}

fn scalar_text(v: &Value, at: &str) -> Result<String> {
    match v {
        Value::Float(x) => Ok(x.to_string()),
        Value::Integer(i) => Ok(i.to_string()),
        Value::String(s) => Ok(s.clone()),
        _ => bail!("{at} must contain numbers"),
    }
}
