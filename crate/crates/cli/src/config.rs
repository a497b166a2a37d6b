//! Flat dotted-key JSON config. Global keys (`seed`, `tol`, `threads`, `out`)
//! sit at the top level; subcommand keys live under the subcommand name, e.g.
//! `bcq-sweep.instances`. Nested objects are flattened to the same keys.
//! Explicit flags win over the file, which wins over built-in defaults.

use crate::CliError;
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

pub struct Resolver {
    section: String,
    values: BTreeMap<String, Value>,
    used: RefCell<BTreeSet<String>>,
    /// Every resolved setting, for the manifest.
    resolved: RefCell<BTreeMap<String, Value>>,
}

fn flatten(prefix: &str, obj: &Map<String, Value>, out: &mut BTreeMap<String, Value>) {
    for (k, v) in obj {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(inner) => flatten(&key, inner, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

impl Resolver {
    pub fn load(path: Option<&Path>, section: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
            let root: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
            let Value::Object(obj) = root else {
                return Err(CliError::Validation("config must be a JSON object".into()));
            };
            flatten("", &obj, &mut values);
        }
        Ok(Self {
            section: section.to_string(),
            values,
            used: RefCell::default(),
            resolved: RefCell::default(),
        })
    }

    fn lookup<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        let Some(v) = self.values.get(key) else { return Ok(None) };
        self.used.borrow_mut().insert(key.to_string());
        serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| CliError::Validation(format!("config key {key}: {e}")))
    }

    fn record<T: serde::Serialize>(&self, key: &str, value: &T) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.resolved.borrow_mut().insert(key.to_string(), v);
    }

    /// Global setting: flag, then top-level key, then `default`.
    pub fn global<T: DeserializeOwned + serde::Serialize + Clone>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        let from_file = self.lookup(key)?;
        let value = flag.or(from_file).unwrap_or(default);
        self.record(key, &value);
        Ok(value)
    }

    /// Subcommand setting without a default.
    pub fn opt<T: DeserializeOwned + serde::Serialize + Clone>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>, CliError> {
        let full = format!("{}.{key}", self.section);
        let from_file = self.lookup(&full)?;
        let value = flag.or(from_file);
        if let Some(v) = &value {
            self.record(&full, v);
        }
        Ok(value)
    }

    pub fn get<T: DeserializeOwned + serde::Serialize + Clone>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        let full = format!("{}.{key}", self.section);
        let value = self.opt(flag, key)?.unwrap_or(default);
        self.record(&full, &value);
        Ok(value)
    }

    /// Rejects config keys nothing asked for, which are almost always typos.
    pub fn finish(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        let unknown: Vec<&String> = self
            .values
            .keys()
            .filter(|k| !used.contains(*k))
            .filter(|k| k.starts_with(&format!("{}.", self.section)) || !k.contains('.'))
            .filter(|k| !["seed", "tol", "threads", "out"].contains(&k.as_str()))
            .collect();
        if !unknown.is_empty() {
            return Err(CliError::Validation(format!("unknown config keys: {unknown:?}")));
        }
        Ok(())
    }

    pub fn resolved(&self) -> Value {
        Value::Object(self.resolved.borrow().clone().into_iter().collect())
    }
}
