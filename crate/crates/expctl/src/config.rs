//! Flat typed key-value configuration.
//!
//! Every experiment declares a schema of keys with defaults. A run resolves
//! its configuration as defaults, then the TOML file, then `--set` flags,
//! with later sources winning. Nested tables and unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Count(u64),
    Real(f64),
    Reals(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Count,
    Real,
    Reals,
}

impl Value {
    pub fn kind(&self) -> Kind {
        match self {
            Value::Count(_) => Kind::Count,
            Value::Real(_) => Kind::Real,
            Value::Reals(_) => Kind::Reals,
        }
    }

    /// TOML literal, with floats in shortest round-trip form.
    fn literal(&self) -> String {
        let real = |v: f64| {
            let s = format!("{v:?}");
            if s.contains(['.', 'e', 'n', 'i']) {
                s
            } else {
                format!("{s}.0")
            }
        };
        match self {
            Value::Count(n) => n.to_string(),
            Value::Real(v) => real(*v),
            Value::Reals(vs) => format!("[{}]", vs.iter().map(|v| real(*v)).collect::<Vec<_>>().join(", ")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct KeySpec {
    pub key: &'static str,
    pub default: Value,
    pub doc: &'static str,
}

pub fn count(key: &'static str, default: u64, doc: &'static str) -> KeySpec {
    KeySpec { key, default: Value::Count(default), doc }
}

pub fn real(key: &'static str, default: f64, doc: &'static str) -> KeySpec {
    KeySpec { key, default: Value::Real(default), doc }
}

pub fn reals(key: &'static str, default: &[f64], doc: &'static str) -> KeySpec {
    KeySpec { key, default: Value::Reals(default.to_vec()), doc }
}

#[derive(Clone, Debug)]
pub struct Schema {
    pub experiment: &'static str,
    pub keys: Vec<KeySpec>,
}

impl Schema {
    pub fn spec(&self, key: &str) -> Result<&KeySpec> {
        self.keys
            .iter()
            .find(|k| k.key == key)
            .ok_or_else(|| Error::UnknownParameter { experiment: self.experiment.to_string(), key: key.to_string() })
    }

    pub fn defaults(&self) -> Config {
        Config { values: self.keys.iter().map(|k| (k.key.to_string(), k.default.clone())).collect() }
    }

    /// Parses a command-line value for `key` according to its declared kind.
    pub fn parse_value(&self, key: &str, raw: &str) -> Result<Value> {
        let spec = self.spec(key)?;
        let bad = |reason: String| Error::InvalidValue { key: key.to_string(), reason };
        let real = |s: &str| -> Result<f64> {
            let v: f64 = s.trim().parse().map_err(|e| bad(format!("`{s}` is not a number ({e})")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("`{s}` is not finite")))
            }
        };
        let value = match spec.default.kind() {
            Kind::Count => Value::Count(raw.trim().parse().map_err(|e| bad(format!("`{raw}` is not a count ({e})")))?),
            Kind::Real => Value::Real(real(raw)?),
            Kind::Reals => {
                let inner = raw.trim().trim_start_matches('[').trim_end_matches(']');
                let vs = inner.split(',').filter(|s| !s.trim().is_empty()).map(real).collect::<Result<Vec<_>>>()?;
                Value::Reals(vs)
            }
        };
        Ok(value)
    }

    fn value_from_toml(&self, key: &str, v: &toml::Value) -> Result<Value> {
        let spec = self.spec(key)?;
        let bad = || Error::InvalidValue {
            key: key.to_string(),
            reason: format!("expected {:?}, got `{v}`", spec.default.kind()),
        };
        let as_real = |v: &toml::Value| match v {
            toml::Value::Float(f) if f.is_finite() => Some(*f),
            toml::Value::Integer(i) => Some(*i as f64),
            _ => None,
        };
        match (spec.default.kind(), v) {
            (Kind::Count, toml::Value::Integer(i)) if *i >= 0 => Ok(Value::Count(*i as u64)),
            (Kind::Real, v) => as_real(v).map(Value::Real).ok_or_else(bad),
            (Kind::Reals, toml::Value::Array(items)) => {
                items.iter().map(|x| as_real(x).ok_or_else(bad)).collect::<Result<Vec<_>>>().map(Value::Reals)
            }
            (Kind::Reals, v) => as_real(v).map(|x| Value::Reals(vec![x])).ok_or_else(bad),
            _ => Err(bad()),
        }
    }

    /// Defaults, overridden by `file` (TOML text), overridden by `sets`.
    pub fn resolve(&self, file: Option<&str>, sets: &[(String, String)]) -> Result<Config> {
        let mut cfg = self.defaults();
        if let Some(text) = file {
            let table: toml::Table = toml::from_str(text).map_err(|e| Error::ConfigFile(e.to_string()))?;
            for (k, v) in &table {
                if v.is_table() {
                    return Err(Error::ConfigFile(format!("`{k}` is a table; the config format is flat")));
                }
                let value = self.value_from_toml(k, v)?;
                cfg.values.insert(k.clone(), value);
            }
        }
        for (k, raw) in sets {
            let value = self.parse_value(k, raw)?;
            cfg.values.insert(k.clone(), value);
        }
        Ok(cfg)
    }
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::InvalidValue { key: s.to_string(), reason: "expected key=value".into() })?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<String, Value>,
}

impl Config {
    fn get(&self, key: &str) -> &Value {
        self.values.get(key).unwrap_or_else(|| panic!("configuration key `{key}` missing from schema"))
    }

    pub fn count(&self, key: &str) -> usize {
        match self.get(key) {
            Value::Count(n) => *n as usize,
            other => panic!("`{key}` is {:?}, not a count", other.kind()),
        }
    }

    pub fn real(&self, key: &str) -> f64 {
        match self.get(key) {
            Value::Real(v) => *v,
            other => panic!("`{key}` is {:?}, not a real", other.kind()),
        }
    }

    pub fn reals(&self, key: &str) -> &[f64] {
        match self.get(key) {
            Value::Reals(v) => v,
            other => panic!("`{key}` is {:?}, not a list", other.kind()),
        }
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.values.insert(key.to_string(), value);
    }

    /// Canonical TOML text: one `key = value` line per key, sorted.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {}", v.literal());
        }
        s
    }

    /// SHA-256 over a git-style blob header and the canonical text.
    pub fn content_hash(&self) -> String {
        let text = self.to_toml();
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", text.len()).as_bytes());
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema {
            experiment: "demo",
            keys: vec![count("steps", 8192, "steps"), real("lr", 5e-4, "lr"), reals("betas", &[1.0, 4.0, 16.0], "b")],
        }
    }

    #[test]
    fn precedence_is_flag_then_file_then_default() {
        let s = schema();
        let cfg = s.resolve(Some("steps = 10\nlr = 0.1\n"), &[("lr".into(), "0.2".into())]).unwrap();
        assert_eq!(cfg.count("steps"), 10);
        assert_eq!(cfg.real("lr"), 0.2);
        assert_eq!(cfg.reals("betas"), &[1.0, 4.0, 16.0]);
    }

    #[test]
    fn rejects_unknown_nested_and_mistyped() {
        let s = schema();
        assert!(matches!(s.resolve(Some("nope = 1"), &[]), Err(Error::UnknownParameter { .. })));
        assert!(s.resolve(Some("[t]\nsteps = 1"), &[]).is_err());
        assert!(s.resolve(Some("steps = 1.5"), &[]).is_err());
        assert!(s.resolve(None, &[("steps".into(), "-3".into())]).is_err());
        assert!(s.resolve(None, &[("lr".into(), "nan".into())]).is_err());
    }

    #[test]
    fn canonical_text_round_trips() {
        let s = schema();
        let cfg = s.resolve(None, &[("betas".into(), "2,0.5".into())]).unwrap();
        let again = s.resolve(Some(&cfg.to_toml()), &[]).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.content_hash(), again.content_hash());
        assert_ne!(cfg.content_hash(), s.defaults().content_hash());
        assert_eq!(cfg.content_hash().len(), 64);
    }
}
