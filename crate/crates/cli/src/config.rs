//! Line-oriented `key = value` configuration with `[section]` headers.
//! Every value remembers its source line so diagnostics can point at it.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::CliError;

/// Known sections and the keys each accepts.
const SCHEMA: &[(&str, &[&str])] = &[
    ("params", &["d", "delta", "gamma_s", "dk"]),
    ("grid", &["nz", "nt", "t_win"]),
    ("control", &["shape", "h_total", "complete_factor", "omega_cap", "eps_div"]),
    ("spin", &["kind", "path"]),
    ("input", &["kind", "path"]),
    ("run", &["method", "direction", "stage", "kind", "max_iters", "tol"]),
    ("sweep", &["command", "param", "values"]),
    ("figure", &["d_list", "td_list", "delta_list", "dk_list", "d"]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    /// Source name used in diagnostics.
    pub origin: String,
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl Config {
    pub fn empty() -> Config {
        Config { origin: "<defaults>".into(), sections: BTreeMap::new() }
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
        Config::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Config, CliError> {
        let mut cfg = Config { origin: origin.to_string(), sections: BTreeMap::new() };
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |msg: String| CliError::Config { origin: origin.to_string(), line, msg };
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name =
                    rest.strip_suffix(']').ok_or_else(|| err(format!("unterminated section header `{body}`")))?.trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(err(format!("unknown section `{name}`")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) =
                body.split_once('=').ok_or_else(|| err(format!("expected `key = value`, found `{body}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section.clone().ok_or_else(|| err(format!("key `{key}` appears before any section header")))?;
            let keys = SCHEMA.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
            if !keys.contains(&key) {
                return Err(err(format!("unknown key `{key}` in section [{sec}]")));
            }
            if value.is_empty() {
                return Err(err(format!("empty value for `{key}`")));
            }
            let map = cfg.sections.entry(sec.clone()).or_default();
            if let Some(prev) = map.get(key) {
                return Err(err(format!("duplicate key `{key}` (first set on line {})", prev.line)));
            }
            map.insert(key.to_string(), Entry { value: value.to_string(), line });
        }
        Ok(cfg)
    }

    pub fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|m| m.get(key))
    }

    /// Override (or add) a value; the line of an existing entry is kept.
    pub fn set(&mut self, section: &str, key: &str, value: String) {
        let map = self.sections.entry(section.to_string()).or_default();
        let line = map.get(key).map_or(0, |e| e.line);
        map.insert(key.to_string(), Entry { value, line });
    }

    /// Diagnostic anchored at the line of `section.key` when it came from a file.
    pub fn error_at(&self, section: &str, key: &str, msg: impl Into<String>) -> CliError {
        match self.entry(section, key) {
            Some(e) if e.line > 0 => CliError::Config { origin: self.origin.clone(), line: e.line, msg: msg.into() },
            _ => CliError::Invalid(format!("[{section}] {key}: {}", msg.into())),
        }
    }

    pub fn str_or<'a>(&'a self, section: &str, key: &str, default: &'a str) -> &'a str {
        self.entry(section, key).map_or(default, |e| e.value.as_str())
    }

    pub fn choice<'a>(
        &'a self,
        section: &str,
        key: &str,
        default: &'a str,
        allowed: &[&str],
    ) -> Result<&'a str, CliError> {
        let v = self.str_or(section, key, default);
        if allowed.contains(&v) {
            Ok(v)
        } else {
            Err(self.error_at(section, key, format!("`{v}` is not one of {}", allowed.join(", "))))
        }
    }

    pub fn f64_opt(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => {
                let v: f64 = e
                    .value
                    .parse()
                    .map_err(|_| self.error_at(section, key, format!("`{}` is not a number", e.value)))?;
                if !v.is_finite() {
                    return Err(self.error_at(section, key, "value must be finite"));
                }
                Ok(Some(v))
            }
        }
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.f64_opt(section, key)?.unwrap_or(default))
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize, CliError> {
        match self.entry(section, key) {
            None => Ok(default),
            Some(e) => e
                .value
                .parse()
                .map_err(|_| self.error_at(section, key, format!("`{}` is not a non-negative integer", e.value))),
        }
    }

    /// Comma-separated list of numbers.
    pub fn list_or(&self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        let Some(e) = self.entry(section, key) else {
            return Ok(default.to_vec());
        };
        e.value
            .split(',')
            .map(|p| {
                let p = p.trim();
                p.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.error_at(section, key, format!("`{p}` is not a finite number")))
            })
            .collect()
    }
}
