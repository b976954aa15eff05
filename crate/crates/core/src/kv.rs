//! Flat `key = value` text used for reports and certificates.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KvError {
    #[error("line {line}: expected 'key = value'")]
    Syntax { line: usize },
    #[error("missing key '{0}'")]
    Missing(String),
    #[error("key '{key}': cannot parse '{value}'")]
    Value { key: String, value: String },
}

/// Ordered key-value pairs; insertion order is kept for output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: Vec<(String, String)>,
}

impl KvMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn push_f64(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, fmt_f64(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<f64, KvError> {
        let v = self.get(key).ok_or_else(|| KvError::Missing(key.into()))?;
        parse_f64(v).ok_or_else(|| KvError::Value {
            key: key.into(),
            value: v.into(),
        })
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_map(&self) -> BTreeMap<&str, &str> {
        self.entries
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut map = KvMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(KvError::Syntax { line: k + 1 })?;
            map.push(key.trim(), value.trim());
        }
        Ok(map)
    }
}

/// Shortest round-trip decimal, with `inf`/`-inf`/`nan` spelled out.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v != 0.0 && (v.abs() < 1e-6 || v.abs() >= 1e15) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn parse_f64(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        other => other.parse().ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_parse_round_trip() {
        let mut m = KvMap::new();
        m.push_f64("lambda", 0.125);
        m.push_f64("tiny", 3.5e-12);
        m.push_f64("big", f64::INFINITY);
        m.push("name", "Z");
        let back = KvMap::parse(&m.render()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get_f64("tiny").unwrap(), 3.5e-12);
        assert_eq!(back.get_f64("big").unwrap(), f64::INFINITY);
        assert!(matches!(back.get_f64("nope"), Err(KvError::Missing(_))));
        assert!(matches!(back.get_f64("name"), Err(KvError::Value { .. })));
    }

    #[test]
    fn syntax_error_reports_line() {
        assert_eq!(
            KvMap::parse("# c\na = 1\nbroken\n"),
            Err(KvError::Syntax { line: 3 })
        );
    }
}
