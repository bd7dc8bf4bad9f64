//! Line-oriented `key = value` text with `#` comments. Used for instance
//! manifests and experiment configs.

use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("key `{key}`: cannot parse `{value}`")]
    Value { key: String, value: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<(String, String)>,
}

impl KvDoc {
    pub fn new() -> Self {
        KvDoc::default()
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut doc = KvDoc::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(KvError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(KvError::Syntax { line: i + 1 });
            }
            if doc.get(k).is_some() {
                return Err(KvError::Duplicate { line: i + 1, key: k.to_string() });
            }
            doc.entries.push((k.to_string(), v.to_string()));
        }
        Ok(doc)
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, KvError> {
        self.get(key).ok_or_else(|| KvError::Missing(key.to_string()))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, KvError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| KvError::Value { key: key.to_string(), value: v.to_string() }),
        }
    }

    pub fn required<T: FromStr>(&self, key: &str) -> Result<T, KvError> {
        self.parsed(key)?.ok_or_else(|| KvError::Missing(key.to_string()))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, KvError> {
        let Some(v) = self.get(key) else { return Ok(None) };
        if v.is_empty() {
            return Ok(Some(Vec::new()));
        }
        v.split(',')
            .map(|x| {
                x.trim()
                    .parse()
                    .map_err(|_| KvError::Value { key: key.to_string(), value: v.to_string() })
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
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
}
