//! Line-oriented `name = value` text files with `#` comments.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    /// 1-based line number in the source text.
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str, path: Option<&Path>) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(parse_error(path, line, format!("expected `name = value`, found `{content}`")));
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(parse_error(path, line, format!("invalid key `{key}`")));
        }
        if value.is_empty() {
            return Err(parse_error(path, line, format!("missing value for `{key}`")));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(parse_error(path, line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
        }
        out.push(Entry {
            line,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(out)
}

pub(crate) fn parse_error(path: Option<&Path>, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.map(Path::to_path_buf),
        line,
        message: message.into(),
    }
}

impl Entry {
    pub fn number(&self, path: Option<&Path>) -> Result<f64> {
        self.value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_error(path, self.line, format!("`{}` is not a finite number: `{}`", self.key, self.value)))
    }
}
