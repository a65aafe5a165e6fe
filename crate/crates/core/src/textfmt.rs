//! Line-oriented `key = value` documents with `[section N]` headers, shared
//! by the network and metric file formats.
//!
//! ```text
//! # comment
//! nodes = 3
//! [node 0]
//! f[0] = -1 * v0 + v2
//! B[2,0] = 1
//! ```

use crate::error::{Error, Result};
use crate::polyalg::Polynomial;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Entry {
    pub key: String,
    pub index: Vec<usize>,
    pub value: String,
    pub line: usize,
    /// 1-based column where `value` starts.
    pub value_col: usize,
}

impl Entry {
    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            col: 1,
            msg: msg.into(),
        }
    }

    pub fn poly(&self) -> Result<Polynomial> {
        Polynomial::parse_at(&self.value, self.line).map_err(|e| match e {
            Error::Parse { line, col, msg } => Error::Parse {
                line,
                col: col + self.value_col - 1,
                msg,
            },
            e => e,
        })
    }

    pub fn float(&self) -> Result<f64> {
        self.value
            .trim()
            .parse()
            .map_err(|_| self.err(format!("'{}' is not a number", self.value)))
    }

    pub fn usize(&self) -> Result<usize> {
        self.value
            .trim()
            .parse()
            .map_err(|_| self.err(format!("'{}' is not a nonnegative integer", self.value)))
    }

    pub fn index_arity(&self, n: usize) -> Result<()> {
        if self.index.len() != n {
            return Err(self.err(format!(
                "'{}' expects {} index value(s), got {}",
                self.key,
                n,
                self.index.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Section {
    pub kind: String,
    pub id: usize,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key && e.index.is_empty())
    }

    pub fn require(&self, key: &str) -> Result<&Entry> {
        self.get(key).ok_or_else(|| Error::Parse {
            line: self.line,
            col: 1,
            msg: format!("[{} {}] is missing '{}'", self.kind, self.id, key),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct Document {
    pub header: Vec<Entry>,
    pub sections: Vec<Section>,
}

impl Document {
    pub fn header_value(&self, key: &str) -> Option<&Entry> {
        self.header.iter().find(|e| e.key == key)
    }

    pub fn parse(text: &str) -> Result<Document> {
        let mut doc = Document::default();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("");
            let trimmed = content.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let inner = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line,
                    col: raw.len(),
                    msg: "section header must end with ']'".into(),
                })?;
                let mut parts = inner.split_whitespace();
                let kind = parts.next().unwrap_or("").to_string();
                let id = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line,
                        col: 1,
                        msg: format!("section header '[{inner}]' needs a numeric id"),
                    })?;
                if parts.next().is_some() {
                    return Err(Error::Parse {
                        line,
                        col: 1,
                        msg: format!("unexpected text in section header '[{inner}]'"),
                    });
                }
                doc.sections.push(Section {
                    kind,
                    id,
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let eq = content.find('=').ok_or_else(|| Error::Parse {
                line,
                col: 1,
                msg: "expected 'key = value'".into(),
            })?;
            let lhs = content[..eq].trim();
            let value = content[eq + 1..].to_string();
            let value_col = eq + 2;
            let (key, index) = parse_key(lhs).ok_or_else(|| Error::Parse {
                line,
                col: 1,
                msg: format!("malformed key '{lhs}'"),
            })?;
            let entry = Entry {
                key,
                index,
                value,
                line,
                value_col,
            };
            match doc.sections.last_mut() {
                Some(s) => s.entries.push(entry),
                None => doc.header.push(entry),
            }
        }
        Ok(doc)
    }
}

fn parse_key(lhs: &str) -> Option<(String, Vec<usize>)> {
    match lhs.find('[') {
        None => {
            if lhs.is_empty() || !lhs.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return None;
            }
            Some((lhs.to_string(), Vec::new()))
        }
        Some(open) => {
            let name = lhs[..open].trim();
            let inner = lhs[open + 1..].strip_suffix(']')?;
            let index = inner
                .split(',')
                .map(|s| s.trim().parse().ok())
                .collect::<Option<Vec<usize>>>()?;
            if name.is_empty() {
                return None;
            }
            Some((name.to_string(), index))
        }
    }
}
