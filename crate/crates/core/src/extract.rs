//! Response-path expressions: `$`, `$.field`, `$.a.b`, `$.arr[0].id`.

use std::fmt;
use std::str::FromStr;

use serde_json::Value;

use crate::error::ExtractionError;
use crate::value::FuzzValue;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Field(String),
    Index(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponsePath {
    source: String,
    segments: Vec<Segment>,
}

impl ResponsePath {
    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn lookup<'a>(&self, root: &'a Value) -> Option<&'a Value> {
        self.segments.iter().try_fold(root, |node, seg| match seg {
            Segment::Field(f) => node.as_object()?.get(f),
            Segment::Index(i) => node.as_array()?.get(*i),
        })
    }
}

impl fmt::Display for ResponsePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FromStr for ResponsePath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s
            .strip_prefix('$')
            .ok_or_else(|| format!("path `{s}` must start with `$`"))?;
        let bytes = rest.as_bytes();
        let mut segments = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'.' => {
                    let start = i + 1;
                    let mut end = start;
                    while end < bytes.len() && bytes[end] != b'.' && bytes[end] != b'[' {
                        end += 1;
                    }
                    if end == start {
                        return Err(format!("empty field name in `{s}`"));
                    }
                    segments.push(Segment::Field(rest[start..end].to_string()));
                    i = end;
                }
                b'[' => {
                    let close = rest[i..]
                        .find(']')
                        .map(|c| i + c)
                        .ok_or_else(|| format!("unclosed `[` in `{s}`"))?;
                    let idx = rest[i + 1..close]
                        .parse::<usize>()
                        .map_err(|_| format!("index in `{s}` must be a non-negative integer"))?;
                    segments.push(Segment::Index(idx));
                    i = close + 1;
                }
                _ => return Err(format!("unexpected character in `{s}` at offset {}", i + 1)),
            }
        }
        Ok(ResponsePath {
            source: s.to_string(),
            segments,
        })
    }
}

/// Evaluates `path` against a JSON response body.
pub fn extract_path(body: &[u8], path: &ResponsePath) -> Result<FuzzValue, ExtractionError> {
    let root: Value = serde_json::from_slice(body)
        .map_err(|e| ExtractionError(format!("response body is not JSON: {e}")))?;
    path.lookup(&root)
        .map(FuzzValue::from_json)
        .ok_or_else(|| ExtractionError(format!("`{path}` matched nothing")))
}
