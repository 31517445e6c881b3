//! Concrete values sent to the target.

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A parameter value. Objects are ordered key lists so that duplicated keys
/// can be expressed; `Bytes` only ever comes out of mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum FuzzValue {
    Text(String),
    Integer(i64),
    Float(f64),
    Boolean(bool),
    Null,
    Array(Vec<FuzzValue>),
    Object(Vec<(String, FuzzValue)>),
    Bytes(Vec<u8>),
}

impl FuzzValue {
    pub fn kind_name(&self) -> &'static str {
        match self {
            FuzzValue::Text(_) => "text",
            FuzzValue::Integer(_) => "integer",
            FuzzValue::Float(_) => "float",
            FuzzValue::Boolean(_) => "boolean",
            FuzzValue::Null => "null",
            FuzzValue::Array(_) => "array",
            FuzzValue::Object(_) => "object",
            FuzzValue::Bytes(_) => "bytes",
        }
    }

    pub fn from_json(v: &Value) -> FuzzValue {
        match v {
            Value::Null => FuzzValue::Null,
            Value::Bool(b) => FuzzValue::Boolean(*b),
            Value::Number(n) => match n.as_i64() {
                Some(i) => FuzzValue::Integer(i),
                None => FuzzValue::Float(n.as_f64().unwrap_or(0.0)),
            },
            Value::String(s) => FuzzValue::Text(s.clone()),
            Value::Array(items) => FuzzValue::Array(items.iter().map(Self::from_json).collect()),
            Value::Object(map) => FuzzValue::Object(
                map.iter()
                    .map(|(k, v)| (k.clone(), Self::from_json(v)))
                    .collect(),
            ),
        }
    }

    /// Lossy conversion: bytes become text (invalid UTF-8 replaced) and
    /// duplicated keys keep their last value.
    pub fn to_json(&self) -> Value {
        match self {
            FuzzValue::Text(s) => Value::String(s.clone()),
            FuzzValue::Integer(i) => Value::from(*i),
            FuzzValue::Float(f) => serde_json::Number::from_f64(*f)
                .map(Value::Number)
                .unwrap_or(Value::Null),
            FuzzValue::Boolean(b) => Value::Bool(*b),
            FuzzValue::Null => Value::Null,
            FuzzValue::Array(items) => Value::Array(items.iter().map(Self::to_json).collect()),
            FuzzValue::Object(fields) => Value::Object(
                fields
                    .iter()
                    .map(|(k, v)| (k.clone(), v.to_json()))
                    .collect(),
            ),
            FuzzValue::Bytes(b) => Value::String(String::from_utf8_lossy(b).into_owned()),
        }
    }

    /// JSON encoding that keeps duplicated keys and writes raw bytes
    /// unescaped between quotes, so the output may be deliberately malformed.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_json(&mut out);
        out
    }

    pub(crate) fn write_json(&self, out: &mut Vec<u8>) {
        match self {
            FuzzValue::Text(s) => write_json_str(out, s),
            FuzzValue::Integer(i) => out.extend_from_slice(i.to_string().as_bytes()),
            FuzzValue::Float(f) => out.extend_from_slice(float_repr(*f).as_bytes()),
            FuzzValue::Boolean(b) => out.extend_from_slice(if *b { b"true" } else { b"false" }),
            FuzzValue::Null => out.extend_from_slice(b"null"),
            FuzzValue::Array(items) => {
                out.push(b'[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(b',');
                    }
                    item.write_json(out);
                }
                out.push(b']');
            }
            FuzzValue::Object(fields) => {
                out.push(b'{');
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push(b',');
                    }
                    write_json_str(out, k);
                    out.push(b':');
                    v.write_json(out);
                }
                out.push(b'}');
            }
            FuzzValue::Bytes(bytes) => {
                out.push(b'"');
                for &b in bytes {
                    if b == b'"' || b == b'\\' {
                        out.push(b'\\');
                    }
                    out.push(b);
                }
                out.push(b'"');
            }
        }
    }

    /// Encoding used for path, query and header slots: scalars as plain text,
    /// arrays comma-joined, objects as compact JSON.
    pub fn to_param_bytes(&self) -> Vec<u8> {
        match self {
            FuzzValue::Text(s) => s.as_bytes().to_vec(),
            FuzzValue::Integer(i) => i.to_string().into_bytes(),
            FuzzValue::Float(f) => float_repr(*f).into_bytes(),
            FuzzValue::Boolean(b) => b.to_string().into_bytes(),
            FuzzValue::Null => b"null".to_vec(),
            FuzzValue::Array(items) => {
                let mut out = Vec::new();
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(b',');
                    }
                    out.extend(item.to_param_bytes());
                }
                out
            }
            FuzzValue::Object(_) => self.to_json_bytes(),
            FuzzValue::Bytes(b) => b.clone(),
        }
    }
}

fn write_json_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(
        serde_json::to_string(s)
            .expect("strings always serialize")
            .as_bytes(),
    );
}

pub(crate) fn float_repr(f: f64) -> String {
    match serde_json::Number::from_f64(f) {
        Some(n) => n.to_string(),
        None => "null".to_string(),
    }
}
