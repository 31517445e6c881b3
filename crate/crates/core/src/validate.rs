//! Checks JSON documents against [`SchemaNode`]s. Used by the oracle for
//! response bodies.

use serde_json::Value;

use crate::model::{SchemaKind, SchemaNode};

/// Returns the first violation found, as `path: reason`.
pub fn validate(value: &Value, schema: &SchemaNode) -> Result<(), String> {
    check(value, schema, "$")
}

fn check(value: &Value, schema: &SchemaNode, at: &str) -> Result<(), String> {
    let fail = |reason: String| Err(format!("{at}: {reason}"));
    if value.is_null() {
        return if schema.nullable || schema.kind == SchemaKind::Any {
            Ok(())
        } else {
            fail("null not allowed".into())
        };
    }
    let c = &schema.constraints;
    if !c.enum_values.is_empty() && !c.enum_values.contains(value) {
        return fail(format!("{value} not in enum"));
    }
    match schema.kind {
        SchemaKind::Any => {}
        SchemaKind::Boolean => {
            if !value.is_boolean() {
                return fail("expected boolean".into());
            }
        }
        SchemaKind::Integer | SchemaKind::Number => {
            let Some(n) = value.as_f64() else {
                return fail("expected number".into());
            };
            let integral = value.is_i64() || value.is_u64() || n.fract() == 0.0;
            if schema.kind == SchemaKind::Integer && !integral {
                return fail("expected integer".into());
            }
            if c.minimum.is_some_and(|m| n < m) || c.maximum.is_some_and(|m| n > m) {
                return fail(format!("{n} out of range"));
            }
        }
        SchemaKind::String => {
            let Some(s) = value.as_str() else {
                return fail("expected string".into());
            };
            let len = s.chars().count() as u64;
            if c.min_length.is_some_and(|m| len < m) || c.max_length.is_some_and(|m| len > m) {
                return fail(format!("length {len} out of range"));
            }
            if let Some(p) = &c.pattern {
                if let Ok(re) = regex::Regex::new(p) {
                    if !re.is_match(s) {
                        return fail(format!("does not match `{p}`"));
                    }
                }
            }
        }
        SchemaKind::Array => {
            let Some(items) = value.as_array() else {
                return fail("expected array".into());
            };
            let n = items.len() as u64;
            if c.min_items.is_some_and(|m| n < m) || c.max_items.is_some_and(|m| n > m) {
                return fail(format!("{n} items out of range"));
            }
            if let Some(item_schema) = &schema.items {
                for (i, item) in items.iter().enumerate() {
                    check(item, item_schema, &format!("{at}[{i}]"))?;
                }
            }
        }
        SchemaKind::Object => {
            let Some(obj) = value.as_object() else {
                return fail("expected object".into());
            };
            for name in &schema.required {
                if !obj.contains_key(name) {
                    return fail(format!("missing required `{name}`"));
                }
            }
            for (name, prop) in &schema.properties {
                if let Some(v) = obj.get(name) {
                    check(v, prop, &format!("{at}.{name}"))?;
                }
            }
        }
    }
    Ok(())
}
