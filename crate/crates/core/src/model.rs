//! Internal, reference-resolved model of the API under test.
//!
//! Everything downstream of the OpenAPI parser works against these types, so
//! the rest of the crate never touches document syntax.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use url::Url;

use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Post,
    Put,
    Patch,
    Delete,
    Head,
    Options,
}

impl HttpMethod {
    pub const ALL: [HttpMethod; 7] = [
        HttpMethod::Get,
        HttpMethod::Post,
        HttpMethod::Put,
        HttpMethod::Patch,
        HttpMethod::Delete,
        HttpMethod::Head,
        HttpMethod::Options,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HttpMethod::Get => "GET",
            HttpMethod::Post => "POST",
            HttpMethod::Put => "PUT",
            HttpMethod::Patch => "PATCH",
            HttpMethod::Delete => "DELETE",
            HttpMethod::Head => "HEAD",
            HttpMethod::Options => "OPTIONS",
        }
    }

    /// Case-insensitive lookup, as used for path-item keys.
    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamLocation {
    Path,
    Query,
    Header,
    BodyField,
}

impl ParamLocation {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamLocation::Path => "path",
            ParamLocation::Query => "query",
            ParamLocation::Header => "header",
            ParamLocation::BodyField => "body-field",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    String,
    Integer,
    Number,
    Boolean,
    Array,
    Object,
    Any,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maximum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_length: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_length: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_items: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_items: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub enum_values: Vec<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
}

impl Constraints {
    pub fn is_empty(&self) -> bool {
        *self == Constraints::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaNode {
    pub kind: SchemaKind,
    #[serde(default)]
    pub nullable: bool,
    #[serde(default)]
    pub constraints: Constraints,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Box<SchemaNode>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub properties: BTreeMap<String, SchemaNode>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub required: BTreeSet<String>,
}

impl SchemaNode {
    pub fn new(kind: SchemaKind) -> Self {
        SchemaNode {
            kind,
            nullable: false,
            constraints: Constraints::default(),
            items: None,
            properties: BTreeMap::new(),
            required: BTreeSet::new(),
        }
    }

    pub fn string() -> Self {
        Self::new(SchemaKind::String)
    }

    pub fn integer() -> Self {
        Self::new(SchemaKind::Integer)
    }

    pub fn boolean() -> Self {
        Self::new(SchemaKind::Boolean)
    }

    pub fn array(items: SchemaNode) -> Self {
        let mut node = Self::new(SchemaKind::Array);
        node.items = Some(Box::new(items));
        node
    }

    pub fn object<I>(props: I) -> Self
    where
        I: IntoIterator<Item = (String, SchemaNode, bool)>,
    {
        let mut node = Self::new(SchemaKind::Object);
        for (name, schema, required) in props {
            if required {
                node.required.insert(name.clone());
            }
            node.properties.insert(name, schema);
        }
        node
    }

    pub fn with_range(mut self, minimum: Option<f64>, maximum: Option<f64>) -> Self {
        self.constraints.minimum = minimum;
        self.constraints.maximum = maximum;
        self
    }

    pub fn with_length(mut self, min_length: Option<u64>, max_length: Option<u64>) -> Self {
        self.constraints.min_length = min_length;
        self.constraints.max_length = max_length;
        self
    }

    pub fn with_enum(mut self, values: Vec<serde_json::Value>) -> Self {
        self.constraints.enum_values = values;
        self
    }

    /// Checks the ordering invariants of this node and all of its children.
    pub fn check(&self, at: &str) -> Result<(), ModelError> {
        let c = &self.constraints;
        if let (Some(lo), Some(hi)) = (c.minimum, c.maximum) {
            if lo > hi {
                return Err(ModelError::InvalidConstraint(format!(
                    "{at}: minimum {lo} exceeds maximum {hi}"
                )));
            }
        }
        if let (Some(lo), Some(hi)) = (c.min_length, c.max_length) {
            if lo > hi {
                return Err(ModelError::InvalidConstraint(format!(
                    "{at}: minLength {lo} exceeds maxLength {hi}"
                )));
            }
        }
        if let (Some(lo), Some(hi)) = (c.min_items, c.max_items) {
            if lo > hi {
                return Err(ModelError::InvalidConstraint(format!(
                    "{at}: minItems {lo} exceeds maxItems {hi}"
                )));
            }
        }
        if let Some(items) = &self.items {
            items.check(&format!("{at}[]"))?;
        }
        for (name, prop) in &self.properties {
            prop.check(&format!("{at}.{name}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub location: ParamLocation,
    pub required: bool,
    pub schema: SchemaNode,
}

/// Name of the synthetic parameter carrying a request body that is not an
/// object (arrays, scalars).
pub const WHOLE_BODY_PARAM: &str = "$body";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationSpec {
    pub id: String,
    pub method: HttpMethod,
    pub path_template: String,
    pub parameters: Vec<ParameterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_body: Option<SchemaNode>,
    /// Declared responses keyed by status code text (`"200"`, `"4XX"`, `"default"`).
    pub responses: BTreeMap<String, Option<SchemaNode>>,
}

impl OperationSpec {
    /// Key used for a parameter in input vectors and scenario bindings: the
    /// bare name, or `location:name` when the name is declared in more than
    /// one location.
    pub fn param_key(&self, index: usize) -> String {
        let p = &self.parameters[index];
        let clashes = self
            .parameters
            .iter()
            .filter(|q| q.name == p.name)
            .count()
            > 1;
        if clashes {
            format!("{}:{}", p.location.as_str(), p.name)
        } else {
            p.name.clone()
        }
    }

    pub fn param_keys(&self) -> Vec<String> {
        (0..self.parameters.len()).map(|i| self.param_key(i)).collect()
    }

    pub fn param_by_key(&self, key: &str) -> Option<(usize, &ParameterSpec)> {
        (0..self.parameters.len())
            .find(|&i| self.param_key(i) == key)
            .map(|i| (i, &self.parameters[i]))
    }

    /// Names of `{placeholders}` in the path template, in order.
    pub fn path_variables(&self) -> Vec<String> {
        path_variables(&self.path_template)
    }

    /// Whether `status` is covered by the declared responses, honoring
    /// `NXX` ranges and `default`.
    pub fn declares_status(&self, status: u16) -> bool {
        self.response_schema_entry(status).is_some()
    }

    /// The response entry that applies to `status`, most specific first.
    pub fn response_schema_entry(&self, status: u16) -> Option<&Option<SchemaNode>> {
        let exact = status.to_string();
        if let Some(entry) = self.responses.get(&exact) {
            return Some(entry);
        }
        let range = format!("{}XX", status / 100);
        if let Some(entry) = self
            .responses
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(&range))
            .map(|(_, v)| v)
        {
            return Some(entry);
        }
        self.responses.get("default")
    }
}

pub fn path_variables(template: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                out.push(after[..end].to_string());
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BearerAuth {
    pub scheme_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiModel {
    pub base_url: Url,
    pub spec_version: String,
    pub operations: Vec<OperationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth: Option<BearerAuth>,
    /// Non-fatal notes from parsing, such as flattened composite schemas.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ApiModel {
    pub fn lookup_operation(&self, id: &str) -> Result<&OperationSpec, ModelError> {
        self.operations
            .iter()
            .find(|op| op.id == id)
            .ok_or_else(|| ModelError::UnknownOperation(id.to_string()))
    }

    /// Verifies the model-level invariants: unique operation ids and a
    /// one-to-one match between path placeholders and path parameters.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = BTreeSet::new();
        for op in &self.operations {
            if !seen.insert(op.id.as_str()) {
                return Err(ModelError::DuplicateOperation(op.id.clone()));
            }
            let mut pairs = BTreeSet::new();
            for p in &op.parameters {
                if !pairs.insert((p.name.as_str(), p.location)) {
                    return Err(ModelError::DuplicateParameter {
                        operation: op.id.clone(),
                        name: p.name.clone(),
                    });
                }
                if p.location == ParamLocation::Path && !p.required {
                    return Err(ModelError::OptionalPathParameter {
                        operation: op.id.clone(),
                        name: p.name.clone(),
                    });
                }
                p.schema.check(&format!("{}.{}", op.id, p.name))?;
            }
            for var in op.path_variables() {
                let n = op
                    .parameters
                    .iter()
                    .filter(|p| p.location == ParamLocation::Path && p.name == var)
                    .count();
                if n != 1 {
                    return Err(ModelError::UnboundPathVariable {
                        operation: op.id.clone(),
                        name: var,
                    });
                }
            }
        }
        Ok(())
    }
}
