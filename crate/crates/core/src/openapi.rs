//! OpenAPI 3.0 ingestion: document loading, internal `$ref` resolution and
//! conversion into an [`ApiModel`].

use std::collections::{BTreeMap, HashMap};

use serde_json::{json, Map, Value};
use url::Url;

use crate::error::SpecError;
use crate::model::{
    ApiModel, BearerAuth, Constraints, HttpMethod, OperationSpec, ParamLocation, ParameterSpec,
    SchemaKind, SchemaNode, WHOLE_BODY_PARAM,
};

/// Loads a JSON or YAML document into a JSON tree. Mapping keys that YAML
/// reads as numbers or booleans (`200:` under `responses`) become strings.
pub fn load_document(text: &str) -> Result<Value, SpecError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        if let Ok(v) = serde_json::from_str::<Value>(text) {
            return Ok(v);
        }
    }
    let yaml: serde_yaml::Value =
        serde_yaml::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
    yaml_to_json(yaml)
}

fn yaml_to_json(v: serde_yaml::Value) -> Result<Value, SpecError> {
    use serde_yaml::Value as Y;
    Ok(match v {
        Y::Null => Value::Null,
        Y::Bool(b) => Value::Bool(b),
        Y::Number(n) => {
            if let Some(i) = n.as_i64() {
                Value::from(i)
            } else if let Some(u) = n.as_u64() {
                Value::from(u)
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                serde_json::Number::from_f64(f)
                    .map(Value::Number)
                    .ok_or_else(|| SpecError::Parse(format!("non-finite number {f}")))?
            }
        }
        Y::String(s) => Value::String(s),
        Y::Sequence(items) => Value::Array(
            items
                .into_iter()
                .map(yaml_to_json)
                .collect::<Result<_, _>>()?,
        ),
        Y::Mapping(m) => {
            let mut out = Map::new();
            for (k, v) in m {
                let key = match k {
                    Y::String(s) => s,
                    Y::Number(n) => n.to_string(),
                    Y::Bool(b) => b.to_string(),
                    Y::Null => "null".to_string(),
                    other => {
                        return Err(SpecError::Parse(format!(
                            "unsupported mapping key {other:?}"
                        )))
                    }
                };
                out.insert(key, yaml_to_json(v)?);
            }
            Value::Object(out)
        }
        Y::Tagged(t) => yaml_to_json(t.value)?,
    })
}

/// Replaces every internal `$ref` with its target. External references and
/// cycles are rejected.
pub fn resolve_references(root: &Value) -> Result<Value, SpecError> {
    let mut resolver = Resolver {
        root,
        in_progress: Vec::new(),
        done: HashMap::new(),
    };
    resolver.resolve(root)
}

struct Resolver<'a> {
    root: &'a Value,
    in_progress: Vec<String>,
    done: HashMap<String, Value>,
}

impl Resolver<'_> {
    fn resolve(&mut self, node: &Value) -> Result<Value, SpecError> {
        match node {
            Value::Object(map) => {
                if let Some(r) = map.get("$ref") {
                    let r = r
                        .as_str()
                        .ok_or_else(|| SpecError::Semantic("`$ref` must be a string".into()))?;
                    return self.follow(r);
                }
                let mut out = Map::with_capacity(map.len());
                for (k, v) in map {
                    out.insert(k.clone(), self.resolve(v)?);
                }
                Ok(Value::Object(out))
            }
            Value::Array(items) => Ok(Value::Array(
                items
                    .iter()
                    .map(|v| self.resolve(v))
                    .collect::<Result<_, _>>()?,
            )),
            other => Ok(other.clone()),
        }
    }

    fn follow(&mut self, reference: &str) -> Result<Value, SpecError> {
        let Some(pointer) = reference.strip_prefix('#') else {
            return Err(SpecError::Semantic(format!(
                "external reference `{reference}` is not supported"
            )));
        };
        if let Some(v) = self.done.get(reference) {
            return Ok(v.clone());
        }
        if self.in_progress.iter().any(|r| r == reference) {
            let mut chain = self.in_progress.clone();
            chain.push(reference.to_string());
            return Err(SpecError::Semantic(format!(
                "cyclic reference: {}",
                chain.join(" -> ")
            )));
        }
        let target = self.root.pointer(pointer).ok_or_else(|| {
            SpecError::Semantic(format!("unresolvable reference `{reference}`"))
        })?;
        self.in_progress.push(reference.to_string());
        let resolved = self.resolve(target);
        self.in_progress.pop();
        let resolved = resolved?;
        self.done.insert(reference.to_string(), resolved.clone());
        Ok(resolved)
    }
}

/// Operation id used when a document omits `operationId`: lowercased
/// `method_path`, non-alphanumeric runs collapsed to `_`.
pub fn derive_operation_id(method: HttpMethod, path: &str) -> String {
    let raw = format!("{}_{}", method.as_str(), path).to_ascii_lowercase();
    let mut out = String::with_capacity(raw.len());
    let mut gap = false;
    for c in raw.chars() {
        if c.is_ascii_alphanumeric() {
            if gap && !out.is_empty() {
                out.push('_');
            }
            gap = false;
            out.push(c);
        } else {
            gap = true;
        }
    }
    out
}

/// Parses an OpenAPI 3.0 document into a validated, reference-free model.
pub fn parse_spec(document: &str, override_base_url: Option<&Url>) -> Result<ApiModel, SpecError> {
    let raw = load_document(document)?;
    let root = raw
        .as_object()
        .ok_or_else(|| SpecError::Semantic("document root must be a mapping".into()))?;

    if root.contains_key("swagger") {
        return Err(SpecError::Semantic(
            "Swagger 2.0 documents are not supported; convert to OpenAPI 3.0".into(),
        ));
    }
    let version = root
        .get("openapi")
        .and_then(Value::as_str)
        .ok_or_else(|| SpecError::Semantic("missing `openapi` version field".into()))?;
    if !version.starts_with("3.0") {
        return Err(SpecError::Semantic(format!(
            "unsupported OpenAPI version {version} (only 3.0.x is supported)"
        )));
    }

    let resolved = resolve_references(&raw)?;
    let root = resolved.as_object().expect("resolution preserves the root");

    let base_url = match override_base_url {
        Some(u) => u.clone(),
        None => server_url(root)?,
    };

    let auth = parse_security(root)?;

    let paths = root
        .get("paths")
        .and_then(Value::as_object)
        .ok_or_else(|| SpecError::Semantic("missing `paths` section".into()))?;

    let mut warnings = Vec::new();
    let mut operations = Vec::new();
    for (path, item) in paths {
        let item = item
            .as_object()
            .ok_or_else(|| SpecError::Semantic(format!("path item `{path}` must be a mapping")))?;
        let shared = item
            .get("parameters")
            .map(|p| parse_parameters(p, path, &mut warnings))
            .transpose()?
            .unwrap_or_default();
        for (key, op) in item {
            let Some(method) = HttpMethod::parse(key) else {
                if key.eq_ignore_ascii_case("trace") {
                    warnings.push(format!("{path}: TRACE operation skipped"));
                }
                continue;
            };
            operations.push(parse_operation(method, path, op, &shared, &mut warnings)?);
        }
    }

    let model = ApiModel {
        base_url,
        spec_version: version.to_string(),
        operations,
        auth,
        warnings,
    };
    model.validate()?;
    Ok(model)
}

fn server_url(root: &Map<String, Value>) -> Result<Url, SpecError> {
    let server = root
        .get("servers")
        .and_then(Value::as_array)
        .and_then(|s| s.first())
        .ok_or_else(|| {
            SpecError::Semantic("no server declared and no base URL override given".into())
        })?;
    let mut url = server
        .get("url")
        .and_then(Value::as_str)
        .ok_or_else(|| SpecError::Semantic("server entry without `url`".into()))?
        .to_string();
    if let Some(vars) = server.get("variables").and_then(Value::as_object) {
        for (name, var) in vars {
            if let Some(default) = var.get("default").and_then(Value::as_str) {
                url = url.replace(&format!("{{{name}}}"), default);
            }
        }
    }
    Url::parse(&url).map_err(|e| {
        SpecError::Semantic(format!(
            "server url `{url}` is not absolute ({e}); pass a base URL override"
        ))
    })
}

fn parse_security(root: &Map<String, Value>) -> Result<Option<BearerAuth>, SpecError> {
    let Some(schemes) = root
        .get("components")
        .and_then(|c| c.get("securitySchemes"))
        .and_then(Value::as_object)
    else {
        return Ok(None);
    };
    let mut auth = None;
    for (name, scheme) in schemes {
        let ty = scheme.get("type").and_then(Value::as_str).unwrap_or("");
        let http_scheme = scheme.get("scheme").and_then(Value::as_str).unwrap_or("");
        if ty == "http" && http_scheme.eq_ignore_ascii_case("bearer") {
            auth.get_or_insert(BearerAuth {
                scheme_name: name.clone(),
            });
        } else {
            return Err(SpecError::Semantic(format!(
                "security scheme `{name}` ({ty} {http_scheme}) is not supported; only HTTP bearer tokens are"
            )));
        }
    }
    Ok(auth)
}

fn parse_parameters(
    list: &Value,
    ctx: &str,
    warnings: &mut Vec<String>,
) -> Result<Vec<ParameterSpec>, SpecError> {
    let list = list
        .as_array()
        .ok_or_else(|| SpecError::Semantic(format!("{ctx}: `parameters` must be a list")))?;
    let mut out = Vec::new();
    for p in list {
        let name = p
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| SpecError::Semantic(format!("{ctx}: parameter without a name")))?;
        let location = match p.get("in").and_then(Value::as_str) {
            Some("path") => ParamLocation::Path,
            Some("query") => ParamLocation::Query,
            Some("header") => ParamLocation::Header,
            Some("cookie") => {
                warnings.push(format!("{ctx}: cookie parameter `{name}` ignored"));
                continue;
            }
            other => {
                return Err(SpecError::Semantic(format!(
                    "{ctx}: parameter `{name}` has invalid location {other:?}"
                )))
            }
        };
        let schema_value = p.get("schema").or_else(|| {
            p.get("content")
                .and_then(Value::as_object)
                .and_then(|c| c.values().next())
                .and_then(|m| m.get("schema"))
        });
        let schema = match schema_value {
            Some(s) => convert_schema(s, &format!("{ctx}.{name}"), warnings)?,
            None => SchemaNode::new(SchemaKind::Any),
        };
        let required = location == ParamLocation::Path
            || p.get("required").and_then(Value::as_bool).unwrap_or(false);
        out.push(ParameterSpec {
            name: name.to_string(),
            location,
            required,
            schema,
        });
    }
    Ok(out)
}

fn json_media_schema(content: Option<&Value>) -> Option<&Value> {
    let content = content?.as_object()?;
    content
        .iter()
        .find(|(media, _)| {
            let m = media.to_ascii_lowercase();
            m.starts_with("application/json") || m.ends_with("+json") || m == "*/*"
        })
        .and_then(|(_, m)| m.get("schema"))
}

fn parse_operation(
    method: HttpMethod,
    path: &str,
    op: &Value,
    shared: &[ParameterSpec],
    warnings: &mut Vec<String>,
) -> Result<OperationSpec, SpecError> {
    let ctx = format!("{method} {path}");
    let op = op
        .as_object()
        .ok_or_else(|| SpecError::Semantic(format!("{ctx}: operation must be a mapping")))?;
    let id = op
        .get("operationId")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| derive_operation_id(method, path));

    let own = op
        .get("parameters")
        .map(|p| parse_parameters(p, &ctx, warnings))
        .transpose()?
        .unwrap_or_default();
    let mut parameters: Vec<ParameterSpec> = shared
        .iter()
        .filter(|s| {
            !own.iter()
                .any(|o| o.name == s.name && o.location == s.location)
        })
        .cloned()
        .collect();
    parameters.extend(own);

    let mut request_body = None;
    if let Some(body) = op.get("requestBody") {
        match json_media_schema(body.get("content")) {
            Some(schema) => {
                let node = convert_schema(schema, &format!("{ctx} body"), warnings)?;
                let body_required = body.get("required").and_then(Value::as_bool).unwrap_or(false);
                if node.kind == SchemaKind::Object && !node.properties.is_empty() {
                    for (name, prop) in &node.properties {
                        parameters.push(ParameterSpec {
                            name: name.clone(),
                            location: ParamLocation::BodyField,
                            required: node.required.contains(name),
                            schema: prop.clone(),
                        });
                    }
                } else {
                    parameters.push(ParameterSpec {
                        name: WHOLE_BODY_PARAM.to_string(),
                        location: ParamLocation::BodyField,
                        required: body_required,
                        schema: node.clone(),
                    });
                }
                request_body = Some(node);
            }
            None => warnings.push(format!("{ctx}: request body has no JSON content; ignored")),
        }
    }

    let mut responses = BTreeMap::new();
    if let Some(rs) = op.get("responses").and_then(Value::as_object) {
        for (code, resp) in rs {
            let schema = json_media_schema(resp.get("content"))
                .map(|s| convert_schema(s, &format!("{ctx} response {code}"), warnings))
                .transpose()?;
            responses.insert(code.clone(), schema);
        }
    }

    Ok(OperationSpec {
        id,
        method,
        path_template: path.to_string(),
        parameters,
        request_body,
        responses,
    })
}

/// Converts a resolved JSON schema object into a [`SchemaNode`], flattening
/// `allOf` (merge) and `oneOf`/`anyOf` (first alternative).
pub fn convert_schema(
    v: &Value,
    ctx: &str,
    warnings: &mut Vec<String>,
) -> Result<SchemaNode, SpecError> {
    let obj = match v {
        Value::Object(o) => o,
        Value::Bool(true) => return Ok(SchemaNode::new(SchemaKind::Any)),
        _ => return Err(SpecError::Semantic(format!("{ctx}: schema must be a mapping"))),
    };

    let mut node = convert_plain(obj, ctx, warnings)?;

    if let Some(members) = obj.get("allOf").and_then(Value::as_array) {
        warnings.push(format!("{ctx}: allOf flattened by merging its members"));
        for m in members {
            let part = convert_schema(m, ctx, warnings)?;
            merge_into(&mut node, part);
        }
    }
    for key in ["oneOf", "anyOf"] {
        if let Some(first) = obj.get(key).and_then(Value::as_array).and_then(|a| a.first()) {
            warnings.push(format!("{ctx}: {key} flattened to its first alternative"));
            let part = convert_schema(first, ctx, warnings)?;
            merge_into(&mut node, part);
        }
    }

    node.check(ctx)
        .map_err(|e| SpecError::Semantic(e.to_string()))?;
    Ok(node)
}

fn convert_plain(
    obj: &Map<String, Value>,
    ctx: &str,
    warnings: &mut Vec<String>,
) -> Result<SchemaNode, SpecError> {
    let kind = match obj.get("type").and_then(Value::as_str) {
        Some("string") => SchemaKind::String,
        Some("integer") => SchemaKind::Integer,
        Some("number") => SchemaKind::Number,
        Some("boolean") => SchemaKind::Boolean,
        Some("array") => SchemaKind::Array,
        Some("object") => SchemaKind::Object,
        Some(other) => {
            return Err(SpecError::Semantic(format!("{ctx}: unknown type `{other}`")))
        }
        None if obj.contains_key("properties") => SchemaKind::Object,
        None if obj.contains_key("items") => SchemaKind::Array,
        None => SchemaKind::Any,
    };
    let mut node = SchemaNode::new(kind);
    node.nullable = obj.get("nullable").and_then(Value::as_bool).unwrap_or(false);

    let num = |k: &str| obj.get(k).and_then(Value::as_f64);
    let count = |k: &str| obj.get(k).and_then(Value::as_u64);
    let flag = |k: &str| obj.get(k).and_then(Value::as_bool).unwrap_or(false);
    let mut c = Constraints {
        minimum: num("minimum"),
        maximum: num("maximum"),
        min_length: count("minLength"),
        max_length: count("maxLength"),
        min_items: count("minItems"),
        max_items: count("maxItems"),
        enum_values: obj
            .get("enum")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default(),
        format: obj.get("format").and_then(Value::as_str).map(str::to_string),
        pattern: obj.get("pattern").and_then(Value::as_str).map(str::to_string),
    };
    if flag("exclusiveMinimum") {
        c.minimum = c.minimum.map(|m| match kind {
            SchemaKind::Integer => m.floor() + 1.0,
            _ => m.next_up(),
        });
    }
    if flag("exclusiveMaximum") {
        c.maximum = c.maximum.map(|m| match kind {
            SchemaKind::Integer => m.ceil() - 1.0,
            _ => m.next_down(),
        });
    }
    node.constraints = c;

    if let Some(items) = obj.get("items") {
        node.items = Some(Box::new(convert_schema(items, &format!("{ctx}[]"), warnings)?));
    } else if kind == SchemaKind::Array {
        node.items = Some(Box::new(SchemaNode::new(SchemaKind::Any)));
    }
    if let Some(props) = obj.get("properties").and_then(Value::as_object) {
        for (name, p) in props {
            node.properties.insert(
                name.clone(),
                convert_schema(p, &format!("{ctx}.{name}"), warnings)?,
            );
        }
    }
    if let Some(req) = obj.get("required").and_then(Value::as_array) {
        node.required = req
            .iter()
            .filter_map(Value::as_str)
            .filter(|r| node.properties.contains_key(*r))
            .map(str::to_string)
            .collect();
    }
    Ok(node)
}

fn merge_into(base: &mut SchemaNode, part: SchemaNode) {
    if base.kind == SchemaKind::Any {
        base.kind = part.kind;
    }
    base.nullable &= part.nullable || base.kind == SchemaKind::Any;
    let (b, p) = (&mut base.constraints, part.constraints);
    b.minimum = tighter(b.minimum, p.minimum, f64::max);
    b.maximum = tighter(b.maximum, p.maximum, f64::min);
    b.min_length = tighter(b.min_length, p.min_length, u64::max);
    b.max_length = tighter(b.max_length, p.max_length, u64::min);
    b.min_items = tighter(b.min_items, p.min_items, u64::max);
    b.max_items = tighter(b.max_items, p.max_items, u64::min);
    if b.enum_values.is_empty() {
        b.enum_values = p.enum_values;
    }
    b.format = b.format.take().or(p.format);
    b.pattern = b.pattern.take().or(p.pattern);
    if base.items.is_none() {
        base.items = part.items;
    }
    for (k, v) in part.properties {
        base.properties.entry(k).or_insert(v);
    }
    base.required.extend(part.required);
}

fn tighter<T: Copy>(a: Option<T>, b: Option<T>, pick: fn(T, T) -> T) -> Option<T> {
    match (a, b) {
        (Some(x), Some(y)) => Some(pick(x, y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Renders a model back to a canonical OpenAPI 3.0 document. Parsing the
/// result yields an equal model (warnings aside) provided operations that
/// share a path are adjacent, which is always the case for parsed models.
pub fn render_document(model: &ApiModel) -> Value {
    let mut paths = Map::new();
    for op in &model.operations {
        let item = paths
            .entry(op.path_template.clone())
            .or_insert_with(|| Value::Object(Map::new()));
        let mut o = Map::new();
        o.insert("operationId".into(), json!(op.id));
        let params: Vec<Value> = op
            .parameters
            .iter()
            .filter(|p| p.location != ParamLocation::BodyField)
            .map(|p| {
                json!({
                    "name": p.name,
                    "in": p.location.as_str(),
                    "required": p.required,
                    "schema": render_schema(&p.schema),
                })
            })
            .collect();
        if !params.is_empty() {
            o.insert("parameters".into(), Value::Array(params));
        }
        if let Some(body) = &op.request_body {
            let required = op
                .parameters
                .iter()
                .any(|p| p.name == WHOLE_BODY_PARAM && p.required);
            o.insert(
                "requestBody".into(),
                json!({
                    "required": required,
                    "content": {"application/json": {"schema": render_schema(body)}},
                }),
            );
        }
        let mut responses = Map::new();
        for (code, schema) in &op.responses {
            let mut r = Map::new();
            r.insert("description".into(), json!(""));
            if let Some(s) = schema {
                r.insert(
                    "content".into(),
                    json!({"application/json": {"schema": render_schema(s)}}),
                );
            }
            responses.insert(code.clone(), Value::Object(r));
        }
        o.insert("responses".into(), Value::Object(responses));
        item.as_object_mut()
            .expect("path items are objects")
            .insert(op.method.as_str().to_ascii_lowercase(), Value::Object(o));
    }

    let mut doc = Map::new();
    doc.insert("openapi".into(), json!(model.spec_version));
    doc.insert("info".into(), json!({"title": "rendered", "version": "0"}));
    doc.insert("servers".into(), json!([{"url": model.base_url.as_str()}]));
    doc.insert("paths".into(), Value::Object(paths));
    if let Some(auth) = &model.auth {
        doc.insert(
            "components".into(),
            json!({"securitySchemes": {auth.scheme_name.clone(): {"type": "http", "scheme": "bearer"}}}),
        );
    }
    Value::Object(doc)
}

pub fn render_schema(s: &SchemaNode) -> Value {
    let mut o = Map::new();
    let ty = match s.kind {
        SchemaKind::String => Some("string"),
        SchemaKind::Integer => Some("integer"),
        SchemaKind::Number => Some("number"),
        SchemaKind::Boolean => Some("boolean"),
        SchemaKind::Array => Some("array"),
        SchemaKind::Object => Some("object"),
        SchemaKind::Any => None,
    };
    if let Some(t) = ty {
        o.insert("type".into(), json!(t));
    }
    if s.nullable {
        o.insert("nullable".into(), json!(true));
    }
    let c = &s.constraints;
    let put_f = |o: &mut Map<String, Value>, k: &str, v: Option<f64>| {
        if let Some(v) = v.and_then(serde_json::Number::from_f64) {
            o.insert(k.into(), Value::Number(v));
        }
    };
    put_f(&mut o, "minimum", c.minimum);
    put_f(&mut o, "maximum", c.maximum);
    for (k, v) in [
        ("minLength", c.min_length),
        ("maxLength", c.max_length),
        ("minItems", c.min_items),
        ("maxItems", c.max_items),
    ] {
        if let Some(v) = v {
            o.insert(k.into(), json!(v));
        }
    }
    if !c.enum_values.is_empty() {
        o.insert("enum".into(), Value::Array(c.enum_values.clone()));
    }
    if let Some(f) = &c.format {
        o.insert("format".into(), json!(f));
    }
    if let Some(p) = &c.pattern {
        o.insert("pattern".into(), json!(p));
    }
    if let Some(items) = &s.items {
        o.insert("items".into(), render_schema(items));
    }
    if !s.properties.is_empty() {
        let props: Map<String, Value> = s
            .properties
            .iter()
            .map(|(k, v)| (k.clone(), render_schema(v)))
            .collect();
        o.insert("properties".into(), Value::Object(props));
    }
    if !s.required.is_empty() {
        o.insert("required".into(), json!(s.required));
    }
    Value::Object(o)
}
