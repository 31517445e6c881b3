//! Scenarios: ordered operation sequences with data flowing between steps.
//!
//! File format (YAML or JSON), a top-level list:
//!
//! ```yaml
//! - name: create_then_get
//!   steps:
//!     - operation: post_users
//!     - operation: get_users_id
//!       bind:
//!         id: {from_step: 0, path: "$.id"}
//!         verbose: {literal: true}
//!         q: fuzz
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use crate::error::{ExtractionError, ScenarioError};
use crate::extract::{extract_path, ResponsePath};
use crate::forge::InputVector;
use crate::http::HttpExchange;
use crate::model::ApiModel;
use crate::openapi::load_document;
use crate::value::FuzzValue;

#[derive(Debug, Clone, PartialEq)]
pub enum BindingSource {
    Literal(FuzzValue),
    Extract { step: usize, path: ResponsePath },
    Fuzz,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioStep {
    pub operation_id: String,
    /// Explicit bindings only; unlisted parameters are fuzzed.
    pub bindings: BTreeMap<String, BindingSource>,
}

impl ScenarioStep {
    pub fn new(operation_id: impl Into<String>) -> Self {
        ScenarioStep {
            operation_id: operation_id.into(),
            bindings: BTreeMap::new(),
        }
    }

    pub fn is_fuzzed(&self, key: &str) -> bool {
        matches!(self.bindings.get(key), None | Some(BindingSource::Fuzz))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub steps: Vec<ScenarioStep>,
}

/// Parameter values ready for request building. Omitted parameters are
/// absent from `values`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConcreteParams {
    pub values: BTreeMap<String, FuzzValue>,
    pub duplicated: BTreeSet<String>,
}

impl ConcreteParams {
    pub fn from_pairs<I, K>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, FuzzValue)>,
        K: Into<String>,
    {
        ConcreteParams {
            values: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            duplicated: BTreeSet::new(),
        }
    }
}

/// Parses and validates a scenarios document against `model`.
pub fn parse_scenarios(document: &str, model: &ApiModel) -> Result<Vec<Scenario>, ScenarioError> {
    let tree = load_document(document).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let entries = tree
        .as_array()
        .ok_or_else(|| ScenarioError::Parse("top level must be a list of scenarios".into()))?;

    let mut names = BTreeSet::new();
    let mut out = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let name = entry
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| ScenarioError::Parse(format!("scenario #{i} has no `name`")))?
            .to_string();
        let fail = |reason: String| ScenarioError::Semantic {
            scenario: name.clone(),
            reason,
        };
        if !names.insert(name.clone()) {
            return Err(fail("duplicate scenario name".into()));
        }
        let steps = entry
            .get("steps")
            .and_then(Value::as_array)
            .ok_or_else(|| ScenarioError::Parse(format!("scenario `{name}` has no `steps` list")))?;
        if steps.is_empty() {
            return Err(fail("a scenario needs at least one step".into()));
        }

        let mut parsed = Vec::with_capacity(steps.len());
        for (idx, step) in steps.iter().enumerate() {
            let op_id = step
                .get("operation")
                .and_then(Value::as_str)
                .ok_or_else(|| ScenarioError::Parse(format!("`{name}` step {idx}: missing `operation`")))?;
            let op = model
                .lookup_operation(op_id)
                .map_err(|_| fail(format!("step {idx}: unknown operation `{op_id}`")))?;
            let mut s = ScenarioStep::new(op_id);
            if let Some(bind) = step.get("bind") {
                let bind = bind
                    .as_object()
                    .ok_or_else(|| ScenarioError::Parse(format!("`{name}` step {idx}: `bind` must be a mapping")))?;
                for (param, source) in bind {
                    if op.param_by_key(param).is_none() {
                        return Err(fail(format!(
                            "step {idx}: operation `{op_id}` has no parameter `{param}`"
                        )));
                    }
                    let source = parse_binding(source)
                        .map_err(|r| fail(format!("step {idx}, `{param}`: {r}")))?;
                    if let BindingSource::Extract { step: from, .. } = &source {
                        if *from >= idx {
                            return Err(fail(format!(
                                "step {idx}, `{param}`: forward reference to step {from}"
                            )));
                        }
                    }
                    s.bindings.insert(param.clone(), source);
                }
            }
            parsed.push(s);
        }
        out.push(Scenario { name, steps: parsed });
    }
    Ok(out)
}

fn parse_binding(v: &Value) -> Result<BindingSource, String> {
    match v {
        Value::String(s) if s == "fuzz" => Ok(BindingSource::Fuzz),
        Value::Object(o) => {
            if o.get("fuzz").and_then(Value::as_bool) == Some(true) {
                return Ok(BindingSource::Fuzz);
            }
            if let Some(lit) = o.get("literal") {
                return Ok(BindingSource::Literal(FuzzValue::from_json(lit)));
            }
            if let Some(from) = o.get("from_step") {
                let step = from
                    .as_u64()
                    .ok_or("`from_step` must be a non-negative integer")? as usize;
                let path = o
                    .get("path")
                    .and_then(Value::as_str)
                    .ok_or("extract binding needs a `path`")?
                    .parse()?;
                return Ok(BindingSource::Extract { step, path });
            }
            Err("binding must be `fuzz`, `{literal: ..}` or `{from_step: n, path: ..}`".into())
        }
        _ => Err("binding must be `fuzz`, `{literal: ..}` or `{from_step: n, path: ..}`".into()),
    }
}

/// One single-step, all-fuzz scenario per operation, named after it.
pub fn default_scenarios(model: &ApiModel) -> Vec<Scenario> {
    model
        .operations
        .iter()
        .map(|op| Scenario {
            name: op.id.clone(),
            steps: vec![ScenarioStep::new(op.id.clone())],
        })
        .collect()
}

/// Produces the concrete parameters for a step: literals copied, extracts
/// read from earlier responses in `history`, the rest from `fuzzed`.
pub fn resolve_bindings(
    step: &ScenarioStep,
    history: &[HttpExchange],
    fuzzed: &InputVector,
) -> Result<ConcreteParams, ExtractionError> {
    let mut out = ConcreteParams::default();
    for (key, value) in &fuzzed.values {
        if !step.is_fuzzed(key) || fuzzed.omitted.contains(key) {
            continue;
        }
        out.values.insert(key.clone(), value.clone());
        if fuzzed.duplicated.contains(key) {
            out.duplicated.insert(key.clone());
        }
    }
    for (key, source) in &step.bindings {
        let value = match source {
            BindingSource::Fuzz => continue,
            BindingSource::Literal(v) => v.clone(),
            BindingSource::Extract { step: from, path } => {
                let exchange = history
                    .get(*from)
                    .ok_or_else(|| ExtractionError(format!("step {from} has not run")))?;
                let response = exchange
                    .response()
                    .ok_or_else(|| ExtractionError(format!("step {from} got no response")))?;
                extract_path(&response.body, path)?
            }
        };
        out.values.insert(key.clone(), value);
    }
    Ok(out)
}
