//! Reference implementations used as test oracles. Nothing here calls into
//! the code it checks.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use fuzztherest::model::{SchemaKind, SchemaNode};
use fuzztherest::report::{Event, TestReport};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value;

// ---------------------------------------------------------------------------
// Schema validation

/// Strict, independently written validator. Also enforces the common string
/// formats and integer widths, which the production validator ignores.
pub fn conforms(v: &Value, s: &SchemaNode) -> Result<(), String> {
    if v.is_null() {
        return if s.nullable { Ok(()) } else { Err("null".into()) };
    }
    let c = &s.constraints;
    if !c.enum_values.is_empty() {
        return if c.enum_values.iter().any(|e| e == v) {
            Ok(())
        } else {
            Err(format!("{v} not an enum member"))
        };
    }
    let in_range = |x: f64| c.minimum.map_or(true, |m| x >= m) && c.maximum.map_or(true, |m| x <= m);
    match s.kind {
        SchemaKind::Any => Ok(()),
        SchemaKind::Boolean => v.as_bool().map(|_| ()).ok_or_else(|| format!("{v} not boolean")),
        SchemaKind::Integer => {
            let i = v.as_i64().ok_or_else(|| format!("{v} not an integer"))?;
            if c.format.as_deref() == Some("int32") && i32::try_from(i).is_err() {
                return Err(format!("{i} exceeds int32"));
            }
            if in_range(i as f64) {
                Ok(())
            } else {
                Err(format!("{i} out of range"))
            }
        }
        SchemaKind::Number => {
            let x = v.as_f64().ok_or_else(|| format!("{v} not a number"))?;
            if x.is_finite() && in_range(x) {
                Ok(())
            } else {
                Err(format!("{x} out of range"))
            }
        }
        SchemaKind::String => {
            let t = v.as_str().ok_or_else(|| format!("{v} not a string"))?;
            let n = t.chars().count() as u64;
            if c.min_length.is_some_and(|m| n < m) || c.max_length.is_some_and(|m| n > m) {
                return Err(format!("{t:?}: length {n}"));
            }
            if let Some(p) = &c.pattern {
                if !regex::Regex::new(p).map_err(|e| e.to_string())?.is_match(t) {
                    return Err(format!("{t:?} !~ {p}"));
                }
            }
            if let Some(f) = &c.format {
                if !format_ok(f, t) {
                    return Err(format!("{t:?} is not a valid {f}"));
                }
            }
            Ok(())
        }
        SchemaKind::Array => {
            let items = v.as_array().ok_or_else(|| format!("{v} not an array"))?;
            let n = items.len() as u64;
            if c.min_items.is_some_and(|m| n < m) || c.max_items.is_some_and(|m| n > m) {
                return Err(format!("{n} items"));
            }
            match &s.items {
                Some(inner) => items.iter().try_for_each(|i| conforms(i, inner)),
                None => Ok(()),
            }
        }
        SchemaKind::Object => {
            let obj = v.as_object().ok_or_else(|| format!("{v} not an object"))?;
            for r in &s.required {
                if !obj.contains_key(r) {
                    return Err(format!("missing {r}"));
                }
            }
            for (k, val) in obj {
                let prop = s.properties.get(k).ok_or_else(|| format!("unexpected {k}"))?;
                conforms(val, prop)?;
            }
            Ok(())
        }
    }
}

fn format_ok(format: &str, t: &str) -> bool {
    let re = match format {
        "date" => r"^\d{4}-(0[1-9]|1[0-2])-(0[1-9]|[12]\d|3[01])$",
        "date-time" => r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:\d{2})$",
        "email" => r"^[^@\s]+@[^@\s]+\.[^@\s]+$",
        "uuid" => r"^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$",
        "ipv4" => {
            let parts: Vec<&str> = t.split('.').collect();
            return parts.len() == 4 && parts.iter().all(|p| !p.is_empty() && p.parse::<u8>().is_ok());
        }
        "uri" | "url" => r"^[a-z][a-z0-9+.-]*://[^\s]+$",
        "hostname" => r"^[A-Za-z0-9-]+(\.[A-Za-z0-9-]+)*$",
        _ => return true,
    };
    regex::Regex::new(re).unwrap().is_match(t)
}

// ---------------------------------------------------------------------------
// Random schemas, always satisfiable

const PATTERNS: &[&str] = &[
    r"^[a-z]{3,8}$",
    r"^\d{4}-\d{2}$",
    r"^[A-Z][a-z]+( [A-Z][a-z]+)?$",
    r"^(red|green|blue)-[0-9]+$",
    r"^[a-f0-9]{6}$",
    r"^usr_[A-Za-z0-9]{4,10}$",
];
const FORMATS: &[&str] = &["date", "date-time", "email", "uuid", "ipv4", "uri", "hostname"];

pub fn random_schema<R: Rng>(rng: &mut R, depth: u32) -> SchemaNode {
    let leaf_only = depth == 0;
    let mut s = match rng.gen_range(0..if leaf_only { 5 } else { 7 }) {
        0 => {
            let mut s = SchemaNode::integer();
            if rng.gen_bool(0.3) {
                s.constraints.format = Some("int32".into());
            }
            let lo = rng.gen_bool(0.6).then(|| rng.gen_range(-5000i64..5000) as f64);
            let hi = rng.gen_bool(0.6).then(|| lo.unwrap_or(0.0) + rng.gen_range(0i64..3000) as f64);
            s.with_range(lo, hi)
        }
        1 => {
            let mut s = SchemaNode::new(SchemaKind::Number);
            let lo = rng.gen_bool(0.6).then(|| rng.gen_range(-1e4..1e4));
            let hi = rng.gen_bool(0.6).then(|| lo.unwrap_or(0.0) + rng.gen_range(0.0..1e3));
            s = s.with_range(lo, hi);
            s
        }
        2 => SchemaNode::boolean(),
        3 => {
            let mut s = SchemaNode::string();
            match rng.gen_range(0..4) {
                0 => s.constraints.pattern = Some(PATTERNS.choose(rng).unwrap().to_string()),
                1 => s.constraints.format = Some(FORMATS.choose(rng).unwrap().to_string()),
                _ => {
                    let lo = rng.gen_bool(0.5).then(|| rng.gen_range(0..20));
                    let hi = rng.gen_bool(0.5).then(|| lo.unwrap_or(0) + rng.gen_range(0..40));
                    s = s.with_length(lo, hi);
                }
            }
            s
        }
        4 => {
            // Enums whose members match the declared kind.
            if rng.gen_bool(0.5) {
                let vals = (0..rng.gen_range(1..5)).map(|i| Value::from(format!("v{i}"))).collect();
                SchemaNode::string().with_enum(vals)
            } else {
                let vals = (0..rng.gen_range(1..5)).map(|i| Value::from(i * 7 - 3)).collect();
                SchemaNode::integer().with_enum(vals)
            }
        }
        5 => {
            let mut s = SchemaNode::array(random_schema(rng, depth - 1));
            s.constraints.min_items = rng.gen_bool(0.5).then(|| rng.gen_range(0..3));
            s.constraints.max_items = rng
                .gen_bool(0.5)
                .then(|| s.constraints.min_items.unwrap_or(0) + rng.gen_range(0..4));
            s
        }
        _ => {
            let n = rng.gen_range(0..5);
            SchemaNode::object((0..n).map(|i| (format!("f{i}"), random_schema(rng, depth - 1), rng.gen_bool(0.5))))
        }
    };
    s.nullable = rng.gen_bool(0.1);
    s
}

// ---------------------------------------------------------------------------
// Q-learning reference

/// Plain tabular Q-learning keyed by display strings.
#[derive(Debug, Default)]
pub struct RefQ {
    pub q: HashMap<(String, String), f64>,
    pub visits: HashMap<(String, String), u64>,
}

impl RefQ {
    pub fn value(&self, s: &str, a: &str) -> f64 {
        self.q.get(&(s.to_string(), a.to_string())).copied().unwrap_or(0.0)
    }

    pub fn update(&mut self, s: &str, a: &str, r: f64, s2: &str, next_actions: &[String], alpha: f64, gamma: f64) {
        let best_next = next_actions
            .iter()
            .map(|a2| self.value(s2, a2))
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
            .unwrap_or(0.0);
        let old = self.value(s, a);
        let new = old + alpha * (r + gamma * best_next - old);
        self.q.insert((s.to_string(), a.to_string()), new);
        *self.visits.entry((s.to_string(), a.to_string())).or_default() += 1;
    }
}

use fuzztherest::agent::{action_space, q_update, AgentConfig, AgentState, FuzzAction, QTable, StatusClass};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CLASSES: [StatusClass; 5] = [
    StatusClass::None,
    StatusClass::Success,
    StatusClass::ClientError,
    StatusClass::ServerError,
    StatusClass::Timeout,
];

fn random_state<R: Rng>(rng: &mut R) -> AgentState {
    AgentState::new(rng.gen_range(0..4), CLASSES[rng.gen_range(0..CLASSES.len())])
}

fn names(actions: &[FuzzAction]) -> Vec<String> {
    actions.iter().map(ToString::to_string).collect()
}

/// Runs one trajectory through both implementations and returns the largest
/// per-entry difference, or an error if the key sets differ.
pub fn q_reference_max_diff(seed: u64, steps: usize) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = AgentConfig {
        alpha: rng.gen_range(0.01..1.0),
        gamma: rng.gen_range(0.0..0.99),
        ..AgentConfig::default()
    };
    let spaces: Vec<Vec<FuzzAction>> = (0..4).map(|n| action_space(rng.gen_range(0..3).min(n))).collect();
    let mut q = QTable::new();
    let mut reference = RefQ::default();
    for _ in 0..steps {
        let s = random_state(&mut rng);
        let acts = &spaces[s.step];
        let a = acts[rng.gen_range(0..acts.len())];
        let r = *[0.0, 1.0, 10.0, 100.0, 105.0, -3.5].get(rng.gen_range(0..6)).unwrap() + rng.gen::<f64>();
        let s2 = random_state(&mut rng);
        let next: Vec<FuzzAction> = if rng.gen_bool(0.2) { Vec::new() } else { spaces[s2.step].clone() };
        q_update(&mut q, s, a, r, s2, &next, &cfg);
        reference.update(&s.to_string(), &a.to_string(), r, &s2.to_string(), &names(&next), cfg.alpha, cfg.gamma);
    }
    if q.len() != reference.q.len() {
        return Err(format!("{} entries vs {} in the reference", q.len(), reference.q.len()));
    }
    let mut worst = 0f64;
    for ((s, a), e) in q.iter() {
        let key = (s.to_string(), a.to_string());
        let want = *reference.q.get(&key).ok_or_else(|| format!("extra entry {key:?}"))?;
        worst = worst.max((e.value - want).abs());
        if e.visits != reference.visits[&key] {
            return Err(format!("visits differ at {key:?}"));
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Report fold

/// Aggregates recomputed from the event log alone.
#[derive(Debug, Default, PartialEq)]
pub struct Folded {
    pub total_requests: u64,
    pub total_episodes: u64,
    pub total_findings: u64,
    pub histogram: BTreeMap<String, u64>,
    pub per_scenario: BTreeMap<String, ScenarioFold>,
    pub finding_counts: BTreeMap<String, u64>,
    pub finding_order: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Default, PartialEq)]
pub struct ScenarioFold {
    pub requests: u64,
    pub episodes: u64,
    pub skipped: u64,
    pub histogram: BTreeMap<String, u64>,
    pub unique: BTreeMap<String, BTreeSet<String>>,
    pub findings: Vec<String>,
    pub reward: f64,
    pub latencies: Vec<f64>,
}

pub fn fold(events: &[Event]) -> Folded {
    let mut f = Folded::default();
    for e in events {
        match e {
            Event::Exchange {
                scenario,
                operation_id,
                outcome,
                latency_ms,
                ..
            } => {
                f.total_requests += 1;
                *f.histogram.entry(outcome.clone()).or_default() += 1;
                let s = f.per_scenario.entry(scenario.clone()).or_default();
                s.requests += 1;
                *s.histogram.entry(outcome.clone()).or_default() += 1;
                s.unique.entry(operation_id.clone()).or_default().insert(outcome.clone());
                s.latencies.extend(latency_ms);
            }
            Event::Finding {
                scenario, fingerprint, ..
            } => {
                let n = f.finding_counts.entry(fingerprint.clone()).or_default();
                if *n == 0 {
                    f.finding_order.push(fingerprint.clone());
                    f.per_scenario
                        .entry(scenario.clone())
                        .or_default()
                        .findings
                        .push(fingerprint.clone());
                }
                *n += 1;
            }
            Event::AgentStep { scenario, reward, .. } => {
                f.per_scenario.entry(scenario.clone()).or_default().reward += reward;
            }
            Event::StepSkipped { scenario, .. } => {
                f.per_scenario.entry(scenario.clone()).or_default().skipped += 1;
            }
            Event::ScenarioFinished { scenario, episodes, .. } => {
                f.total_episodes += episodes;
                f.per_scenario.entry(scenario.clone()).or_default().episodes = *episodes;
            }
            Event::ScenarioStarted { scenario, .. } => {
                f.per_scenario.entry(scenario.clone()).or_default();
            }
            Event::Warning { message } => f.warnings.push(message.clone()),
        }
    }
    f.total_findings = f.finding_order.len() as u64;
    f
}

/// Compares every aggregate in `report` with the fold; returns mismatches.
pub fn fold_mismatches(report: &TestReport, f: &Folded) -> Vec<String> {
    let mut bad = Vec::new();
    let mut check = |what: String, ok: bool| {
        if !ok {
            bad.push(what);
        }
    };
    let t = &report.totals;
    check("total_requests".into(), t.total_requests == f.total_requests);
    check("total_episodes".into(), t.total_episodes == f.total_episodes);
    check("total_findings".into(), t.total_findings == f.total_findings);
    check("status_histogram".into(), t.status_histogram == f.histogram);
    check("warnings".into(), report.warnings == f.warnings);
    let order: Vec<&String> = report.findings.iter().map(|x| &x.fingerprint).collect();
    check("finding order".into(), order == f.finding_order.iter().collect::<Vec<_>>());
    for finding in &report.findings {
        check(
            format!("count of {}", finding.fingerprint),
            Some(&finding.count) == f.finding_counts.get(&finding.fingerprint),
        );
    }
    check(
        "scenario set".into(),
        report.scenarios.iter().map(|s| &s.name).collect::<BTreeSet<_>>()
            == f.per_scenario.keys().collect::<BTreeSet<_>>(),
    );
    for s in &report.scenarios {
        let Some(g) = f.per_scenario.get(&s.name) else { continue };
        let n = &s.name;
        check(format!("{n}.requests_sent"), s.requests_sent == g.requests);
        check(format!("{n}.episodes"), s.episodes == g.episodes);
        check(format!("{n}.skipped_steps"), s.skipped_steps == g.skipped);
        check(format!("{n}.status_histogram"), s.status_histogram == g.histogram);
        check(format!("{n}.unique_statuses"), s.unique_statuses == g.unique);
        check(format!("{n}.findings"), s.findings == g.findings);
        check(format!("{n}.cumulative_reward"), s.cumulative_reward == g.reward);
        let mean = if g.latencies.is_empty() {
            0.0
        } else {
            g.latencies.iter().sum::<f64>() / g.latencies.len() as f64
        };
        let max = g.latencies.iter().copied().fold(0.0, f64::max);
        check(format!("{n}.latency.mean_ms"), (s.latency.mean_ms - mean).abs() <= 1e-9 * mean.max(1.0));
        check(format!("{n}.latency.max_ms"), s.latency.max_ms == max);
    }
    bad
}

// ---------------------------------------------------------------------------
// In-process stand-in for the mock target

use std::time::Duration;

use fuzztherest::http::{HttpRequest, HttpResponse, Transport, TransportErrorKind};

/// Answers like the bundled mock service (same planted bugs, no hanging:
/// the slow endpoint times out immediately). Fast enough for large budgets.
pub struct SimTarget;

fn respond(status: u16, body: serde_json::Value) -> Result<HttpResponse, TransportErrorKind> {
    Ok(HttpResponse {
        status,
        headers: vec![("content-type".into(), "application/json".into())],
        body: body.to_string().into_bytes(),
        truncated: false,
        latency_ms: 0.25,
    })
}

fn decode(s: &str) -> String {
    percent_encoding::percent_decode_str(s).decode_utf8_lossy().into_owned()
}

impl Transport for SimTarget {
    fn send(&self, r: &HttpRequest, _: Duration) -> Result<HttpResponse, TransportErrorKind> {
        use serde_json::json;
        let url = url::Url::parse(&r.url).map_err(|_| TransportErrorKind::ProtocolError)?;
        let segs: Vec<String> = url.path_segments().map(|s| s.map(decode).collect()).unwrap_or_default();
        let query: BTreeMap<String, String> = url.query_pairs().into_owned().collect();
        let bad = |m: &str| respond(400, json!({ "error": m }));
        let segs: Vec<&str> = segs.iter().map(String::as_str).collect();
        match segs.as_slice() {
            [""] => respond(404, json!({"error": "not found"})),
            ["ping"] => respond(200, json!({"status": "ok"})),
            ["items", id] => match id.parse::<i64>() {
                Err(_) => bad("id"),
                Ok(i) if i < 0 => respond(500, json!(format!("overflow at index {i}"))),
                Ok(i) if !(1..=1000).contains(&i) => respond(404, json!({"error": "no such item"})),
                Ok(i) => respond(200, json!({"id": i, "name": format!("item-{i}")})),
            },
            ["users"] => {
                let body: serde_json::Value =
                    serde_json::from_slice(r.body.as_deref().unwrap_or_default()).unwrap_or_default();
                match body.get("name").and_then(|n| n.as_str()) {
                    Some(n) if n.chars().count() > 256 => respond(
                        500,
                        json!({"detail": "java.lang.IllegalStateException\n\tat a.B.c(B.java:1)"}),
                    ),
                    Some(n) if (1..=64).contains(&n.chars().count()) => {
                        respond(201, json!({"id": n.len() as i64 + 1, "name": n, "email": "a@b.test"}))
                    }
                    _ => bad("name"),
                }
            }
            ["users", id] => match id.parse::<i64>() {
                Ok(i) if (1..=1000).contains(&i) => {
                    respond(200, json!({"id": i, "name": "u", "email": "u@example.test"}))
                }
                Ok(_) => respond(404, json!({"error": "no such user"})),
                Err(_) => bad("id"),
            },
            ["search"] => match query.get("q") {
                None => bad("q"),
                Some(q) if q.contains('\'') => respond(500, json!({"error": "SQLSTATE[42000] SQL syntax"})),
                Some(q) if (1..=64).contains(&q.chars().count()) => respond(200, json!({"count": 0, "results": []})),
                Some(_) => bad("q"),
            },
            ["slow"] => match query.get("ms").and_then(|m| m.parse::<i64>().ok()) {
                Some(ms) if ms > 2000 => Err(TransportErrorKind::Timeout),
                Some(ms) if ms >= 0 => respond(200, json!({"slept_ms": ms})),
                _ => bad("ms"),
            },
            ["profile", id] => {
                let authorized = r
                    .headers
                    .iter()
                    .any(|(k, v)| k.eq_ignore_ascii_case("authorization") && v == "Bearer ftr-demo-token");
                if !authorized {
                    return respond(401, json!({"error": "unauthorized"}));
                }
                match id.parse::<i64>() {
                    Ok(i) if i > 99_999 => respond(200, json!({"id": i.to_string(), "name": "legacy"})),
                    Ok(i) if i >= 1 => respond(200, json!({"id": i, "name": "p"})),
                    Ok(_) => respond(404, json!({"error": "no such profile"})),
                    Err(_) => bad("id"),
                }
            }
            _ => respond(404, json!({"error": "not found"})),
        }
    }
}
