//! Event stream and the report folded from it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::oracle::{EvidenceClass, Finding};

/// Everything the run loop emits, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    ScenarioStarted {
        scenario: String,
        steps: usize,
    },
    Exchange {
        scenario: String,
        episode: u64,
        step: usize,
        operation_id: String,
        seq: u64,
        /// Status code or transport error name.
        outcome: String,
        latency_ms: Option<f64>,
        evidence: Vec<EvidenceClass>,
    },
    Finding {
        scenario: String,
        episode: u64,
        fingerprint: String,
        /// Present the first time a fingerprint is seen.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        new: Option<Box<Finding>>,
    },
    AgentStep {
        scenario: String,
        episode: u64,
        step: usize,
        state: String,
        action: String,
        reward: f64,
        epsilon: f64,
        applicable: bool,
    },
    StepSkipped {
        scenario: String,
        episode: u64,
        step: usize,
        reason: String,
    },
    ScenarioFinished {
        scenario: String,
        episodes: u64,
        final_epsilon: f64,
    },
    Warning {
        message: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub steps: usize,
    pub episodes: u64,
    pub requests_sent: u64,
    pub skipped_steps: u64,
    pub status_histogram: BTreeMap<String, u64>,
    /// Distinct outcomes per operation.
    pub unique_statuses: BTreeMap<String, BTreeSet<String>>,
    /// Fingerprints first seen in this scenario.
    pub findings: Vec<String>,
    pub cumulative_reward: f64,
    pub final_epsilon: f64,
    pub latency: LatencyStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub total_requests: u64,
    pub total_episodes: u64,
    pub total_findings: u64,
    pub status_histogram: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub metadata: Metadata,
    /// Echo of the effective configuration.
    pub run: Value,
    pub scenarios: Vec<ScenarioReport>,
    pub totals: Totals,
    pub findings: Vec<Finding>,
    pub warnings: Vec<String>,
}

impl TestReport {
    pub fn finding(&self, fingerprint: &str) -> Option<&Finding> {
        self.findings.iter().find(|f| f.fingerprint == fingerprint)
    }
}

/// Folds events into a [`TestReport`].
#[derive(Debug, Default)]
pub struct ReportBuilder {
    report: TestReport,
    latency_sum: BTreeMap<String, (f64, u64)>,
}

impl ReportBuilder {
    pub fn new(run: Value) -> Self {
        ReportBuilder {
            report: TestReport {
                run,
                metadata: Metadata {
                    tool: "fuzz-the-rest".into(),
                    version: env!("CARGO_PKG_VERSION").into(),
                    ..Metadata::default()
                },
                ..TestReport::default()
            },
            latency_sum: BTreeMap::new(),
        }
    }

    fn scenario(&mut self, name: &str) -> &mut ScenarioReport {
        let idx = match self.report.scenarios.iter().position(|s| s.name == name) {
            Some(i) => i,
            None => {
                self.report.scenarios.push(ScenarioReport {
                    name: name.to_string(),
                    ..ScenarioReport::default()
                });
                self.report.scenarios.len() - 1
            }
        };
        &mut self.report.scenarios[idx]
    }

    pub fn record(&mut self, event: &Event) {
        match event {
            Event::ScenarioStarted { scenario, steps } => {
                self.scenario(scenario).steps = *steps;
            }
            Event::Exchange {
                scenario,
                operation_id,
                outcome,
                latency_ms,
                ..
            } => {
                let s = self.scenario(scenario);
                s.requests_sent += 1;
                *s.status_histogram.entry(outcome.clone()).or_default() += 1;
                s.unique_statuses
                    .entry(operation_id.clone())
                    .or_default()
                    .insert(outcome.clone());
                if let Some(ms) = latency_ms {
                    let e = self.latency_sum.entry(scenario.clone()).or_default();
                    e.0 += ms;
                    e.1 += 1;
                    let (sum, n) = *e;
                    let s = self.scenario(scenario);
                    s.latency.mean_ms = sum / n as f64;
                    s.latency.max_ms = s.latency.max_ms.max(*ms);
                }
                let t = &mut self.report.totals;
                t.total_requests += 1;
                *t.status_histogram.entry(outcome.clone()).or_default() += 1;
            }
            Event::Finding {
                scenario,
                fingerprint,
                new,
                ..
            } => match new {
                Some(f) => {
                    self.scenario(scenario).findings.push(fingerprint.clone());
                    self.report.findings.push((**f).clone());
                    self.report.totals.total_findings += 1;
                }
                None => {
                    if let Some(f) = self.report.findings.iter_mut().find(|f| &f.fingerprint == fingerprint) {
                        f.count += 1;
                    }
                }
            },
            Event::AgentStep { scenario, reward, .. } => {
                self.scenario(scenario).cumulative_reward += reward;
            }
            Event::StepSkipped { scenario, .. } => {
                self.scenario(scenario).skipped_steps += 1;
            }
            Event::ScenarioFinished {
                scenario,
                episodes,
                final_epsilon,
            } => {
                let s = self.scenario(scenario);
                s.episodes = *episodes;
                s.final_epsilon = *final_epsilon;
                self.report.totals.total_episodes += episodes;
            }
            Event::Warning { message } => self.report.warnings.push(message.clone()),
        }
    }

    pub fn set_timestamps(&mut self, started_at: String, finished_at: String) {
        self.report.metadata.started_at = started_at;
        self.report.metadata.finished_at = finished_at;
    }

    pub fn finish(self) -> TestReport {
        self.report
    }
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let sorted: BTreeMap<String, Value> = map.into_iter().map(|(k, v)| (k, sort_keys(v))).collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Canonical JSON: keys sorted at every level, two-space indent, trailing newline.
pub fn render_structured(report: &TestReport) -> Vec<u8> {
    let v = sort_keys(serde_json::to_value(report).expect("report serializes"));
    let mut out = serde_json::to_vec_pretty(&v).expect("value serializes");
    out.push(b'\n');
    out
}

/// Short human-readable table.
pub fn render_summary(report: &TestReport) -> String {
    let t = &report.totals;
    let mut out = String::new();
    let _ = writeln!(out, "fuzz-the-rest {}", report.metadata.version);
    let _ = writeln!(
        out,
        "total requests: {}  episodes: {}  findings: {}",
        t.total_requests, t.total_episodes, t.total_findings
    );
    if !report.scenarios.is_empty() {
        let width = report.scenarios.iter().map(|s| s.name.len()).max().unwrap_or(8).max(8);
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  top outcomes", "scenario", "requests", "findings");
        for s in &report.scenarios {
            let mut top: Vec<_> = s.status_histogram.iter().collect();
            top.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
            let top: Vec<String> = top.iter().take(3).map(|(k, n)| format!("{k}x{n}")).collect();
            let _ = writeln!(
                out,
                "{:<width$}  {:>8}  {:>8}  {}",
                s.name,
                s.requests_sent,
                s.findings.len(),
                top.join(" ")
            );
        }
    }
    for f in &report.findings {
        let classes: Vec<&str> = f.evidence.iter().map(|c| c.as_str()).collect();
        let _ = writeln!(
            out,
            "  {} {} {} [{}] x{} (first #{})",
            f.fingerprint,
            f.operation_id,
            f.outcome,
            classes.join(","),
            f.count,
            f.first_seen_seq
        );
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
