//! Fault detection: evidence classes, fingerprints and novelty tracking.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use regex::bytes::Regex as BytesRegex;
use regex::RegexSet;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::NoveltyFlags;
use crate::forge::MutationOp;
use crate::http::HttpExchange;
use crate::model::{HttpMethod, OperationSpec};
use crate::validate::validate;

const LEAK_PATTERNS: &str = include_str!("../assets/leak_patterns.txt");

/// Bytes of normalized body that enter the fingerprint.
pub const FINGERPRINT_BODY_BYTES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceClass {
    ServerError,
    TimeoutHang,
    SchemaViolation,
    UndeclaredStatus,
    ErrorLeak,
}

impl EvidenceClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EvidenceClass::ServerError => "server_error",
            EvidenceClass::TimeoutHang => "timeout_hang",
            EvidenceClass::SchemaViolation => "schema_violation",
            EvidenceClass::UndeclaredStatus => "undeclared_status",
            EvidenceClass::ErrorLeak => "error_leak",
        }
    }
}

impl fmt::Display for EvidenceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Compiled leak patterns.
#[derive(Debug, Clone)]
pub struct Oracle {
    leaks: RegexSet,
}

impl Default for Oracle {
    fn default() -> Self {
        Self::with_patterns(LEAK_PATTERNS).expect("built-in leak patterns compile")
    }
}

impl Oracle {
    /// One regex per line; blank lines and `#` comments are skipped.
    pub fn with_patterns(text: &str) -> Result<Self, regex::Error> {
        let patterns = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        Ok(Oracle {
            leaks: RegexSet::new(patterns)?,
        })
    }

    pub fn leaks(&self, body: &[u8]) -> bool {
        self.leaks.is_match(&String::from_utf8_lossy(body))
    }

    /// Evidence classes for one exchange, sorted. Empty means no fault.
    ///
    /// `undeclared_status` is reported for non-5xx codes only; an undeclared
    /// 5xx is already `server_error`.
    pub fn classify(&self, exchange: &HttpExchange, op: &OperationSpec) -> Vec<EvidenceClass> {
        let Some(resp) = exchange.response() else {
            return match exchange.transport_error() {
                Some(crate::http::TransportErrorKind::Timeout) => vec![EvidenceClass::TimeoutHang],
                _ => Vec::new(),
            };
        };
        let mut out = BTreeSet::new();
        if resp.status >= 500 {
            out.insert(EvidenceClass::ServerError);
        }
        match op.response_schema_entry(resp.status) {
            None if resp.status < 500 => {
                out.insert(EvidenceClass::UndeclaredStatus);
            }
            Some(Some(schema)) if !resp.truncated => {
                let ok = serde_json::from_slice::<serde_json::Value>(&resp.body)
                    .map_err(|e| e.to_string())
                    .and_then(|v| validate(&v, schema));
                if ok.is_err() {
                    out.insert(EvidenceClass::SchemaViolation);
                }
            }
            _ => {}
        }
        if self.leaks(&resp.body) {
            out.insert(EvidenceClass::ErrorLeak);
        }
        out.into_iter().collect()
    }
}

fn builtin() -> &'static Oracle {
    static ORACLE: OnceLock<Oracle> = OnceLock::new();
    ORACLE.get_or_init(Oracle::default)
}

/// [`Oracle::classify`] with the built-in leak patterns.
pub fn classify(exchange: &HttpExchange, op: &OperationSpec) -> Vec<EvidenceClass> {
    builtin().classify(exchange, op)
}

/// Lowercases, removes UUIDs, hex runs of 8+ and digit runs, then keeps the
/// first 512 bytes.
pub fn normalize_body(body: &[u8]) -> Vec<u8> {
    static RULES: OnceLock<[BytesRegex; 3]> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        [
            BytesRegex::new(r"[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}").unwrap(),
            BytesRegex::new(r"[0-9a-f]{8,}").unwrap(),
            BytesRegex::new(r"[0-9]+").unwrap(),
        ]
    });
    let mut out = body.to_ascii_lowercase();
    for re in rules {
        out = re.replace_all(&out, &b""[..]).into_owned();
    }
    out.truncate(FINGERPRINT_BODY_BYTES);
    out
}

/// SHA-256 over operation, outcome, classes and normalized body, truncated
/// to 128 bits, lowercase hex.
pub fn fingerprint(operation_id: &str, outcome: &str, classes: &[EvidenceClass], body: &[u8]) -> String {
    let mut sorted = classes.to_vec();
    sorted.sort();
    sorted.dedup();
    let names: Vec<&str> = sorted.iter().map(|c| c.as_str()).collect();
    let mut h = Sha256::new();
    h.update(operation_id.as_bytes());
    h.update(b"\n");
    h.update(outcome.as_bytes());
    h.update(b"\n");
    h.update(names.join(",").as_bytes());
    h.update(b"\n");
    h.update(normalize_body(body));
    hex::encode(&h.finalize()[..16])
}

pub fn exchange_fingerprint(exchange: &HttpExchange, op_id: &str, classes: &[EvidenceClass]) -> String {
    let body = exchange.response().map_or(&[][..], |r| &r.body[..]);
    fingerprint(op_id, &exchange.status_key(), classes, body)
}

/// Enough to resend the request by hand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reproducer {
    pub method: HttpMethod,
    pub url: String,
    pub headers: Vec<(String, String)>,
    /// Body as text, invalid UTF-8 replaced; the exact bytes are in `raw_request`.
    pub body: Option<String>,
    /// Base64 of the full HTTP/1.1 request.
    pub raw_request: String,
    pub lineage: Vec<MutationOp>,
}

impl Reproducer {
    pub fn new(exchange: &HttpExchange, lineage: &[MutationOp]) -> Self {
        let r = &exchange.request;
        Reproducer {
            method: r.method,
            url: r.url.clone(),
            headers: r.headers.clone(),
            body: r.body.as_ref().map(|b| String::from_utf8_lossy(b).into_owned()),
            raw_request: STANDARD.encode(r.to_raw()),
            lineage: lineage.to_vec(),
        }
    }

    pub fn raw_bytes(&self) -> Vec<u8> {
        STANDARD.decode(&self.raw_request).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub fingerprint: String,
    pub scenario: String,
    pub operation_id: String,
    pub evidence: Vec<EvidenceClass>,
    /// Status code or transport error name.
    pub outcome: String,
    pub first_seen_seq: u64,
    pub count: u64,
    pub reproducer: Reproducer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub classes: Vec<EvidenceClass>,
    pub novelty: NoveltyFlags,
    pub fingerprint: Option<String>,
    /// Set when this exchange produced a previously unseen fingerprint.
    pub new_finding: Option<Finding>,
}

/// Statuses seen per operation and findings seen per run.
#[derive(Debug, Clone, Default)]
pub struct NoveltyStore {
    statuses: BTreeMap<String, BTreeSet<String>>,
    findings: BTreeMap<String, Finding>,
    order: Vec<String>,
}

impl NoveltyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(
        &mut self,
        exchange: &HttpExchange,
        op_id: &str,
        classes: Vec<EvidenceClass>,
        scenario: &str,
        lineage: &[MutationOp],
    ) -> Observation {
        let new_status = self
            .statuses
            .entry(op_id.to_string())
            .or_default()
            .insert(exchange.status_key());
        if classes.is_empty() {
            return Observation {
                classes,
                novelty: NoveltyFlags {
                    new_failure_fingerprint: false,
                    new_status_for_operation: new_status,
                },
                fingerprint: None,
                new_finding: None,
            };
        }
        let fp = exchange_fingerprint(exchange, op_id, &classes);
        let mut new_finding = None;
        match self.findings.get_mut(&fp) {
            Some(f) => f.count += 1,
            None => {
                let f = Finding {
                    fingerprint: fp.clone(),
                    scenario: scenario.to_string(),
                    operation_id: op_id.to_string(),
                    evidence: classes.clone(),
                    outcome: exchange.status_key(),
                    first_seen_seq: exchange.seq,
                    count: 1,
                    reproducer: Reproducer::new(exchange, lineage),
                };
                self.findings.insert(fp.clone(), f.clone());
                self.order.push(fp.clone());
                new_finding = Some(f);
            }
        }
        Observation {
            classes,
            novelty: NoveltyFlags {
                new_failure_fingerprint: new_finding.is_some(),
                new_status_for_operation: new_status,
            },
            fingerprint: Some(fp),
            new_finding,
        }
    }

    pub fn statuses(&self, op_id: &str) -> Option<&BTreeSet<String>> {
        self.statuses.get(op_id)
    }

    /// Findings in order of first sighting.
    pub fn findings(&self) -> Vec<&Finding> {
        self.order.iter().map(|fp| &self.findings[fp]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{ExchangeOutcome, HttpRequest, HttpResponse, TransportErrorKind};
    use crate::model::SchemaNode;

    fn op() -> OperationSpec {
        let mut responses = BTreeMap::new();
        responses.insert(
            "200".to_string(),
            Some(SchemaNode::object([("id".to_string(), SchemaNode::integer(), true)])),
        );
        responses.insert("404".to_string(), None);
        OperationSpec {
            id: "get_users_id".into(),
            method: HttpMethod::Get,
            path_template: "/users/{id}".into(),
            parameters: vec![],
            request_body: None,
            responses,
        }
    }

    fn ex(seq: u64, status: u16, body: &str) -> HttpExchange {
        HttpExchange {
            seq,
            request: HttpRequest {
                method: HttpMethod::Get,
                url: "http://t/users/1".into(),
                headers: vec![],
                body: None,
            },
            outcome: ExchangeOutcome::Response(HttpResponse {
                status,
                headers: vec![],
                body: body.as_bytes().to_vec(),
                truncated: false,
                latency_ms: 1.0,
            }),
        }
    }

    #[test]
    fn classes() {
        use EvidenceClass::*;
        assert_eq!(classify(&ex(0, 500, "oops"), &op()), vec![ServerError]);
        assert_eq!(classify(&ex(0, 200, r#"{"id":1}"#), &op()), vec![]);
        assert_eq!(classify(&ex(0, 200, r#"{"id":"1"}"#), &op()), vec![SchemaViolation]);
        assert_eq!(classify(&ex(0, 404, "nope"), &op()), vec![]);
        assert_eq!(classify(&ex(0, 418, ""), &op()), vec![UndeclaredStatus]);
        assert_eq!(
            classify(&ex(0, 500, "stack trace:\n\tat a.b.C.d(C.java:1)"), &op()),
            vec![ServerError, ErrorLeak]
        );
        let mut t = ex(0, 200, "");
        t.outcome = ExchangeOutcome::TransportError(TransportErrorKind::Timeout);
        assert_eq!(classify(&t, &op()), vec![TimeoutHang]);
        t.outcome = ExchangeOutcome::TransportError(TransportErrorKind::ConnectionRefused);
        assert_eq!(classify(&t, &op()), vec![]);
    }

    #[test]
    fn path_leaks_need_source_files() {
        let o = Oracle::default();
        assert!(o.leaks(b"error in /app/src/handlers/users.py line 3"));
        assert!(!o.leaks(b"../../../../etc/passwd"));
        assert!(!o.leaks(b"{\"id\": 42, \"name\": \"alice\"}"));
    }

    #[test]
    fn normalization_strips_volatile_parts() {
        assert_eq!(
            normalize_body(b"Error 42 at 0xDEADBEEF12 req 123e4567-e89b-12d3-a456-426614174000"),
            b"error  at x req ".to_vec()
        );
        assert_eq!(normalize_body(&[b'z'; 600]).len(), 512);
    }

    #[test]
    fn volatile_bodies_share_fingerprint() {
        let c = [EvidenceClass::ServerError];
        assert_eq!(
            fingerprint("op", "500", &c, b"overflow at index -5"),
            fingerprint("op", "500", &c, b"overflow at index -77")
        );
        assert_ne!(fingerprint("op", "500", &c, b"a"), fingerprint("op2", "500", &c, b"a"));
        assert_eq!(fingerprint("op", "500", &c, b"").len(), 32);
    }

    #[test]
    fn novelty_once_per_fingerprint() {
        let mut store = NoveltyStore::new();
        let o = store.observe(&ex(0, 500, "boom 1"), "op", vec![EvidenceClass::ServerError], "s", &[]);
        assert!(o.novelty.new_failure_fingerprint && o.novelty.new_status_for_operation);
        assert!(o.new_finding.is_some());
        let o = store.observe(&ex(1, 500, "boom 2"), "op", vec![EvidenceClass::ServerError], "s", &[]);
        assert!(!o.novelty.new_failure_fingerprint && !o.novelty.new_status_for_operation);
        assert_eq!(store.findings()[0].count, 2);
        assert_eq!(store.findings()[0].first_seen_seq, 0);
        let o = store.observe(&ex(2, 404, ""), "op", vec![], "s", &[]);
        assert!(o.novelty.new_status_for_operation && o.fingerprint.is_none());
    }

    #[test]
    fn reproducer_keeps_raw_bytes() {
        let mut e = ex(0, 500, "");
        e.request.body = Some(vec![0xff, b'{']);
        let r = Reproducer::new(&e, &[MutationOp::ByteFlip]);
        assert!(r.raw_bytes().ends_with(&[0xff, b'{']));
        assert_eq!(r.lineage, vec![MutationOp::ByteFlip]);
    }
}
