//! Request construction and dispatch.

use std::io::Read;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use percent_encoding::{percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use url::Url;

use crate::error::BuildError;
use crate::model::{OperationSpec, ParamLocation, WHOLE_BODY_PARAM};
use crate::scenario::ConcreteParams;
use crate::value::FuzzValue;

pub use crate::extract::{extract_path, ResponsePath};

/// Response bodies beyond this many bytes are cut and flagged.
pub const MAX_BODY_BYTES: usize = 64 * 1024;
pub const DEFAULT_TIMEOUT_MS: u64 = 2000;

/// Everything except RFC 3986 unreserved characters gets escaped.
const COMPONENT: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRequest {
    pub method: crate::model::HttpMethod,
    pub url: String,
    pub headers: Vec<(String, String)>,
    #[serde(default, with = "b64_opt")]
    pub body: Option<Vec<u8>>,
}

impl HttpRequest {
    /// HTTP/1.1 wire rendering, used for reproducers.
    pub fn to_raw(&self) -> Vec<u8> {
        let (target, host) = match Url::parse(&self.url) {
            Ok(u) => {
                let mut t = u.path().to_string();
                if let Some(q) = u.query() {
                    t.push('?');
                    t.push_str(q);
                }
                let host = match (u.host_str(), u.port()) {
                    (Some(h), Some(p)) => format!("{h}:{p}"),
                    (Some(h), None) => h.to_string(),
                    _ => String::new(),
                };
                (t, host)
            }
            Err(_) => (self.url.clone(), String::new()),
        };
        let mut out = format!("{} {} HTTP/1.1\r\nHost: {}\r\n", self.method, target, host).into_bytes();
        for (k, v) in &self.headers {
            out.extend_from_slice(format!("{k}: {v}\r\n").as_bytes());
        }
        if let Some(body) = &self.body {
            out.extend_from_slice(format!("Content-Length: {}\r\n\r\n", body.len()).as_bytes());
            out.extend_from_slice(body);
        } else {
            out.extend_from_slice(b"\r\n");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    #[serde(with = "b64")]
    pub body: Vec<u8>,
    pub truncated: bool,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportErrorKind {
    Timeout,
    ConnectionRefused,
    ProtocolError,
}

impl TransportErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransportErrorKind::Timeout => "timeout",
            TransportErrorKind::ConnectionRefused => "connection_refused",
            TransportErrorKind::ProtocolError => "protocol_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeOutcome {
    Response(HttpResponse),
    TransportError(TransportErrorKind),
}

/// One request and what came back. Exactly one of response / transport
/// error, by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpExchange {
    pub seq: u64,
    pub request: HttpRequest,
    pub outcome: ExchangeOutcome,
}

impl HttpExchange {
    pub fn response(&self) -> Option<&HttpResponse> {
        match &self.outcome {
            ExchangeOutcome::Response(r) => Some(r),
            ExchangeOutcome::TransportError(_) => None,
        }
    }

    pub fn status(&self) -> Option<u16> {
        self.response().map(|r| r.status)
    }

    pub fn transport_error(&self) -> Option<TransportErrorKind> {
        match self.outcome {
            ExchangeOutcome::TransportError(k) => Some(k),
            ExchangeOutcome::Response(_) => None,
        }
    }

    /// Status code as text, or the transport error name.
    pub fn status_key(&self) -> String {
        match &self.outcome {
            ExchangeOutcome::Response(r) => r.status.to_string(),
            ExchangeOutcome::TransportError(k) => k.as_str().to_string(),
        }
    }
}

fn encode(bytes: &[u8]) -> String {
    percent_encode(bytes, COMPONENT).to_string()
}

/// Assembles the request for `op`. Header order is fixed: authorization,
/// content type, then custom headers sorted by name.
pub fn build_request(
    op: &OperationSpec,
    params: &ConcreteParams,
    base_url: &Url,
    bearer_token: Option<&str>,
    extra_headers: &[(String, String)],
) -> Result<HttpRequest, BuildError> {
    let mut path = String::new();
    let mut rest = op.path_template.as_str();
    while let Some(open) = rest.find('{') {
        let close = rest[open..]
            .find('}')
            .map(|c| open + c)
            .ok_or_else(|| BuildError::Url(format!("unbalanced template `{}`", op.path_template)))?;
        path.push_str(&rest[..open]);
        let name = &rest[open + 1..close];
        let value = op
            .parameters
            .iter()
            .enumerate()
            .find(|(_, p)| p.location == ParamLocation::Path && p.name == name)
            .and_then(|(i, _)| params.values.get(&op.param_key(i)))
            .ok_or_else(|| BuildError::MissingPathParameter(name.to_string()))?;
        path.push_str(&encode(&value.to_param_bytes()));
        rest = &rest[close + 1..];
    }
    path.push_str(rest);

    let mut query = Vec::new();
    let mut custom = extra_headers.to_vec();
    let mut fields = Vec::new();
    let mut whole_body = None;
    for (i, p) in op.parameters.iter().enumerate() {
        let key = op.param_key(i);
        let Some(value) = params.values.get(&key) else {
            continue;
        };
        let times = if params.duplicated.contains(&key) { 2 } else { 1 };
        for _ in 0..times {
            match p.location {
                ParamLocation::Path => {}
                ParamLocation::Query => query.push(format!(
                    "{}={}",
                    encode(p.name.as_bytes()),
                    encode(&value.to_param_bytes())
                )),
                ParamLocation::Header => custom.push((
                    p.name.clone(),
                    String::from_utf8_lossy(&value.to_param_bytes()).into_owned(),
                )),
                ParamLocation::BodyField if p.name == WHOLE_BODY_PARAM => whole_body = Some(value),
                ParamLocation::BodyField => fields.push((p.name.clone(), value.clone())),
            }
        }
    }

    let base = base_url.as_str().trim_end_matches('/');
    let mut url = format!("{base}{path}");
    if !query.is_empty() {
        url.push('?');
        url.push_str(&query.join("&"));
    }
    Url::parse(&url).map_err(|e| BuildError::Url(format!("{url}: {e}")))?;

    let body = if let Some(v) = whole_body {
        Some(v.to_json_bytes())
    } else if op.request_body.is_some() {
        Some(FuzzValue::Object(fields).to_json_bytes())
    } else {
        None
    };

    let mut headers = Vec::new();
    if let Some(token) = bearer_token {
        headers.push(("Authorization".to_string(), format!("Bearer {token}")));
    }
    if body.is_some() {
        headers.push(("Content-Type".to_string(), "application/json".to_string()));
    }
    custom.sort_by(|a, b| a.0.cmp(&b.0));
    headers.extend(custom);

    Ok(HttpRequest {
        method: op.method,
        url,
        headers,
        body,
    })
}

/// Something that can carry a request to the target.
pub trait Transport: Send + Sync {
    fn send(&self, request: &HttpRequest, timeout: Duration) -> Result<HttpResponse, TransportErrorKind>;
}

/// Blocking reqwest client: no redirects, optional certificate checks.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(insecure: bool) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .tls_danger_accept_invalid_certs(insecure)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(ReqwestTransport { client })
    }
}

fn classify_reqwest(e: &reqwest::Error) -> TransportErrorKind {
    if e.is_timeout() {
        TransportErrorKind::Timeout
    } else if e.is_connect() {
        TransportErrorKind::ConnectionRefused
    } else {
        TransportErrorKind::ProtocolError
    }
}

impl Transport for ReqwestTransport {
    fn send(&self, request: &HttpRequest, timeout: Duration) -> Result<HttpResponse, TransportErrorKind> {
        let method = reqwest::Method::from_bytes(request.method.as_str().as_bytes())
            .map_err(|_| TransportErrorKind::ProtocolError)?;
        let mut builder = self.client.request(method, &request.url).timeout(timeout);
        for (k, v) in &request.headers {
            builder = builder.header(k.as_str(), v.as_str());
        }
        if let Some(body) = &request.body {
            builder = builder.body(body.clone());
        }
        let req = builder.build().map_err(|_| TransportErrorKind::ProtocolError)?;

        let started = Instant::now();
        let mut resp = self.client.execute(req).map_err(|e| classify_reqwest(&e))?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .map(|(k, v)| (k.as_str().to_string(), String::from_utf8_lossy(v.as_bytes()).into_owned()))
            .collect();
        let mut body = Vec::new();
        (&mut resp)
            .take(MAX_BODY_BYTES as u64 + 1)
            .read_to_end(&mut body)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::TimedOut => TransportErrorKind::Timeout,
                _ => TransportErrorKind::ProtocolError,
            })?;
        let truncated = body.len() > MAX_BODY_BYTES;
        body.truncate(MAX_BODY_BYTES);
        Ok(HttpResponse {
            status,
            headers,
            body,
            truncated,
            latency_ms: started.elapsed().as_secs_f64() * 1000.0,
        })
    }
}

/// Spaces dispatches at least `1/rate` seconds apart, so any one-second
/// window holds at most `rate + 1` requests.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(rate_per_sec: Option<f64>) -> Self {
        RateLimiter {
            interval: rate_per_sec
                .filter(|r| *r > 0.0)
                .map(|r| Duration::from_secs_f64(1.0 / r)),
            last: Mutex::new(None),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(None)
    }

    /// Blocks until the next dispatch is allowed and claims the slot.
    pub fn acquire(&self) -> Instant {
        let mut last = self.last.lock().expect("rate limiter poisoned");
        let mut now = Instant::now();
        if let (Some(interval), Some(prev)) = (self.interval, *last) {
            let ready = prev + interval;
            if ready > now {
                thread::sleep(ready - now);
                now = Instant::now().max(ready);
            }
        }
        *last = Some(now);
        now
    }
}

/// Sends requests through a [`Transport`], numbering exchanges with a
/// gap-free sequence and honoring the rate limit.
pub struct Executor {
    transport: Box<dyn Transport>,
    timeout: Duration,
    limiter: RateLimiter,
    next_seq: u64,
}

impl Executor {
    pub fn new(transport: Box<dyn Transport>, timeout: Duration, limiter: RateLimiter) -> Self {
        Executor {
            transport,
            timeout,
            limiter,
            next_seq: 0,
        }
    }

    pub fn execute(&mut self, request: HttpRequest) -> HttpExchange {
        self.limiter.acquire();
        let outcome = match self.transport.send(&request, self.timeout) {
            Ok(r) => ExchangeOutcome::Response(r),
            Err(k) => ExchangeOutcome::TransportError(k),
        };
        let seq = self.next_seq;
        self.next_seq += 1;
        HttpExchange { seq, request, outcome }
    }

    /// Sends without consuming a sequence number; used for the reachability probe.
    pub fn probe(&self, request: &HttpRequest) -> Result<HttpResponse, TransportErrorKind> {
        self.transport.send(request, self.timeout)
    }

    pub fn requests_sent(&self) -> u64 {
        self.next_seq
    }
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

mod b64_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match bytes {
            Some(b) => super::b64::serialize(b, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        use base64::Engine;
        let s = Option::<String>::deserialize(d)?;
        s.map(|s| base64::engine::general_purpose::STANDARD.decode(s))
            .transpose()
            .map_err(serde::de::Error::custom)
    }
}
