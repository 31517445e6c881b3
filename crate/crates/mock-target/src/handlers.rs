//! Route handlers. Every response is a pure function of the request; the
//! only side effects are the bug ledger and the branch counter.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use crate::catalog::{BugCatalog, BugId};

pub const DEMO_TOKEN: &str = "ftr-demo-token";
pub const HANG_MS: u64 = 5000;
pub const HANG_THRESHOLD_MS: i64 = 2000;

#[derive(Debug, Clone)]
pub struct AppState {
    pub catalog: Arc<BugCatalog>,
    pub ledger: Arc<Mutex<BTreeSet<BugId>>>,
    pub branches: Arc<Mutex<BTreeSet<&'static str>>>,
}

impl AppState {
    pub fn new(catalog: BugCatalog) -> Self {
        AppState {
            catalog: Arc::new(catalog),
            ledger: Arc::default(),
            branches: Arc::default(),
        }
    }

    fn hit(&self, branch: &'static str) {
        self.branches.lock().expect("branch set").insert(branch);
    }

    /// Records the bug if armed and reports whether it fires.
    fn fire(&self, bug: BugId) -> bool {
        if !self.catalog.armed(bug) {
            return false;
        }
        self.ledger.lock().expect("ledger").insert(bug);
        true
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/ping", get(ping))
        .route("/items/{id}", get(get_item))
        .route("/users", post(post_user))
        .route("/users/{id}", get(get_user))
        .route("/search", get(search))
        .route("/slow", get(slow))
        .route("/profile/{id}", get(profile))
        .route("/_ledger", get(ledger))
        .route("/_coverage", get(coverage))
        .with_state(state)
}

fn error(status: StatusCode, msg: &str) -> Response {
    (status, Json(json!({ "error": msg }))).into_response()
}

fn parse_id(raw: &str) -> Option<i64> {
    raw.parse().ok()
}

async fn ping(State(s): State<AppState>) -> Response {
    s.hit("ping");
    Json(json!({"status": "ok"})).into_response()
}

async fn get_item(State(s): State<AppState>, Path(raw): Path<String>) -> Response {
    let Some(id) = parse_id(&raw) else {
        s.hit("items:bad_id");
        return error(StatusCode::BAD_REQUEST, "id must be an integer");
    };
    if id < 0 && s.fire(BugId::B1) {
        s.hit("items:overflow");
        return (StatusCode::INTERNAL_SERVER_ERROR, Json(json!(format!("overflow at index {id}")))).into_response();
    }
    if !(1..=1000).contains(&id) {
        s.hit("items:missing");
        return error(StatusCode::NOT_FOUND, "no such item");
    }
    s.hit("items:found");
    Json(json!({"id": id, "name": format!("item-{id}")})).into_response()
}

/// FNV-1a; user ids are derived from names so creation is stateless.
fn user_id(name: &str) -> i64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    (h % 1000) as i64 + 1
}

const JAVA_TRACE: &str = "java.lang.IllegalStateException: name buffer overflow\n\
stack trace:\n\
\tat com.example.users.NameBuffer.write(NameBuffer.java:88)\n\
\tat com.example.users.UserService.create(UserService.java:41)\n\
\tat com.example.users.UserController.post(UserController.java:27)";

async fn post_user(State(s): State<AppState>, body: Bytes) -> Response {
    let Ok(Value::Object(obj)) = serde_json::from_slice::<Value>(&body) else {
        s.hit("users:bad_body");
        return error(StatusCode::BAD_REQUEST, "body must be a JSON object");
    };
    let name = obj.get("name").and_then(Value::as_str);
    if let Some(n) = name {
        if n.chars().count() > 256 && s.fire(BugId::B2) {
            s.hit("users:overflow");
            return (
                StatusCode::INTERNAL_SERVER_ERROR,
                Json(json!({"error": "internal error", "detail": JAVA_TRACE})),
            )
                .into_response();
        }
    }
    let Some(name) = name.filter(|n| (1..=64).contains(&n.chars().count())) else {
        s.hit("users:bad_name");
        return error(StatusCode::BAD_REQUEST, "name must be 1-64 characters");
    };
    let Some(email) = obj.get("email").and_then(Value::as_str).filter(|e| e.contains('@')) else {
        s.hit("users:bad_email");
        return error(StatusCode::BAD_REQUEST, "email is invalid");
    };
    s.hit("users:created");
    (
        StatusCode::CREATED,
        Json(json!({"id": user_id(name), "name": name, "email": email})),
    )
        .into_response()
}

async fn get_user(State(s): State<AppState>, Path(raw): Path<String>) -> Response {
    let Some(id) = parse_id(&raw) else {
        s.hit("user:bad_id");
        return error(StatusCode::BAD_REQUEST, "id must be an integer");
    };
    if !(1..=1000).contains(&id) {
        s.hit("user:missing");
        return error(StatusCode::NOT_FOUND, "no such user");
    }
    s.hit("user:found");
    Json(json!({"id": id, "name": format!("user-{id}"), "email": format!("user{id}@example.test")}))
        .into_response()
}

async fn search(State(s): State<AppState>, Query(params): Query<HashMap<String, String>>) -> Response {
    let Some(q) = params.get("q") else {
        s.hit("search:missing_q");
        return error(StatusCode::BAD_REQUEST, "q is required");
    };
    if q.contains('\'') && s.fire(BugId::B3) {
        s.hit("search:sql_error");
        return error(
            StatusCode::INTERNAL_SERVER_ERROR,
            "SQLSTATE[42000]: Syntax error or access violation: 1064 You have an error in your SQL syntax near the search term",
        );
    }
    let len = q.chars().count();
    if !(1..=64).contains(&len) {
        s.hit("search:bad_q");
        return error(StatusCode::BAD_REQUEST, "q must be 1-64 characters");
    }
    s.hit("search:ok");
    let count = len % 3;
    let results: Vec<Value> = (1..=count)
        .map(|i| json!({"id": i, "name": format!("item-{i}")}))
        .collect();
    Json(json!({"count": count, "results": results})).into_response()
}

async fn slow(State(s): State<AppState>, Query(params): Query<HashMap<String, String>>) -> Response {
    let Some(ms) = params.get("ms").and_then(|v| parse_id(v)) else {
        s.hit("slow:bad_ms");
        return error(StatusCode::BAD_REQUEST, "ms must be an integer");
    };
    if ms < 0 {
        s.hit("slow:negative");
        return error(StatusCode::BAD_REQUEST, "ms must not be negative");
    }
    if ms > HANG_THRESHOLD_MS {
        if !s.fire(BugId::B4) {
            s.hit("slow:rejected");
            return error(StatusCode::BAD_REQUEST, "ms too large");
        }
        s.hit("slow:hang");
        tokio::time::sleep(Duration::from_millis(HANG_MS)).await;
        return Json(json!({"slept_ms": HANG_MS})).into_response();
    }
    s.hit("slow:ok");
    tokio::time::sleep(Duration::from_millis(ms as u64)).await;
    Json(json!({"slept_ms": ms})).into_response()
}

async fn profile(State(s): State<AppState>, headers: HeaderMap, Path(raw): Path<String>) -> Response {
    let expected = format!("Bearer {DEMO_TOKEN}");
    if headers.get("authorization").and_then(|v| v.to_str().ok()) != Some(expected.as_str()) {
        s.hit("profile:unauthorized");
        return error(StatusCode::UNAUTHORIZED, "unauthorized");
    }
    let Some(id) = parse_id(&raw) else {
        s.hit("profile:bad_id");
        return error(StatusCode::BAD_REQUEST, "id must be an integer");
    };
    if id > 99_999 && s.fire(BugId::B5) {
        s.hit("profile:legacy");
        return Json(json!({"id": id.to_string(), "name": "legacy-profile"})).into_response();
    }
    if !(1..=99_999).contains(&id) {
        s.hit("profile:missing");
        return error(StatusCode::NOT_FOUND, "no such profile");
    }
    s.hit("profile:found");
    Json(json!({"id": id, "name": format!("profile-{id}")})).into_response()
}

async fn ledger(State(s): State<AppState>) -> Response {
    let ids: Vec<&str> = s.ledger.lock().expect("ledger").iter().map(|b| b.as_str()).collect();
    Json(json!(ids)).into_response()
}

async fn coverage(State(s): State<AppState>) -> Response {
    s.branches.lock().expect("branch set").len().to_string().into_response()
}
