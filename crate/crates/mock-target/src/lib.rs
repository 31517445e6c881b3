//! A small REST service with five deliberately planted bugs, used to check
//! that the fuzzer finds what it should.
//!
//! | id | trigger | manifestation |
//! |----|---------|---------------|
//! | B1 | `GET /items/{id}`, id < 0 | 500 `"overflow at index <id>"` |
//! | B2 | `POST /users`, name > 256 chars | 500 with a Java stack trace |
//! | B3 | `GET /search`, `'` in q | 500 with an SQL error |
//! | B4 | `GET /slow`, ms > 2000 | hangs 5000 ms |
//! | B5 | `GET /profile/{id}`, id > 99999 | 200 with a string id |
//!
//! `GET /_ledger` lists triggered bug ids; `GET /_coverage` returns the
//! number of distinct handler branches taken so far.

mod catalog;
mod handlers;

use std::collections::BTreeSet;
use std::future::Future;
use std::net::SocketAddr;
use std::thread::JoinHandle;

use tokio::sync::oneshot;

pub use catalog::{BugCatalog, BugId, Manifestation};
pub use handlers::{router, AppState, DEMO_TOKEN, HANG_MS, HANG_THRESHOLD_MS};

pub const OPENAPI_SPEC: &str = include_str!("../assets/openapi.yaml");
pub const SCENARIOS: &str = include_str!("../assets/scenarios.yaml");

/// The OpenAPI document with its server entry pointed at `base_url`.
pub fn openapi_for(base_url: &str) -> String {
    OPENAPI_SPEC.replacen("http://127.0.0.1:8080", base_url.trim_end_matches('/'), 1)
}

#[derive(Debug, thiserror::Error)]
pub enum BindError {
    #[error("cannot bind port {port}: {source}")]
    Bind {
        port: u16,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot start runtime: {0}")]
    Runtime(#[source] std::io::Error),
}

/// Serves until `shutdown` resolves.
pub async fn serve<F>(listener: tokio::net::TcpListener, state: AppState, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Binds `127.0.0.1:port` and serves until Ctrl-C.
pub fn run_until_interrupted(port: u16, catalog: BugCatalog, on_ready: impl FnOnce(SocketAddr)) -> Result<(), BindError> {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(BindError::Runtime)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
            .await
            .map_err(|source| BindError::Bind { port, source })?;
        on_ready(listener.local_addr().map_err(BindError::Runtime)?);
        serve(listener, AppState::new(catalog), async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(BindError::Runtime)
    })
}

/// A server running on a background thread; stops when dropped.
pub struct MockServer {
    addr: SocketAddr,
    state: AppState,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Port 0 picks a free port.
    pub fn start(port: u16, catalog: BugCatalog) -> Result<MockServer, BindError> {
        let std_listener = std::net::TcpListener::bind(("127.0.0.1", port))
            .map_err(|source| BindError::Bind { port, source })?;
        std_listener.set_nonblocking(true).map_err(BindError::Runtime)?;
        let addr = std_listener.local_addr().map_err(BindError::Runtime)?;
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .map_err(BindError::Runtime)?;
        let state = AppState::new(catalog);
        let (tx, rx) = oneshot::channel();
        let served = state.clone();
        let thread = std::thread::Builder::new()
            .name(format!("ftr-mock-{}", addr.port()))
            .spawn(move || {
                rt.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
                    let _ = serve(listener, served, async {
                        let _ = rx.await;
                    })
                    .await;
                });
            })
            .map_err(BindError::Runtime)?;
        Ok(MockServer {
            addr,
            state,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Bugs triggered so far.
    pub fn ledger(&self) -> BTreeSet<BugId> {
        self.state.ledger.lock().expect("ledger").clone()
    }

    pub fn coverage(&self) -> usize {
        self.state.branches.lock().expect("branch set").len()
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop();
    }
}
