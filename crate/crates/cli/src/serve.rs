//! HTTP surface: every endpoint maps 1:1 onto a module operation, with the
//! same feature gates as the CLI. Disabled features answer 404 with a
//! machine-readable `FeatureDisabled` code.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

use bigsur_core::federation::{Selection, Transport};
use bigsur_core::model::{EntityId, Record, RecordKind};
use bigsur_core::scheduler::{ControlCommand, InputSpec, ReportOutcome};
use bigsur_core::{Error, Result};

use crate::app::{job_json, App};

/// Bundle delivery over HTTP: POST the bundle text to `{endpoint}/bundles`.
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn push(&self, endpoint: &str, bundle: &str) -> Result<()> {
        let url = format!("{}/bundles", endpoint.trim_end_matches('/'));
        let response = ureq::post(&url)
            .content_type("application/x-bigsur-bundle")
            .send(bundle)
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        if response.status().is_success() {
            Ok(())
        } else {
            Err(Error::Io(std::io::Error::other(format!(
                "push to {url} answered {}",
                response.status()
            ))))
        }
    }
}

pub struct ServiceHandle {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Signal shutdown and wait for the server thread.
    pub fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }

    /// Block until the server exits (it only exits on shutdown).
    pub fn join(mut self) {
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

/// Bind `listen` and serve the API on a background thread.
pub fn serve_background(app: Arc<App>, listen: &str) -> Result<ServiceHandle> {
    let listener =
        std::net::TcpListener::bind(listen).map_err(|e| Error::BindFailure(e.to_string()))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| Error::BindFailure(e.to_string()))?;
    let addr = listener
        .local_addr()
        .map_err(|e| Error::BindFailure(e.to_string()))?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .expect("tokio runtime");
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            axum::serve(listener, router(app))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
                .expect("server");
        });
    });
    Ok(ServiceHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/records", post(post_record))
        .route("/records/{kind}/{site}/{local}", get(get_record))
        .route("/query", get(get_query))
        .route("/objects/{site}/{local}/lineage", get(get_lineage))
        .route("/objects/{site}/{local}/report", get(get_report))
        .route("/jobs", post(post_job))
        .route("/jobs/claim", post(post_claim))
        .route("/jobs/{site}/{local}/report", post(post_job_report))
        .route("/controls", post(post_control))
        .route("/status", get(get_status))
        .route("/bundles", post(post_bundle).get(get_bundle))
        .with_state(app)
}

fn error_response(e: &Error) -> Response {
    let status = match e.code() {
        "NotFound" | "FeatureDisabled" => StatusCode::NOT_FOUND,
        "StaleRevision" | "Duplicate" | "DuplicateType" => StatusCode::CONFLICT,
        _ => StatusCode::BAD_REQUEST,
    };
    (
        status,
        Json(serde_json::json!({"error": e.code(), "message": e.to_string()})),
    )
        .into_response()
}

fn json_ok(value: serde_json::Value) -> Response {
    (StatusCode::OK, Json(value)).into_response()
}

fn text_ok(text: String) -> Response {
    (
        StatusCode::OK,
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
        text,
    )
        .into_response()
}

fn entity(site: &str, local: &str) -> Result<EntityId> {
    EntityId::new(site, local)
}

async fn post_record(
    State(app): State<Arc<App>>,
    Json(value): Json<serde_json::Value>,
) -> Response {
    let run = || -> Result<Response> {
        let kind_token = value
            .get("kind")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::MalformedBundle("missing kind".to_string()))?;
        let kind = RecordKind::parse(kind_token)?;
        let body = value
            .get("body")
            .cloned()
            .ok_or_else(|| Error::MalformedBundle("missing body".to_string()))?;
        let record = Record::from_body_value(kind, body)?;
        let record = app.catalog()?.register_record(record)?;
        let stored = app.store.get(kind, record.id(), None)?;
        Ok(json_ok(serde_json::json!({
            "id": record.id().to_string(),
            "kind": kind.as_str(),
            "rev": stored.revision.rev,
        })))
    };
    run().unwrap_or_else(|e| error_response(&e))
}

async fn get_record(
    State(app): State<Arc<App>>,
    Path((kind, site, local)): Path<(String, String, String)>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let run = || -> Result<Response> {
        app.require(crate::config::Feature::Catalog)?;
        let kind = RecordKind::parse(&kind)?;
        let id = entity(&site, &local)?;
        let rev = params.get("rev").map(|r| r.parse::<u64>()).transpose().map_err(|_| {
            Error::InvalidConfig("rev must be an integer".to_string())
        })?;
        let stored = app.store.get(kind, &id, rev)?;
        Ok(json_ok(serde_json::json!({
            "body": serde_json::from_str::<serde_json::Value>(&stored.body).expect("canonical"),
            "id": stored.id.to_string(),
            "kind": stored.kind.as_str(),
            "rev": stored.revision.rev,
            "superseded": stored.superseded,
        })))
    };
    run().unwrap_or_else(|e| error_response(&e))
}

async fn get_query(
    State(app): State<Arc<App>>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let run = || -> Result<Response> {
        let cql = params
            .get("cql")
            .ok_or_else(|| Error::InvalidConfig("missing cql parameter".to_string()))?;
        Ok(text_ok(app.eval_query(cql)?.to_text()))
    };
    run().unwrap_or_else(|e| error_response(&e))
}

async fn get_lineage(
    State(app): State<Arc<App>>,
    Path((site, local)): Path<(String, String)>,
) -> Response {
    let run = || -> Result<Response> {
        let id = entity(&site, &local)?;
        Ok(json_ok(app.lineage_graph(&id)?))
    };
    run().unwrap_or_else(|e| error_response(&e))
}

async fn get_report(
    State(app): State<Arc<App>>,
    Path((site, local)): Path<(String, String)>,
) -> Response {
    let run = || -> Result<Response> {
        let id = entity(&site, &local)?;
        Ok(text_ok(app.lineage_report(&id)?))
    };
    run().unwrap_or_else(|e| error_response(&e))
}

async fn post_job(State(app): State<Arc<App>>, Json(value): Json<serde_json::Value>) -> Response {
    let run = || -> Result<Response> {
        let scheduler = app.scheduler()?;
        let function = value
            .get("function")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::InvalidConfig("missing function".to_string()))?;
        let inputs = value
            .get("inputs")
            .and_then(|v| v.as_array())
            .map(|a| {
                a.iter()
                    .filter_map(|v| v.as_str())
                    .map(InputSpec::decode)
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?
            .unwrap_or_default();
        let params = value
            .get("params")
            .map(|v| serde_json::from_value(v.clone()))
            .transpose()
            .map_err(|e| Error::InvalidConfig(format!("bad params: {e}")))?
            .unwrap_or_default();
        let priority = value.get("priority").and_then(|v| v.as_i64()).unwrap_or(0);
        let constraints = value
            .get("constraints")
            .map(|v| serde_json::from_value(v.clone()))
            .transpose()
            .map_err(|e| Error::InvalidConfig(format!("bad constraints: {e}")))?
            .unwrap_or_default();
        let job = scheduler.submit(function, inputs, params, priority, constraints)?;
        Ok(json_ok(job_json(&job)))
    };
    run().unwrap_or_else(|e| error_response(&e))
}

async fn post_claim(State(app): State<Arc<App>>, Json(value): Json<serde_json::Value>) -> Response {
    let run = || -> Result<Response> {
        let scheduler = app.scheduler()?;
        let host = value
            .get("host")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::InvalidConfig("missing host".to_string()))?;
        let claimed = scheduler.claim(host)?;
        Ok(json_ok(serde_json::json!({
            "job": claimed.map(|j| job_json(&j)),
        })))
    };
    run().unwrap_or_else(|e| error_response(&e))
}

async fn post_job_report(
    State(app): State<Arc<App>>,
    Path((site, local)): Path<(String, String)>,
    Json(value): Json<serde_json::Value>,
) -> Response {
    let run = || -> Result<Response> {
        let scheduler = app.scheduler()?;
        let id = entity(&site, &local)?;
        let host = value
            .get("host")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::InvalidConfig("missing host".to_string()))?;
        let outcome = match value.get("outcome").and_then(|v| v.as_str()) {
            Some("started") => ReportOutcome::Started,
            Some("succeeded") => ReportOutcome::Succeeded,
            Some("failed") => ReportOutcome::Failed,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "outcome must be started/succeeded/failed, got {other:?}"
                )))
            }
        };
        let outputs = value
            .get("outputs")
            .map(|v| serde_json::from_value(v.clone()))
            .transpose()
            .map_err(|e| Error::InvalidConfig(format!("bad outputs: {e}")))?
            .unwrap_or_default();
        let job = scheduler.report(&id, host, outcome, outputs)?;
        Ok(json_ok(job_json(&job)))
    };
    run().unwrap_or_else(|e| error_response(&e))
}

async fn post_control(
    State(app): State<Arc<App>>,
    Json(value): Json<serde_json::Value>,
) -> Response {
    let run = || -> Result<Response> {
        let scheduler = app.scheduler()?;
        let command: ControlCommand = serde_json::from_value(value)
            .map_err(|e| Error::InvalidConfig(format!("bad control command: {e}")))?;
        let controls = scheduler.control(command)?;
        Ok(json_ok(serde_json::to_value(&controls).expect("serializes")))
    };
    run().unwrap_or_else(|e| error_response(&e))
}

async fn get_status(State(app): State<Arc<App>>) -> Response {
    let run = || -> Result<Response> {
        let scheduler = app.scheduler()?;
        Ok(json_ok(
            serde_json::to_value(scheduler.status()).expect("serializes"),
        ))
    };
    run().unwrap_or_else(|e| error_response(&e))
}

async fn post_bundle(State(app): State<Arc<App>>, body: String) -> Response {
    let run = || -> Result<Response> {
        let federation = app.federation()?;
        let report = federation.import_bundle(&body)?;
        Ok(json_ok(serde_json::to_value(&report).expect("serializes")))
    };
    run().unwrap_or_else(|e| error_response(&e))
}

async fn get_bundle(
    State(app): State<Arc<App>>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let run = || -> Result<Response> {
        let federation = app.federation()?;
        let selection = if let Some(since) = params.get("since") {
            Selection::SinceCursor(since.parse::<u64>().map_err(|_| {
                Error::InvalidConfig("since must be an integer".to_string())
            })?)
        } else if let Some(kind) = params.get("kind") {
            Selection::ByKind(RecordKind::parse(kind)?)
        } else {
            Selection::All
        };
        Ok(text_ok(federation.export_bundle(&selection).text))
    };
    run().unwrap_or_else(|e| error_response(&e))
}
