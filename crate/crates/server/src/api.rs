use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fibench_core::harness::{
    evaluate_submission, render_report, validate_submission, ErrorCode, HarnessError, Payload,
    ReportFormat, SubmissionMeta,
};
use fibench_core::Tier;
use serde::Deserialize;
use serde_json::json;

use crate::leaderboard::{build_leaderboard, Leaderboard, SortKey};
use crate::store::State as RecordState;
use crate::AppState;

type Shared = Arc<AppState>;

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    let body = json!({
        "schema_version": 1,
        "error": { "code": code, "message": message.into() },
    });
    (status, Json(body)).into_response()
}

fn harness_error(e: HarnessError) -> Response {
    match e.code() {
        Some(code) => {
            let status = match code {
                ErrorCode::PayloadTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
                ErrorCode::MalformedArchive => StatusCode::BAD_REQUEST,
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            };
            let message = match &e {
                HarnessError::Validation { message, .. } => message.clone(),
                other => other.to_string(),
            };
            error(status, code.as_str(), message)
        }
        None => error(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()),
    }
}

fn text(body: String) -> Response {
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body).into_response()
}

pub fn router(state: Shared) -> Router {
    let limit = usize::try_from(state.config.max_archive_bytes)
        .unwrap_or(usize::MAX)
        .saturating_add(1 << 20);
    Router::new()
        .route("/api/v1/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/api/v1/submissions", post(submit))
        .route("/api/v1/submissions/{id}", get(status))
        .route("/api/v1/submissions/{id}/latex", get(record_latex))
        .route("/api/v1/submissions/{id}/report", get(record_report))
        .route("/api/v1/leaderboard", get(leaderboard))
        .route("/api/v1/leaderboard/latex", get(leaderboard_latex))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

async fn submit(State(state): State<Shared>, mut multipart: Multipart) -> Response {
    let mut archive = None;
    let mut metadata = None;
    loop {
        let field = match multipart.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) if e.status() == StatusCode::PAYLOAD_TOO_LARGE => {
                return error(StatusCode::PAYLOAD_TOO_LARGE, "PAYLOAD_TOO_LARGE", e.body_text())
            }
            Err(e) => return error(StatusCode::BAD_REQUEST, "MALFORMED_ARCHIVE", e.body_text()),
        };
        let name = field.name().unwrap_or("").to_string();
        let bytes = match field.bytes().await {
            Ok(b) => b,
            Err(e) if e.status() == StatusCode::PAYLOAD_TOO_LARGE => {
                return error(StatusCode::PAYLOAD_TOO_LARGE, "PAYLOAD_TOO_LARGE", e.body_text())
            }
            Err(e) => return error(StatusCode::BAD_REQUEST, "MALFORMED_ARCHIVE", e.body_text()),
        };
        match name.as_str() {
            "archive" => archive = Some(bytes),
            "metadata" => metadata = Some(bytes),
            other => log::debug!("ignoring multipart field {other:?}"),
        }
    }
    let Some(archive) = archive else {
        return error(StatusCode::BAD_REQUEST, "MALFORMED_ARCHIVE", "missing multipart field \"archive\"");
    };
    if archive.len() as u64 > state.config.max_archive_bytes {
        return error(
            StatusCode::PAYLOAD_TOO_LARGE,
            "PAYLOAD_TOO_LARGE",
            format!("archive exceeds {} bytes", state.config.max_archive_bytes),
        );
    }
    let st = Arc::clone(&state);
    let outcome = tokio::task::spawn_blocking(move || -> Result<(crate::SubmissionRecord, bool), Response> {
        let mut payload =
            Payload::from_zip(&archive, st.config.max_archive_bytes).map_err(harness_error)?;
        if let Some(meta) = metadata {
            payload.set_metadata(SubmissionMeta::parse(&meta).map_err(harness_error)?);
        }
        let sub = validate_submission(payload, &st.index, &st.plan).map_err(harness_error)?;
        if let Some(existing) = st.store.get(&sub.digest) {
            return Ok((existing, false));
        }
        let internal = |e: std::io::Error| error(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string());
        let blob = st.store.put_blob(&archive).map_err(internal)?;
        let meta = SubmissionMeta::new(sub.method.clone(), sub.ensembling);
        st.store
            .insert_queued(&sub.digest, &meta, &blob, sub.warnings.clone())
            .map_err(internal)
    })
    .await;
    match outcome {
        Ok(Ok((record, created))) => {
            if created {
                state.enqueue(&record.id);
            }
            let status = if created { StatusCode::CREATED } else { StatusCode::OK };
            (status, Json(record)).into_response()
        }
        Ok(Err(resp)) => resp,
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()),
    }
}

async fn status(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    match state.store.get(&id) {
        Some(r) => Json(r).into_response(),
        None => error(StatusCode::NOT_FOUND, "NOT_FOUND", format!("no submission {id}")),
    }
}

async fn record_latex(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    match state.store.get(&id) {
        None => error(StatusCode::NOT_FOUND, "NOT_FOUND", format!("no submission {id}")),
        Some(r) => match (&r.state, r.report) {
            (RecordState::Done, Some(report)) => text(render_report(&[report], ReportFormat::Latex)),
            (s, _) => error(
                StatusCode::CONFLICT,
                "CONFLICT",
                format!("submission {id} is {s:?}, not done").to_lowercase(),
            ),
        },
    }
}

async fn record_report(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    match state.store.get(&id) {
        None => error(StatusCode::NOT_FOUND, "NOT_FOUND", format!("no submission {id}")),
        Some(r) if r.state != RecordState::Done => error(
            StatusCode::CONFLICT,
            "CONFLICT",
            format!("submission {id} is {:?}, not done", r.state).to_lowercase(),
        ),
        Some(_) => match state.store.report_bytes(&id) {
            Ok(bytes) => ([(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
            Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()),
        },
    }
}

#[derive(Debug, Deserialize)]
struct BoardQuery {
    tier: Option<String>,
    sort: Option<String>,
}

fn board(state: &AppState, q: &BoardQuery) -> Result<Leaderboard, Response> {
    let tier = match &q.tier {
        Some(t) => t
            .parse::<Tier>()
            .map_err(|e| error(StatusCode::BAD_REQUEST, "BAD_QUERY", e))?,
        None => state.config.leaderboard_tier,
    };
    let sort = match &q.sort {
        Some(s) => s
            .parse::<SortKey>()
            .map_err(|e| error(StatusCode::BAD_REQUEST, "BAD_QUERY", e))?,
        None => SortKey::Single,
    };
    Ok(build_leaderboard(&state.store.all(), tier, sort))
}

async fn leaderboard(State(state): State<Shared>, Query(q): Query<BoardQuery>) -> Response {
    match board(&state, &q) {
        Ok(b) => Json(b).into_response(),
        Err(r) => r,
    }
}

async fn leaderboard_latex(State(state): State<Shared>, Query(q): Query<BoardQuery>) -> Response {
    let b = match board(&state, &q) {
        Ok(b) => b,
        Err(r) => return r,
    };
    let reports: Vec<_> = b
        .sections
        .iter()
        .flat_map(|s| &s.entries)
        .filter_map(|e| state.store.get(&e.id)?.report)
        .collect();
    text(render_report(&reports, ReportFormat::Latex))
}

/// Runs one queued submission to completion, recording the outcome.
pub(crate) fn evaluate_record(state: &AppState, id: &str) {
    let Some(record) = state.store.get(id) else {
        log::error!("queued id {id} has no record");
        return;
    };
    if record.state != RecordState::Queued {
        return;
    }
    if let Err(e) = state.store.set_running(id) {
        log::error!("cannot log start of {id}: {e}");
        return;
    }
    let result = (|| -> Result<_, String> {
        let bytes = state.store.blob(&record.blob).map_err(|e| e.to_string())?;
        let mut payload =
            Payload::from_zip(&bytes, state.config.max_archive_bytes).map_err(|e| e.to_string())?;
        payload.set_metadata(SubmissionMeta::new(record.method.clone(), record.ensembling));
        let sub = validate_submission(payload, &state.index, &state.plan).map_err(|e| e.to_string())?;
        evaluate_submission(&sub, &state.index).map_err(|e| e.to_string())
    })();
    let logged = match result {
        Ok(report) => state.store.set_done(id, report),
        Err(diag) => {
            log::warn!("evaluation of {id} failed: {diag}");
            state.store.set_failed(id, diag)
        }
    };
    if let Err(e) = logged {
        log::error!("cannot record outcome of {id}: {e}");
    }
}
