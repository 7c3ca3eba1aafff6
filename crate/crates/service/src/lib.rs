//! HTTP prediction service over a single immutable model artifact.
//!
//! Endpoints:
//!
//! | method | path           | body                                  |
//! |--------|----------------|---------------------------------------|
//! | POST   | `/api/predict` | `{"ir":"P","mr":"A",...,"opr":"N"}`   |
//! | POST   | `/api/whatif`  | `{"base":{...},"feature":"co"}`       |
//! | POST   | `/api/batch`   | dataset CSV, labels optional          |
//! | GET    | `/api/model`   |                                       |
//! | GET    | `/healthz`     |                                       |

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::ServeDir;

use qbr_core::dataset::{load_dataset, parse_rating, Rating, Record, N_FEATURES};
use qbr_core::evaluation::Metrics;
use qbr_core::persistence::{
    dataset_hash, error_percent, export_predictions, to_bytes, ModelArtifact, PredictionRow,
};

/// Wire names of the six ratings, in column order.
pub const FIELD_NAMES: [&str; N_FEATURES] = ["ir", "mr", "ff", "cr", "co", "opr"];

/// Field position for a wire name; `or` is accepted for `opr`, any case.
pub fn field_index(name: &str) -> Option<usize> {
    let lower = name.trim().to_ascii_lowercase();
    let lower = if lower == "or" { "opr".to_string() } else { lower };
    FIELD_NAMES.iter().position(|f| *f == lower)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictRequest {
    pub ratings: [Rating; N_FEATURES],
}

impl PredictRequest {
    pub fn record(&self) -> Record {
        Record::new(self.ratings, None)
    }

    /// Validates a JSON object, collecting one message per bad field.
    pub fn from_json(v: &Value) -> Result<Self, BTreeMap<String, String>> {
        let Some(obj) = v.as_object() else {
            return Err(BTreeMap::from([("body".into(), "expected a JSON object".into())]));
        };
        let mut found: [Option<Rating>; N_FEATURES] = [None; N_FEATURES];
        let mut errors = BTreeMap::new();
        for (key, value) in obj {
            let Some(i) = field_index(key) else {
                errors.insert(key.clone(), "unknown field".into());
                continue;
            };
            let parsed = value
                .as_str()
                .ok_or_else(|| "expected a string P, A or N".to_string())
                .and_then(|s| parse_rating(s).map_err(|e| e.to_string()));
            match parsed {
                Ok(r) => found[i] = Some(r),
                Err(msg) => {
                    errors.insert(FIELD_NAMES[i].to_string(), msg);
                }
            }
        }
        for (i, slot) in found.iter().enumerate() {
            if slot.is_none() && !errors.contains_key(FIELD_NAMES[i]) {
                errors.insert(FIELD_NAMES[i].to_string(), "missing".into());
            }
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        Ok(Self {
            ratings: found.map(|r| r.expect("checked above")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub label: String,
    pub score: f64,
    pub model_id: String,
    pub algorithm: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfEntry {
    pub rating: String,
    pub response: PredictResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub feature: String,
    pub results: Vec<WhatIfEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model_id: String,
    pub format_version: u64,
    pub algorithm: String,
    pub features: Vec<String>,
    pub hyperparameters: BTreeMap<String, Value>,
    pub dataset_hash: String,
    pub seed: u64,
    pub timestamp: u64,
    pub metrics_summary: Option<Metrics>,
}

/// A loaded artifact plus its content-derived id.
#[derive(Debug)]
pub struct LoadedModel {
    pub artifact: ModelArtifact,
    pub model_id: String,
}

impl LoadedModel {
    pub fn new(artifact: ModelArtifact) -> Self {
        let model_id = dataset_hash(&to_bytes(&artifact))[..12].to_string();
        Self { artifact, model_id }
    }

    pub fn predict(&self, req: &PredictRequest) -> PredictResponse {
        let (label, score) = self.artifact.assess(&req.record());
        PredictResponse {
            label: label.token().to_string(),
            score,
            model_id: self.model_id.clone(),
            algorithm: self.artifact.algorithm().tag().to_string(),
        }
    }

    pub fn info(&self) -> ModelInfo {
        let a = &self.artifact;
        ModelInfo {
            model_id: self.model_id.clone(),
            format_version: a.format_version,
            algorithm: a.algorithm().tag().to_string(),
            features: a.features.clone(),
            hyperparameters: a.hyperparameters(),
            dataset_hash: a.training.dataset_hash.clone(),
            seed: a.training.seed,
            timestamp: a.training.timestamp,
            metrics_summary: a.metrics_summary,
        }
    }
}

/// Shared, read-only service state.
#[derive(Debug, Clone, Default)]
pub struct AppState {
    model: Option<Arc<LoadedModel>>,
}

impl AppState {
    pub fn with_model(artifact: ModelArtifact) -> Self {
        Self {
            model: Some(Arc::new(LoadedModel::new(artifact))),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn model(&self) -> Option<&LoadedModel> {
        self.model.as_deref()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
    /// Directory of static UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
}

fn error(status: StatusCode, message: impl Into<String>, extra: Option<(&str, Value)>) -> Response {
    let mut body = Map::new();
    body.insert("error".into(), Value::String(message.into()));
    if let Some((k, v)) = extra {
        body.insert(k.into(), v);
    }
    (status, Json(Value::Object(body))).into_response()
}

fn no_model() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "no model loaded", None)
}

fn parse_json(body: &Bytes) -> Result<Value, Response> {
    serde_json::from_slice(body)
        .map_err(|e| error(StatusCode::BAD_REQUEST, format!("invalid JSON: {e}"), None))
}

fn field_errors(errors: BTreeMap<String, String>) -> Response {
    error(
        StatusCode::BAD_REQUEST,
        "invalid ratings",
        Some(("fields", json!(errors))),
    )
}

async fn handle_predict(State(state): State<AppState>, body: Bytes) -> Response {
    let Some(model) = state.model() else {
        return no_model();
    };
    let v = match parse_json(&body) {
        Ok(v) => v,
        Err(r) => return r,
    };
    match PredictRequest::from_json(&v) {
        Ok(req) => Json(model.predict(&req)).into_response(),
        Err(e) => field_errors(e),
    }
}

async fn handle_whatif(State(state): State<AppState>, body: Bytes) -> Response {
    let Some(model) = state.model() else {
        return no_model();
    };
    let v = match parse_json(&body) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let Some(feature) = v.get("feature").and_then(Value::as_str) else {
        return error(StatusCode::BAD_REQUEST, "missing `feature`", None);
    };
    let Some(idx) = field_index(feature) else {
        return error(
            StatusCode::BAD_REQUEST,
            format!("unknown feature `{feature}`"),
            Some(("expected", json!(FIELD_NAMES))),
        );
    };
    let base = match PredictRequest::from_json(v.get("base").unwrap_or(&Value::Null)) {
        Ok(b) => b,
        Err(e) => return field_errors(e),
    };
    let results = Rating::ALL
        .iter()
        .map(|&r| {
            let mut req = base;
            req.ratings[idx] = r;
            WhatIfEntry {
                rating: r.token().to_string(),
                response: model.predict(&req),
            }
        })
        .collect();
    Json(WhatIfResponse {
        feature: FIELD_NAMES[idx].to_string(),
        results,
    })
    .into_response()
}

/// Prediction CSV for a dataset body; labeled input gets a leading
/// `# error_percent: x` comment line.
pub fn batch_csv(model: &LoadedModel, body: &[u8]) -> Result<String, (Option<usize>, String)> {
    let d = load_dataset(body).map_err(|e| (e.line(), e.to_string()))?;
    let rows: Vec<PredictionRow> = d
        .records
        .iter()
        .map(|r| PredictionRow::assess(&model.artifact, r))
        .collect();
    let mut out = Vec::new();
    if let Some(p) = error_percent(&rows) {
        out.extend_from_slice(format!("# error_percent: {p:.6}\n").as_bytes());
    }
    export_predictions(&rows, &mut out).map_err(|e| (None, e.to_string()))?;
    Ok(String::from_utf8(out).expect("export is UTF-8"))
}

async fn handle_batch(State(state): State<AppState>, body: Bytes) -> Response {
    let Some(model) = state.model() else {
        return no_model();
    };
    match batch_csv(model, &body) {
        Ok(csv) => (
            [(header::CONTENT_TYPE, HeaderValue::from_static("text/csv; charset=utf-8"))],
            csv,
        )
            .into_response(),
        Err((line, msg)) => error(StatusCode::BAD_REQUEST, msg, line.map(|l| ("line", json!(l)))),
    }
}

async fn handle_model_info(State(state): State<AppState>) -> Response {
    match state.model() {
        Some(m) => Json(m.info()).into_response(),
        None => no_model(),
    }
}

async fn handle_health(State(state): State<AppState>) -> Response {
    match state.model() {
        Some(_) => (StatusCode::OK, "ok").into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, "no model loaded").into_response(),
    }
}

pub fn router(state: AppState, config: &ServiceConfig) -> Router {
    let cors = match config.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(origin)) => CorsLayer::new().allow_origin(AllowOrigin::exact(origin)),
        _ => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);

    let api = Router::new()
        .route("/api/predict", post(handle_predict))
        .route("/api/whatif", post(handle_whatif))
        .route("/api/batch", post(handle_batch))
        .route("/api/model", get(handle_model_info))
        .route("/healthz", get(handle_health))
        .with_state(state);
    let app = match &config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(cors)
}

/// Binds and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: AppState, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state, &config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_aliases() {
        assert_eq!(field_index("opr"), Some(5));
        assert_eq!(field_index("OR"), Some(5));
        assert_eq!(field_index("or"), Some(5));
        assert_eq!(field_index("Co"), Some(4));
        assert_eq!(field_index("xx"), None);
    }

    #[test]
    fn request_validation_names_fields() {
        let v = json!({"ir": "Q", "mr": "P", "ff": "P", "cr": "P", "co": "P"});
        let errs = PredictRequest::from_json(&v).unwrap_err();
        assert!(errs.contains_key("ir"));
        assert_eq!(errs.get("opr").map(String::as_str), Some("missing"));

        let ok = json!({"ir": "p", "mr": "a", "ff": "n", "cr": "P", "co": "A", "OR": "N"});
        let req = PredictRequest::from_json(&ok).unwrap();
        assert_eq!(req.ratings[5], Rating::Negative);
    }
}
