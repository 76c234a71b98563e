//! JSON prediction service over one immutable model.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use phosforge_core::domain::feature_rule_violation;
use phosforge_core::preprocess::{Column, MinMax};
use phosforge_core::{FeatureId, ModelArtifact, Prediction, FEATURE_COUNT};
use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub error: String,
    pub fields: Vec<FieldError>,
}

#[derive(Debug)]
pub enum ApiError {
    /// Malformed JSON or a body that does not match the schema.
    Schema(Vec<FieldError>),
    /// Well-formed values that break a domain rule.
    Domain(Vec<FieldError>),
    UnsupportedMediaType,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, error, fields) = match self {
            ApiError::Schema(fields) => (StatusCode::BAD_REQUEST, "request does not match the schema", fields),
            ApiError::Domain(fields) => (StatusCode::UNPROCESSABLE_ENTITY, "values violate domain rules", fields),
            ApiError::UnsupportedMediaType => {
                (StatusCode::UNSUPPORTED_MEDIA_TYPE, "content-type must be application/json", Vec::new())
            }
        };
        (status, Json(ErrorBody { error: error.to_string(), fields })).into_response()
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn field_error(field: impl Into<String>, message: impl Into<String>) -> FieldError {
    FieldError { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictResponse {
    pub p_wtpct: f64,
    pub p_ppm: f64,
    pub out_of_range: Vec<FeatureId>,
}

impl From<Prediction> for PredictResponse {
    fn from(p: Prediction) -> Self {
        PredictResponse { p_wtpct: p.p_wtpct, p_ppm: p.p_ppm(), out_of_range: p.out_of_range }
    }
}

impl PredictResponse {
    /// Compact JSON, as sent over the wire.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Override {
    pub feature: FeatureId,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhatIfEntry {
    pub applied_override: Option<Override>,
    pub p_wtpct: f64,
    pub p_ppm: f64,
    pub delta_wtpct: f64,
    pub out_of_range: Vec<FeatureId>,
}

/// Reads the twelve features of a `{name: number}` object.
pub fn parse_features(value: &Value, path: &str) -> Result<[f64; FEATURE_COUNT], ApiError> {
    let Some(object) = value.as_object() else {
        let at = if path.is_empty() { "body" } else { path };
        return Err(ApiError::Schema(vec![field_error(at, "expected an object of feature values")]));
    };
    let mut errors = Vec::new();
    let mut out = [f64::NAN; FEATURE_COUNT];
    for (key, v) in object {
        match key.parse::<FeatureId>() {
            Ok(feature) => match v.as_f64() {
                Some(x) => out[feature.index()] = x,
                None => errors.push(field_error(join(path, key), "expected a number")),
            },
            Err(_) => errors.push(field_error(join(path, key), "unknown feature")),
        }
    }
    for feature in FeatureId::ALL {
        if !object.contains_key(feature.name()) {
            errors.push(field_error(join(path, feature.name()), "missing"));
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(ApiError::Schema(errors))
    }
}

fn parse_overrides(value: Option<&Value>) -> Result<Vec<Override>, ApiError> {
    let Some(value) = value else {
        return Err(ApiError::Schema(vec![field_error("overrides", "missing")]));
    };
    let Some(items) = value.as_array() else {
        return Err(ApiError::Schema(vec![field_error("overrides", "expected an array")]));
    };
    let mut errors = Vec::new();
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let path = format!("overrides[{i}]");
        let feature = match item.get("feature").and_then(Value::as_str) {
            Some(name) => name.parse::<FeatureId>().map_err(|_| field_error(format!("{path}.feature"), "unknown feature")),
            None => Err(field_error(format!("{path}.feature"), "expected a feature name")),
        };
        let value = item.get("value").and_then(Value::as_f64).ok_or_else(|| field_error(format!("{path}.value"), "expected a number"));
        let extra = item.as_object().map_or(false, |o| o.keys().any(|k| k != "feature" && k != "value"));
        match (feature, value) {
            (Ok(feature), Ok(value)) if !extra => out.push(Override { feature, value }),
            (feature, value) => {
                errors.extend(feature.err());
                errors.extend(value.err());
                if extra {
                    errors.push(field_error(path, "only `feature` and `value` are allowed"));
                }
            }
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(ApiError::Schema(errors))
    }
}

fn check_domain(x: &[f64; FEATURE_COUNT], path: &str) -> Vec<FieldError> {
    FeatureId::ALL
        .iter()
        .filter_map(|f| feature_rule_violation(*f, x[f.index()]).map(|rule| field_error(join(path, f.name()), rule)))
        .collect()
}

fn json_body(headers: &HeaderMap, body: &Bytes) -> Result<Value, ApiError> {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.split(';').next())
        .is_some_and(|v| v.trim().eq_ignore_ascii_case("application/json"));
    if !is_json {
        return Err(ApiError::UnsupportedMediaType);
    }
    serde_json::from_slice(body).map_err(|e| ApiError::Schema(vec![field_error("body", e.to_string())]))
}

fn only_keys(object: &Map<String, Value>, allowed: &[&str]) -> Vec<FieldError> {
    object
        .keys()
        .filter(|k| !allowed.contains(&k.as_str()))
        .map(|k| field_error(k.clone(), "unexpected field"))
        .collect()
}

pub fn predict_value(model: &ModelArtifact, body: &Value) -> Result<PredictResponse, ApiError> {
    let x = parse_features(body, "")?;
    let violations = check_domain(&x, "");
    if !violations.is_empty() {
        return Err(ApiError::Domain(violations));
    }
    Ok(model.predict_features(&x).into())
}

pub fn whatif_value(model: &ModelArtifact, body: &Value) -> Result<Vec<WhatIfEntry>, ApiError> {
    let Some(object) = body.as_object() else {
        return Err(ApiError::Schema(vec![field_error("body", "expected an object with `base` and `overrides`")]));
    };
    let mut errors = only_keys(object, &["base", "overrides"]);
    let base = match object.get("base") {
        Some(v) => parse_features(v, "base"),
        None => Err(ApiError::Schema(vec![field_error("base", "missing")])),
    };
    let overrides = parse_overrides(object.get("overrides"));
    for result in [base.as_ref().err(), overrides.as_ref().err()].into_iter().flatten() {
        if let ApiError::Schema(fields) = result {
            errors.extend(fields.iter().cloned());
        }
    }
    if !errors.is_empty() {
        return Err(ApiError::Schema(errors));
    }
    let (base, overrides) = (base.ok().expect("checked"), overrides.ok().expect("checked"));

    let mut violations = check_domain(&base, "base");
    for (i, o) in overrides.iter().enumerate() {
        if let Some(rule) = feature_rule_violation(o.feature, o.value) {
            violations.push(field_error(format!("overrides[{i}].value"), rule));
        }
    }
    if !violations.is_empty() {
        return Err(ApiError::Domain(violations));
    }

    let reference = model.predict_features(&base);
    let entry = |applied_override: Option<Override>, p: Prediction| WhatIfEntry {
        applied_override,
        p_wtpct: p.p_wtpct,
        p_ppm: p.p_ppm(),
        delta_wtpct: p.p_wtpct - reference.p_wtpct,
        out_of_range: p.out_of_range,
    };
    if overrides.is_empty() {
        return Ok(vec![entry(None, reference.clone())]);
    }
    Ok(overrides
        .iter()
        .map(|o| {
            let mut x = base;
            x[o.feature.index()] = o.value;
            entry(Some(*o), model.predict_features(&x))
        })
        .collect())
}

/// The `/v1/model` document.
pub fn model_description(model: &ModelArtifact) -> Value {
    let range = |m: MinMax| json!({ "min": m.min, "max": m.max });
    let features: BTreeMap<&str, Value> =
        FeatureId::ALL.iter().map(|f| (f.name(), range(model.norm_params.range(Column::Feature(*f))))).collect();
    json!({
        "format": model.format(),
        "kind": model.body.kind(),
        "architecture": model.architecture().map(|a| a.layer_sizes()),
        "metadata": model.metadata,
        "norm_ranges": {
            "features": features,
            "target": range(model.norm_params.range(Column::Target)),
        },
    })
}

type Shared = Arc<ModelArtifact>;

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn describe(State(model): State<Shared>) -> Json<Value> {
    Json(model_description(&model))
}

async fn predict(State(model): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Json<PredictResponse>, ApiError> {
    let value = json_body(&headers, &body)?;
    predict_value(&model, &value).map(Json)
}

async fn whatif(State(model): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Json<Vec<WhatIfEntry>>, ApiError> {
    let value = json_body(&headers, &body)?;
    whatif_value(&model, &value).map(Json)
}

pub fn router(model: ModelArtifact) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/model", get(describe))
        .route("/v1/predict", post(predict))
        .route("/v1/whatif", post(whatif))
        .with_state(Arc::new(model))
}

/// Serves until ctrl-c.
pub async fn serve(model: ModelArtifact, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(model))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

