//! JSON wire types shared by the prediction service and its clients, and the
//! translation between request bodies and schema-ordered cells.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::data::{parse_bool, Cell, DatasetSchema, FeatureKind, Role, Value};
use crate::forest::ImportanceMethod;
use crate::hurdle::{CombinationMode, HurdleModel, PredictionBreakdown, RegressorKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_fingerprint: String,
    pub schema_fingerprint: String,
}

/// The schema as served to form-building clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDocument {
    pub fingerprint: String,
    pub schema: DatasetSchema,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    /// Feature name to value. Omitted or `null` means missing.
    pub features: BTreeMap<String, Json>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<CombinationMode>,
}

/// Amounts travel as decimal strings: the shortest text that parses back to
/// the same `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub grant_probability: f64,
    pub grant_label: u8,
    pub amount_raw: String,
    pub amount_adjusted: String,
    pub combination_mode: CombinationMode,
    pub model_fingerprint: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub rank: usize,
    pub feature: String,
    pub score: f64,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportancesResponse {
    pub method: ImportanceMethod,
    pub importances: Vec<ImportanceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientsResponse {
    pub kind: RegressorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Intercept first.
    pub coefficients: Vec<CoefficientRow>,
}

/// Error body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

/// A request the schema rejects.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RequestError {
    /// Not valid JSON, or not shaped like a request.
    #[error("{0}")]
    Malformed(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{0}` is required")]
    MissingFeature(String),
    #[error("feature `{field}`: {message}")]
    TypeMismatch { field: String, message: String },
}

impl RequestError {
    /// 400 for requests that do not fit the schema's shape, 422 for values of
    /// the wrong type.
    pub fn status(&self) -> u16 {
        match self {
            RequestError::TypeMismatch { .. } => 422,
            _ => 400,
        }
    }

    pub fn body(&self) -> ApiError {
        let (error, field) = match self {
            RequestError::Malformed(_) => ("malformed_request", None),
            RequestError::UnknownFeature(f) => ("unknown_feature", Some(f.clone())),
            RequestError::MissingFeature(f) => ("missing_feature", Some(f.clone())),
            RequestError::TypeMismatch { field, .. } => ("type_mismatch", Some(field.clone())),
        };
        ApiError {
            error: error.into(),
            field,
            message: self.to_string(),
        }
    }
}

pub fn decimal(v: f64) -> String {
    v.to_string()
}

fn mismatch(field: &str, expected: &str, got: &Json) -> RequestError {
    RequestError::TypeMismatch {
        field: field.into(),
        message: format!("expected {expected}, got {got}"),
    }
}

fn cell_from_json(name: &str, kind: &FeatureKind, json: &Json) -> Result<Value, RequestError> {
    match kind {
        FeatureKind::Numeric { .. } => {
            let v = match json {
                Json::Number(n) => n.as_f64(),
                Json::String(s) => s.trim().parse::<f64>().ok(),
                _ => None,
            };
            v.filter(|v| v.is_finite())
                .map(Value::Number)
                .ok_or_else(|| mismatch(name, "a finite number", json))
        }
        FeatureKind::Count => {
            let v = match json {
                Json::Number(n) => n.as_u64(),
                Json::String(s) => s.trim().parse::<u64>().ok(),
                _ => None,
            };
            v.map(Value::Count)
                .ok_or_else(|| mismatch(name, "a non-negative integer", json))
        }
        FeatureKind::Boolean => {
            let v = match json {
                Json::Bool(b) => Some(*b),
                Json::String(s) => parse_bool(s),
                _ => None,
            };
            v.map(Value::Bool).ok_or_else(|| mismatch(name, "a boolean", json))
        }
        FeatureKind::Categorical { levels } => json
            .as_str()
            .and_then(|s| levels.iter().position(|l| l == s))
            .map(|i| Value::Level(i as u32))
            .ok_or_else(|| mismatch(name, &format!("one of {levels:?}"), json)),
    }
}

/// Parses a predict body into schema-ordered cells and the optional mode.
pub fn parse_predict_body(body: &[u8], schema: &DatasetSchema) -> Result<(Vec<Cell>, Option<CombinationMode>), RequestError> {
    let json: Json = serde_json::from_slice(body).map_err(|e| RequestError::Malformed(format!("invalid JSON: {e}")))?;
    let Json::Object(mut top) = json else {
        return Err(RequestError::Malformed("request body must be a JSON object".into()));
    };
    let mode = match top.remove("mode") {
        None | Some(Json::Null) => None,
        Some(Json::String(s)) => Some(s.parse::<CombinationMode>().map_err(|message| RequestError::TypeMismatch {
            field: "mode".into(),
            message,
        })?),
        Some(other) => return Err(mismatch("mode", "\"label\" or \"probability\"", &other)),
    };
    let features = match top.remove("features") {
        Some(Json::Object(map)) => map,
        Some(other) => return Err(RequestError::Malformed(format!("`features` must be an object, got {other}"))),
        None => return Err(RequestError::Malformed("missing `features` object".into())),
    };
    if let Some(extra) = top.keys().next() {
        return Err(RequestError::Malformed(format!("unexpected top-level key `{extra}`")));
    }
    if let Some(unknown) = features.keys().find(|k| schema.feature_index(k).is_none()) {
        return Err(RequestError::UnknownFeature(unknown.clone()));
    }
    let cells = schema
        .features
        .iter()
        .map(|spec| match features.get(&spec.name) {
            None | Some(Json::Null) if spec.allow_missing => Ok(None),
            None | Some(Json::Null) => Err(RequestError::MissingFeature(spec.name.clone())),
            Some(json) => cell_from_json(&spec.name, &spec.kind, json).map(Some),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((cells, mode))
}

/// The request a client sends for schema-ordered `cells`.
pub fn request_from_cells(schema: &DatasetSchema, cells: &[Cell], mode: Option<CombinationMode>) -> PredictRequest {
    let features = schema
        .features
        .iter()
        .zip(cells)
        .map(|(spec, cell)| {
            let json = match (cell, &spec.kind) {
                (None, _) => Json::Null,
                (Some(Value::Level(l)), FeatureKind::Categorical { levels }) => Json::String(levels[*l as usize].clone()),
                (Some(Value::Number(v)), _) => serde_json::Number::from_f64(*v).map_or(Json::Null, Json::Number),
                (Some(Value::Count(c)), _) => Json::from(*c),
                (Some(Value::Bool(b)), _) => Json::Bool(*b),
                (Some(Value::Level(l)), _) => Json::from(*l),
            };
            (spec.name.clone(), json)
        })
        .collect();
    PredictRequest { features, mode }
}

pub fn predict_response(breakdown: &PredictionBreakdown, model_fingerprint: &str) -> PredictResponse {
    let mut warnings = Vec::new();
    if breakdown.clipped {
        warnings.push("negative regression output clipped to 0".to_string());
    }
    PredictResponse {
        grant_probability: breakdown.grant_probability,
        grant_label: u8::from(breakdown.grant_label),
        amount_raw: decimal(breakdown.amount_raw),
        amount_adjusted: decimal(breakdown.amount_adjusted),
        combination_mode: breakdown.mode,
        model_fingerprint: model_fingerprint.into(),
        warnings,
    }
}

pub fn importances_response(model: &HurdleModel, method: ImportanceMethod, top_n: usize) -> ImportancesResponse {
    let importances = crate::audit::importance_table(model, method, top_n)
        .into_iter()
        .enumerate()
        .map(|(i, e)| ImportanceRow {
            rank: i + 1,
            role: model.schema.feature(&e.feature).map_or(Role::Legal, |f| f.role),
            feature: e.feature,
            score: e.score,
        })
        .collect();
    ImportancesResponse { method, importances }
}

pub fn coefficients_response(model: &HurdleModel) -> CoefficientsResponse {
    let regressor = &model.regressor.model;
    CoefficientsResponse {
        kind: match regressor {
            crate::hurdle::Regressor::Ols(_) => RegressorKind::Ols,
            crate::hurdle::Regressor::Quantile(_) => RegressorKind::Quantile,
        },
        tau: regressor.tau(),
        coefficients: regressor
            .coefficient_table()
            .into_iter()
            .map(|(name, estimate)| CoefficientRow {
                name,
                estimate: decimal(estimate),
            })
            .collect(),
    }
}
