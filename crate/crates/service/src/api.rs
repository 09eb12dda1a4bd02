use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pmsense_core::aqi::{AqiError, AqiLevel, Pollutant};
use pmsense_core::sensing::{RawSample, SensingError};
use pmsense_core::timeseries::{AggregatedPoint, ChannelId, StoreError, TimeRange};
use pmsense_core::{ConcentrationSample, Exec, Timestamp};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::AppState;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/channels/{id}/write", post(write))
        .route("/channels/{id}/feed", get(feed))
        .route("/channels/{id}/aqi", get(aqi))
        .with_state(state)
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    Store(StoreError),
    EmptySeries,
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::Store(e)
    }
}

impl From<SensingError> for ApiError {
    fn from(e: SensingError) -> Self {
        ApiError::BadRequest(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match &self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m.clone()),
            ApiError::EmptySeries => (StatusCode::CONFLICT, "channel has no samples".to_string()),
            ApiError::Store(e) => {
                let status = match e {
                    StoreError::UnknownChannel(_) => StatusCode::NOT_FOUND,
                    StoreError::BadWriteKey => StatusCode::UNAUTHORIZED,
                    StoreError::RateLimited { .. } => StatusCode::TOO_MANY_REQUESTS,
                    StoreError::EmptyChannel => StatusCode::CONFLICT,
                    StoreError::UnknownField(_)
                    | StoreError::OutOfOrder { .. }
                    | StoreError::InvalidSample(_)
                    | StoreError::Aggregate(_) => StatusCode::BAD_REQUEST,
                    _ => StatusCode::INTERNAL_SERVER_ERROR,
                };
                (status, e.to_string())
            }
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %message, "request failed");
        }
        match &self {
            ApiError::Store(e @ StoreError::RateLimited { .. }) => {
                let secs = e.retry_after_secs().unwrap_or(1);
                let mut resp = (status, Json(json!({ "error": message, "retry_after": secs }))).into_response();
                resp.headers_mut()
                    .insert(header::RETRY_AFTER, HeaderValue::from(secs));
                resp
            }
            _ => (status, Json(json!({ "error": message }))).into_response(),
        }
    }
}

fn parse_id(raw: &str) -> Result<ChannelId, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::BadRequest(format!("invalid channel id `{raw}`")))
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawPayload {
    pub window_duration: f64,
    pub low_pulse_time: f64,
}

/// Body of `POST /channels/{id}/write`. Exactly one of `value` and `raw`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WriteRequest {
    pub write_key: String,
    #[serde(default = "default_field")]
    pub field: String,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub raw: Option<RawPayload>,
    #[serde(default)]
    pub sensor_id: Option<String>,
    /// Sample time; defaults to the server clock.
    #[serde(default)]
    pub timestamp: Option<Timestamp>,
}

fn default_field() -> String {
    "pm25".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WriteResponse {
    pub entry_id: u64,
    pub value: f64,
}

async fn write(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<WriteResponse>, ApiError> {
    let id = parse_id(&id)?;
    let req: WriteRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("malformed body: {e}")))?;
    let now_ms = state.clock.now_ms();
    let timestamp = req.timestamp.unwrap_or(Timestamp(now_ms.div_euclid(1000)));
    let sensor_id = req.sensor_id.unwrap_or_default();
    let sample = match (req.value, req.raw) {
        (Some(value), None) => ConcentrationSample {
            timestamp,
            pm25: value,
            pm1: None,
            sensor_id,
            location: String::new(),
        },
        (None, Some(raw)) => {
            let raw = RawSample::new(raw.window_duration, raw.low_pulse_time)
                .at(timestamp)
                .from_sensor(sensor_id);
            state.converter.convert(&raw)?
        }
        _ => {
            return Err(ApiError::BadRequest(
                "exactly one of `value` and `raw` is required".into(),
            ))
        }
    };
    let value = sample.pm25;
    let entry_id = state
        .store
        .append(id, &req.write_key, &req.field, sample, now_ms)?;
    Ok(Json(WriteResponse { entry_id, value }))
}

#[derive(Debug, Default, Deserialize)]
pub struct FeedQuery {
    pub field: Option<String>,
    pub start: Option<String>,
    pub end: Option<String>,
    /// Only samples from the last `window` seconds of server time.
    pub window: Option<i64>,
    /// Bucket width in minutes; switches the feed to bucket means.
    pub bucket: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedEntry {
    pub entry_id: u64,
    pub timestamp: Timestamp,
    pub value: f64,
    pub sensor_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedResponse {
    pub channel_id: ChannelId,
    pub field: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<FeedEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buckets: Option<Vec<AggregatedPoint>>,
}

fn parse_time(name: &str, v: &Option<String>) -> Result<Option<Timestamp>, ApiError> {
    v.as_deref()
        .map(|s| Timestamp::parse_iso8601(s).map_err(|e| ApiError::BadRequest(format!("{name}: {e}"))))
        .transpose()
}

async fn feed(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FeedQuery>,
) -> Result<Json<FeedResponse>, ApiError> {
    let id = parse_id(&id)?;
    let channel = state.store.channel(id)?;
    let field = q.field.clone().unwrap_or_else(|| channel.fields[0].clone());
    if !channel.has_field(&field) {
        return Err(StoreError::UnknownField(field).into());
    }
    let mut start = parse_time("start", &q.start)?;
    let end = parse_time("end", &q.end)?;
    if let Some(w) = q.window {
        if w <= 0 {
            return Err(ApiError::BadRequest("window must be > 0 s".into()));
        }
        let from = Timestamp(state.clock.now_ms().div_euclid(1000) - w);
        start = Some(start.map_or(from, |s| s.max(from)));
    }
    let range = match (start, end) {
        (None, None) => None,
        (s, e) => Some(
            TimeRange::new(s.unwrap_or(Timestamp(i64::MIN)), e.unwrap_or(Timestamp(i64::MAX)))
                .map_err(ApiError::BadRequest)?,
        ),
    };
    let entries = state.store.entries(id, Some(&field), range)?;
    let mut resp = FeedResponse {
        channel_id: id,
        field,
        entries: None,
        buckets: None,
    };
    match q.bucket {
        Some(minutes) => {
            let points: Vec<(Timestamp, f64)> =
                entries.iter().map(|e| (e.sample.timestamp, e.sample.pm25)).collect();
            let buckets = if points.is_empty() {
                Vec::new()
            } else {
                pmsense_core::timeseries::aggregate_points(&points, minutes, Exec::default())
                    .map_err(|e| ApiError::BadRequest(e.to_string()))?
            };
            resp.buckets = Some(buckets);
        }
        None => {
            let mut list: Vec<FeedEntry> = entries
                .into_iter()
                .map(|e| FeedEntry {
                    entry_id: e.entry_id,
                    timestamp: e.sample.timestamp,
                    value: e.sample.pm25,
                    sensor_id: e.sample.sensor_id,
                })
                .collect();
            list.sort_by_key(|e| (e.timestamp, e.entry_id));
            resp.entries = Some(list);
        }
    }
    Ok(Json(resp))
}

#[derive(Debug, Default, Deserialize)]
pub struct AqiQuery {
    pub field: Option<String>,
    pub pollutant: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AqiResponse {
    pub channel_id: ChannelId,
    pub pollutant: Pollutant,
    pub level: AqiLevel,
    pub health_text: String,
    pub mean: f64,
    pub samples: usize,
    pub window_hours: u32,
    pub window_end: Timestamp,
}

async fn aqi(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<AqiQuery>,
) -> Result<Json<AqiResponse>, ApiError> {
    let id = parse_id(&id)?;
    let channel = state.store.channel(id)?;
    let pollutant: Pollutant = match &q.pollutant {
        Some(p) => p.parse().map_err(|e: AqiError| ApiError::BadRequest(e.to_string()))?,
        None => Pollutant::Pm25,
    };
    let field = q.field.unwrap_or_else(|| channel.fields[0].clone());
    let points = state.store.points(id, &field, None)?;
    let assessment = state
        .table
        .assess_series(&points, pollutant)
        .map_err(|e| match e {
            AqiError::EmptySeries => ApiError::EmptySeries,
            other => ApiError::BadRequest(other.to_string()),
        })?;
    Ok(Json(AqiResponse {
        channel_id: id,
        pollutant,
        level: assessment.class.level,
        health_text: assessment.class.health_text,
        mean: assessment.mean,
        samples: assessment.samples,
        window_hours: assessment.window_hours,
        window_end: assessment.window_end,
    }))
}
