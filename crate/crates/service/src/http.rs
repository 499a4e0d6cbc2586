//! JSON-over-HTTP surface of the profile store.
//!
//! | method | path                    | body                                   | success |
//! |--------|-------------------------|----------------------------------------|---------|
//! | POST   | `/profiles`             | `{base_id \| base_vector, profile_id?, config?}` | 201 `{profile_id}` |
//! | GET    | `/profiles/{id}`        |                                        | 200 profile summary |
//! | POST   | `/profiles/{id}/events` | `{winner_id, loser_id}`                | 200 `{seq, drift_cosine}` |
//! | POST   | `/profiles/{id}/rank`   | `{candidate_ids?, k}`                  | 200 `{ranking: [{id, score, uri?}]}` |
//! | GET    | `/healthz`              |                                        | 200 |
//!
//! Every failure is `{error_code, message, details}` with the status from
//! [`ServiceError::status`]. Store calls that may fsync run on the blocking pool.

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::error::ServiceError;
use crate::profile::{EventAck, ProfileSummary};
use crate::store::{BaseRef, ConfigPatch, ProfileStore};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CreateProfileRequest {
    #[serde(default)]
    pub base_id: Option<String>,
    #[serde(default)]
    pub base_vector: Option<Vec<f64>>,
    #[serde(default)]
    pub profile_id: Option<String>,
    #[serde(default)]
    pub config: ConfigPatch,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct CreateProfileResponse {
    pub profile_id: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EventRequest {
    pub winner_id: String,
    pub loser_id: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RankRequest {
    #[serde(default)]
    pub candidate_ids: Option<Vec<String>>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct RankEntry {
    pub id: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uri: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct RankResponse {
    pub ranking: Vec<RankEntry>,
}

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        ApiError(ServiceError::Invalid(rejection.body_text()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        (status, axum::Json(self.0.body())).into_response()
    }
}

/// `Json` extractor whose rejections use the service error body.
pub struct Json<T>(pub T);

impl<S, T> FromRequest<S> for Json<T>
where
    axum::Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let axum::Json(value) = axum::Json::<T>::from_request(req, state).await?;
        Ok(Json(value))
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Storage(format!("worker failed: {e}")))?
        .map_err(ApiError)
}

async fn healthz() -> StatusCode {
    StatusCode::OK
}

async fn create_profile(
    State(store): State<Arc<ProfileStore>>,
    Json(req): Json<CreateProfileRequest>,
) -> ApiResult<(StatusCode, axum::Json<CreateProfileResponse>)> {
    let base = match (req.base_id, req.base_vector) {
        (Some(id), None) => BaseRef::Id(id),
        (None, Some(v)) => BaseRef::Vector(v),
        _ => {
            return Err(ServiceError::Invalid("exactly one of base_id and base_vector is required".into()).into());
        }
    };
    let profile_id = blocking(move || store.create_profile(base, req.profile_id, req.config)).await?;
    Ok((StatusCode::CREATED, axum::Json(CreateProfileResponse { profile_id })))
}

async fn get_profile(
    State(store): State<Arc<ProfileStore>>,
    Path(id): Path<String>,
) -> ApiResult<axum::Json<ProfileSummary>> {
    Ok(axum::Json(store.get_profile(&id)?))
}

async fn record_event(
    State(store): State<Arc<ProfileStore>>,
    Path(id): Path<String>,
    Json(req): Json<EventRequest>,
) -> ApiResult<axum::Json<EventAck>> {
    let ack = blocking(move || store.record_preference(&id, &req.winner_id, &req.loser_id)).await?;
    Ok(axum::Json(ack))
}

async fn rank(
    State(store): State<Arc<ProfileStore>>,
    Path(id): Path<String>,
    Json(req): Json<RankRequest>,
) -> ApiResult<axum::Json<RankResponse>> {
    let ranked = store.rank(&id, req.candidate_ids.as_deref(), req.k)?;
    let corpus = store.corpus();
    let ranking = ranked
        .into_iter()
        .map(|r| {
            let uri = corpus.index_of(&r.id).and_then(|i| corpus.meta()[i].uri.clone());
            RankEntry {
                id: r.id,
                score: r.score,
                uri,
            }
        })
        .collect();
    Ok(axum::Json(RankResponse { ranking }))
}

pub fn router(store: Arc<ProfileStore>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/profiles", post(create_profile))
        .route("/profiles/{id}", get(get_profile))
        .route("/profiles/{id}/events", post(record_event))
        .route("/profiles/{id}/rank", post(rank))
        .with_state(store)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: TcpListener,
    store: Arc<ProfileStore>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(store))
        .with_graceful_shutdown(shutdown)
        .await
}
