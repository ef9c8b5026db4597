//! HTTP routes. Handlers only parse the query, pick the current generation and
//! serialize a view.

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use log::{info, warn};
use riskmap_core::ingest::RepositoryStore;
use serde::Serialize;

use crate::generation::{fingerprint, Generation};
use crate::views::{self, ApiError, Params, QuerySpec};

/// Shared server state. Requests clone the current generation and never block
/// a reload for longer than the pointer swap.
#[derive(Clone)]
pub struct AppState {
    current: Arc<RwLock<Arc<Generation>>>,
}

impl AppState {
    pub fn new(generation: Generation) -> Self {
        Self {
            current: Arc::new(RwLock::new(Arc::new(generation))),
        }
    }

    pub fn generation(&self) -> Arc<Generation> {
        self.current.read().expect("generation lock").clone()
    }

    pub fn replace(&self, generation: Generation) {
        *self.current.write().expect("generation lock") = Arc::new(generation);
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

pub struct HttpError(ApiError);

impl From<ApiError> for HttpError {
    fn from(err: ApiError) -> Self {
        Self(err)
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        let status = match self.0 {
            ApiError::UnknownBranch(_) | ApiError::UnknownCode(_) => StatusCode::NOT_FOUND,
            ApiError::BadParams(_) => StatusCode::BAD_REQUEST,
        };
        let body = ErrorBody {
            error: self.0.kind(),
            message: self.0.message(),
        };
        (status, Json(body)).into_response()
    }
}

type Reply<T> = Result<Json<T>, HttpError>;

fn params(query: Result<Query<Params>, QueryRejection>) -> Result<Params, ApiError> {
    query
        .map(|Query(p)| p)
        .map_err(|e| ApiError::BadParams(e.body_text()))
}

async fn taxonomy(
    State(state): State<AppState>,
    query: Result<Query<Params>, QueryRejection>,
) -> Reply<views::TaxonomyView> {
    let spec = QuerySpec::parse(&params(query)?)?;
    Ok(Json(views::taxonomy_view(&state.generation(), &spec)?))
}

async fn shares(
    State(state): State<AppState>,
    query: Result<Query<Params>, QueryRejection>,
) -> Reply<views::SharesView> {
    let spec = QuerySpec::parse(&params(query)?)?;
    Ok(Json(views::shares_view(&state.generation(), &spec)?))
}

async fn occurrences(
    State(state): State<AppState>,
    query: Result<Query<Params>, QueryRejection>,
) -> Reply<views::OccurrencesView> {
    let spec = QuerySpec::parse(&params(query)?)?;
    Ok(Json(views::occurrences_view(&state.generation(), &spec)?))
}

async fn gap(
    State(state): State<AppState>,
    query: Result<Query<Params>, QueryRejection>,
) -> Reply<views::GapView> {
    let spec = QuerySpec::parse(&params(query)?)?;
    Ok(Json(views::gap_view(&state.generation(), &spec)?))
}

async fn documents(
    State(state): State<AppState>,
    query: Result<Query<Params>, QueryRejection>,
) -> Reply<views::DocumentsPage> {
    Ok(Json(views::documents_view(&state.generation(), &params(query)?)?))
}

async fn meta(State(state): State<AppState>) -> Json<views::MetaView> {
    Json(views::meta_view(&state.generation()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/meta", get(meta))
        .route("/taxonomy", get(taxonomy))
        .route("/indicators/shares", get(shares))
        .route("/indicators/occurrences", get(occurrences))
        .route("/indicators/gap", get(gap))
        .route("/documents", get(documents))
        .with_state(state)
}

/// Reloads the repository whenever its files change. A failed load keeps the
/// current generation and is retried on the next tick.
pub async fn watch(state: AppState, dir: PathBuf, every: Duration) {
    let mut seen = fingerprint(&dir);
    let mut ticker = tokio::time::interval(every);
    ticker.tick().await;
    loop {
        ticker.tick().await;
        let now = fingerprint(&dir);
        if now == seen || RepositoryStore::new(&dir).is_locked() {
            continue;
        }
        let next_id = state.generation().id + 1;
        let dir2 = dir.clone();
        match tokio::task::spawn_blocking(move || Generation::load(&dir2, next_id)).await {
            Ok(Ok(generation)) => {
                info!("loaded generation {next_id}: {} documents", generation.repo.len());
                state.replace(generation);
                seen = now;
            }
            Ok(Err(err)) => warn!("reload of {} failed: {err:#}", dir.display()),
            Err(err) => warn!("reload task failed: {err}"),
        }
    }
}

pub async fn serve(
    dir: &Path,
    port: u16,
    static_dir: Option<&Path>,
    reload: Option<Duration>,
) -> anyhow::Result<()> {
    let generation = Generation::load(dir, 0)?;
    info!(
        "repository {}: {} documents, {} taxonomy nodes",
        dir.display(),
        generation.repo.len(),
        generation.taxonomy.len()
    );
    let state = AppState::new(generation);
    let mut app = router(state.clone());
    if let Some(static_dir) = static_dir {
        app = app.fallback_service(tower_http::services::ServeDir::new(static_dir));
    }
    if let Some(every) = reload {
        tokio::spawn(watch(state, dir.to_path_buf(), every));
    }
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
