//! JSON HTTP service over a loaded catalog.
//!
//! The catalog loads in the background after the listener is bound; until it
//! is ready every endpoint answers 503. Directions are cached by the key that
//! produced them, and that key (`direction_ref`) is all a client needs to
//! send back, so the server holds no session state.

use std::collections::HashSet;
use std::net::SocketAddr;
use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lru::LruCache;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::catalog::{load_catalog, load_prompt_bank, PromptBank};
use crate::direction::{
    build_direction, DirectionVector, SnrOptions, DEFAULT_CLASS_SIZE, DEFAULT_EPSILON,
};
use crate::error::Error;
use crate::eval::project_2d;
use crate::index::KnnIndex;
use crate::traversal::{advance, traverse, TraversalConfig};
use crate::vector::EmbeddingVector;

pub const DIRECTION_CACHE_SIZE: usize = 256;

/// Everything needed to rebuild a direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRef {
    pub neutral_prompt: String,
    pub exemplar_prompt: String,
    pub m: usize,
    pub n: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey(String, String, usize, usize, u64);

impl From<&DirectionRef> for CacheKey {
    fn from(r: &DirectionRef) -> Self {
        CacheKey(
            r.neutral_prompt.clone(),
            r.exemplar_prompt.clone(),
            r.m,
            r.n,
            r.epsilon.to_bits(),
        )
    }
}

pub struct Engine {
    pub index: KnnIndex,
    pub bank: PromptBank,
    cache: Mutex<LruCache<CacheKey, Arc<DirectionVector>>>,
}

impl Engine {
    pub fn new(index: KnnIndex, bank: PromptBank) -> crate::Result<Self> {
        if !bank.is_empty() {
            bank.check_dim(index.dim())?;
        }
        let cap = NonZeroUsize::new(DIRECTION_CACHE_SIZE).expect("nonzero");
        Ok(Self {
            index,
            bank,
            cache: Mutex::new(LruCache::new(cap)),
        })
    }

    /// The direction for `r` and whether it came from the cache.
    pub fn direction(&self, r: &DirectionRef) -> crate::Result<(Arc<DirectionVector>, bool)> {
        let key = CacheKey::from(r);
        if let Some(d) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok((d.clone(), true));
        }
        let d = Arc::new(build_direction(
            &self.index,
            &self.bank,
            &r.neutral_prompt,
            &r.exemplar_prompt,
            r.m,
            r.n,
            &SnrOptions::with_epsilon(r.epsilon),
        )?);
        self.cache.lock().expect("cache lock").put(key, d.clone());
        Ok((d, false))
    }
}

#[derive(Clone, Default)]
pub struct AppState {
    engine: Arc<OnceLock<Engine>>,
}

impl AppState {
    pub fn pending() -> Self {
        Self::default()
    }

    pub fn ready(engine: Engine) -> Self {
        let s = Self::default();
        s.set(engine);
        s
    }

    pub fn set(&self, engine: Engine) {
        let _ = self.engine.set(engine);
    }

    fn engine(&self) -> Result<&Engine, ApiError> {
        self.engine.get().ok_or_else(|| ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            code: "NotReady",
            message: "catalog is still loading".into(),
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "InvalidArgument",
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownPrompt(_) | Error::UnknownSeed(_) | Error::UnknownProduct(_) => {
                StatusCode::NOT_FOUND
            }
            Error::ZeroSignal(_) | Error::DegenerateMean(_) | Error::DegenerateStep(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            Error::IoFailure { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self {
            status,
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({ "error_code": self.code, "message": self.message }));
        (self.status, body).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

// Parsed by hand so malformed bodies get the same error shape as everything
// else.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
}

fn vector(values: Vec<f32>, what: &str) -> Result<EmbeddingVector, ApiError> {
    EmbeddingVector::new(values)
        .map_err(|_| ApiError::bad_request(format!("{what} must be a non-empty finite vector")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/catalog/stats", get(stats))
        .route("/v1/retrieve", post(retrieve))
        .route("/v1/direction", post(direction))
        .route("/v1/traverse", post(traverse_handler))
        .route("/v1/step", post(step_handler))
        .route("/v1/project", post(project))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

async fn stats(State(s): State<AppState>) -> ApiResult {
    let e = s.engine()?;
    Ok(Json(json!({
        "dim": e.index.dim(),
        "product_count": e.index.len(),
        "prompt_count": e.bank.len(),
    })))
}

#[derive(Deserialize)]
struct RetrieveReq {
    prompt: String,
    n: usize,
}

async fn retrieve(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let e = s.engine()?;
    let req: RetrieveReq = parse(&body)?;
    let hits = e.index.retrieve_by_prompt(&e.bank, &req.prompt, req.n)?;
    let products = e.index.catalog().products();
    let items: Vec<Value> = hits
        .iter()
        .map(|h| {
            json!({
                "id": h.product_id,
                "similarity": h.similarity,
                "display_ref": products[h.row].display_ref,
            })
        })
        .collect();
    Ok(Json(json!({ "items": items })))
}

#[derive(Deserialize)]
struct DirectionReq {
    neutral_prompt: String,
    exemplar_prompt: String,
    m: Option<usize>,
    n: Option<usize>,
    epsilon: Option<f64>,
}

async fn direction(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let e = s.engine()?;
    let req: DirectionReq = parse(&body)?;
    let r = DirectionRef {
        neutral_prompt: req.neutral_prompt,
        exemplar_prompt: req.exemplar_prompt,
        m: req.m.unwrap_or(DEFAULT_CLASS_SIZE),
        n: req.n.unwrap_or(DEFAULT_CLASS_SIZE),
        epsilon: req.epsilon.unwrap_or(DEFAULT_EPSILON),
    };
    let (d, cache_hit) = e.direction(&r)?;
    Ok(Json(json!({
        "cache_hit": cache_hit,
        "direction_ref": r,
        "direction": *d,
    })))
}

/// A request names its direction either by reference or inline.
#[derive(Deserialize)]
struct DirectionArg {
    direction_ref: Option<DirectionRef>,
    direction: Option<DirectionVector>,
}

impl DirectionArg {
    fn resolve(self, e: &Engine) -> Result<Arc<DirectionVector>, ApiError> {
        match (self.direction_ref, self.direction) {
            (Some(r), None) => Ok(e.direction(&r)?.0),
            (None, Some(d)) => {
                let text = serde_json::to_string(&d).expect("direction serializes");
                Ok(Arc::new(DirectionVector::from_json(&text)?))
            }
            _ => Err(ApiError::bad_request(
                "exactly one of direction_ref and direction is required",
            )),
        }
    }
}

#[derive(Deserialize)]
struct Knobs {
    lambda: Option<f64>,
    rho: Option<f64>,
    steps: Option<usize>,
    k_rec: Option<usize>,
    k_reg: Option<usize>,
}

impl Knobs {
    fn config(&self) -> Result<TraversalConfig, ApiError> {
        let d = TraversalConfig::default();
        let cfg = TraversalConfig {
            lambda: self.lambda.unwrap_or(d.lambda),
            rho: self.rho.unwrap_or(d.rho),
            max_steps: self.steps.unwrap_or(d.max_steps),
            k_rec: self.k_rec.unwrap_or(d.k_rec),
            k_reg: self.k_reg.unwrap_or(d.k_reg),
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Deserialize)]
struct TraverseReq {
    seed_id: String,
    #[serde(flatten)]
    direction: DirectionArg,
    #[serde(flatten)]
    knobs: Knobs,
}

async fn traverse_handler(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let e = s.engine()?;
    let req: TraverseReq = parse(&body)?;
    let cfg = req.knobs.config()?;
    let d = req.direction.resolve(e)?;
    let path = traverse(&req.seed_id, &d, &e.index, &cfg)?;
    Ok(Json(path.to_json_value(true)))
}

#[derive(Deserialize)]
struct StepReq {
    position: Vec<f32>,
    #[serde(flatten)]
    direction: DirectionArg,
    #[serde(flatten)]
    knobs: Knobs,
    #[serde(default)]
    exclude: Vec<String>,
}

async fn step_handler(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let e = s.engine()?;
    let req: StepReq = parse(&body)?;
    let cfg = req.knobs.config()?;
    let d = req.direction.resolve(e)?;
    let position = vector(req.position, "position")?;
    if position.dim() != e.index.dim() {
        return Err(Error::DimMismatch {
            expected: e.index.dim(),
            found: position.dim(),
        }
        .into());
    }
    let exclude: HashSet<String> = req.exclude.into_iter().collect();
    let out = advance(&position, &d.v_c, &e.index, &cfg, &exclude)?;
    Ok(Json(json!({
        "position": out.step.position,
        "recommendations": out.step.recommendations,
        "drift": out.step.drift,
        "exhausted": out.exhausted,
    })))
}

#[derive(Deserialize)]
struct ProjectReq {
    /// Defaults to the whole catalog.
    ids: Option<Vec<String>>,
    #[serde(default)]
    path: Vec<Vec<f32>>,
}

async fn project(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let e = s.engine()?;
    let req: ProjectReq = parse(&body)?;
    let products = e.index.catalog().products();
    let ids: Vec<String> = match req.ids {
        Some(ids) => ids,
        None => products.iter().map(|p| p.id.clone()).collect(),
    };
    let points = ids
        .iter()
        .map(|id| {
            e.index
                .row_of(id)
                .map(|r| products[r].image_vec.clone())
                .ok_or_else(|| Error::UnknownProduct(id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let path = req
        .path
        .into_iter()
        .map(|v| vector(v, "path position"))
        .collect::<Result<Vec<_>, _>>()?;
    let p = project_2d(&points, Some(&path))?;
    let items: Vec<Value> = ids
        .iter()
        .zip(&p.points)
        .map(|(id, xy)| json!({ "id": id, "x": xy[0], "y": xy[1] }))
        .collect();
    Ok(Json(json!({
        "points": items,
        "path": p.path,
        "explained_variance": p.explained_variance,
    })))
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub port: u16,
    pub catalog: PathBuf,
    pub prompts: Option<PathBuf>,
}

fn load_engine(opts: &ServeOptions) -> crate::Result<Engine> {
    let catalog = load_catalog(&opts.catalog)?;
    let bank = match &opts.prompts {
        Some(p) => load_prompt_bank(p)?,
        None => PromptBank::new(),
    };
    Engine::new(KnnIndex::new(catalog), bank)
}

/// Binds, starts loading the catalog in the background, and serves until
/// interrupted. A failed load ends the process.
pub async fn serve(opts: ServeOptions) -> anyhow::Result<()> {
    let state = AppState::pending();
    let addr = SocketAddr::from(([0, 0, 0, 0], opts.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");

    let loader = state.clone();
    tokio::task::spawn_blocking(move || match load_engine(&opts) {
        Ok(engine) => {
            tracing::info!(
                products = engine.index.len(),
                prompts = engine.bank.len(),
                "catalog ready"
            );
            loader.set(engine);
        }
        Err(e) => {
            tracing::error!("{}: {e}", e.code());
            eprintln!("{}: {e}", e.code());
            std::process::exit(1);
        }
    });

    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
