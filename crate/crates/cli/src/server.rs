//! HTTP JSON service under `/api`.
//!
//! Reads run against an immutable [`Snapshot`] taken at the start of the
//! request. Builds run one at a time per cuboid and publish a new snapshot
//! when they finish; the last one to finish wins.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use clustcube_core::cube::{AggregateMode, ClustCube, CubeContext};
use clustcube_core::star::StarData;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use crate::error::AppError;
use crate::views;
use crate::workspace::{
    base_config, build_cube, check_definition, cube_document, materialize, BuildParams, CuboidDef, Workspace,
};
use crate::ENGINE_VERSION;

pub const SESSION_TTL: Duration = Duration::from_secs(12 * 3600);
const DATABASE_LABEL: &str = "TourismDB";
const CUBE_LABEL: &str = "TourismDC";

/// Immutable view of everything the service can answer from.
#[derive(Clone)]
pub struct Snapshot {
    pub id: u64,
    pub data: Arc<StarData>,
    pub defs: BTreeMap<String, Arc<CuboidDef>>,
    pub contexts: BTreeMap<String, Arc<CubeContext>>,
    pub cubes: BTreeMap<String, Arc<ClustCube>>,
}

impl Snapshot {
    fn def(&self, name: &str) -> Result<&Arc<CuboidDef>, AppError> {
        self.defs
            .get(name)
            .ok_or_else(|| AppError::UnknownCuboid(name.to_string()))
    }

    fn cube(&self, name: &str) -> Result<&Arc<ClustCube>, AppError> {
        self.def(name)?;
        self.cubes.get(name).ok_or_else(|| AppError::NotBuilt(name.to_string()))
    }
}

pub struct AppState {
    token: String,
    sessions: Mutex<HashMap<String, SystemTime>>,
    current: RwLock<Arc<Snapshot>>,
    next_id: Mutex<u64>,
    build_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    /// Materializes every definition of `ws` into the first snapshot.
    pub fn new(ws: Workspace, token: String) -> Result<Arc<AppState>, AppError> {
        let mut contexts = BTreeMap::new();
        for (name, def) in &ws.defs {
            contexts.insert(name.clone(), materialize(def, &ws.data)?);
        }
        let snapshot = Snapshot {
            id: 1,
            data: Arc::clone(&ws.data),
            defs: ws.defs.into_iter().map(|(n, d)| (n, Arc::new(d))).collect(),
            contexts,
            cubes: BTreeMap::new(),
        };
        Ok(Arc::new(AppState {
            token,
            sessions: Mutex::new(HashMap::new()),
            current: RwLock::new(Arc::new(snapshot)),
            next_id: Mutex::new(2),
            build_locks: Mutex::new(HashMap::new()),
        }))
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.current.read().expect("snapshot lock"))
    }

    /// Applies `change` to the latest snapshot and publishes the result.
    fn publish(&self, change: impl FnOnce(&mut Snapshot)) -> Arc<Snapshot> {
        let mut current = self.current.write().expect("snapshot lock");
        let mut next = Snapshot::clone(&current);
        change(&mut next);
        let mut id = self.next_id.lock().expect("id lock");
        next.id = *id;
        *id += 1;
        let next = Arc::new(next);
        *current = Arc::clone(&next);
        next
    }

    /// The lock serializing mutations of cuboid `name`.
    pub fn build_lock(&self, name: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.build_locks.lock().expect("lock table");
        Arc::clone(locks.entry(name.to_string()).or_default())
    }

    fn authorized(&self, bearer: &str) -> bool {
        if bearer == self.token {
            return true;
        }
        let mut sessions = self.sessions.lock().expect("session lock");
        let now = SystemTime::now();
        sessions.retain(|_, expiry| *expiry > now);
        sessions.contains_key(bearer)
    }
}

fn random_token() -> String {
    format!("{:032x}", rand::random::<u128>())
}

/// JSON body with the engine version and snapshot id attached.
fn reply(status: StatusCode, snapshot: u64, body: serde_json::Value) -> Response {
    let mut body = match body {
        serde_json::Value::Object(m) => serde_json::Value::Object(m),
        other => json!({ "data": other }),
    };
    body["engine_version"] = ENGINE_VERSION.into();
    body["snapshot"] = snapshot.into();
    let mut resp = (status, axum::Json(body)).into_response();
    resp.headers_mut().insert(
        "x-snapshot-id",
        HeaderValue::from_str(&snapshot.to_string()).expect("digits"),
    );
    resp
}

struct ApiError {
    error: AppError,
    snapshot: u64,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.error {
            AppError::BadRequest(_) => StatusCode::BAD_REQUEST,
            AppError::Unauthorized => StatusCode::UNAUTHORIZED,
            AppError::Busy(_) => StatusCode::CONFLICT,
            e if e.is_not_found() => StatusCode::NOT_FOUND,
            AppError::Io { .. } | AppError::Document { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        reply(status, self.snapshot, json!({ "error": self.error.to_string() }))
    }
}

type ApiResult = Result<Response, ApiError>;

fn fail(snapshot: &Snapshot) -> impl Fn(AppError) -> ApiError + '_ {
    move |error| ApiError {
        error,
        snapshot: snapshot.id,
    }
}

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, AppError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| AppError::BadRequest(format!("malformed request body: {e}")))
}

pub fn router(state: Arc<AppState>) -> Router {
    let protected = Router::new()
        .route("/tree", get(tree))
        .route("/cuboids", get(list_cuboids))
        .route("/cuboids/{name}/build", post(build))
        .route("/cuboids/{name}/cells", get(cells))
        .route("/cuboids/{name}/cluster", post(cluster))
        .route("/cuboids/{name}/regress", post(regress))
        .route("/cuboids/{name}/rollup", post(rollup))
        .route("/export/{name}", get(export))
        .route_layer(middleware::from_fn_with_state(Arc::clone(&state), require_token));
    let api = Router::new().route("/login", post(login)).merge(protected);
    Router::new().nest("/api", api).with_state(state)
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let bearer = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    match bearer {
        Some(t) if state.authorized(t) => next.run(req).await,
        _ => ApiError {
            error: AppError::Unauthorized,
            snapshot: state.snapshot().id,
        }
        .into_response(),
    }
}

#[derive(Debug, Default, Deserialize)]
struct LoginRequest {
    token: Option<String>,
}

async fn login(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let snap = state.snapshot();
    let req: LoginRequest = parse_body(&body).map_err(fail(&snap))?;
    match req.token {
        Some(t) if t == state.token => {}
        Some(_) => return Err(fail(&snap)(AppError::Unauthorized)),
        None => return Err(fail(&snap)(AppError::BadRequest("`token` is required".into()))),
    }
    let session = random_token();
    let expiry = SystemTime::now() + SESSION_TTL;
    state
        .sessions
        .lock()
        .expect("session lock")
        .insert(session.clone(), expiry);
    let expires = expiry.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    Ok(reply(
        StatusCode::OK,
        snap.id,
        json!({ "session": session, "expires": expires }),
    ))
}

fn node(label: &str, kind: &str, children: Vec<serde_json::Value>) -> serde_json::Value {
    json!({ "label": label, "kind": kind, "children": children })
}

async fn tree(State(state): State<Arc<AppState>>) -> ApiResult {
    let snap = state.snapshot();
    let schema = &snap.data.schema;
    let tables = schema.tables.iter().map(|t| node(&t.name, "table", vec![])).collect();
    let measures = schema.measures.iter().map(|m| node(m, "measures", vec![])).collect();
    let dimensions = schema
        .dimensions
        .iter()
        .map(|d| node(&d.table, "dimensions", vec![]))
        .collect();
    let mut cube_children = vec![
        node("Measures", "measures", measures),
        node("Dimensions", "dimensions", dimensions),
    ];
    cube_children.extend(snap.defs.keys().map(|n| node(n, "cuboid", vec![])));
    let roots = vec![
        node(DATABASE_LABEL, "database", tables),
        node(CUBE_LABEL, "cube", cube_children),
    ];
    Ok(reply(StatusCode::OK, snap.id, json!({ "roots": roots })))
}

async fn list_cuboids(State(state): State<Arc<AppState>>) -> ApiResult {
    let snap = state.snapshot();
    let rows: Vec<_> = snap
        .defs
        .values()
        .map(|d| {
            let cube = snap.cubes.get(&d.name);
            json!({
                "name": d.name,
                "preset": d.preset,
                "dimensions": d.dimensions,
                "default_cuboid": d.default_cuboid,
                "target": d.target,
                "built": cube.is_some(),
                "cuboid": cube.map(|c| c.cuboid_name()),
            })
        })
        .collect();
    Ok(reply(StatusCode::OK, snap.id, json!({ "cuboids": rows })))
}

#[derive(Debug, Default, Deserialize)]
struct WaitQuery {
    wait: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildRequest {
    #[serde(flatten)]
    params: BuildParams,
}

/// Defines a user cuboid when the body carries `codq`.
#[derive(Debug, Default, Deserialize)]
struct DefineFields {
    codq: Option<String>,
}

enum Derive<'a> {
    /// Build from the definition's defaults, overridden by the params.
    Fresh,
    /// Rebuild from the current cube's setup, overridden by the params.
    FromCurrent,
    RollUp {
        dim: &'a str,
        mode: AggregateMode,
    },
}

/// Runs one mutation of cuboid `name` under its build lock and publishes the
/// resulting cube.
async fn mutate(
    state: &Arc<AppState>,
    name: &str,
    wait: bool,
    new_def: Option<CuboidDef>,
    params: BuildParams,
    how: Derive<'_>,
) -> Result<(Arc<Snapshot>, Arc<ClustCube>), ApiError> {
    let snap = state.snapshot();
    if new_def.is_none() {
        snap.def(name).map_err(fail(&snap))?;
    }
    let lock = state.build_lock(name);
    let _guard = if wait {
        lock.lock_owned().await
    } else {
        lock.try_lock_owned()
            .map_err(|_| fail(&snap)(AppError::Busy(name.to_string())))?
    };
    // Start from whatever the previous build of this cuboid published.
    let snap = state.snapshot();
    let roll = match how {
        Derive::RollUp { dim, mode } => Some((dim.to_string(), mode)),
        _ => None,
    };
    let from_current = matches!(how, Derive::FromCurrent | Derive::RollUp { .. });
    let work_snap = Arc::clone(&snap);
    let name_owned = name.to_string();
    let result = tokio::task::spawn_blocking(move || -> Result<_, AppError> {
        let snap = work_snap;
        let (def, ctx) = match new_def {
            Some(def) => {
                check_definition(&def, &snap.data)?;
                if snap.defs.get(&def.name).is_some_and(|d| d.preset) {
                    return Err(AppError::BadRequest(format!(
                        "`{}` is a preset and cannot be redefined",
                        def.name
                    )));
                }
                let ctx = materialize(&def, &snap.data)?;
                (Arc::new(def), ctx)
            }
            None => (
                Arc::clone(snap.def(&name_owned)?),
                Arc::clone(&snap.contexts[&name_owned]),
            ),
        };
        let current = snap.cubes.get(&name_owned).filter(|_| from_current);
        if roll.is_some() && current.is_none() {
            return Err(AppError::NotBuilt(name_owned));
        }
        let cube = match (&roll, current) {
            (Some((dim, mode)), Some(cube)) => cube.roll_up(dim, *mode)?,
            (_, Some(cube)) => build_cube(&def, &ctx, cube.config.clone(), &params, Some(&cube.cuboid_name()))?,
            (_, None) => build_cube(&def, &ctx, base_config(&def), &params, None)?,
        };
        Ok((def, ctx, cube))
    })
    .await
    .expect("build task does not panic");
    let (def, ctx, cube) = result.map_err(fail(&snap))?;
    let cube = Arc::new(cube);
    let published = state.publish(|s| {
        s.defs.insert(def.name.clone(), def);
        s.contexts.insert(name.to_string(), ctx);
        s.cubes.insert(name.to_string(), Arc::clone(&cube));
    });
    Ok((published, cube))
}

async fn build(
    State(state): State<Arc<AppState>>,
    Path(name): Path<String>,
    Query(q): Query<WaitQuery>,
    body: Bytes,
) -> ApiResult {
    let snap = state.snapshot();
    let define: DefineFields = parse_body::<serde_json::Value>(&body)
        .and_then(|v| {
            serde_json::from_value(v).map_err(|e| AppError::BadRequest(format!("malformed request body: {e}")))
        })
        .map_err(fail(&snap))?;
    let params = match define.codq {
        None => parse_body::<BuildRequest>(&body).map_err(fail(&snap))?.params,
        Some(_) => {
            let mut v: serde_json::Value = parse_body(&body).map_err(fail(&snap))?;
            v.as_object_mut().map(|m| m.remove("codq"));
            serde_json::from_value::<BuildRequest>(v)
                .map_err(|e| fail(&snap)(AppError::BadRequest(format!("malformed request body: {e}"))))?
                .params
        }
    };
    let new_def = define.codq.map(|codq| CuboidDef {
        name: name.clone(),
        codq,
        default_cuboid: params.at.clone().unwrap_or_default(),
        default_k: 3,
        target: None,
        dimensions: Vec::new(),
        preset: false,
    });
    let (published, cube) = mutate(&state, &name, q.wait.unwrap_or(true), new_def, params, Derive::Fresh).await?;
    let body = json!({
        "name": name,
        "cuboid": cube.cuboid_name(),
        "cells": cube.cells.len(),
        "object_count": cube.object_count(),
        "placed_count": cube.placed_count(),
        "unplaced_count": cube.unplaced.len(),
        "config": cube.config,
    });
    Ok(reply(StatusCode::OK, published.id, body))
}

async fn cells(
    State(state): State<Arc<AppState>>,
    Path(name): Path<String>,
    Query(query): Query<Vec<(String, String)>>,
) -> ApiResult {
    let snap = state.snapshot();
    let cube = snap.cube(&name).map_err(fail(&snap))?;
    let mut slices = Vec::new();
    for (k, v) in query {
        match k.as_str() {
            "slice" => slices.push(v),
            other => {
                return Err(fail(&snap)(AppError::BadRequest(format!(
                    "unknown query parameter `{other}`"
                ))))
            }
        }
    }
    let filters = views::parse_slices(&slices).map_err(fail(&snap))?;
    let view = cube.dice(&filters).map_err(|e| fail(&snap)(e.into()))?;
    let mut body = views::cells(&view);
    body["name"] = name.into();
    Ok(reply(StatusCode::OK, snap.id, body))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterRequest {
    k: Option<usize>,
    seed: Option<u64>,
    max_iter: Option<usize>,
    min_cell_size: Option<usize>,
}

async fn cluster(
    State(state): State<Arc<AppState>>,
    Path(name): Path<String>,
    Query(q): Query<WaitQuery>,
    body: Bytes,
) -> ApiResult {
    let snap = state.snapshot();
    let req: ClusterRequest = parse_body(&body).map_err(fail(&snap))?;
    let params = BuildParams {
        k: req.k,
        seed: req.seed,
        max_iter: req.max_iter,
        min_cell_size: req.min_cell_size,
        ..BuildParams::default()
    };
    let (published, cube) = mutate(&state, &name, q.wait.unwrap_or(true), None, params, Derive::FromCurrent).await?;
    let mut body = views::clustering(&cube).map_err(fail(&published))?;
    body["name"] = name.into();
    Ok(reply(StatusCode::OK, published.id, body))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegressRequest {
    target: Option<String>,
    lambda: Option<f64>,
    sigma: Option<f64>,
}

async fn regress(
    State(state): State<Arc<AppState>>,
    Path(name): Path<String>,
    Query(q): Query<WaitQuery>,
    body: Bytes,
) -> ApiResult {
    let snap = state.snapshot();
    let req: RegressRequest = parse_body(&body).map_err(fail(&snap))?;
    let params = BuildParams {
        target: req.target,
        lambda: req.lambda,
        ..BuildParams::default()
    };
    let (published, cube) = mutate(&state, &name, q.wait.unwrap_or(true), None, params, Derive::FromCurrent).await?;
    let mut body = views::regression(&cube, req.sigma).map_err(fail(&published))?;
    body["name"] = name.into();
    Ok(reply(StatusCode::OK, published.id, body))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RollupRequest {
    dim: Option<String>,
    mode: Option<AggregateMode>,
}

async fn rollup(
    State(state): State<Arc<AppState>>,
    Path(name): Path<String>,
    Query(q): Query<WaitQuery>,
    body: Bytes,
) -> ApiResult {
    let snap = state.snapshot();
    let req: RollupRequest = parse_body(&body).map_err(fail(&snap))?;
    let dim = req
        .dim
        .ok_or_else(|| fail(&snap)(AppError::BadRequest("`dim` is required".into())))?;
    let how = Derive::RollUp {
        dim: &dim,
        mode: req.mode.unwrap_or(AggregateMode::Recluster),
    };
    let (published, cube) = mutate(&state, &name, q.wait.unwrap_or(true), None, BuildParams::default(), how).await?;
    let mut body = views::regression(&cube, None).map_err(fail(&published))?;
    body["name"] = name.into();
    body["cells_summary"] = views::cells(&cube)["cells"].clone();
    Ok(reply(StatusCode::OK, published.id, body))
}

async fn export(State(state): State<Arc<AppState>>, Path(name): Path<String>) -> ApiResult {
    let snap = state.snapshot();
    let cube = snap.cube(&name).map_err(fail(&snap))?;
    Ok(reply(StatusCode::OK, snap.id, cube_document(&name, cube)))
}

/// Serves until interrupted.
pub async fn serve(ws: Workspace, bind: SocketAddr, token: Option<String>) -> Result<(), AppError> {
    let token = match token {
        Some(t) if !t.is_empty() => t,
        _ => {
            let t = random_token();
            println!("auth token: {t}");
            t
        }
    };
    let state = AppState::new(ws, token)?;
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|e| AppError::io(bind.to_string(), e))?;
    println!(
        "listening on http://{}",
        listener.local_addr().map_err(|e| AppError::io(bind.to_string(), e))?
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| AppError::io(bind.to_string(), e))
}
