use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::Engine as _;
use lorlut_core::io::{read_image, read_model, write_cube};
use lorlut_core::optim::{fit_image_pair, FitConfig};
use lorlut_core::{component_curves, ComponentScales, ImageBuffer, Psnr};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::error::ApiError;
use crate::session::{AppState, Edit, Session, SCALE_LIMIT};

/// Title line written into exported `.cube` files.
const CUBE_TITLE: &str = "lorlut";

pub fn router(state: AppState) -> Router {
    let cfg = state.config();
    let origin = match &cfg.cors_origin {
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o).unwrap_or(HeaderValue::from_static("null"))),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST, Method::PUT, Method::OPTIONS])
        .allow_headers([header::CONTENT_TYPE]);
    let limit = DefaultBodyLimit::max(cfg.max_body_bytes);
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/scales", put(put_scales))
        .route("/v1/sessions/{id}/preview", get(preview))
        .route("/v1/sessions/{id}/factors", get(factors))
        .route("/v1/sessions/{id}/lut/slice", get(lut_slice))
        .route("/v1/sessions/{id}/fit", post(fit))
        .route("/v1/sessions/{id}/export.cube", get(export_cube))
        .layer(limit)
        .layer(cors)
        .with_state(state)
}

fn parse_json<'a, T: Deserialize<'a>>(body: &'a [u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn decode_image(b64: &str) -> Result<ImageBuffer, ApiError> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(b64.trim())
        .map_err(|e| ApiError::bad_request(format!("image is not valid base64: {e}")))?;
    read_image(&bytes).map_err(|e| ApiError::bad_request(format!("undecodable image: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    version: &'static str,
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok",
        version: env!("CARGO_PKG_VERSION"),
    })
}

#[derive(Deserialize)]
struct CreateSession {
    /// Base64 PNG or P6 bytes.
    image: String,
    /// Model file text.
    #[serde(default)]
    model: Option<String>,
}

#[derive(Serialize)]
struct SessionInfo {
    id: String,
    width: usize,
    height: usize,
    grid_size: usize,
    basis_count: usize,
    rank: usize,
    scales: Vec<f64>,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = parse_json(&body)?;
    let (source, model) = blocking({
        let state = state.clone();
        move || {
            let source = decode_image(&req.image)?;
            let model = match req.model {
                Some(text) => read_model(&text).map_err(|e| ApiError::bad_request(format!("undecodable model: {e}")))?,
                None => state.default_model().clone(),
            };
            Ok((source, model))
        }
    })
    .await?;
    let (width, height) = source.dims();
    let (grid_size, basis_count, rank) = (model.grid_size, model.basis_count(), model.rank());
    let (id, _) = state.create(source, model)?;
    let info = SessionInfo {
        id,
        width,
        height,
        grid_size,
        basis_count,
        rank,
        scales: vec![1.0; rank],
    };
    Ok((StatusCode::CREATED, Json(info)).into_response())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScalesBody {
    Wrapped { scales: Vec<f64> },
    Bare(Vec<f64>),
}

#[derive(Serialize)]
struct ScalesReply {
    scales: Vec<f64>,
}

async fn put_scales(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<ScalesReply>, ApiError> {
    let session = state.get(&id)?;
    let scales = match parse_json::<ScalesBody>(&body)? {
        ScalesBody::Wrapped { scales } | ScalesBody::Bare(scales) => scales,
    };
    let mut edit = session.edit.write().expect("session lock poisoned");
    let rank = edit.model.rank();
    if scales.len() != rank {
        return Err(ApiError::unprocessable(format!("expected {rank} scales, got {}", scales.len())));
    }
    if let Some(bad) = scales.iter().find(|s| !(-SCALE_LIMIT..=SCALE_LIMIT).contains(*s)) {
        return Err(ApiError::unprocessable(format!(
            "scale {bad} outside [-{SCALE_LIMIT}, {SCALE_LIMIT}]"
        )));
    }
    edit.scales = ComponentScales::new(scales.clone())?;
    Ok(Json(ScalesReply { scales }))
}

async fn preview(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = state.get(&id)?;
    let png = blocking(move || session.preview_png()).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png.as_ref().clone()).into_response())
}

#[derive(Serialize)]
struct FactorEntry {
    index: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    c: [f64; 3],
    magnitude: f64,
    scale: f64,
}

#[derive(Serialize)]
struct FactorsReply {
    grid_size: usize,
    rank: usize,
    components: Vec<FactorEntry>,
}

async fn factors(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<FactorsReply>, ApiError> {
    let session = state.get(&id)?;
    let edit = session.edit.read().expect("session lock poisoned");
    let components = (0..edit.model.rank())
        .map(|r| {
            let curves = component_curves(&edit.model.factors, r)?;
            Ok(FactorEntry {
                index: r,
                u: curves.u,
                v: curves.v,
                w: curves.w,
                c: curves.c,
                magnitude: curves.magnitude,
                scale: edit.scales.as_slice()[r],
            })
        })
        .collect::<Result<_, ApiError>>()?;
    Ok(Json(FactorsReply {
        grid_size: edit.model.grid_size,
        rank: edit.model.rank(),
        components,
    }))
}

#[derive(Serialize)]
struct SliceReply {
    axis: char,
    index: usize,
    grid_size: usize,
    /// `values[a][b]` holds the entry whose two free lattice indices are
    /// `(a, b)` in r, g, b order with the fixed axis removed.
    values: Vec<Vec<[f64; 3]>>,
}

async fn lut_slice(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Json<SliceReply>, ApiError> {
    let session = state.get(&id)?;
    let axis = match query.get("axis").map(String::as_str) {
        Some("r") => 'r',
        Some("g") => 'g',
        Some("b") => 'b',
        other => return Err(ApiError::unprocessable(format!("axis must be r, g or b, got {other:?}"))),
    };
    let lut = session.edit.read().expect("session lock poisoned").lut()?;
    let g = lut.size();
    let index = query
        .get("index")
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&i| i < g)
        .ok_or_else(|| ApiError::unprocessable(format!("index must be an integer in [0, {g})")))?;
    let values = (0..g)
        .map(|a| {
            (0..g)
                .map(|b| {
                    let e = match axis {
                        'r' => lut.entry(index, a, b),
                        'g' => lut.entry(a, index, b),
                        _ => lut.entry(a, b, index),
                    };
                    e.clamp01().to_array()
                })
                .collect()
        })
        .collect();
    Ok(Json(SliceReply {
        axis,
        index,
        grid_size: g,
        values,
    }))
}

#[derive(Deserialize)]
struct FitRequest {
    /// Base64 PNG or P6 bytes, same size as the session source.
    target: String,
    steps: Option<usize>,
    rank: Option<usize>,
    bases: Option<usize>,
    grid: Option<usize>,
    seed: Option<u64>,
    base_lr: Option<f64>,
}

#[derive(Serialize)]
struct FitReply {
    steps: usize,
    grid_size: usize,
    basis_count: usize,
    rank: usize,
    final_loss: f64,
    /// `null` when the fitted output matches the target exactly.
    psnr: Option<f64>,
    ssim: Option<f64>,
    mean_delta_e00: f64,
    duration_ms: f64,
}

async fn fit(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<FitReply>, ApiError> {
    let session: Arc<Session> = state.get(&id)?;
    let req: FitRequest = parse_json(&body)?;
    let guard = session
        .try_start_fit()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "a fit is already running for this session"))?;
    let defaults = FitConfig::default();
    let cap = state.config().max_fit_steps;
    let config = FitConfig {
        steps: req.steps.unwrap_or(cap).min(cap),
        rank: req.rank.unwrap_or(defaults.rank),
        bases: req.bases.unwrap_or(defaults.bases),
        grid: req.grid.unwrap_or(session.edit.read().expect("session lock poisoned").model.grid_size),
        seed: req.seed.unwrap_or(defaults.seed),
        base_lr: req.base_lr.unwrap_or(defaults.base_lr),
        ..defaults
    };
    config.validate()?;
    let worker = session.clone();
    let (model, report) = blocking(move || {
        let target = decode_image(&req.target)?;
        Ok(fit_image_pair(&worker.source, &target, &config)?)
    })
    .await?;
    let reply = FitReply {
        steps: report.steps,
        grid_size: model.grid_size,
        basis_count: model.basis_count(),
        rank: model.rank(),
        final_loss: report.final_metrics.loss,
        psnr: match report.final_metrics.psnr {
            Psnr::Finite(v) => Some(v),
            Psnr::Infinite => None,
        },
        ssim: report.final_metrics.ssim,
        mean_delta_e00: report.final_metrics.mean_delta_e00,
        duration_ms: report.duration_ms,
    };
    *session.edit.write().expect("session lock poisoned") = Edit::new(model);
    drop(guard);
    Ok(Json(reply))
}

async fn export_cube(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = state.get(&id)?;
    let lut = session.edit.read().expect("session lock poisoned").lut()?;
    let text = write_cube(&lut, CUBE_TITLE);
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}
