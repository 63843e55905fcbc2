//! HTTP service over a corpus directory for the annotation UI.
//!
//! Layout served: `<corpus>/<id>/frames/<k>.png`, `<corpus>/<id>/<dim>.ann`,
//! `<corpus>/<id>/merged.txt`, `<corpus>/predictions/<id>.csv` and an
//! optional `<corpus>/meta.csv`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::Context as _;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use vaseq::corpus::{read_merged, read_meta, AnnotationTrack, Dimension, MergedRow};

use crate::ServeArgs;

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        Self(StatusCode::BAD_REQUEST, msg.into())
    }

    fn not_found(msg: impl Into<String>) -> Self {
        Self(StatusCode::NOT_FOUND, msg.into())
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Corpus {
    root: PathBuf,
    /// Serializes annotation writes per video.
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl Corpus {
    /// Resolves a video id to its directory; ids are single path components
    /// of `[A-Za-z0-9_.-]` that do not start with a dot.
    fn video_dir(&self, id: &str) -> ApiResult<PathBuf> {
        let valid = !id.is_empty()
            && !id.starts_with('.')
            && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
        if !valid {
            return Err(ApiError::bad_request(format!("invalid video id {id:?}")));
        }
        let dir = self.root.join(id);
        if !dir.is_dir() {
            return Err(ApiError::not_found(format!("no video {id}")));
        }
        Ok(dir)
    }

    fn lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.locks.lock().expect("lock table poisoned").entry(id.to_string()).or_default().clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub id: String,
    pub frames: usize,
    pub fps: f64,
    pub annotated_dims: Vec<Dimension>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub v: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub k: u64,
    pub valence: f64,
    pub arousal: f64,
}

const DIMS: [Dimension; 2] = [Dimension::Valence, Dimension::Arousal];

fn annotated(dir: &Path) -> Vec<Dimension> {
    DIMS.into_iter().filter(|d| dir.join(format!("{}.ann", d.name())).is_file()).collect()
}

fn count_frames(dir: &Path) -> usize {
    fs::read_dir(dir.join("frames"))
        .map(|it| it.filter_map(|e| e.ok()).filter(|e| e.path().extension().is_some_and(|x| x == "png")).count())
        .unwrap_or(0)
}

async fn list_videos(State(corpus): State<Arc<Corpus>>) -> ApiResult<Json<Vec<VideoInfo>>> {
    let meta = corpus.root.join("meta.csv");
    let mut videos = Vec::new();
    if meta.is_file() {
        for m in read_meta(&meta).map_err(ApiError::internal)? {
            let dir = corpus.root.join(&m.id);
            videos.push(VideoInfo { annotated_dims: annotated(&dir), id: m.id, frames: m.frames, fps: m.fps });
        }
    } else {
        let mut dirs: Vec<PathBuf> = fs::read_dir(&corpus.root)
            .map_err(ApiError::internal)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("frames").is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let id = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            videos.push(VideoInfo { frames: count_frames(&dir), fps: 30.0, annotated_dims: annotated(&dir), id });
        }
    }
    Ok(Json(videos))
}

async fn frame(State(corpus): State<Arc<Corpus>>, UrlPath((id, k)): UrlPath<(String, u64)>) -> ApiResult<Response> {
    let path = corpus.video_dir(&id)?.join("frames").join(format!("{k}.png"));
    let bytes = fs::read(&path).map_err(|_| ApiError::not_found(format!("no frame {k} in {id}")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn post_annotation(
    State(corpus): State<Arc<Corpus>>,
    UrlPath((id, dim)): UrlPath<(String, String)>,
    Json(samples): Json<Vec<Sample>>,
) -> ApiResult<StatusCode> {
    let dir = corpus.video_dir(&id)?;
    let dim = Dimension::parse(&dim).ok_or_else(|| ApiError::bad_request(format!("unknown dimension {dim:?}")))?;
    if samples.is_empty() {
        return Err(ApiError::bad_request("empty annotation track"));
    }
    let track = AnnotationTrack::new(dim, samples.iter().map(|s| (s.t, s.v)).collect())
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let lock = corpus.lock(&id);
    let _guard = lock.lock().await;
    let name = format!("{}.ann", dim.name());
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, track.to_text()).map_err(ApiError::internal)?;
    fs::rename(&tmp, dir.join(&name)).map_err(ApiError::internal)?;
    Ok(StatusCode::NO_CONTENT)
}

fn parse_predictions(text: &str) -> Result<Vec<PredictionRow>, String> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let row = || match f[..] {
                [k, v, a] => Some(PredictionRow { k: k.parse().ok()?, valence: v.parse().ok()?, arousal: a.parse().ok()? }),
                _ => None,
            };
            row().ok_or_else(|| format!("line {}: expected k,valence,arousal", i + 2))
        })
        .collect()
}

async fn predictions(State(corpus): State<Arc<Corpus>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Vec<PredictionRow>>> {
    corpus.video_dir(&id)?;
    let path = corpus.root.join("predictions").join(format!("{id}.csv"));
    let text = fs::read_to_string(&path).map_err(|_| ApiError::not_found(format!("no predictions for {id}")))?;
    parse_predictions(&text).map(Json).map_err(ApiError::internal)
}

async fn groundtruth(State(corpus): State<Arc<Corpus>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Vec<MergedRow>>> {
    let path = corpus.video_dir(&id)?.join("merged.txt");
    if !path.is_file() {
        return Err(ApiError::not_found(format!("no merged labels for {id}")));
    }
    read_merged(&path).map(Json).map_err(ApiError::internal)
}

pub fn router(root: PathBuf) -> Router {
    let corpus = Arc::new(Corpus { root, locks: Mutex::new(HashMap::new()) });
    Router::new()
        .route("/videos", get(list_videos))
        .route("/videos/{id}/frames/{k}", get(frame))
        .route("/videos/{id}/annotations/{dim}", post(post_annotation))
        .route("/videos/{id}/predictions", get(predictions))
        .route("/videos/{id}/groundtruth", get(groundtruth))
        .with_state(corpus)
}

pub fn run(args: ServeArgs) -> anyhow::Result<()> {
    let root = args.corpus_dir.canonicalize().with_context(|| format!("{} is not a directory", args.corpus_dir.display()))?;
    anyhow::ensure!(root.is_dir(), "{} is not a directory", root.display());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .with_context(|| format!("binding {}:{}", args.host, args.port))?;
        log::info!("serving {} on {}", root.display(), listener.local_addr()?);
        axum::serve(listener, router(root)).await?;
        Ok(())
    })
}
