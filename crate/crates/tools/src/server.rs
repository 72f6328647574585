//! HTTP rating service for the reader trial.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lesion_core::agreement::{check_rating, LesionKey, RatingRecord};
use lesion_core::rng::{derive_seed, seeded, shuffle};
use lesion_core::trial::{schedule_trial, TrialSchedule};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, ModuleContext, Result};
use crate::ledger::{read_ledger, LedgerEntry, LedgerWriter};
use crate::panels::{bundle_dir_name, PanelBundle, PanelIndex, BUNDLE_FILE, INDEX_FILE};
use crate::pipeline::{artifacts, stage_seed, Stage};
use crate::tables::read_json;

/// Lesions presented in the trial: all panelled lesions, or a seeded subset.
pub fn trial_lesions(index: &PanelIndex, limit: Option<usize>, seed: u64) -> Vec<LesionKey> {
    let mut lesions = index.lesions.clone();
    if let Some(k) = limit.filter(|&k| k < lesions.len()) {
        shuffle(&mut seeded(derive_seed(seed, 0)), &mut lesions);
        lesions.truncate(k);
        lesions.sort();
    }
    lesions
}

struct RaterState {
    schedule: TrialSchedule,
    rated: BTreeSet<String>,
}

impl RaterState {
    fn next_index(&self) -> Option<usize> {
        self.schedule.cases.iter().position(|c| !self.rated.contains(&c.case_id))
    }

    fn progress(&self) -> Progress {
        Progress {
            completed: self.rated.len(),
            total: self.schedule.len(),
        }
    }
}

struct Inner {
    raters: BTreeMap<String, RaterState>,
    writer: LedgerWriter,
}

pub struct TrialService {
    panels_dir: PathBuf,
    lesions: Vec<LesionKey>,
    bundles: Vec<PanelBundle>,
    /// Case id to lesion position, across all raters.
    cases: BTreeMap<String, usize>,
    inner: Mutex<Inner>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextCase {
    Case {
        case_id: String,
        image_urls: Vec<String>,
        score_lower: f64,
        score_upper: f64,
        progress: Progress,
    },
    Complete {
        progress: Progress,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRequest {
    pub case_id: String,
    pub segmentation_rating: u8,
    pub pc_rating: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingAccepted {
    pub case_id: String,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressResponse {
    pub rater_id: String,
    pub completed: usize,
    pub total: usize,
    pub complete: bool,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn unknown_rater(rater: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown rater {rater}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

impl TrialService {
    /// Schedules every configured rater over the rendered panels and replays
    /// the existing ledger.
    pub fn new(config: &RunConfig) -> Result<TrialService> {
        let panels_dir = config.output_dir.join(artifacts::PANELS);
        let index: PanelIndex = read_json(&panels_dir.join(INDEX_FILE))?;
        let seed = stage_seed(config.seed, Stage::Trial);
        let lesions = trial_lesions(&index, config.trial.lesions, seed);
        let bundles = lesions
            .iter()
            .map(|l| read_json(&panels_dir.join(bundle_dir_name(l)).join(BUNDLE_FILE)))
            .collect::<Result<Vec<PanelBundle>>>()?;

        let mut raters = BTreeMap::new();
        let mut cases = BTreeMap::new();
        for r in &config.trial.raters {
            let schedule = schedule_trial(r, lesions.len(), config.trial.repeats, seed).module("pipeline-cli")?;
            for c in &schedule.cases {
                cases.insert(c.case_id.clone(), c.lesion);
            }
            raters.insert(
                r.clone(),
                RaterState {
                    schedule,
                    rated: BTreeSet::new(),
                },
            );
        }
        let ledger = config.trial.ledger.clone();
        if ledger.exists() {
            for e in read_ledger(&ledger)? {
                if let Some(state) = raters.get_mut(&e.record.rater_id) {
                    state.rated.insert(e.record.case_id);
                }
            }
        }
        Ok(TrialService {
            panels_dir,
            lesions,
            bundles,
            cases,
            inner: Mutex::new(Inner {
                raters,
                writer: LedgerWriter::open(&ledger)?,
            }),
        })
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.lock().writer.path().to_path_buf()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn next(&self, rater: &str) -> ApiResult<NextCase> {
        let inner = self.lock();
        let state = inner.raters.get(rater).ok_or_else(|| ApiError::unknown_rater(rater))?;
        let progress = state.progress();
        Ok(match state.next_index() {
            None => NextCase::Complete { progress },
            Some(k) => {
                let case = &state.schedule.cases[k];
                let bundle = &self.bundles[case.lesion];
                NextCase::Case {
                    case_id: case.case_id.clone(),
                    image_urls: bundle
                        .images
                        .iter()
                        .map(|i| format!("/api/panels/{}/{}", case.case_id, i.file))
                        .collect(),
                    score_lower: bundle.score_lower,
                    score_upper: bundle.score_upper,
                    progress,
                }
            }
        })
    }

    pub fn progress(&self, rater: &str) -> ApiResult<ProgressResponse> {
        let inner = self.lock();
        let state = inner.raters.get(rater).ok_or_else(|| ApiError::unknown_rater(rater))?;
        let p = state.progress();
        Ok(ProgressResponse {
            rater_id: rater.into(),
            completed: p.completed,
            total: p.total,
            complete: p.completed == p.total,
        })
    }

    fn record(&self, rater: &str, state: &RaterState, req: &RatingRequest) -> ApiResult<RatingRecord> {
        let case = state
            .schedule
            .case(&req.case_id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown case {}", req.case_id)))?;
        for r in [req.segmentation_rating, req.pc_rating] {
            check_rating(r).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        }
        Ok(RatingRecord {
            rater_id: rater.into(),
            case_id: req.case_id.clone(),
            lesion: self.lesions[case.lesion].clone(),
            is_repeat: case.is_repeat,
            segmentation_rating: req.segmentation_rating,
            pc_rating: req.pc_rating,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        })
    }

    /// Accepts the rating of the rater's current case; the ledger entry is
    /// synced before returning.
    pub fn submit(&self, rater: &str, req: &RatingRequest) -> ApiResult<RatingAccepted> {
        let mut inner = self.lock();
        let Inner { raters, writer } = &mut *inner;
        let state = raters.get_mut(rater).ok_or_else(|| ApiError::unknown_rater(rater))?;
        let record = self.record(rater, state, req)?;
        if state.rated.contains(&req.case_id) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("case {} already rated; use the amend endpoint", req.case_id),
            ));
        }
        let expected = state.next_index().map(|k| state.schedule.cases[k].case_id.as_str());
        if expected != Some(req.case_id.as_str()) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("case {} is not the current case", req.case_id),
            ));
        }
        append(writer, record, false)?;
        state.rated.insert(req.case_id.clone());
        Ok(RatingAccepted {
            case_id: req.case_id.clone(),
            progress: state.progress(),
        })
    }

    /// Re-rates an already rated case; the original entry stays in the ledger.
    pub fn amend(&self, rater: &str, req: &RatingRequest) -> ApiResult<RatingAccepted> {
        let mut inner = self.lock();
        let Inner { raters, writer } = &mut *inner;
        let state = raters.get_mut(rater).ok_or_else(|| ApiError::unknown_rater(rater))?;
        let record = self.record(rater, state, req)?;
        if !state.rated.contains(&req.case_id) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("case {} has not been rated", req.case_id),
            ));
        }
        append(writer, record, true)?;
        Ok(RatingAccepted {
            case_id: req.case_id.clone(),
            progress: state.progress(),
        })
    }

    /// PNG bytes of one image of a case's bundle.
    pub fn image(&self, case_id: &str, file: &str) -> ApiResult<Vec<u8>> {
        let missing = || ApiError::new(StatusCode::NOT_FOUND, format!("no image {file} for case {case_id}"));
        let &lesion = self.cases.get(case_id).ok_or_else(missing)?;
        let bundle = &self.bundles[lesion];
        bundle.image(file).ok_or_else(missing)?;
        let path = self.panels_dir.join(bundle_dir_name(&bundle.lesion)).join(file);
        std::fs::read(&path).map_err(|_| missing())
    }
}

fn append(writer: &mut LedgerWriter, record: RatingRecord, amends: bool) -> ApiResult<()> {
    writer
        .append(&LedgerEntry { record, amends })
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

type Shared = Arc<TrialService>;

async fn next_handler(State(s): State<Shared>, UrlPath(rater): UrlPath<String>) -> ApiResult<Json<NextCase>> {
    s.next(&rater).map(Json)
}

async fn progress_handler(State(s): State<Shared>, UrlPath(rater): UrlPath<String>) -> ApiResult<Json<ProgressResponse>> {
    s.progress(&rater).map(Json)
}

async fn rating_handler(
    State(s): State<Shared>,
    UrlPath(rater): UrlPath<String>,
    Json(req): Json<RatingRequest>,
) -> ApiResult<(StatusCode, Json<RatingAccepted>)> {
    tokio::task::spawn_blocking(move || s.submit(&rater, &req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map(|a| (StatusCode::CREATED, Json(a)))
}

async fn amend_handler(
    State(s): State<Shared>,
    UrlPath(rater): UrlPath<String>,
    Json(req): Json<RatingRequest>,
) -> ApiResult<Json<RatingAccepted>> {
    tokio::task::spawn_blocking(move || s.amend(&rater, &req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map(Json)
}

async fn image_handler(State(s): State<Shared>, UrlPath((case_id, file)): UrlPath<(String, String)>) -> ApiResult<Response> {
    let bytes = s.image(&case_id, &file)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], Body::from(bytes)).into_response())
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/api/trial/{rater}/next", get(next_handler))
        .route("/api/trial/{rater}/progress", get(progress_handler))
        .route("/api/trial/{rater}/rating", post(rating_handler))
        .route("/api/trial/{rater}/amend", post(amend_handler))
        .route("/api/panels/{case_id}/{image}", get(image_handler))
        .with_state(service)
}

/// Serves until interrupted.
pub async fn serve(config: &RunConfig) -> Result<()> {
    let service = Arc::new(TrialService::new(config)?);
    let bind = config.trial.bind.clone();
    let listener = tokio::net::TcpListener::bind(&bind).await.map_err(Error::io(Path::new(&bind)))?;
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(Error::io(Path::new(&bind)))
}
