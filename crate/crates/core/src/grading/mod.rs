//! Step grading: request assembly, pluggable grader backends, batch
//! orchestration, and the consistency/agreement audits.
//!
//! A [`GraderBackend`] scores one step at a time. The remote backend sends
//! the committed grading prompt over an OpenAI-compatible wire; the
//! simulator's oracle backend consumes simulator state ids directly. Any
//! reward model implementing this trait is a drop-in substitute.

mod prompt;
pub mod remote;

pub use prompt::{
    build_grading_prompt, parse_grade, Message, MessagePart, ParseGradeError, PromptError, Role,
    GRADING_PROMPT_TEMPLATE,
};

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::retry::{splitmix64, with_retry, RetryPolicy};
use crate::trajectory::{Grade, ObservationRef, Trajectory};
use crate::Action;

/// Everything a grader sees for one step: the task, full action history,
/// the step's observation, annotated/zoom images, and the proposed action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeRequest {
    pub instruction: String,
    pub history: Vec<HistoryStep>,
    pub observation: ObservationRef,
    pub current_annotated: Option<String>,
    pub zoom: Option<String>,
    pub proposed_action: Action,
    pub step_index: usize,
    pub window: usize,
}

/// A prior action; `annotated` is set only for steps inside the image
/// window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryStep {
    pub action: Action,
    pub annotated: Option<String>,
}

impl GradeRequest {
    /// Build the request for step `n` of `traj` with image window `w`.
    ///
    /// The textual history always covers all prior steps; annotated
    /// screenshots are attached only for steps `n+1-w .. n` plus the
    /// current one. The zoom path is derived from the annotated sidecar
    /// name (`*.annotated.png` -> `*.zoom.png`).
    pub fn from_trajectory(traj: &Trajectory, n: usize, w: usize) -> Option<GradeRequest> {
        let step = traj.steps.get(n)?;
        let window_start = (n + 1).saturating_sub(w.max(1));
        let history = traj.steps[..n]
            .iter()
            .map(|s| HistoryStep {
                action: s.action.clone(),
                annotated: if s.index >= window_start { s.annotated_observation.clone() } else { None },
            })
            .collect();
        let current_annotated = step.annotated_observation.clone();
        let zoom = current_annotated.as_deref().and_then(zoom_from_annotated);
        Some(GradeRequest {
            instruction: traj.instruction.clone(),
            history,
            observation: step.observation.clone(),
            current_annotated,
            zoom,
            proposed_action: step.action.clone(),
            step_index: n,
            window: w.max(1),
        })
    }
}

fn zoom_from_annotated(annotated: &str) -> Option<String> {
    annotated
        .strip_suffix(".annotated.png")
        .map(|stem| format!("{stem}.zoom.png"))
}

/// A parsed grade plus the grader's stage-wise analyses. Stage texts are
/// stored raw; only the score feeds filtering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeResult {
    pub score: u8,
    pub stages: BTreeMap<String, String>,
    pub raw: String,
    pub grader_id: String,
}

/// Backend failures, split into retryable and terminal classes.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend rejected request: {0}")]
    Rejected(String),
    #[error("missing image: {0}")]
    MissingImage(String),
    #[error(transparent)]
    Score(#[from] ParseGradeError),
}

impl BackendError {
    /// Transport failures and missing score lines are worth retrying; a
    /// parseable-but-invalid score or an outright rejection is not.
    pub fn retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::Score(ParseGradeError::NoScoreLine))
    }
}

/// A step grader. Implementations must be safe for concurrent calls or
/// declare a `max_concurrency` of 1.
pub trait GraderBackend: Send + Sync {
    fn id(&self) -> &str;
    fn grade(&self, request: &GradeRequest) -> Result<GradeResult, BackendError>;
    fn max_concurrency(&self) -> Option<usize> {
        None
    }
}

/// Deterministic backend that replays a fixed score sequence in call
/// order, cycling at the end. Declares single-call concurrency so batch
/// orchestration stays deterministic.
pub struct ScriptedBackend {
    scores: Vec<u8>,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(scores: Vec<u8>) -> Self {
        assert!(!scores.is_empty(), "scripted backend needs at least one score");
        ScriptedBackend { scores, cursor: Mutex::new(0) }
    }
}

impl GraderBackend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn grade(&self, _request: &GradeRequest) -> Result<GradeResult, BackendError> {
        let mut cursor = self.cursor.lock().expect("cursor lock");
        let score = self.scores[*cursor % self.scores.len()];
        *cursor += 1;
        Ok(GradeResult {
            score,
            stages: BTreeMap::new(),
            raw: format!("Expected value: {score}"),
            grader_id: "scripted".to_string(),
        })
    }

    fn max_concurrency(&self) -> Option<usize> {
        Some(1)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradeOptions {
    pub window: usize,
    pub parallelism: usize,
    pub retry: RetryPolicy,
}

impl Default for GradeOptions {
    fn default() -> Self {
        GradeOptions { window: 1, parallelism: 1, retry: RetryPolicy::default() }
    }
}

/// One step that could not be graded after the retry budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepFailure {
    pub step_index: usize,
    pub error: String,
    pub transport: bool,
}

/// Outcome of grading a trajectory: the (possibly partially) graded copy
/// plus per-step failures. `failed_steps` non-empty means partial failure.
#[derive(Debug, Clone)]
pub struct GradeReport {
    pub trajectory: Trajectory,
    pub failed_steps: Vec<StepFailure>,
}

impl GradeReport {
    pub fn is_complete(&self) -> bool {
        self.failed_steps.is_empty()
    }

    pub fn failed_indices(&self) -> Vec<usize> {
        self.failed_steps.iter().map(|f| f.step_index).collect()
    }
}

#[derive(Debug, Error)]
pub enum GraderError {
    #[error("backend unavailable: all {failed} step(s) failed with transport errors")]
    BackendUnavailable { failed: usize },
    #[error("consistency audit needs at least 2 repeats, got {0}")]
    InvalidRepeats(usize),
    #[error("grade/reference length mismatch: {grades} vs {reference}")]
    LengthMismatch { grades: usize, reference: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Grade every step of `traj`. Per-step failures are recorded without
/// aborting siblings, and result ordering is deterministic regardless of
/// the parallelism level. Only if every step fails with a transport error
/// is the backend declared unavailable.
pub fn grade_trajectory(
    traj: &Trajectory,
    backend: &dyn GraderBackend,
    opts: &GradeOptions,
) -> Result<GradeReport, GraderError> {
    let requests: Vec<GradeRequest> = (0..traj.steps.len())
        .map(|n| GradeRequest::from_trajectory(traj, n, opts.window).expect("index in range"))
        .collect();
    let parallelism = effective_parallelism(opts.parallelism, backend.max_concurrency());
    let results = exec::map_indexed(&requests, parallelism, |i, req| {
        let salt = splitmix64(i as u64 ^ 0x67726164);
        with_retry(&opts.retry, salt, |_| backend.grade(req))
    });

    let mut graded = traj.clone();
    let mut failed_steps = Vec::new();
    for (i, result) in results.into_iter().enumerate() {
        match result {
            Ok(result) => {
                graded.steps[i].grade = Some(Grade {
                    score: result.score,
                    rationale: result.raw,
                    grader_id: result.grader_id,
                });
            }
            Err(err) => failed_steps.push(StepFailure {
                step_index: i,
                error: err.to_string(),
                transport: matches!(err, BackendError::Transport(_)),
            }),
        }
    }
    if !traj.steps.is_empty()
        && failed_steps.len() == traj.steps.len()
        && failed_steps.iter().all(|f| f.transport)
    {
        return Err(GraderError::BackendUnavailable { failed: failed_steps.len() });
    }
    Ok(GradeReport { trajectory: graded, failed_steps })
}

fn effective_parallelism(requested: usize, backend_cap: Option<usize>) -> usize {
    let requested = requested.max(1);
    match backend_cap {
        Some(cap) => requested.min(cap.max(1)),
        None => requested,
    }
}

/// Repeat-grading statistics for a single request. `mean_range` is the
/// max-min spread of the repeats, `std` the sample standard deviation,
/// `cv` the coefficient of variation (0 when the mean is 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyStats {
    pub repeats: usize,
    pub scores: Vec<u8>,
    pub mean_range: f64,
    pub std: f64,
    pub cv: f64,
}

pub fn consistency_audit(
    request: &GradeRequest,
    backend: &dyn GraderBackend,
    repeats: usize,
) -> Result<ConsistencyStats, GraderError> {
    if repeats < 2 {
        return Err(GraderError::InvalidRepeats(repeats));
    }
    let mut scores = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        scores.push(backend.grade(request)?.score);
    }
    Ok(stats_from_scores(scores))
}

fn stats_from_scores(scores: Vec<u8>) -> ConsistencyStats {
    let n = scores.len();
    let min = *scores.iter().min().expect("non-empty");
    let max = *scores.iter().max().expect("non-empty");
    let mean = scores.iter().map(|&s| f64::from(s)).sum::<f64>() / n as f64;
    let variance = scores
        .iter()
        .map(|&s| (f64::from(s) - mean).powi(2))
        .sum::<f64>()
        / (n - 1) as f64;
    let std = variance.sqrt();
    let cv = if mean.abs() < f64::EPSILON { 0.0 } else { std / mean };
    ConsistencyStats { repeats: n, scores, mean_range: f64::from(max - min), std, cv }
}

/// Corpus-level grading-consistency summary: mean of per-step ranges,
/// median of per-step standard deviations and coefficients of variation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConsistency {
    pub steps: usize,
    pub repeats: usize,
    pub mean_range: f64,
    pub median_std: f64,
    pub median_cv: f64,
}

pub fn consistency_audit_corpus(
    requests: &[GradeRequest],
    backend: &dyn GraderBackend,
    repeats: usize,
) -> Result<CorpusConsistency, GraderError> {
    if repeats < 2 {
        return Err(GraderError::InvalidRepeats(repeats));
    }
    let mut ranges = Vec::with_capacity(requests.len());
    let mut stds = Vec::with_capacity(requests.len());
    let mut cvs = Vec::with_capacity(requests.len());
    for request in requests {
        let stats = consistency_audit(request, backend, repeats)?;
        ranges.push(stats.mean_range);
        stds.push(stats.std);
        cvs.push(stats.cv);
    }
    Ok(CorpusConsistency {
        steps: requests.len(),
        repeats,
        mean_range: mean(&ranges),
        median_std: median(&mut stds),
        median_cv: median(&mut cvs),
    })
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// 2x2 confusion matrix between grader scores and a reference, both
/// binarized at `score >= cutoff`. Agreement counts the diagonal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgreementReport {
    pub cutoff: u8,
    pub both_high: u64,
    pub ref_high_grader_low: u64,
    pub ref_low_grader_high: u64,
    pub both_low: u64,
    pub agreement_rate: f64,
}

impl AgreementReport {
    pub fn total(&self) -> u64 {
        self.both_high + self.ref_high_grader_low + self.ref_low_grader_high + self.both_low
    }

    /// Render as a small confusion-matrix table.
    pub fn table(&self) -> String {
        let c = self.cutoff;
        format!(
            "                 grader >= {c}   grader < {c}\n\
             reference >= {c}  {:>11}   {:>10}\n\
             reference < {c}   {:>11}   {:>10}\n\
             agreement rate: {:.2}\n",
            self.both_high, self.ref_high_grader_low, self.ref_low_grader_high, self.both_low,
            self.agreement_rate
        )
    }
}

/// Tabulate agreement between grader scores and reference scores at
/// `cutoff` (binarized with `>=`, the human-comparison convention; note
/// this differs from the strict `>` used by the filtering mask).
pub fn agreement_report(
    grades: &[u8],
    reference: &[u8],
    cutoff: u8,
) -> Result<AgreementReport, GraderError> {
    if grades.len() != reference.len() {
        return Err(GraderError::LengthMismatch { grades: grades.len(), reference: reference.len() });
    }
    let mut report = AgreementReport {
        cutoff,
        both_high: 0,
        ref_high_grader_low: 0,
        ref_low_grader_high: 0,
        both_low: 0,
        agreement_rate: 1.0,
    };
    for (&g, &r) in grades.iter().zip(reference) {
        match (r >= cutoff, g >= cutoff) {
            (true, true) => report.both_high += 1,
            (true, false) => report.ref_high_grader_low += 1,
            (false, true) => report.ref_low_grader_high += 1,
            (false, false) => report.both_low += 1,
        }
    }
    let total = report.total();
    if total > 0 {
        report.agreement_rate = (report.both_high + report.both_low) as f64 / total as f64;
    }
    Ok(report)
}
