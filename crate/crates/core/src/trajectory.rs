//! Trajectory data model, JSONL persistence (`webstar/1`), and windowed
//! context assembly.
//!
//! One trajectory per JSONL line. Field-by-field schema:
//!
//! ```text
//! schema_version  "webstar/1" (mandatory)
//! id              unique trajectory id
//! instruction     the task given to the agent
//! source          "sim" | "ingested"
//! terminal        "finished" | "step_cap_reached" | "aborted"
//! success         true | false | null (not judged yet)
//! max_steps       rollout step cap T
//! steps[]         ordered; index must equal position
//!   index                 0-based step number
//!   observation           {"kind":"image","path":..} | {"kind":"sim","id":..}
//!   thought               {situation, reasoning, instruction, raw} | null
//!   action                canonical action string (ingest dialects accepted)
//!   grade                 {score 0..10, rationale, grader_id} | null
//!   annotated_observation sidecar image path | null
//!   metadata              free-form string->JSON map (e.g. teacher labels)
//! ```
//!
//! Unknown extra fields on a trajectory or step are preserved opaquely
//! across a read/write cycle. Observations are stored by reference to keep
//! dataset files small.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;

pub const TRAJECTORY_SCHEMA: &str = "webstar/1";

/// A post-hoc reasoning trace in three parts. `raw` is the verbatim
/// generated paragraph and is always authoritative; the parts are a
/// best-effort split and may be empty when a component appears absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thought {
    pub situation: String,
    pub reasoning: String,
    pub instruction: String,
    pub raw: String,
}

impl Thought {
    /// Names of components the splitter could not find.
    pub fn incomplete_parts(&self) -> Vec<&'static str> {
        let mut missing = Vec::new();
        if self.situation.trim().is_empty() {
            missing.push("situation");
        }
        if self.reasoning.trim().is_empty() {
            missing.push("reasoning");
        }
        if self.instruction.trim().is_empty() {
            missing.push("instruction");
        }
        missing
    }

    /// The parts must re-concatenate into the whitespace-normalized raw text.
    pub fn is_consistent(&self) -> bool {
        if self.raw.trim().is_empty() {
            return self.situation.is_empty() && self.reasoning.is_empty() && self.instruction.is_empty();
        }
        let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
        let raw = norm(&self.raw);
        [&self.situation, &self.reasoning, &self.instruction]
            .iter()
            .all(|part| part.is_empty() || raw.contains(&norm(part)))
    }
}

/// A step grade: integer score 0..=10 plus the grader's rationale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grade {
    pub score: u8,
    pub rationale: String,
    pub grader_id: String,
}

/// Where an observation lives: an image file on disk, or a simulator state
/// id that the simulator can decode back into a full state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObservationRef {
    Image { path: String },
    Sim { id: String },
}

impl ObservationRef {
    pub fn image(path: impl Into<String>) -> Self {
        ObservationRef::Image { path: path.into() }
    }

    pub fn sim(id: impl Into<String>) -> Self {
        ObservationRef::Sim { id: id.into() }
    }

    pub fn sim_id(&self) -> Option<&str> {
        match self {
            ObservationRef::Sim { id } => Some(id),
            ObservationRef::Image { .. } => None,
        }
    }
}

/// One decision point of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub observation: ObservationRef,
    #[serde(default)]
    pub thought: Option<Thought>,
    pub action: Action,
    #[serde(default)]
    pub grade: Option<Grade>,
    #[serde(default)]
    pub annotated_observation: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Step {
    pub fn new(index: usize, observation: ObservationRef, action: Action) -> Self {
        Step {
            index,
            observation,
            thought: None,
            action,
            grade: None,
            annotated_observation: None,
            metadata: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn score(&self) -> Option<u8> {
        self.grade.as_ref().map(|g| g.score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Sim,
    Ingested,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Finished,
    StepCapReached,
    Aborted,
}

/// A task attempt: instruction plus ordered steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema_version: String,
    pub id: String,
    pub instruction: String,
    pub source: Source,
    pub terminal: Terminal,
    #[serde(default)]
    pub success: Option<bool>,
    pub max_steps: usize,
    pub steps: Vec<Step>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Trajectory {
    /// Check the structural invariants: step cap respected, indexes
    /// positional, grades in range, and at most one `finished` action which
    /// must be last.
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if self.schema_version != TRAJECTORY_SCHEMA {
            return Err(TrajectoryError::Schema {
                expected: TRAJECTORY_SCHEMA,
                found: self.schema_version.clone(),
            });
        }
        if self.steps.len() > self.max_steps {
            return Err(TrajectoryError::StepCapExceeded { len: self.steps.len(), cap: self.max_steps });
        }
        for (i, step) in self.steps.iter().enumerate() {
            if step.index != i {
                return Err(TrajectoryError::BadIndex { position: i, index: step.index });
            }
            if let Some(grade) = &step.grade {
                if grade.score > 10 {
                    return Err(TrajectoryError::ScoreOutOfRange { index: i, score: grade.score });
                }
            }
            if step.action.is_finished() && i + 1 != self.steps.len() {
                return Err(TrajectoryError::FinishedNotLast { index: i });
            }
        }
        Ok(())
    }

    pub fn is_fully_graded(&self) -> bool {
        self.steps.iter().all(|s| s.grade.is_some())
    }
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("schema version mismatch: expected {expected}, found {found}")]
    Schema { expected: &'static str, found: String },
    #[error("trajectory has {len} steps, exceeding the cap of {cap}")]
    StepCapExceeded { len: usize, cap: usize },
    #[error("step at position {position} carries index {index}")]
    BadIndex { position: usize, index: usize },
    #[error("step {index}: score {score} outside 0..=10")]
    ScoreOutOfRange { index: usize, score: u8 },
    #[error("finished action at step {index} is not the last step")]
    FinishedNotLast { index: usize },
    #[error("cannot append step: cap of {cap} steps reached")]
    StepCapReached { cap: usize },
    #[error("cannot append step after a finished action")]
    StepAfterFinished,
}

/// Incremental trajectory construction. Enforces the step cap and the
/// finished-is-last rule at append time, so generator-side code cannot
/// produce an invalid trajectory.
#[derive(Debug)]
pub struct TrajectoryBuilder {
    trajectory: Trajectory,
    finished: bool,
}

impl TrajectoryBuilder {
    pub fn new(id: impl Into<String>, instruction: impl Into<String>, source: Source, max_steps: usize) -> Self {
        TrajectoryBuilder {
            trajectory: Trajectory {
                schema_version: TRAJECTORY_SCHEMA.to_string(),
                id: id.into(),
                instruction: instruction.into(),
                source,
                terminal: Terminal::Aborted,
                success: None,
                max_steps,
                steps: Vec::new(),
                extra: BTreeMap::new(),
            },
            finished: false,
        }
    }

    pub fn len(&self) -> usize {
        self.trajectory.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory.steps.is_empty()
    }

    /// Append a step; the index is assigned positionally.
    pub fn push_step(
        &mut self,
        observation: ObservationRef,
        action: Action,
        metadata: BTreeMap<String, serde_json::Value>,
    ) -> Result<(), TrajectoryError> {
        if self.finished {
            return Err(TrajectoryError::StepAfterFinished);
        }
        if self.trajectory.steps.len() >= self.trajectory.max_steps {
            return Err(TrajectoryError::StepCapReached { cap: self.trajectory.max_steps });
        }
        self.finished = action.is_finished();
        let mut step = Step::new(self.trajectory.steps.len(), observation, action);
        step.metadata = metadata;
        self.trajectory.steps.push(step);
        Ok(())
    }

    pub fn finish(mut self, terminal: Terminal, success: Option<bool>) -> Trajectory {
        self.trajectory.terminal = terminal;
        self.trajectory.success = success;
        self.trajectory
    }
}

/// The model input for predicting step `target_index`: the full textual
/// history plus only the most recent `w` observation references. Only the
/// image inputs are truncated; history always covers steps `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub instruction: String,
    pub history: Vec<HistoryPair>,
    pub images: Vec<ObservationRef>,
    pub target_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPair {
    #[serde(default)]
    pub thought: Option<Thought>,
    pub action: Action,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("step index {index} out of range for trajectory of {len} steps")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("window size must be at least 1")]
    ZeroWindow,
}

/// Assemble the context for step `n` with image window `w`.
///
/// The image list covers the observations of steps `n+1-w ..= n` (clamped
/// at the start), i.e. it always ends with step `n`'s own observation and
/// never exceeds `w` entries.
pub fn make_context(traj: &Trajectory, n: usize, w: usize) -> Result<ContextWindow, ContextError> {
    if w == 0 {
        return Err(ContextError::ZeroWindow);
    }
    if n >= traj.steps.len() {
        return Err(ContextError::IndexOutOfRange { index: n, len: traj.steps.len() });
    }
    let history = traj.steps[..n]
        .iter()
        .map(|s| HistoryPair { thought: s.thought.clone(), action: s.action.clone() })
        .collect();
    let first = (n + 1).saturating_sub(w);
    let images = traj.steps[first..=n].iter().map(|s| s.observation.clone()).collect();
    Ok(ContextWindow { instruction: traj.instruction.clone(), history, images, target_index: n })
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: schema version mismatch: expected {expected}, found {found}")]
    Schema { line: usize, expected: &'static str, found: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("serialization failed for trajectory {id}: {message}")]
    Serialize { id: String, message: String },
}

/// Write one trajectory per line; returns the number written.
pub fn write_jsonl(trajs: &[Trajectory], path: impl AsRef<Path>) -> Result<usize, JsonlError> {
    let path = path.as_ref();
    let io_err = |source| JsonlError::Io { path: path.display().to_string(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for traj in trajs {
        let line = serde_json::to_string(traj)
            .map_err(|e| JsonlError::Serialize { id: traj.id.clone(), message: e.to_string() })?;
        out.write_all(line.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(trajs.len())
}

/// Read a `webstar/1` JSONL file back into the domain model, validating
/// structural invariants per line. Blank lines are not permitted.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, JsonlError> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|source| JsonlError::Io { path: path.display().to_string(), source })?;
    let reader = BufReader::new(file);
    let mut trajs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| JsonlError::Io { path: path.display().to_string(), source })?;
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| JsonlError::Parse { line: line_no, message: e.to_string() })?;
        match value.get("schema_version").and_then(|v| v.as_str()) {
            Some(TRAJECTORY_SCHEMA) => {}
            Some(found) => {
                return Err(JsonlError::Schema { line: line_no, expected: TRAJECTORY_SCHEMA, found: found.to_string() })
            }
            None => {
                return Err(JsonlError::Schema { line: line_no, expected: TRAJECTORY_SCHEMA, found: "<missing>".to_string() })
            }
        }
        let traj: Trajectory = serde_json::from_value(value)
            .map_err(|e| JsonlError::Parse { line: line_no, message: e.to_string() })?;
        traj.validate()
            .map_err(|e| JsonlError::Parse { line: line_no, message: e.to_string() })?;
        trajs.push(traj);
    }
    Ok(trajs)
}
