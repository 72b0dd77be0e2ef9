//! Trajectory- and step-level filtering, mask computation, dataset
//! statistics, masked-SFT export (`webstar-sft/1`), and balanced reward
//! export (`webscore/1`).
//!
//! The filtering mask is strict: a step survives iff `score > cutoff`, so
//! the boundary score (a partially correct action) is masked out. Masked
//! steps remain in every record's conditioning context; by default they
//! are also emitted as `loss=false` records so a trainer can reconstruct
//! the masked objective exactly.


use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::exec;
use crate::grading::BackendError;
use crate::trajectory::{make_context, ContextWindow, ObservationRef, Thought, Trajectory};
use crate::Action;

pub const SFT_SCHEMA: &str = "webstar-sft/1";
pub const REWARD_SCHEMA: &str = "webscore/1";

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("step {index} of trajectory {trajectory_id} is ungraded")]
    UngradedStep { trajectory_id: String, index: usize },
    #[error("class {class} has only {available} steps, need {needed}")]
    InsufficientClass { class: &'static str, available: usize, needed: usize },
    #[error("cutoff {cutoff}: only {available} loss-bearing records, budget {budget}")]
    BudgetUnreachable { cutoff: u8, available: usize, budget: usize },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// End-of-task success judge; per-trajectory errors are isolated by the
/// filter loop rather than aborting the batch.
pub trait TrajectoryJudge: Send + Sync {
    fn id(&self) -> &str;
    fn judge(&self, traj: &Trajectory) -> Result<bool, BackendError>;
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub kept: Vec<Trajectory>,
    pub dropped: Vec<Trajectory>,
    /// (trajectory id, error) for judge failures.
    pub errors: Vec<(String, String)>,
}

/// First-round trajectory-level filtering: keep rollouts the judge deems
/// successful. Judged outcomes are written into each trajectory's
/// `success` field.
pub fn filter_trajectories(
    trajs: Vec<Trajectory>,
    judge: &dyn TrajectoryJudge,
    parallelism: usize,
) -> FilterOutcome {
    let verdicts = exec::map_indexed(&trajs, parallelism, |_, traj| judge.judge(traj));
    let mut outcome = FilterOutcome { kept: Vec::new(), dropped: Vec::new(), errors: Vec::new() };
    for (mut traj, verdict) in trajs.into_iter().zip(verdicts) {
        match verdict {
            Ok(true) => {
                traj.success = Some(true);
                outcome.kept.push(traj);
            }
            Ok(false) => {
                traj.success = Some(false);
                outcome.dropped.push(traj);
            }
            Err(err) => outcome.errors.push((traj.id.clone(), err.to_string())),
        }
    }
    outcome
}

/// Binary loss mask over a fully graded trajectory: `mask[n] = score[n] > cutoff`.
pub fn compute_mask(traj: &Trajectory, cutoff: u8) -> Result<Vec<bool>, FilterError> {
    traj.steps
        .iter()
        .map(|step| {
            step.score()
                .map(|s| s > cutoff)
                .ok_or(FilterError::UngradedStep { trajectory_id: traj.id.clone(), index: step.index })
        })
        .collect()
}

/// Which steps bear loss in the export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportMode {
    /// Trajectory-level baseline: every step of a kept trajectory.
    AllSteps,
    /// Step-level filtering: only steps with `score > cutoff`.
    CorrectSteps,
}

/// One training example: full context, target thought/action, and the
/// loss flag. The `messages` field is the chat-style rendering with
/// per-message loss flags; the structured fields are authoritative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub schema_version: String,
    pub trajectory_id: String,
    pub step_index: usize,
    #[serde(default)]
    pub score: Option<u8>,
    pub loss: bool,
    pub context: ContextWindow,
    #[serde(default)]
    pub target_thought: Option<Thought>,
    pub target_action: Action,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: serde_json::Value,
    pub loss: bool,
}

fn chat_view(context: &ContextWindow, thought: Option<&Thought>, action: &Action, loss: bool) -> Vec<ChatMessage> {
    let mut history = String::new();
    for (i, pair) in context.history.iter().enumerate() {
        let t = pair
            .thought
            .as_ref()
            .map(|t| t.raw.as_str())
            .filter(|t| !t.is_empty())
            .unwrap_or("(none)");
        history.push_str(&format!("[{i}] thought: {t} | action: {}\n", pair.action));
    }
    if history.is_empty() {
        history.push_str("(none)\n");
    }
    let mut user_parts = vec![json!({"type": "text", "text": format!("History:\n{history}")})];
    for obs in &context.images {
        user_parts.push(json!({"type": "image", "observation": obs}));
    }
    let target = match thought {
        Some(t) if !t.raw.is_empty() => format!("{}\nAction: {}", t.raw, action),
        _ => format!("Action: {action}"),
    };
    vec![
        ChatMessage { role: "system".into(), content: json!(context.instruction), loss: false },
        ChatMessage { role: "user".into(), content: serde_json::Value::Array(user_parts), loss: false },
        ChatMessage { role: "assistant".into(), content: json!(target), loss },
    ]
}

#[derive(Debug, Clone, Copy)]
pub struct SftExportOptions {
    pub window: usize,
    pub cutoff: u8,
    pub mode: ExportMode,
    /// Drop `loss=false` records entirely (for trainers that cannot mask).
    pub drop_masked: bool,
}

impl Default for SftExportOptions {
    fn default() -> Self {
        SftExportOptions { window: 1, cutoff: 5, mode: ExportMode::CorrectSteps, drop_masked: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SftManifest {
    pub mode: ExportMode,
    pub window: usize,
    pub cutoff: u8,
    pub trajectories_in: usize,
    pub trajectories_exported: usize,
    pub skipped_unsuccessful: usize,
    pub records: usize,
    pub loss_records: usize,
    pub masked_records: usize,
    pub dropped_masked: usize,
}

#[derive(Debug, Clone)]
pub struct SftExport {
    pub records: Vec<SftRecord>,
    pub manifest: SftManifest,
}

/// Emit one record per step of every successful trajectory. The context
/// always includes all past steps, masked or not; only the image list is
/// windowed. In `CorrectSteps` mode the loss flag follows the strict mask
/// (masked records stay in the stream flagged `loss=false` unless
/// `drop_masked`).
pub fn export_sft(trajs: &[Trajectory], opts: &SftExportOptions) -> Result<SftExport, FilterError> {
    let mut manifest = SftManifest {
        mode: opts.mode,
        window: opts.window,
        cutoff: opts.cutoff,
        trajectories_in: trajs.len(),
        trajectories_exported: 0,
        skipped_unsuccessful: 0,
        records: 0,
        loss_records: 0,
        masked_records: 0,
        dropped_masked: 0,
    };
    let mut records = Vec::new();
    for traj in trajs {
        if traj.success != Some(true) {
            manifest.skipped_unsuccessful += 1;
            continue;
        }
        manifest.trajectories_exported += 1;
        let mask = match opts.mode {
            ExportMode::CorrectSteps => compute_mask(traj, opts.cutoff)?,
            ExportMode::AllSteps => vec![true; traj.steps.len()],
        };
        for (n, step) in traj.steps.iter().enumerate() {
            let loss = mask[n];
            if !loss {
                manifest.masked_records += 1;
                if opts.drop_masked {
                    manifest.dropped_masked += 1;
                    continue;
                }
            }
            let context = make_context(traj, n, opts.window).expect("n < len");
            let messages = chat_view(&context, step.thought.as_ref(), &step.action, loss);
            records.push(SftRecord {
                schema_version: SFT_SCHEMA.to_string(),
                trajectory_id: traj.id.clone(),
                step_index: n,
                score: step.score(),
                loss,
                context,
                target_thought: step.thought.clone(),
                target_action: step.action.clone(),
                messages,
            });
            manifest.records += 1;
            if loss {
                manifest.loss_records += 1;
            }
        }
    }
    Ok(SftExport { records, manifest })
}

/// One `webscore/1` example: grading inputs (instruction, action history,
/// latest observation, annotated screenshot) with the score as label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub schema_version: String,
    pub trajectory_id: String,
    pub step_index: usize,
    pub instruction: String,
    pub history: Vec<Action>,
    pub observation: ObservationRef,
    #[serde(default)]
    pub annotated_observation: Option<String>,
    pub action: Action,
    pub score: u8,
    pub label_positive: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardManifest {
    pub size: usize,
    pub cutoff: u8,
    pub seed: u64,
    pub positive_available: usize,
    pub negative_available: usize,
    pub positive_taken: usize,
    pub negative_taken: usize,
    /// Near-duplicate steps are sampled as-is; no deduplication.
    pub dedup: String,
}

#[derive(Debug, Clone)]
pub struct RewardExport {
    pub records: Vec<RewardRecord>,
    pub manifest: RewardManifest,
}

/// Balanced reward-dataset sampler: exactly ceil(n/2) steps scoring
/// strictly above `cutoff` and floor(n/2) at or below it, drawn without
/// replacement under a fixed seed.
pub fn export_reward_dataset(
    trajs: &[Trajectory],
    n: usize,
    cutoff: u8,
    seed: u64,
) -> Result<RewardExport, FilterError> {
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for traj in trajs {
        for (i, step) in traj.steps.iter().enumerate() {
            let Some(score) = step.score() else { continue };
            let record = RewardRecord {
                schema_version: REWARD_SCHEMA.to_string(),
                trajectory_id: traj.id.clone(),
                step_index: i,
                instruction: traj.instruction.clone(),
                history: traj.steps[..i].iter().map(|s| s.action.clone()).collect(),
                observation: step.observation.clone(),
                annotated_observation: step.annotated_observation.clone(),
                action: step.action.clone(),
                score,
                label_positive: score > cutoff,
            };
            if record.label_positive {
                positive.push(record);
            } else {
                negative.push(record);
            }
        }
    }
    let need_pos = n.div_ceil(2);
    let need_neg = n / 2;
    if positive.len() < need_pos {
        return Err(FilterError::InsufficientClass { class: "positive", available: positive.len(), needed: need_pos });
    }
    if negative.len() < need_neg {
        return Err(FilterError::InsufficientClass { class: "negative", available: negative.len(), needed: need_neg });
    }
    let manifest = RewardManifest {
        size: n,
        cutoff,
        seed,
        positive_available: positive.len(),
        negative_available: negative.len(),
        positive_taken: need_pos,
        negative_taken: need_neg,
        dedup: "none".to_string(),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    positive.shuffle(&mut rng);
    negative.shuffle(&mut rng);
    let mut records = Vec::with_capacity(n);
    records.extend(positive.into_iter().take(need_pos));
    records.extend(negative.into_iter().take(need_neg));
    Ok(RewardExport { records, manifest })
}

/// Score distribution over a graded corpus. `retention[c]` is the strict
/// fraction `P(score > c)`; `cdf_geq[t]` is `P(score >= t)` and is
/// non-increasing in `t`. Correct-step fractions use the strict `> 5`
/// rule. Only graded steps are counted; an empty corpus yields all zeros.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreStats {
    pub histogram: [u64; 11],
    pub total: u64,
    pub cdf_geq: [f64; 11],
    pub retention: [f64; 11],
    pub per_trajectory_correct_fraction: Vec<(String, f64)>,
    pub mean_correct_fraction: f64,
}

pub fn score_stats(trajs: &[Trajectory]) -> ScoreStats {
    let mut histogram = [0u64; 11];
    let mut per_traj = Vec::new();
    for traj in trajs {
        let mut graded = 0u64;
        let mut correct = 0u64;
        for step in &traj.steps {
            if let Some(score) = step.score() {
                histogram[score.min(10) as usize] += 1;
                graded += 1;
                if score > 5 {
                    correct += 1;
                }
            }
        }
        if graded > 0 {
            per_traj.push((traj.id.clone(), correct as f64 / graded as f64));
        }
    }
    let total: u64 = histogram.iter().sum();
    let mut cdf_geq = [0.0; 11];
    let mut retention = [0.0; 11];
    if total > 0 {
        for t in 0..11 {
            let geq: u64 = histogram[t..].iter().sum();
            cdf_geq[t] = geq as f64 / total as f64;
            let above: u64 = histogram[t + 1..].iter().sum();
            retention[t] = above as f64 / total as f64;
        }
    }
    let mean_correct_fraction = if per_traj.is_empty() {
        0.0
    } else {
        per_traj.iter().map(|(_, f)| f).sum::<f64>() / per_traj.len() as f64
    };
    ScoreStats { histogram, total, cdf_geq, retention, per_trajectory_correct_fraction: per_traj, mean_correct_fraction }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutoffReport {
    pub cutoff: u8,
    pub total_records: usize,
    pub loss_bearing: usize,
    /// loss_bearing / total_records before any budget subsampling.
    pub retention: f64,
    pub budget: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct CutoffSweepEntry {
    pub report: CutoffReport,
    pub records: Vec<SftRecord>,
}

/// Per-cutoff filtered exports. With a budget, loss-bearing records are
/// subsampled to exactly `budget` under the seed (the rest are demoted to
/// `loss=false` so context is preserved); retention is reported before
/// subsampling.
pub fn cutoff_sweep(
    trajs: &[Trajectory],
    window: usize,
    cutoffs: &[u8],
    budget: Option<usize>,
    seed: u64,
) -> Result<Vec<CutoffSweepEntry>, FilterError> {
    let mut entries = Vec::new();
    for &cutoff in cutoffs {
        let opts = SftExportOptions { window, cutoff, mode: ExportMode::CorrectSteps, drop_masked: false };
        let export = export_sft(trajs, &opts)?;
        let mut records = export.records;
        let loss_bearing = export.manifest.loss_records;
        if let Some(budget) = budget {
            if loss_bearing < budget {
                return Err(FilterError::BudgetUnreachable { cutoff, available: loss_bearing, budget });
            }
            let mut loss_indices: Vec<usize> =
                records.iter().enumerate().filter_map(|(i, r)| r.loss.then_some(i)).collect();
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ u64::from(cutoff) << 32);
            loss_indices.shuffle(&mut rng);
            for &i in loss_indices.iter().skip(budget) {
                records[i].loss = false;
                let last = records[i].messages.len() - 1;
                records[i].messages[last].loss = false;
            }
        }
        let total = records.len();
        entries.push(CutoffSweepEntry {
            report: CutoffReport {
                cutoff,
                total_records: total,
                loss_bearing,
                retention: if total == 0 { 0.0 } else { loss_bearing as f64 / total as f64 },
                budget,
            },
            records,
        });
    }
    Ok(entries)
}

/// Generic JSONL writers/readers for the export record types.
pub fn write_records_jsonl<T: Serialize>(records: &[T], path: impl AsRef<Path>) -> Result<usize, FilterError> {
    let path = path.as_ref();
    let io = |e: std::io::Error| FilterError::Io { path: path.display().to_string(), message: e.to_string() };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| FilterError::Io { path: path.display().to_string(), message: e.to_string() })?;
        out.write_all(line.as_bytes()).map_err(io)?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)?;
    Ok(records.len())
}

pub fn read_sft_jsonl(path: impl AsRef<Path>) -> Result<Vec<SftRecord>, FilterError> {
    let path = path.as_ref();
    let io = |e: std::io::Error| FilterError::Io { path: path.display().to_string(), message: e.to_string() };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        let record: SftRecord = serde_json::from_str(&line)
            .map_err(|e| FilterError::Parse { line: i + 1, message: e.to_string() })?;
        if record.schema_version != SFT_SCHEMA {
            return Err(FilterError::Parse {
                line: i + 1,
                message: format!("schema version mismatch: expected {SFT_SCHEMA}, found {}", record.schema_version),
            });
        }
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Grade, Source, Terminal, TrajectoryBuilder};
    use std::collections::BTreeMap as Map;

    fn graded_trajectory(id: &str, scores: &[u8], success: bool) -> Trajectory {
        let mut b = TrajectoryBuilder::new(id, format!("task for {id}"), Source::Sim, 100);
        for (i, _) in scores.iter().enumerate() {
            let action = if i + 1 == scores.len() { Action::finished("x") } else { Action::click(i as u32, 0) };
            b.push_step(ObservationRef::sim(format!("s{i}")), action, Map::new()).unwrap();
        }
        let mut traj = b.finish(Terminal::Finished, Some(success));
        for (step, &score) in traj.steps.iter_mut().zip(scores) {
            step.grade = Some(Grade { score, rationale: String::new(), grader_id: "test".into() });
        }
        traj
    }

    struct FixedJudge;
    impl TrajectoryJudge for FixedJudge {
        fn id(&self) -> &str {
            "fixed"
        }
        fn judge(&self, traj: &Trajectory) -> Result<bool, BackendError> {
            match traj.id.as_str() {
                id if id.starts_with("good") => Ok(true),
                id if id.starts_with("err") => Err(BackendError::Transport("judge down".into())),
                _ => Ok(false),
            }
        }
    }

    #[test]
    fn mask_follows_strict_inequality() {
        let traj = graded_trajectory("t", &[10, 3, 7, 5, 0, 8], true);
        assert_eq!(compute_mask(&traj, 5).unwrap(), vec![true, false, true, false, false, true]);
        let all_ten = graded_trajectory("t", &[10, 10, 10], true);
        assert_eq!(compute_mask(&all_ten, 5).unwrap(), vec![true; 3]);
    }

    #[test]
    fn mask_matches_bruteforce_over_all_scores_and_cutoffs() {
        for cutoff in 0..=10u8 {
            let scores: Vec<u8> = (0..=10).collect();
            let traj = graded_trajectory("t", &scores, true);
            let mask = compute_mask(&traj, cutoff).unwrap();
            for (i, &score) in scores.iter().enumerate() {
                assert_eq!(mask[i], score > cutoff, "score={score} cutoff={cutoff}");
            }
        }
    }

    #[test]
    fn mask_requires_grades() {
        let mut traj = graded_trajectory("t", &[10, 10], true);
        traj.steps[1].grade = None;
        assert!(matches!(compute_mask(&traj, 5), Err(FilterError::UngradedStep { index: 1, .. })));
    }

    #[test]
    fn filter_partitions_and_isolates_errors() {
        let trajs = vec![
            graded_trajectory("good-1", &[10], false),
            graded_trajectory("bad-1", &[10], true),
            graded_trajectory("err-1", &[10], true),
            graded_trajectory("good-2", &[10], false),
        ];
        let outcome = filter_trajectories(trajs, &FixedJudge, 4);
        assert_eq!(outcome.kept.iter().map(|t| t.id.as_str()).collect::<Vec<_>>(), vec!["good-1", "good-2"]);
        assert_eq!(outcome.dropped.len(), 1);
        assert_eq!(outcome.errors.len(), 1);
        assert!(outcome.kept.iter().all(|t| t.success == Some(true)));
        assert!(outcome.dropped.iter().all(|t| t.success == Some(false)));

        let empty = filter_trajectories(Vec::new(), &FixedJudge, 1);
        assert!(empty.kept.is_empty() && empty.dropped.is_empty());
    }

    #[test]
    fn export_counts_match_the_mask() {
        let traj = graded_trajectory("good", &[10, 3, 7, 5, 0, 8], true);
        let opts = SftExportOptions::default();
        let export = export_sft(std::slice::from_ref(&traj), &opts).unwrap();
        assert_eq!(export.records.len(), 6);
        assert_eq!(export.manifest.loss_records, 3);
        let flags: Vec<bool> = export.records.iter().map(|r| r.loss).collect();
        assert_eq!(flags, vec![true, false, true, false, false, true]);
        // Context completeness: history length equals step index even for
        // masked steps, and w=1 leaves exactly one image.
        for record in &export.records {
            assert_eq!(record.context.history.len(), record.step_index);
            assert_eq!(record.context.images.len(), 1);
            assert_eq!(record.messages.last().unwrap().loss, record.loss);
        }
    }

    #[test]
    fn export_modes_and_drop_masked() {
        let trajs = vec![
            graded_trajectory("good-a", &[10, 3, 7], true),
            graded_trajectory("dropped", &[10, 10], false),
        ];
        let all = export_sft(&trajs, &SftExportOptions { mode: ExportMode::AllSteps, ..Default::default() }).unwrap();
        assert_eq!(all.manifest.loss_records, 3);
        assert_eq!(all.manifest.skipped_unsuccessful, 1);

        let dropped = export_sft(
            &trajs,
            &SftExportOptions { drop_masked: true, ..Default::default() },
        )
        .unwrap();
        assert_eq!(dropped.records.len(), 2);
        assert!(dropped.records.iter().all(|r| r.loss));
        assert_eq!(dropped.manifest.dropped_masked, 1);
    }

    #[test]
    fn loss_count_equals_bruteforce_recount() {
        let trajs: Vec<Trajectory> = (0..7)
            .map(|i| {
                let scores: Vec<u8> = (0..10).map(|j| ((i * 3 + j * 7) % 11) as u8).collect();
                graded_trajectory(&format!("good-{i}"), &scores, true)
            })
            .collect();
        let export = export_sft(&trajs, &SftExportOptions::default()).unwrap();
        let brute: usize = trajs
            .iter()
            .map(|t| compute_mask(t, 5).unwrap().iter().filter(|&&m| m).count())
            .sum();
        assert_eq!(export.manifest.loss_records, brute);
        assert_eq!(export.records.iter().filter(|r| r.loss).count(), brute);
    }

    #[test]
    fn balanced_reward_sampling() {
        let mut trajs = Vec::new();
        for i in 0..10 {
            trajs.push(graded_trajectory(&format!("p{i}"), &[10, 2], true));
        }
        // Pool: 10 positive (score 10), 10 negative (score 2).
        let export = export_reward_dataset(&trajs, 10, 5, 42).unwrap();
        assert_eq!(export.records.len(), 10);
        assert_eq!(export.records.iter().filter(|r| r.label_positive).count(), 5);
        assert_eq!(export.manifest.positive_available, 10);

        let replay = export_reward_dataset(&trajs, 10, 5, 42).unwrap();
        assert_eq!(replay.records, export.records);
        let other_seed = export_reward_dataset(&trajs, 10, 5, 43).unwrap();
        assert_ne!(other_seed.records, export.records);
    }

    #[test]
    fn insufficient_class_is_reported() {
        let trajs = vec![
            graded_trajectory("a", &[10, 10, 10], true),
            graded_trajectory("b", &[2, 2], true),
        ];
        match export_reward_dataset(&trajs, 10, 5, 1) {
            Err(FilterError::InsufficientClass { class: "positive", available: 3, needed: 5 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn odd_reward_size_gives_positive_the_extra() {
        let mut trajs = Vec::new();
        for i in 0..10 {
            trajs.push(graded_trajectory(&format!("p{i}"), &[10, 2], true));
        }
        let export = export_reward_dataset(&trajs, 7, 5, 1).unwrap();
        assert_eq!(export.records.iter().filter(|r| r.label_positive).count(), 4);
        assert_eq!(export.records.iter().filter(|r| !r.label_positive).count(), 3);
    }

    #[test]
    fn stats_uniform_histogram() {
        let scores: Vec<u8> = (0..=10).collect();
        let traj = graded_trajectory("t", &scores, true);
        let stats = score_stats(std::slice::from_ref(&traj));
        assert_eq!(stats.histogram, [1; 11]);
        assert_eq!(stats.total, 11);
        assert!((stats.retention[5] - 5.0 / 11.0).abs() < 1e-12);
        assert!((stats.cdf_geq[0] - 1.0).abs() < 1e-12);
        // cdf non-increasing, retention non-increasing.
        for t in 1..11 {
            assert!(stats.cdf_geq[t] <= stats.cdf_geq[t - 1]);
            assert!(stats.retention[t] <= stats.retention[t - 1]);
        }
    }

    #[test]
    fn stats_all_tens_and_empty() {
        let traj = graded_trajectory("t", &[10, 10, 10], true);
        let stats = score_stats(std::slice::from_ref(&traj));
        for c in 0..10 {
            assert_eq!(stats.retention[c], 1.0);
        }
        assert_eq!(stats.retention[10], 0.0);
        assert_eq!(stats.mean_correct_fraction, 1.0);

        let empty = score_stats(&[]);
        assert_eq!(empty.total, 0);
        assert_eq!(empty.retention, [0.0; 11]);
    }

    #[test]
    fn sweep_retention_is_monotone_and_budget_checked() {
        let trajs: Vec<Trajectory> = (0..6)
            .map(|i| {
                let scores: Vec<u8> = (0..12).map(|j| [0, 3, 5, 7, 10][(i + j) % 5]).collect();
                graded_trajectory(&format!("good-{i}"), &scores, true)
            })
            .collect();
        let entries = cutoff_sweep(&trajs, 1, &[2, 4, 5, 6, 8], Some(10), 9).unwrap();
        assert_eq!(entries.len(), 5);
        for pair in entries.windows(2) {
            assert!(pair[1].report.retention <= pair[0].report.retention);
        }
        for entry in &entries {
            assert_eq!(entry.records.iter().filter(|r| r.loss).count(), 10);
        }
        // Unreachable budget names the cutoff and availability.
        match cutoff_sweep(&trajs, 1, &[8], Some(100_000), 9) {
            Err(FilterError::BudgetUnreachable { cutoff: 8, budget: 100_000, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn sft_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sft.jsonl");
        let traj = graded_trajectory("good", &[10, 3, 7], true);
        let export = export_sft(std::slice::from_ref(&traj), &SftExportOptions::default()).unwrap();
        write_records_jsonl(&export.records, &path).unwrap();
        let back = read_sft_jsonl(&path).unwrap();
        assert_eq!(back, export.records);
    }
}
