//! Count-based imitation policy over simulator states, plus rollout
//! evaluation with pass@1 / pass@k reporting.
//!
//! The state signature is `page id | goal-token-visible | scroll bucket`.
//! Training tallies action frequencies per signature; rollouts take a
//! greedy argmax with canonical (lexicographic) tie-breaking. Sampling
//! stochasticity for pass@k comes from a seeded Gumbel perturbation of the
//! log-counts (temperature 0 restores the pure argmax), so every rollout
//! is a pure function of (policy, task, seed).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, Direction, Point};
use crate::exec;
use crate::filter::SftRecord;
use crate::retry::splitmix64;
use crate::sim::{apply, element_visible, SimState, SimTask, SiteGraph};
use crate::trajectory::{ObservationRef, Source, Terminal, Trajectory, TrajectoryBuilder};

pub const POLICY_SCHEMA: &str = "toypolicy/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    pub schema_version: String,
    /// signature -> canonical action string -> count.
    pub table: BTreeMap<String, BTreeMap<String, u64>>,
    pub honor_loss_mask: bool,
    pub trained_records: u64,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("record {trajectory_id}:{step_index} is not sim-sourced: {reason}")]
    NonSimRecord { trajectory_id: String, step_index: usize, reason: String },
    #[error("policy io failed on {path}: {message}")]
    Io { path: String, message: String },
}

/// The quoted token a task instruction asks for.
pub fn goal_token(instruction: &str) -> Option<&str> {
    let start = instruction.find('"')? + 1;
    let end = start + instruction[start..].find('"')?;
    Some(&instruction[start..end])
}

/// Is an element labeled with the goal token fully visible right now?
fn token_visible(site: &SiteGraph, state: &SimState, token: &str) -> bool {
    let Ok(page) = site.page(&state.page) else { return false };
    page.elements
        .iter()
        .any(|e| e.label == token && element_visible(site, state, e))
}

/// Signature of a decision point. The goal token keys the signature so the
/// policy conditions on the task instruction like the training objective
/// does; page, token visibility, and scroll bucket describe the state.
pub fn signature(site: &SiteGraph, instruction: &str, state: &SimState) -> Option<String> {
    let token = goal_token(instruction)?;
    let visible = token_visible(site, state, token);
    let bucket = state.scroll / site.viewport.height.max(1);
    Some(format!("{token}|{}|v{}|b{}", state.page, u8::from(visible), bucket))
}

/// Build the frequency table from exported records. With
/// `honor_loss_mask` only `loss=true` records update counts (step-level
/// filtering); without it every record does (trajectory-level baseline).
pub fn train(
    site: &SiteGraph,
    records: &[SftRecord],
    honor_loss_mask: bool,
) -> Result<ToyPolicy, PolicyError> {
    let mut policy = ToyPolicy {
        schema_version: POLICY_SCHEMA.to_string(),
        table: BTreeMap::new(),
        honor_loss_mask,
        trained_records: 0,
    };
    for record in records {
        if honor_loss_mask && !record.loss {
            continue;
        }
        let non_sim = |reason: &str| PolicyError::NonSimRecord {
            trajectory_id: record.trajectory_id.clone(),
            step_index: record.step_index,
            reason: reason.to_string(),
        };
        let obs = record.context.images.last().ok_or_else(|| non_sim("no observation in context"))?;
        let ObservationRef::Sim { id } = obs else {
            return Err(non_sim("observation is not a sim state id"));
        };
        let state = SimState::decode(id).map_err(|e| non_sim(&e.to_string()))?;
        if !site.pages.contains_key(&state.page) {
            return Err(non_sim(&format!("unknown page {}", state.page)));
        }
        let sig = signature(site, &record.context.instruction, &state)
            .ok_or_else(|| non_sim("instruction lacks a quoted goal token"))?;
        *policy
            .table
            .entry(sig)
            .or_default()
            .entry(record.target_action.to_string())
            .or_insert(0) += 1;
        policy.trained_records += 1;
    }
    Ok(policy)
}

#[derive(Debug, Clone, Copy)]
pub struct RolloutConfig {
    pub max_steps: usize,
    pub seed: u64,
    /// Gumbel perturbation scale on log-counts; 0 = deterministic argmax.
    pub temperature: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig { max_steps: 30, seed: 0, temperature: 1.0 }
    }
}

fn gumbel(rng: &mut ChaCha12Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    -(-u.ln()).ln()
}

/// Pick from a count table: argmax of `ln(count) + temperature * gumbel`,
/// iterating actions in canonical (lexicographic) order so exact ties go
/// to the first action.
fn pick_action(counts: &BTreeMap<String, u64>, temperature: f64, rng: &mut ChaCha12Rng) -> Option<Action> {
    let mut best: Option<(f64, &str)> = None;
    for (action, &count) in counts {
        if count == 0 {
            continue;
        }
        let mut score = (count as f64).ln();
        if temperature > 0.0 {
            score += temperature * gumbel(rng);
        }
        if best.is_none() || score > best.expect("checked").0 {
            best = Some((score, action));
        }
    }
    best.and_then(|(_, action)| action.parse().ok())
}

/// Deterministic explore rule shared by all policies when a signature was
/// never seen in training: scroll the page (down until the bottom, then
/// up), otherwise rotate through the page's links by step count.
fn fallback_action(site: &SiteGraph, state: &SimState, step: usize, seed: u64) -> Action {
    let Ok(page) = site.page(&state.page) else { return Action::Wait };
    let vh = site.viewport.height;
    let max_scroll = page.scroll_height.saturating_sub(vh);
    let center = Point::new(site.viewport.width / 2, vh / 2);
    if max_scroll > 0 && state.scroll < max_scroll {
        return Action::Scroll { at: center, direction: Direction::Down, amount: None };
    }
    let links: Vec<&crate::sim::Element> = page.elements.iter().filter(|e| e.link_to.is_some()).collect();
    if links.is_empty() {
        return Action::Wait;
    }
    let idx = (splitmix64(seed) as usize).wrapping_add(step) % links.len();
    let p = links[idx].bbox.center();
    Action::click(p.x, p.y)
}

/// Run the policy on `task`, capped at `cfg.max_steps`.
pub fn rollout(policy: &ToyPolicy, site: &SiteGraph, task: &SimTask, cfg: &RolloutConfig) -> Trajectory {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut state = SimState::initial(site);
    let id = format!("{}-eval-{:016x}", task.id, cfg.seed);
    let mut builder = TrajectoryBuilder::new(id, task.instruction.clone(), Source::Sim, cfg.max_steps.max(1));

    while builder.len() < cfg.max_steps.max(1) && !state.is_terminal() {
        let action = signature(site, &task.instruction, &state)
            .and_then(|sig| policy.table.get(&sig))
            .and_then(|counts| pick_action(counts, cfg.temperature, &mut rng))
            .unwrap_or_else(|| fallback_action(site, &state, builder.len(), cfg.seed));
        builder
            .push_step(ObservationRef::sim(state.encode()), action.clone(), BTreeMap::new())
            .expect("loop respects the cap");
        state = apply(site, &state, &action);
    }
    let terminal = if state.is_terminal() { Terminal::Finished } else { Terminal::StepCapReached };
    let success = state
        .finished
        .as_deref()
        .map(|answer| answer.trim() == task.goal.fact.trim())
        .or(Some(false));
    builder.finish(terminal, success)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskEval {
    pub task_id: String,
    pub successes: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub max_steps: usize,
    pub temperature: f64,
    pub per_task: Vec<TaskEval>,
    /// Mean success rate over all k rollouts of all tasks.
    pub pass_at_1: f64,
    /// Fraction of tasks with at least one success among their k rollouts.
    pub pass_at_k: f64,
}

impl EvalReport {
    /// `Pass@1 (Pass@k)` percentages, one decimal.
    pub fn pass_line(&self) -> String {
        format!(
            "Pass@1 (Pass@{}): {:.1} ({:.1})",
            self.k,
            self.pass_at_1 * 100.0,
            self.pass_at_k * 100.0
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    /// 0 means auto: twice the longest optimal path.
    pub max_steps: usize,
    pub temperature: f64,
    pub parallelism: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { max_steps: 0, temperature: 1.0, parallelism: 1 }
    }
}

fn fnv1a(text: &str) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Evaluate with `seeds.len()` rollouts per task (one per seed); a rollout
/// seed mixes the run seed with the task id so tasks decorrelate.
pub fn evaluate(
    policy: &ToyPolicy,
    site: &SiteGraph,
    tasks: &[SimTask],
    seeds: &[u64],
    cfg: &EvalConfig,
) -> EvalReport {
    let k = seeds.len().max(1);
    let max_steps = if cfg.max_steps > 0 {
        cfg.max_steps
    } else {
        2 * tasks.iter().map(|t| t.optimal_path.len()).max().unwrap_or(10)
    };
    let per_task = exec::map_indexed(tasks, cfg.parallelism, |_, task| {
        let successes = seeds
            .iter()
            .map(|&seed| {
                let rollout_cfg = RolloutConfig {
                    max_steps,
                    seed: splitmix64(seed ^ fnv1a(&task.id)),
                    temperature: cfg.temperature,
                };
                rollout(policy, site, task, &rollout_cfg).success == Some(true)
            })
            .collect::<Vec<bool>>();
        TaskEval { task_id: task.id.clone(), successes }
    });
    let total_runs = per_task.len() * k;
    let total_successes: usize = per_task.iter().map(|t| t.successes.iter().filter(|&&s| s).count()).sum();
    let solved_tasks = per_task.iter().filter(|t| t.successes.iter().any(|&s| s)).count();
    EvalReport {
        k,
        max_steps,
        temperature: cfg.temperature,
        pass_at_1: if total_runs == 0 { 0.0 } else { total_successes as f64 / total_runs as f64 },
        pass_at_k: if per_task.is_empty() { 0.0 } else { solved_tasks as f64 / per_task.len() as f64 },
        per_task,
    }
}

pub fn save_policy(policy: &ToyPolicy, path: impl AsRef<std::path::Path>) -> Result<(), PolicyError> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(policy)
        .map_err(|e| PolicyError::Io { path: path.display().to_string(), message: e.to_string() })?;
    std::fs::write(path, json + "\n")
        .map_err(|e| PolicyError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn load_policy(path: impl AsRef<std::path::Path>) -> Result<ToyPolicy, PolicyError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| PolicyError::Io { path: path.display().to_string(), message: e.to_string() })?;
    serde_json::from_str(&text)
        .map_err(|e| PolicyError::Io { path: path.display().to_string(), message: e.to_string() })
}
