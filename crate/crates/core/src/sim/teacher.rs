//! Scripted noisy teacher: rolls out tasks with a configurable rate of
//! suboptimal-but-recoverable actions and rare task-dooming wrong finishes.
//!
//! Each emitted step carries a hidden ground-truth label in the step
//! metadata (`teacher_label`: optimal | suboptimal | irreversible).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Action, Direction, Point};
use crate::exec;
use crate::retry::splitmix64;
use crate::trajectory::{ObservationRef, Source, Terminal, Trajectory, TrajectoryBuilder};

use super::oracle::page_distances;
use super::{apply, element_visible, PageId, SimState, SimTask, SiteGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    /// Probability of emitting a suboptimal-but-recoverable action.
    pub noise: f64,
    /// Per-step probability of a task-dooming wrong finish. A finish ends
    /// the rollout, so it fires at most once.
    pub irreversible_prob: f64,
    pub seed: u64,
}

impl TeacherConfig {
    pub fn new(noise: f64, irreversible_prob: f64, seed: u64) -> Self {
        TeacherConfig {
            noise: noise.clamp(0.0, 1.0),
            irreversible_prob: irreversible_prob.clamp(0.0, 1.0),
            seed,
        }
    }
}

pub const TEACHER_LABEL_KEY: &str = "teacher_label";

/// Next step of an honest optimal policy: walk toward the goal page,
/// scroll the fact into view, then finish with it.
fn next_optimal(
    site: &SiteGraph,
    task: &SimTask,
    dist: &BTreeMap<PageId, u32>,
    state: &SimState,
) -> Action {
    let page = site.page(&state.page).expect("state page exists");
    if state.page == task.goal.page {
        let fact = page
            .elements
            .iter()
            .find(|e| e.value.as_deref() == Some(task.goal.fact.as_str()))
            .expect("goal page holds the fact");
        if element_visible(site, state, fact) {
            return Action::finished(task.goal.fact.clone());
        }
        let center = center_of(site);
        let direction = if fact.bbox.y >= state.scroll { Direction::Down } else { Direction::Up };
        return Action::Scroll { at: center, direction, amount: None };
    }
    let here = dist.get(&state.page).copied().unwrap_or(u32::MAX);
    let link = page
        .elements
        .iter()
        .find(|e| {
            e.link_to
                .as_deref()
                .and_then(|t| dist.get(t))
                .is_some_and(|&d| d < here)
        })
        .expect("home/back links keep every page connected to the goal");
    let p = link.bbox.center();
    Action::click(p.x, p.y)
}

/// A recoverable wrong move: a click on empty space, a scroll picked at
/// random, or a link that does not get closer to the goal. Detours avoid
/// leaf pages so goal leaves only ever see their own task's traffic.
fn sample_suboptimal(
    site: &SiteGraph,
    dist: &BTreeMap<PageId, u32>,
    state: &SimState,
    rng: &mut ChaCha12Rng,
) -> Action {
    let kind = rng.gen_range(0..3u8);
    if kind == 1 {
        let direction = if rng.gen_bool(0.5) { Direction::Up } else { Direction::Down };
        return Action::Scroll { at: center_of(site), direction, amount: None };
    }
    if kind == 2 {
        let page = site.page(&state.page).expect("state page exists");
        let here = dist.get(&state.page).copied().unwrap_or(u32::MAX);
        let detours: Vec<&super::Element> = page
            .elements
            .iter()
            .filter(|e| {
                e.link_to.as_deref().is_some_and(|t| {
                    !site.is_leaf(t) && dist.get(t).copied().unwrap_or(u32::MAX) >= here
                })
            })
            .collect();
        if let Some(link) = detours.as_slice().choose(rng) {
            let p = link.bbox.center();
            return Action::click(p.x, p.y);
        }
    }
    // Element bboxes never cover the top-left corner.
    Action::click(2, 2)
}

fn center_of(site: &SiteGraph) -> Point {
    Point::new(site.viewport.width / 2, site.viewport.height / 2)
}

/// Roll out one noisy teacher attempt at `task`, capped at `max_steps`.
/// Fully determined by `(site, task, cfg, max_steps)`.
pub fn teacher_rollout(
    site: &SiteGraph,
    task: &SimTask,
    cfg: &TeacherConfig,
    max_steps: usize,
    trajectory_id: impl Into<String>,
) -> Trajectory {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let dist = page_distances(site, &task.goal.page);
    let mut state = SimState::initial(site);
    let mut builder = TrajectoryBuilder::new(trajectory_id, task.instruction.clone(), Source::Sim, max_steps);

    while builder.len() < max_steps && !state.is_terminal() {
        let (action, label) = if rng.gen_bool(cfg.irreversible_prob) {
            (Action::finished(format!("not-{}", task.goal.fact)), "irreversible")
        } else if rng.gen_bool(cfg.noise) {
            (sample_suboptimal(site, &dist, &state, &mut rng), "suboptimal")
        } else {
            (next_optimal(site, task, &dist, &state), "optimal")
        };
        let mut metadata = BTreeMap::new();
        metadata.insert(TEACHER_LABEL_KEY.to_string(), serde_json::Value::String(label.to_string()));
        builder
            .push_step(ObservationRef::sim(state.encode()), action.clone(), metadata)
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

/// Mix a base seed with task and rollout indices into a per-rollout seed.
pub fn derive_seed(base: u64, task_index: usize, rollout_index: usize) -> u64 {
    splitmix64(base ^ splitmix64((task_index as u64) << 20 | rollout_index as u64))
}

/// Collect `rollouts_per_task` rollouts for each task, in deterministic
/// (task, rollout) order regardless of parallelism.
pub fn collect_rollouts(
    site: &SiteGraph,
    tasks: &[SimTask],
    cfg: &TeacherConfig,
    rollouts_per_task: usize,
    max_steps: usize,
    parallelism: usize,
) -> Vec<Trajectory> {
    let jobs: Vec<(usize, usize)> = (0..tasks.len())
        .flat_map(|t| (0..rollouts_per_task).map(move |r| (t, r)))
        .collect();
    exec::map_indexed(&jobs, parallelism, |_, &(t, r)| {
        let task = &tasks[t];
        let cfg = TeacherConfig { seed: derive_seed(cfg.seed, t, r), ..*cfg };
        teacher_rollout(site, task, &cfg, max_steps, format!("{}-r{r:02}", task.id))
    })
}
