//! Ground-truth graders for the simulator.
//!
//! The oracle scores with the landmark semantics only: 10 when an action
//! strictly decreases the page-graph distance to the goal (or is the
//! correct finish), 5 when the distance is unchanged or recoverably worse
//! (no-op clicks, scrolls, detours with a way back), 0 for a wrong finish
//! or an unreachable state. Intermediate scores are left to stochastic
//! mock backends so oracle-based tests stay exact.

use std::collections::{BTreeMap, VecDeque};

use crate::action::Action;
use crate::grading::{BackendError, GradeRequest, GradeResult, GraderBackend};
use crate::trajectory::Trajectory;

use super::{apply, PageId, SimState, SimTask, SiteBundle, SiteGraph};

/// Shortest link-click distance from every page to `goal` (BFS on the
/// reversed link graph). Pages missing from the map cannot reach the goal.
pub fn page_distances(site: &SiteGraph, goal: &str) -> BTreeMap<PageId, u32> {
    let mut incoming: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, page) in &site.pages {
        for element in &page.elements {
            if let Some(target) = element.link_to.as_deref() {
                incoming.entry(target).or_default().push(id);
            }
        }
    }
    let mut dist = BTreeMap::new();
    if !site.pages.contains_key(goal) {
        return dist;
    }
    dist.insert(goal.to_string(), 0u32);
    let mut queue = VecDeque::from([goal.to_string()]);
    while let Some(page) = queue.pop_front() {
        let d = dist[&page];
        for &source in incoming.get(page.as_str()).into_iter().flatten() {
            if !dist.contains_key(source) {
                dist.insert(source.to_string(), d + 1);
                queue.push_back(source.to_string());
            }
        }
    }
    dist
}

/// Score a single proposed action from `state` under `task`.
pub fn oracle_grade(site: &SiteGraph, task: &SimTask, state: &SimState, action: &Action) -> u8 {
    let dist = page_distances(site, &task.goal.page);
    oracle_grade_with(site, task, &dist, state, action).0
}

pub(crate) fn oracle_grade_with(
    site: &SiteGraph,
    task: &SimTask,
    dist: &BTreeMap<PageId, u32>,
    state: &SimState,
    action: &Action,
) -> (u8, String) {
    if let Action::Finished(answer) = action {
        return if answer.trim() == task.goal.fact {
            (10, "correct finish".to_string())
        } else {
            (0, format!("wrong finish: {answer:?}"))
        };
    }
    let before = dist.get(&state.page).copied();
    let next = apply(site, state, action);
    let after = dist.get(&next.page).copied();
    match (before, after) {
        (Some(d0), Some(d1)) if d1 < d0 => (10, format!("distance {d0} -> {d1}")),
        (Some(d0), Some(d1)) => (5, format!("distance {d0} -> {d1}")),
        _ => (0, "goal unreachable".to_string()),
    }
}

/// True iff the trajectory's last action is `finished` with the exact goal
/// fact. `case_fold` relaxes the match to case-insensitive comparison.
pub fn oracle_judge(traj: &Trajectory, task: &SimTask, case_fold: bool) -> bool {
    let Some(last) = traj.steps.last() else { return false };
    let Action::Finished(answer) = &last.action else { return false };
    let answer = answer.trim();
    if case_fold {
        answer.eq_ignore_ascii_case(task.goal.fact.trim())
    } else {
        answer == task.goal.fact.trim()
    }
}

/// Grader backend over simulator ground truth. Tasks are looked up by
/// instruction; the graded step's state is decoded from its sim state id.
pub struct OracleGraderBackend {
    site: SiteGraph,
    tasks: BTreeMap<String, SimTask>,
    distances: BTreeMap<String, BTreeMap<PageId, u32>>,
}

impl OracleGraderBackend {
    pub fn new(bundle: &SiteBundle) -> Self {
        let mut tasks = BTreeMap::new();
        let mut distances = BTreeMap::new();
        for task in &bundle.tasks {
            distances.insert(task.id.clone(), page_distances(&bundle.site, &task.goal.page));
            tasks.insert(task.instruction.clone(), task.clone());
        }
        OracleGraderBackend { site: bundle.site.clone(), tasks, distances }
    }
}

impl GraderBackend for OracleGraderBackend {
    fn id(&self) -> &str {
        "oracle"
    }

    fn grade(&self, request: &GradeRequest) -> Result<GradeResult, BackendError> {
        let task = self
            .tasks
            .get(&request.instruction)
            .ok_or_else(|| BackendError::Rejected(format!("unknown task: {}", request.instruction)))?;
        let state_id = request
            .observation
            .sim_id()
            .ok_or_else(|| BackendError::Rejected("oracle needs a sim observation".into()))?;
        let state = SimState::decode(state_id).map_err(|e| BackendError::Rejected(e.to_string()))?;
        let dist = &self.distances[&task.id];
        let (score, why) = oracle_grade_with(&self.site, task, dist, &state, &request.proposed_action);
        let mut stages = BTreeMap::new();
        stages.insert("distance".to_string(), why.clone());
        Ok(GradeResult {
            score,
            stages,
            raw: format!("{why}\nExpected value: {score}"),
            grader_id: "oracle".to_string(),
        })
    }
}

/// Trajectory-success judge over simulator ground truth.
pub struct OracleJudge {
    tasks: BTreeMap<String, SimTask>,
    case_fold: bool,
}

impl OracleJudge {
    pub fn new(bundle: &SiteBundle) -> Self {
        let tasks = bundle.tasks.iter().map(|t| (t.instruction.clone(), t.clone())).collect();
        OracleJudge { tasks, case_fold: false }
    }

    pub fn with_case_fold(mut self, case_fold: bool) -> Self {
        self.case_fold = case_fold;
        self
    }
}

impl crate::filter::TrajectoryJudge for OracleJudge {
    fn id(&self) -> &str {
        "oracle"
    }

    fn judge(&self, traj: &Trajectory) -> Result<bool, BackendError> {
        let task = self
            .tasks
            .get(&traj.instruction)
            .ok_or_else(|| BackendError::Rejected(format!("unknown task: {}", traj.instruction)))?;
        Ok(oracle_judge(traj, task, self.case_fold))
    }
}
