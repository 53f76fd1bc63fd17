//! The grounded re-planning episode loop.
//!
//! The planner proposes a plan; the low-level planner executes its subgoals
//! one at a time. In dynamic mode the planner is asked for a continuation
//! whenever a subgoal or action fails, or when `replan_interval` steps pass
//! without a subgoal completing.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::backend::BackendError;
use crate::lowlevel::{Decision, LowLevelPlanner, SubgoalFailure};
use crate::planner::{HighLevelPlanner, PlannerError, PlannerState};
use crate::sim::{check_goal, ActionOutcome, DetectionNoise, Observation, PrimitiveAction, Scene, SceneError};
use crate::types::{HighLevelPlan, ObjectClass, Subgoal, TaskInstance, TaskType};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    /// Steps without a subgoal completing before a re-plan.
    pub replan_interval: u32,
    pub max_steps: u32,
    pub max_action_failures: u32,
    pub max_replans: u32,
    /// `false` plans once and never re-plans.
    pub dynamic: bool,
    pub seed: u64,
    pub observation_radius: i32,
    /// Probability that a visible object goes undetected.
    pub detection_noise: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            replan_interval: 20,
            max_steps: 300,
            max_action_failures: 10,
            max_replans: 10,
            dynamic: true,
            seed: 0,
            observation_radius: 3,
            detection_noise: 0.0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("replan_interval", self.replan_interval),
            ("max_steps", self.max_steps),
            ("max_action_failures", self.max_action_failures),
            ("max_replans", self.max_replans),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be positive"));
        }
        if self.observation_radius < 0 {
            return Err("observation_radius must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.detection_noise) {
            return Err("detection_noise must be in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReplanReason {
    ActionFailure,
    Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EndReason {
    /// Every subgoal of the current plan completed.
    AllSubgoalsDone,
    /// The planner returned an empty plan.
    PlanExhausted,
    MaxSteps,
    MaxActionFailures,
    MaxReplans,
    /// A subgoal failed with re-planning disabled.
    SubgoalFailure,
    /// The completion could not be parsed after the retry.
    PlanningFailure,
    BackendFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event")]
pub enum TraceEvent {
    Plan {
        t: u32,
        observed: Vec<ObjectClass>,
        plan: HighLevelPlan,
    },
    Step {
        t: u32,
        k: usize,
        subgoal: Subgoal,
        action: PrimitiveAction,
        outcome: ActionOutcome,
        /// Classes seen for the first time this episode.
        new_objects: Vec<ObjectClass>,
    },
    SubgoalCompleted {
        t: u32,
        k: usize,
        subgoal: Subgoal,
    },
    SubgoalFailed {
        t: u32,
        k: usize,
        subgoal: Subgoal,
        reason: SubgoalFailure,
    },
    Replan {
        t: u32,
        reason: ReplanReason,
        completed: HighLevelPlan,
        observed: Vec<ObjectClass>,
        plan: HighLevelPlan,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub schema_version: u32,
    pub task_id: String,
    pub task_type: TaskType,
    pub success: bool,
    pub gc_satisfied: usize,
    pub gc_total: usize,
    /// Subgoals completed, in order.
    pub executed_hlp: HighLevelPlan,
    /// Completed prefix at the last planner call followed by that call's plan.
    pub full_predicted_hlp: HighLevelPlan,
    pub initial_hlp: HighLevelPlan,
    pub end_reason: EndReason,
    pub steps: u32,
    pub replans: u32,
    pub action_failures: u32,
    pub planner_calls: u32,
    pub visited_map: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub events: Vec<TraceEvent>,
    pub summary: EpisodeSummary,
}

impl EpisodeTrace {
    /// One event per line, then a `{"summary": ...}` line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let _ = writeln!(out, "{}", serde_json::to_string(e).expect("event serializes"));
        }
        let summary = serde_json::json!({ "summary": self.summary });
        let _ = writeln!(out, "{summary}");
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        #[derive(Deserialize)]
        struct SummaryLine {
            summary: EpisodeSummary,
        }
        let mut events = Vec::new();
        let mut summary = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if line.starts_with("{\"summary\"") {
                summary = Some(serde_json::from_str::<SummaryLine>(line)?.summary);
            } else {
                events.push(serde_json::from_str(line)?);
            }
        }
        let summary = summary.ok_or_else(|| <serde_json::Error as serde::de::Error>::custom("missing summary line"))?;
        Ok(Self { events, summary })
    }

    pub fn replan_events(&self) -> impl Iterator<Item = (u32, ReplanReason)> + '_ {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Replan { t, reason, .. } => Some((*t, *reason)),
            _ => None,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error("task {task} expects scene {expected}, got {got}")]
    SceneMismatch { task: String, expected: String, got: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("episode {}: backend failure: {error}", trace.summary.task_id)]
    Component { trace: Box<EpisodeTrace>, error: BackendError },
}

fn sorted(set: &BTreeSet<ObjectClass>) -> Vec<ObjectClass> {
    set.iter().cloned().collect()
}

struct Episode<'a> {
    task: &'a TaskInstance,
    cfg: &'a EpisodeConfig,
    planner: &'a dyn HighLevelPlanner,
    state: PlannerState,
    events: Vec<TraceEvent>,
    plan: HighLevelPlan,
    plan_base: HighLevelPlan,
    initial: HighLevelPlan,
    k: usize,
    steps: u32,
    replans: u32,
    failures: u32,
    since_completion: u32,
}

enum PlanResult {
    Ok,
    End(EndReason),
    Backend(BackendError),
}

impl Episode<'_> {
    fn request_plan(&mut self) -> PlanResult {
        self.state.t = self.steps as u64;
        match self.planner.plan(&mut self.state) {
            Ok(plan) => {
                self.plan_base = self.state.completed().clone();
                self.plan = plan;
                self.k = 0;
                self.since_completion = 0;
                PlanResult::Ok
            }
            Err(PlannerError::Backend(e)) => PlanResult::Backend(e),
            Err(e) => {
                log::info!("episode {}: planning failed: {e}", self.task.id);
                PlanResult::End(EndReason::PlanningFailure)
            }
        }
    }

    fn complete_subgoal(&mut self) {
        let subgoal = self.plan.subgoals()[self.k].clone();
        self.events.push(TraceEvent::SubgoalCompleted { t: self.steps, k: self.k, subgoal: subgoal.clone() });
        self.state.push_completed(subgoal);
        self.k += 1;
        self.since_completion = 0;
    }

    fn replan(&mut self, reason: ReplanReason, ll: &mut LowLevelPlanner) -> PlanResult {
        if self.replans >= self.cfg.max_replans {
            return PlanResult::End(EndReason::MaxReplans);
        }
        match self.request_plan() {
            PlanResult::Ok => {}
            other => return other,
        }
        // Counts answered re-plans only, so it equals the trace's Replan events.
        self.replans += 1;
        ll.reset_subgoal();
        self.events.push(TraceEvent::Replan {
            t: self.steps,
            reason,
            completed: self.state.completed().clone(),
            observed: sorted(self.state.observed()),
            plan: self.plan.clone(),
        });
        PlanResult::Ok
    }
}

/// Runs one episode of `task` in `scene`.
pub fn run_episode(
    task: &TaskInstance,
    scene: &Scene,
    planner: &dyn HighLevelPlanner,
    cfg: &EpisodeConfig,
) -> Result<EpisodeTrace, EpisodeError> {
    if task.scene_id != scene.id {
        return Err(EpisodeError::SceneMismatch {
            task: task.id.clone(),
            expected: task.scene_id.clone(),
            got: scene.id.clone(),
        });
    }
    let mut world = scene.initial_state()?;
    let mut noise = DetectionNoise::new(cfg.detection_noise, cfg.seed);
    let mut ll = LowLevelPlanner::new(world.grid().clone(), world.agent());
    let mut obs: Observation = world.observe(cfg.observation_radius, &mut noise);
    ll.update(&obs);

    let mut ep = Episode {
        task,
        cfg,
        planner,
        state: PlannerState::new(task.id.clone(), task.instruction.clone()),
        events: Vec::new(),
        plan: HighLevelPlan::empty(),
        plan_base: HighLevelPlan::empty(),
        initial: HighLevelPlan::empty(),
        k: 0,
        steps: 0,
        replans: 0,
        failures: 0,
        since_completion: 0,
    };
    ep.state.observe(obs.classes());

    let mut backend_error = None;
    let end_reason = 'run: {
        match ep.request_plan() {
            PlanResult::Ok => {}
            PlanResult::End(r) => break 'run r,
            PlanResult::Backend(e) => {
                backend_error = Some(e);
                break 'run EndReason::BackendFailure;
            }
        }
        ep.initial = ep.plan.clone();
        ep.events.push(TraceEvent::Plan { t: 0, observed: sorted(ep.state.observed()), plan: ep.plan.clone() });

        loop {
            if ep.plan.is_empty() {
                break 'run EndReason::PlanExhausted;
            }
            if ep.k >= ep.plan.len() {
                break 'run EndReason::AllSubgoalsDone;
            }
            if ep.steps >= cfg.max_steps {
                break 'run EndReason::MaxSteps;
            }
            let subgoal = ep.plan.subgoals()[ep.k].clone();
            let trigger = match ll.next_action(&subgoal, &obs) {
                Decision::SubgoalDone => {
                    ep.complete_subgoal();
                    None
                }
                Decision::SubgoalFailed(reason) => {
                    ep.events.push(TraceEvent::SubgoalFailed { t: ep.steps, k: ep.k, subgoal, reason });
                    Some(ReplanReason::ActionFailure)
                }
                Decision::Act(action) => {
                    let outcome = world.step(&action);
                    ep.steps += 1;
                    obs = world.observe(cfg.observation_radius, &mut noise);
                    let before = ep.state.observed().len();
                    let fresh: BTreeSet<ObjectClass> =
                        obs.classes().filter(|c| !ep.state.observed().contains(*c)).cloned().collect();
                    ep.state.observe(obs.classes());
                    debug_assert_eq!(ep.state.observed().len(), before + fresh.len());
                    ep.events.push(TraceEvent::Step {
                        t: ep.steps,
                        k: ep.k,
                        subgoal: subgoal.clone(),
                        action: action.clone(),
                        outcome,
                        new_objects: sorted(&fresh),
                    });
                    ll.update(&obs);
                    let mut trigger = None;
                    match ll.record_outcome(&action, outcome) {
                        Some(Decision::SubgoalDone) => ep.complete_subgoal(),
                        Some(Decision::SubgoalFailed(reason)) => {
                            ep.events.push(TraceEvent::SubgoalFailed { t: ep.steps, k: ep.k, subgoal, reason });
                            trigger = Some(ReplanReason::ActionFailure);
                        }
                        Some(Decision::Act(_)) => unreachable!("record_outcome never emits actions"),
                        None => {
                            ep.since_completion += 1;
                            if !outcome.is_success() {
                                trigger = Some(ReplanReason::ActionFailure);
                            } else if ep.since_completion >= cfg.replan_interval {
                                trigger = Some(ReplanReason::Interval);
                            }
                        }
                    }
                    if !outcome.is_success() {
                        ep.failures += 1;
                        if ep.failures >= cfg.max_action_failures {
                            break 'run EndReason::MaxActionFailures;
                        }
                    }
                    trigger
                }
            };
            let Some(reason) = trigger else { continue };
            if !cfg.dynamic {
                if reason == ReplanReason::ActionFailure {
                    break 'run EndReason::SubgoalFailure;
                }
                continue;
            }
            match ep.replan(reason, &mut ll) {
                PlanResult::Ok => {}
                PlanResult::End(r) => break 'run r,
                PlanResult::Backend(e) => {
                    backend_error = Some(e);
                    break 'run EndReason::BackendFailure;
                }
            }
        }
    };

    let status = check_goal(&world, &task.goal_conditions);
    let trace = EpisodeTrace {
        summary: EpisodeSummary {
            schema_version: TRACE_SCHEMA_VERSION,
            task_id: task.id.clone(),
            task_type: task.task_type,
            success: status.success,
            gc_satisfied: status.satisfied,
            gc_total: status.total,
            executed_hlp: ep.state.completed().clone(),
            full_predicted_hlp: ep.plan_base.concat(&ep.plan),
            initial_hlp: ep.initial.clone(),
            end_reason,
            steps: ep.steps,
            replans: ep.replans,
            action_failures: ep.failures,
            planner_calls: ep.state.calls(),
            visited_map: ll.visited_map().lines().map(str::to_owned).collect(),
        },
        events: ep.events,
    };
    match backend_error {
        Some(error) => Err(EpisodeError::Component { trace: Box::new(trace), error }),
        None => Ok(trace),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerViolation {
    pub event_index: usize,
    pub message: String,
}

/// Replays a trace against the re-plan rule: a re-plan happens exactly when
/// an action or subgoal fails, or when `replan_interval` steps pass without
/// a completion. Also checks that each re-plan carries the completed prefix
/// and that static traces never re-plan.
pub fn verify_replan_triggers(trace: &EpisodeTrace, cfg: &EpisodeConfig) -> Vec<TriggerViolation> {
    let mut violations = Vec::new();
    let mut flag = |i: usize, m: String| violations.push(TriggerViolation { event_index: i, message: m });
    let mut counter = 0u32;
    let mut pending: Option<ReplanReason> = None;
    let mut completed: Vec<Subgoal> = Vec::new();
    let mut last_t = 0u32;
    let mut replans = 0u32;
    for (i, e) in trace.events.iter().enumerate() {
        match e {
            TraceEvent::Plan { .. } => {
                if i != 0 {
                    flag(i, "initial plan event not first".into());
                }
            }
            TraceEvent::Step { t, outcome, .. } => {
                if *t <= last_t {
                    flag(i, format!("step time {t} not after {last_t}"));
                }
                last_t = *t;
                if let Some(r) = pending {
                    flag(i, format!("step executed while a {r:?} re-plan was due"));
                }
                counter += 1;
                if !outcome.is_success() {
                    pending = Some(ReplanReason::ActionFailure);
                } else if cfg.dynamic && counter >= cfg.replan_interval {
                    pending = Some(ReplanReason::Interval);
                }
            }
            TraceEvent::SubgoalCompleted { subgoal, .. } => {
                if pending == Some(ReplanReason::ActionFailure) {
                    flag(i, "subgoal completed after a failed action".into());
                }
                // A completion on the step that reached the interval cancels it.
                if pending == Some(ReplanReason::Interval) && matches!(trace.events.get(i.wrapping_sub(1)), Some(TraceEvent::Step { .. })) {
                    pending = None;
                }
                if pending.is_some() {
                    flag(i, "subgoal completed while a re-plan was due".into());
                }
                completed.push(subgoal.clone());
                counter = 0;
            }
            TraceEvent::SubgoalFailed { .. } => pending = Some(ReplanReason::ActionFailure),
            TraceEvent::Replan { reason, completed: prefix, .. } => {
                replans += 1;
                if !cfg.dynamic {
                    flag(i, "re-plan in static mode".into());
                }
                if pending != Some(*reason) {
                    flag(i, format!("{reason:?} re-plan without its trigger (pending {pending:?})"));
                }
                if prefix.subgoals() != completed.as_slice() {
                    flag(i, "re-plan prompt prefix differs from completed subgoals".into());
                }
                pending = None;
                counter = 0;
            }
        }
    }
    if let Some(r) = pending {
        let preempted = matches!(
            trace.summary.end_reason,
            EndReason::MaxReplans
                | EndReason::MaxActionFailures
                | EndReason::PlanningFailure
                | EndReason::BackendFailure
        ) || (!cfg.dynamic && trace.summary.end_reason == EndReason::SubgoalFailure);
        if !preempted {
            flag(trace.events.len(), format!("{r:?} trigger never answered; episode ended with {:?}", trace.summary.end_reason));
        }
    }
    if replans != trace.summary.replans {
        flag(trace.events.len(), format!("summary counts {} re-plans, trace has {replans}", trace.summary.replans));
    }
    if trace.summary.executed_hlp.subgoals() != completed.as_slice() {
        flag(trace.events.len(), "executed plan differs from completed subgoals".into());
    }
    violations
}
