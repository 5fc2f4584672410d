//! Top-level multi-turn loop: submit observations to the planner, dispatch
//! plan steps through the scheduler under the policy cascade, feed outcomes
//! back, and terminate on a text-only reply or the global timeout.

use serde::{Deserialize, Serialize};

use crate::cost::CostTable;
use crate::device::{DeviceState, SnapshotScope, Tick};
use crate::error::{Error, Result};
use crate::memory::{MemoryStore, TaskLearning};
use crate::planner::{ObservationPacket, OutcomeSummary, Planner, PlannerReply};
use crate::policy::{evaluate_policy, Decision, PolicyRule};
use crate::registry::CapabilityRegistry;
use crate::scheduler::{
    self, RunCtx, SchedulePolicy, SnapCache, StepFinal, StepOutcome, Termination,
};
use crate::task::Task;
use crate::trace::{ExecutionTrace, TraceEvent};

pub const DEFAULT_OBSERVATION_BUDGET: u64 = 8192;
pub const MEMORY_HITS_PER_TURN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Done,
    Timeout,
    Abort,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointResult {
    pub name: String,
    pub weight: u32,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: String,
    pub policy: String,
    pub seed: u64,
    pub status: RunStatus,
    /// Weighted percentage of satisfied checkpoints on the final snapshot.
    pub completion_pct: u32,
    /// Device clock at termination; timed-out runs report the timeout
    /// budget exactly.
    pub e2e_ticks: Tick,
    pub checkpoints: Vec<CheckpointResult>,
    pub final_text: Option<String>,
    pub outcomes: Vec<StepOutcome>,
    pub observation_bytes: u64,
    pub ui_bytes: u64,
    pub trace_digest: String,
    pub trace: ExecutionTrace,
    #[serde(skip)]
    pub learning: TaskLearning,
}

/// Session-scoped configuration for a run.
pub struct SessionConfig {
    pub seed: u64,
    pub policy_rules: Vec<PolicyRule>,
    pub default_decision: Decision,
    pub observation_budget: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            policy_rules: Vec::new(),
            default_decision: Decision::Allow,
            observation_budget: DEFAULT_OBSERVATION_BUDGET,
        }
    }
}

/// Deterministic observation packet: newest outcomes that fit the byte
/// budget, the summary snapshot, and top memory hits.
#[allow(clippy::too_many_arguments)]
pub fn build_observation(
    task: &Task,
    turn: u32,
    outcomes: &[StepOutcome],
    device: &mut DeviceState,
    memory: &mut MemoryStore,
    costs: &CostTable,
    cache: &mut SnapCache,
    budget_bytes: u64,
    full_ui: bool,
) -> ObservationPacket {
    let summary = cache.get(device, costs, full_ui);
    let mut terms: Vec<String> = task
        .instruction
        .split_whitespace()
        .map(|w| w.to_string())
        .collect();
    if let Some(last) = outcomes.last() {
        terms.push(last.verb.clone());
    }
    let memory_hits = memory.query(&terms, task.apps.first().map(|s| s.as_str()), MEMORY_HITS_PER_TURN);
    let mut packet = ObservationPacket {
        task_id: task.id.clone(),
        instruction: task.instruction.clone(),
        turn,
        total_outcomes: outcomes.len() as u32,
        outcomes: outcomes.iter().rev().map(OutcomeSummary::from).collect(),
        summary,
        memory_hits,
        byte_len: 0,
    };
    loop {
        let bytes = serde_json::to_vec(&packet).map(|v| v.len() as u64).unwrap_or(0);
        if bytes <= budget_bytes || packet.outcomes.is_empty() {
            packet.byte_len = bytes;
            break;
        }
        packet.outcomes.pop();
    }
    packet
}

/// Run one task to completion, timeout, or abort.
#[allow(clippy::too_many_arguments)]
pub fn run_task(
    task: &Task,
    policy: &SchedulePolicy,
    planner: &mut dyn Planner,
    device: &mut DeviceState,
    memory: &mut MemoryStore,
    registry: &CapabilityRegistry,
    costs: &CostTable,
    session: &SessionConfig,
    mut sink: Option<&mut dyn FnMut(&TraceEvent)>,
) -> Result<TaskReport> {
    let mut trace = ExecutionTrace::default();
    let mut cache = SnapCache::default();
    let mut outcomes: Vec<StepOutcome> = Vec::new();
    let mut flushed = 0usize;
    let mut turn: u32 = 0;
    let mut final_text: Option<String> = None;
    let mut abort_reason: Option<Error> = None;

    trace.append(TraceEvent::TaskStarted {
        clock: device.clock(),
        task_id: task.id.clone(),
        policy: policy.kind.name().to_string(),
        seed: session.seed,
    });
    flush(&trace, &mut flushed, &mut sink);

    let status: RunStatus = 'run: loop {
        if scheduler::check_termination(&trace, policy, device.clock()) == Termination::Timeout {
            break 'run RunStatus::Timeout;
        }
        turn += 1;
        let observation = build_observation(
            task,
            turn,
            &outcomes,
            device,
            memory,
            costs,
            &mut cache,
            session.observation_budget,
            policy.full_ui_observations,
        );
        device.advance(costs.planner_turn);
        let reply = match planner.plan_turn(&observation) {
            Ok(reply) => reply,
            Err(err) => {
                trace.append(TraceEvent::PlannerTurn {
                    clock: device.clock(),
                    turn,
                    observation_bytes: observation.byte_len,
                    reply: format!("abort: {err}"),
                });
                abort_reason = Some(err);
                break 'run RunStatus::Abort;
            }
        };
        let reply_desc = match &reply {
            PlannerReply::Plan { steps, .. } => format!("plan({} steps)", steps.len()),
            PlannerReply::Text { .. } => "text".to_string(),
        };
        trace.append(TraceEvent::PlannerTurn {
            clock: device.clock(),
            turn,
            observation_bytes: observation.byte_len,
            reply: reply_desc,
        });
        flush(&trace, &mut flushed, &mut sink);

        match reply {
            PlannerReply::Text { message } => {
                final_text = Some(message);
                break 'run RunStatus::Done;
            }
            PlannerReply::Plan { steps, .. } => {
                for step in steps {
                    if device.clock() >= policy.global_timeout {
                        break 'run RunStatus::Timeout;
                    }
                    let decision =
                        evaluate_policy(&step.verb, &session.policy_rules, session.default_decision);
                    if !decision.allowed() {
                        let rule = decision.decided_by.clone();
                        trace.append(TraceEvent::PolicyDenied {
                            clock: device.clock(),
                            step_id: step.id.clone(),
                            verb: step.verb.clone(),
                            level: rule.as_ref().map(|r| r.level.name().to_string()).unwrap_or_else(|| "default".into()),
                            pattern: rule.map(|r| r.verb_pattern).unwrap_or_default(),
                        });
                        outcomes.push(StepOutcome {
                            step_id: step.id.clone(),
                            verb: step.verb.clone(),
                            arg_tag: step.arg_tag(),
                            final_status: StepFinal::Failed,
                            attempts: Vec::new(),
                            recoveries: Vec::new(),
                            detail: "denied by policy".into(),
                        });
                        flush(&trace, &mut flushed, &mut sink);
                        continue;
                    }
                    let outcome = {
                        let mut ctx = RunCtx {
                            device,
                            registry,
                            memory,
                            costs,
                            trace: &mut trace,
                            cache: &mut cache,
                        };
                        scheduler::execute_step(&step, policy, &mut ctx)
                    };
                    flush(&trace, &mut flushed, &mut sink);
                    let failed = outcome.final_status == StepFinal::Failed;
                    let timed_out = outcome.final_status == StepFinal::TimedOut;
                    outcomes.push(outcome);
                    if timed_out || device.clock() >= policy.global_timeout {
                        break 'run RunStatus::Timeout;
                    }
                    if failed && policy.fail_fast {
                        // The baseline reports failure and stops instead of
                        // replanning; composing the failure report re-reads
                        // the device state one more time.
                        cache.get(device, costs, policy.full_ui_observations);
                        device.advance(costs.planner_turn);
                        turn += 1;
                        trace.append(TraceEvent::PlannerTurn {
                            clock: device.clock(),
                            turn,
                            observation_bytes: 0,
                            reply: "text".into(),
                        });
                        final_text = Some("Stopping: a step could not be completed.".into());
                        break 'run RunStatus::Done;
                    }
                }
            }
        }
    };

    // Final scoring snapshot (uncharged bookkeeping).
    let final_snap = device.query_state(SnapshotScope::FullUi);
    let checkpoints: Vec<CheckpointResult> = task
        .checkpoints
        .iter()
        .map(|c| CheckpointResult {
            name: c.name.clone(),
            weight: c.weight,
            satisfied: c.goal.eval(&final_snap),
        })
        .collect();
    let completion_pct: u32 = checkpoints.iter().filter(|c| c.satisfied).map(|c| c.weight).sum();
    let e2e_ticks = match status {
        RunStatus::Timeout => policy.global_timeout,
        _ => device.clock(),
    };
    trace.append(TraceEvent::TaskFinished {
        clock: device.clock(),
        status: match status {
            RunStatus::Done => "done".into(),
            RunStatus::Timeout => "timeout".into(),
            RunStatus::Abort => "abort".into(),
        },
        completion_pct,
        e2e_ticks,
    });
    flush(&trace, &mut flushed, &mut sink);

    let mut learning = TaskLearning {
        task_id: task.id.clone(),
        scope: task.scope(),
        verb_sequence: outcomes
            .iter()
            .filter(|o| o.achieved())
            .map(|o| o.verb.clone())
            .collect(),
        fully_successful: status == RunStatus::Done && completion_pct == 100,
        finished_at: device.clock(),
        failed_verifications: Default::default(),
    };
    for outcome in &outcomes {
        for attempt in &outcome.attempts {
            if attempt.verified == Some(false) {
                *learning
                    .failed_verifications
                    .entry((outcome.verb.clone(), attempt.backend))
                    .or_insert(0) += 1;
            }
        }
    }

    if let Some(err) = abort_reason {
        // Aborts still produce a (partial) report upstream via the error
        // path; callers decide whether to surface or wrap it.
        let _ = err;
    }

    Ok(TaskReport {
        task_id: task.id.clone(),
        policy: policy.kind.name().to_string(),
        seed: session.seed,
        status,
        completion_pct,
        e2e_ticks,
        checkpoints,
        final_text,
        outcomes,
        observation_bytes: trace.observation_bytes,
        ui_bytes: trace.ui_bytes,
        trace_digest: trace.digest(),
        trace,
        learning,
    })
}

fn flush(
    trace: &ExecutionTrace,
    flushed: &mut usize,
    sink: &mut Option<&mut dyn FnMut(&TraceEvent)>,
) {
    if let Some(sink) = sink.as_mut() {
        for event in &trace.events[*flushed..] {
            sink(event);
        }
    }
    *flushed = trace.events.len();
}
