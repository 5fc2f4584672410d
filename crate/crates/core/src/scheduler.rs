//! Execution-aware scheduling: deterministic-first backend selection,
//! per-action verification against the live device, and bounded recovery.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::backends::{self, Action, ActionResult, ActionStatus, UI_MICRO_BUDGET};
use crate::cost::CostTable;
use crate::device::{CommandKind, DeviceState, SnapshotScope, StateSnapshot, Tick};
use crate::goal::GoalPredicate;
use crate::memory::MemoryStore;
use crate::registry::{BackendClass, CapabilityRegistry};
use crate::trace::{ExecutionTrace, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Cm,
    UiOnly,
    NoUiAgent,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Cm => "cm",
            PolicyKind::UiOnly => "ui-only",
            PolicyKind::NoUiAgent => "no-ui-agent",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchedulePolicy {
    pub kind: PolicyKind,
    pub allowed_backends: BTreeSet<BackendClass>,
    /// Re-query device state and evaluate the step goal after each backend
    /// invocation. Off models baselines that trust backend self-reports.
    pub verification: bool,
    /// Give up on the task after a failed step instead of replanning.
    pub fail_fast: bool,
    /// Serialize the full UI tree into every observation, the UI-centric
    /// agent's context habit; verifying policies read cheap summaries.
    pub full_ui_observations: bool,
    pub max_recoveries_per_step: u32,
    pub global_timeout: Tick,
}

pub const DEFAULT_TIMEOUT_TICKS: Tick = 600;
pub const DEFAULT_MAX_RECOVERIES: u32 = 4;

impl SchedulePolicy {
    pub fn cm() -> Self {
        Self {
            kind: PolicyKind::Cm,
            allowed_backends: BackendClass::ESCALATION_ORDER.into_iter().collect(),
            verification: true,
            fail_fast: false,
            full_ui_observations: false,
            max_recoveries_per_step: DEFAULT_MAX_RECOVERIES,
            global_timeout: DEFAULT_TIMEOUT_TICKS,
        }
    }

    pub fn ui_only() -> Self {
        Self {
            kind: PolicyKind::UiOnly,
            allowed_backends: [BackendClass::UiAgent, BackendClass::DirectUi].into_iter().collect(),
            verification: false,
            fail_fast: true,
            full_ui_observations: true,
            max_recoveries_per_step: DEFAULT_MAX_RECOVERIES,
            global_timeout: DEFAULT_TIMEOUT_TICKS,
        }
    }

    pub fn no_ui_agent() -> Self {
        Self {
            kind: PolicyKind::NoUiAgent,
            allowed_backends: [BackendClass::Deterministic, BackendClass::DirectUi]
                .into_iter()
                .collect(),
            verification: true,
            fail_fast: false,
            full_ui_observations: false,
            max_recoveries_per_step: DEFAULT_MAX_RECOVERIES,
            global_timeout: DEFAULT_TIMEOUT_TICKS,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.replace('_', "-").as_str() {
            "cm" => Some(Self::cm()),
            "ui-only" => Some(Self::ui_only()),
            "no-ui-agent" => Some(Self::no_ui_agent()),
            _ => None,
        }
    }

    pub fn with_timeout(mut self, ticks: Tick) -> Self {
        self.global_timeout = ticks;
        self
    }
}

/// One plan step: a goal bound to a verb, with an optional backend hint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Step {
    pub id: String,
    pub verb: String,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
    pub goal: GoalPredicate,
    pub goal_text: String,
    /// App this step operates in; recovery relaunches it on focus loss.
    #[serde(default)]
    pub app: Option<String>,
    #[serde(default)]
    pub preferred_backend: Option<BackendClass>,
}

impl Step {
    /// Argument used to distinguish same-verb steps in script matching.
    pub fn arg_tag(&self) -> String {
        for key in ["node", "app", "title"] {
            if let Some(v) = self.args.get(key) {
                return v.clone();
            }
        }
        String::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepFinal {
    Achieved,
    Failed,
    TimedOut,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub backend: BackendClass,
    pub status: ActionStatus,
    pub ticks_spent: Tick,
    pub verified: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step_id: String,
    pub verb: String,
    pub arg_tag: String,
    pub final_status: StepFinal,
    pub attempts: Vec<AttemptSummary>,
    pub recoveries: Vec<String>,
    pub detail: String,
}

impl StepOutcome {
    pub fn achieved(&self) -> bool {
        self.final_status == StepFinal::Achieved
    }
}

/// Snapshot cache keyed on the device mutation counter: observation and
/// verification queries are charged only when the device changed.
#[derive(Debug, Default)]
pub struct SnapCache {
    counter: u64,
    summary: Option<StateSnapshot>,
    full: Option<StateSnapshot>,
}

impl SnapCache {
    pub fn get(
        &mut self,
        device: &mut DeviceState,
        costs: &CostTable,
        needs_ui: bool,
    ) -> StateSnapshot {
        if device.mutation_counter() == self.counter {
            if needs_ui {
                if let Some(full) = &self.full {
                    return full.clone();
                }
            } else if let Some(summary) = &self.summary {
                return summary.clone();
            } else if let Some(full) = &self.full {
                let mut summary = full.clone();
                summary.ui = None;
                return summary;
            }
        }
        let cost = if needs_ui { costs.query_full } else { costs.query_summary };
        device.advance(cost);
        let scope = if needs_ui { SnapshotScope::FullUi } else { SnapshotScope::Summary };
        let snap = device.query_state(scope);
        self.counter = device.mutation_counter();
        if needs_ui {
            self.full = Some(snap.clone());
            self.summary = None;
        } else {
            self.summary = Some(snap.clone());
            self.full = None;
        }
        snap
    }
}

/// Everything a step execution touches.
pub struct RunCtx<'a> {
    pub device: &'a mut DeviceState,
    pub registry: &'a CapabilityRegistry,
    pub memory: &'a MemoryStore,
    pub costs: &'a CostTable,
    pub trace: &'a mut ExecutionTrace,
    pub cache: &'a mut SnapCache,
}

/// First class in escalation order that is registered for the verb,
/// allowed by policy, and not vetoed by a memory preference. Memory may
/// only demote: an available deterministic capability always wins, and a
/// fully demoted ladder falls back to plain escalation order.
pub fn select_backend(
    step: &Step,
    policy: &SchedulePolicy,
    memory: &MemoryStore,
    registry: &CapabilityRegistry,
) -> Option<BackendClass> {
    let classes = allowed_classes(&step.verb, policy, registry);
    if classes.is_empty() {
        return None;
    }
    if classes[0] == BackendClass::Deterministic {
        return Some(BackendClass::Deterministic);
    }
    if let Some(pref) = step.preferred_backend {
        if classes.contains(&pref) {
            return Some(pref);
        }
    }
    let demoted = memory.demotions(&step.verb);
    classes
        .iter()
        .find(|c| !demoted.contains(c))
        .copied()
        .or(Some(classes[0]))
}

fn allowed_classes(
    verb: &str,
    policy: &SchedulePolicy,
    registry: &CapabilityRegistry,
) -> Vec<BackendClass> {
    let caps = registry.lookup(verb);
    let mut classes = Vec::new();
    for class in BackendClass::ESCALATION_ORDER {
        if policy.allowed_backends.contains(&class)
            && caps.iter().any(|c| c.backend == class)
            && !classes.contains(&class)
        {
            classes.push(class);
        }
    }
    classes
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecoveryAction {
    DismissPrompt,
    Wait(Tick),
    Relaunch(String),
    Escalate(BackendClass),
    Retry,
}

impl RecoveryAction {
    fn label(&self) -> String {
        match self {
            RecoveryAction::DismissPrompt => "dismiss_prompt".into(),
            RecoveryAction::Wait(n) => format!("wait({n})"),
            RecoveryAction::Relaunch(app) => format!("relaunch({app})"),
            RecoveryAction::Escalate(class) => format!("escalate({})", class.name()),
            RecoveryAction::Retry => "retry".into(),
        }
    }
}

/// Pick the next recovery action, first matching rule wins:
/// (1) pending prompt -> dismiss; (2) unresolved time gate -> wait;
/// (3) required app not foregrounded -> relaunch; (4) same backend failed
/// twice -> escalate; (5) retry. State-aware rules (1-3) require the
/// verification layer; fail-fast baselines only retry and escalate.
pub fn recover(
    step: &Step,
    policy: &SchedulePolicy,
    snapshot: Option<&StateSnapshot>,
    failures: &BTreeMap<BackendClass, u32>,
    current: BackendClass,
    registry: &CapabilityRegistry,
    clock: Tick,
) -> RecoveryAction {
    if policy.verification {
        if let Some(snap) = snapshot {
            if let Some(prompt) = &snap.prompt {
                let dismissible = prompt.skippable_at.map(|t| clock >= t).unwrap_or(true);
                if dismissible {
                    return RecoveryAction::DismissPrompt;
                }
                if let Some(at) = prompt.skippable_at {
                    return RecoveryAction::Wait(at.saturating_sub(clock).max(1));
                }
            }
            if let Some((_, ready)) = &snap.pending_launch {
                if *ready > clock {
                    return RecoveryAction::Wait(ready - clock);
                }
            }
            if let Some((_, ready)) = &snap.pending_install {
                if *ready > clock {
                    return RecoveryAction::Wait(ready - clock);
                }
            }
            if let Some(app) = &step.app {
                if &snap.foreground != app && snap.pending_launch.is_none() {
                    return RecoveryAction::Relaunch(app.clone());
                }
            }
        }
    }
    if failures.get(&current).copied().unwrap_or(0) >= 2 {
        let classes = allowed_classes(&step.verb, policy, registry);
        if let Some(pos) = classes.iter().position(|c| *c == current) {
            if let Some(next) = classes.get(pos + 1) {
                return RecoveryAction::Escalate(*next);
            }
        }
    }
    RecoveryAction::Retry
}

/// Run one step to a terminal outcome through the verify-and-recover loop.
pub fn execute_step(step: &Step, policy: &SchedulePolicy, ctx: &mut RunCtx) -> StepOutcome {
    ctx.trace.append(TraceEvent::StepStarted {
        clock: ctx.device.clock(),
        step_id: step.id.clone(),
        verb: step.verb.clone(),
    });
    let mut outcome = StepOutcome {
        step_id: step.id.clone(),
        verb: step.verb.clone(),
        arg_tag: step.arg_tag(),
        final_status: StepFinal::Failed,
        attempts: Vec::new(),
        recoveries: Vec::new(),
        detail: String::new(),
    };

    // Pre-satisfied goals finish with zero attempts. A vacuous goal marks
    // an effect-step (extraction, inspection) whose value is the execution
    // itself, so it cannot witness redundancy and always runs.
    if policy.verification && step.goal != GoalPredicate::Always {
        let snap = ctx.cache.get(ctx.device, ctx.costs, step.goal.needs_ui());
        if step.goal.eval(&snap) {
            outcome.final_status = StepFinal::Achieved;
            outcome.detail = "goal already satisfied".into();
            finish(ctx, &outcome);
            return outcome;
        }
    }

    let Some(mut backend) = select_backend(step, policy, ctx.memory, ctx.registry) else {
        outcome.detail = format!("unschedulable: no allowed backend serves '{}'", step.verb);
        finish(ctx, &outcome);
        return outcome;
    };

    let mut failures: BTreeMap<BackendClass, u32> = BTreeMap::new();
    let mut recoveries_used = 0u32;

    'execute: loop {
        if ctx.device.clock() >= policy.global_timeout {
            outcome.final_status = StepFinal::TimedOut;
            outcome.detail = "global timeout".into();
            finish(ctx, &outcome);
            return outcome;
        }
        let action = Action {
            verb: step.verb.clone(),
            args: step.args.clone(),
            expected_post: step.goal.clone(),
            budget: UI_MICRO_BUDGET as u64 * ctx.costs.ui_micro_step,
            deadline: policy.global_timeout,
        };
        let result: ActionResult = match backend {
            BackendClass::Deterministic => backends::deterministic_execute(&action, ctx.device, ctx.costs),
            BackendClass::UiAgent => backends::ui_agent_execute(&action, ctx.device, ctx.costs),
            BackendClass::DirectUi => backends::direct_ui_execute(&action, ctx.device, ctx.costs),
        };
        let attempt_index = outcome.attempts.len() as u32;
        ctx.trace.append(TraceEvent::Attempt {
            clock: ctx.device.clock(),
            step_id: step.id.clone(),
            attempt: attempt_index,
            backend,
            status: result.status,
            ticks_spent: result.ticks_spent,
            state_digest: result.state_digest.clone(),
            detail: result.detail.clone(),
            micro: result.micro.clone(),
        });
        outcome.detail = result.detail.clone();

        let (success, verify_snap) = if policy.verification {
            let snap = ctx.cache.get(ctx.device, ctx.costs, step.goal.needs_ui());
            let holds = step.goal.eval(&snap);
            ctx.trace.append(TraceEvent::Verification {
                clock: ctx.device.clock(),
                step_id: step.id.clone(),
                goal: step.goal_text.clone(),
                holds,
            });
            (holds, Some(snap))
        } else {
            (result.status == ActionStatus::Ok, None)
        };
        outcome.attempts.push(AttemptSummary {
            backend,
            status: result.status,
            ticks_spent: result.ticks_spent,
            verified: verify_snap.as_ref().map(|_| success).filter(|_| policy.verification),
        });
        if success {
            outcome.final_status = StepFinal::Achieved;
            finish(ctx, &outcome);
            return outcome;
        }
        *failures.entry(backend).or_insert(0) += 1;

        // Recovery: state-mutating actions re-verify in place; retry and
        // escalate loop back to another backend invocation.
        let mut snap = verify_snap;
        loop {
            if recoveries_used >= policy.max_recoveries_per_step {
                outcome.final_status = StepFinal::Failed;
                finish(ctx, &outcome);
                return outcome;
            }
            if ctx.device.clock() >= policy.global_timeout {
                outcome.final_status = StepFinal::TimedOut;
                outcome.detail = "global timeout".into();
                finish(ctx, &outcome);
                return outcome;
            }
            let action = recover(
                step,
                policy,
                snap.as_ref(),
                &failures,
                backend,
                ctx.registry,
                ctx.device.clock(),
            );
            recoveries_used += 1;
            outcome.recoveries.push(action.label());
            ctx.trace.append(TraceEvent::Recovery {
                clock: ctx.device.clock(),
                step_id: step.id.clone(),
                index: recoveries_used,
                action: action.label(),
            });
            let mutated = match &action {
                RecoveryAction::DismissPrompt => {
                    ctx.device.apply_command(
                        &CommandKind::DismissPrompt,
                        crate::device::CmdOrigin::Runtime,
                        ctx.costs.raw(&CommandKind::DismissPrompt),
                    );
                    true
                }
                RecoveryAction::Wait(ticks) => {
                    let cmd = CommandKind::Wait { ticks: *ticks };
                    ctx.device.apply_command(&cmd, crate::device::CmdOrigin::Runtime, *ticks);
                    true
                }
                RecoveryAction::Relaunch(app) => {
                    let cmd = CommandKind::Launch { app: app.clone() };
                    ctx.device.apply_command(&cmd, crate::device::CmdOrigin::Runtime, ctx.costs.raw(&cmd));
                    true
                }
                RecoveryAction::Escalate(next) => {
                    backend = *next;
                    continue 'execute;
                }
                RecoveryAction::Retry => {
                    continue 'execute;
                }
            };
            if mutated && policy.verification {
                let fresh = ctx.cache.get(ctx.device, ctx.costs, step.goal.needs_ui());
                let holds = step.goal.eval(&fresh);
                ctx.trace.append(TraceEvent::Verification {
                    clock: ctx.device.clock(),
                    step_id: step.id.clone(),
                    goal: step.goal_text.clone(),
                    holds,
                });
                if holds {
                    outcome.final_status = StepFinal::Achieved;
                    finish(ctx, &outcome);
                    return outcome;
                }
                snap = Some(fresh);
            }
        }
    }
}

fn finish(ctx: &mut RunCtx, outcome: &StepOutcome) {
    ctx.trace.append(TraceEvent::StepFinished {
        clock: ctx.device.clock(),
        step_id: outcome.step_id.clone(),
        verb: outcome.verb.clone(),
        outcome: format!("{:?}", outcome.final_status).to_lowercase(),
        attempts: outcome.attempts.len() as u32,
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Continue,
    Done,
    Timeout,
}

/// Timeout once the device clock reaches the policy budget; done once the
/// orchestrator marked the task finished; continue otherwise.
pub fn check_termination(trace: &ExecutionTrace, policy: &SchedulePolicy, clock: Tick) -> Termination {
    if clock >= policy.global_timeout {
        return Termination::Timeout;
    }
    if let Some(TraceEvent::TaskFinished { status, .. }) = trace.last() {
        if status == "done" {
            return Termination::Done;
        }
    }
    Termination::Continue
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{Note, PromptKind, PromptState};
    use crate::registry::{Capability, ReliabilityClass};

    fn snapshot() -> StateSnapshot {
        StateSnapshot {
            clock: 100,
            foreground: "chrome".into(),
            screen: "home".into(),
            settings: BTreeMap::new(),
            prompt: None,
            pending_launch: None,
            pending_install: None,
            installed: Default::default(),
            notes: Vec::<Note>::new(),
            search_history: Vec::new(),
            media_playing: None,
            comments: BTreeMap::new(),
            ui: None,
        }
    }

    fn step(verb: &str, app: Option<&str>) -> Step {
        Step {
            id: "s".into(),
            verb: verb.into(),
            args: BTreeMap::new(),
            goal: GoalPredicate::Always,
            goal_text: "always".into(),
            app: app.map(|s| s.to_string()),
            preferred_backend: None,
        }
    }

    fn registry(pairs: &[(&str, BackendClass)]) -> CapabilityRegistry {
        let mut registry = CapabilityRegistry::default();
        for (verb, backend) in pairs {
            registry
                .add(Capability {
                    verb: verb.to_string(),
                    backend: *backend,
                    cost_per_call: 1,
                    reliability_class: if *backend == BackendClass::Deterministic {
                        ReliabilityClass::Bounded
                    } else {
                        ReliabilityClass::Probabilistic
                    },
                })
                .unwrap();
        }
        registry
    }

    #[test]
    fn recover_rule_order_prompt_first() {
        let policy = SchedulePolicy::cm();
        let reg = registry(&[("x", BackendClass::UiAgent)]);
        let mut snap = snapshot();
        snap.prompt = Some(PromptState {
            kind: PromptKind::Permission,
            text: String::new(),
            skippable_at: None,
            expires_at: None,
            grants_install: None,
        });
        // A wrong foreground and pending launch are also present; the
        // prompt still wins.
        snap.pending_launch = Some(("chrome".into(), 200));
        snap.foreground = "launcher".into();
        let action = recover(&step("x", Some("chrome")), &policy, Some(&snap), &BTreeMap::new(), BackendClass::UiAgent, &reg, 100);
        assert_eq!(action, RecoveryAction::DismissPrompt);
    }

    #[test]
    fn recover_waits_out_an_unskippable_ad() {
        let policy = SchedulePolicy::cm();
        let reg = registry(&[("x", BackendClass::UiAgent)]);
        let mut snap = snapshot();
        snap.prompt = Some(PromptState {
            kind: PromptKind::Ad,
            text: String::new(),
            skippable_at: Some(107),
            expires_at: Some(112),
            grants_install: None,
        });
        let action = recover(&step("x", None), &policy, Some(&snap), &BTreeMap::new(), BackendClass::UiAgent, &reg, 100);
        assert_eq!(action, RecoveryAction::Wait(7));
        // Once skippable it is dismissed instead.
        let action = recover(&step("x", None), &policy, Some(&snap), &BTreeMap::new(), BackendClass::UiAgent, &reg, 108);
        assert_eq!(action, RecoveryAction::DismissPrompt);
    }

    #[test]
    fn recover_waits_for_pending_launch_remaining() {
        let policy = SchedulePolicy::cm();
        let reg = registry(&[("x", BackendClass::UiAgent)]);
        let mut snap = snapshot();
        snap.foreground = "launcher".into();
        snap.pending_launch = Some(("chrome".into(), 106));
        let action = recover(&step("x", Some("chrome")), &policy, Some(&snap), &BTreeMap::new(), BackendClass::UiAgent, &reg, 100);
        assert_eq!(action, RecoveryAction::Wait(6));
    }

    #[test]
    fn recover_relaunches_when_focus_lost() {
        let policy = SchedulePolicy::cm();
        let reg = registry(&[("x", BackendClass::UiAgent)]);
        let mut snap = snapshot();
        snap.foreground = "launcher".into();
        let action = recover(&step("x", Some("chrome")), &policy, Some(&snap), &BTreeMap::new(), BackendClass::UiAgent, &reg, 100);
        assert_eq!(action, RecoveryAction::Relaunch("chrome".into()));
    }

    #[test]
    fn recover_escalates_after_two_failures_of_the_same_backend() {
        let policy = SchedulePolicy::cm();
        let reg = registry(&[("x", BackendClass::Deterministic), ("x", BackendClass::UiAgent)]);
        let mut failures = BTreeMap::new();
        failures.insert(BackendClass::Deterministic, 2u32);
        let action = recover(&step("x", None), &policy, Some(&snapshot()), &failures, BackendClass::Deterministic, &reg, 100);
        assert_eq!(action, RecoveryAction::Escalate(BackendClass::UiAgent));
        // With one failure it retries instead.
        failures.insert(BackendClass::Deterministic, 1u32);
        let action = recover(&step("x", None), &policy, Some(&snapshot()), &failures, BackendClass::Deterministic, &reg, 100);
        assert_eq!(action, RecoveryAction::Retry);
    }

    #[test]
    fn fail_fast_policy_skips_state_aware_rules() {
        let policy = SchedulePolicy::ui_only();
        let reg = registry(&[("x", BackendClass::UiAgent)]);
        let mut snap = snapshot();
        snap.prompt = Some(PromptState {
            kind: PromptKind::Permission,
            text: String::new(),
            skippable_at: None,
            expires_at: None,
            grants_install: None,
        });
        let action = recover(&step("x", None), &policy, Some(&snap), &BTreeMap::new(), BackendClass::UiAgent, &reg, 100);
        assert_eq!(action, RecoveryAction::Retry);
    }

    #[test]
    fn termination_cases() {
        let policy = SchedulePolicy::cm();
        let mut trace = ExecutionTrace::default();
        assert_eq!(check_termination(&trace, &policy, 0), Termination::Continue);
        assert_eq!(check_termination(&trace, &policy, 600), Termination::Timeout);
        trace.append(TraceEvent::TaskFinished {
            clock: 21,
            status: "done".into(),
            completion_pct: 100,
            e2e_ticks: 21,
        });
        assert_eq!(check_termination(&trace, &policy, 21), Termination::Done);
    }

    #[test]
    fn policy_names_round_trip() {
        for name in ["cm", "ui-only", "no-ui-agent"] {
            let policy = SchedulePolicy::from_name(name).unwrap();
            assert_eq!(policy.kind.name(), name);
        }
        assert!(SchedulePolicy::from_name("ui_only").is_some());
        assert!(SchedulePolicy::from_name("bogus").is_none());
    }

    #[test]
    fn unschedulable_verb_reports_empty_selection() {
        let policy = SchedulePolicy::no_ui_agent();
        let reg = registry(&[("x", BackendClass::UiAgent)]);
        let memory = crate::memory::MemoryStore::in_memory();
        assert_eq!(select_backend(&step("x", None), &policy, &memory, &reg), None);
    }
}
