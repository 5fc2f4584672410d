//! The three control-backend classes, each exposing bounded action
//! primitives against the device and returning machine-readable results.
//!
//! Deterministic backends issue structured commands that bypass UI fault
//! draws and never read the rendered tree. The UI agent runs a bounded
//! perceive-act micro-loop over the tree. Direct UI issues one blind
//! interface action and reports command acceptance only.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::LAUNCHER;
use crate::cost::CostTable;
use crate::device::{slug, CmdOrigin, CommandKind, CommandOutcome, DeviceState, SnapshotScope, Tick};
use crate::goal::GoalPredicate;
use crate::grounding::{self, MicroHistory, Proposal};

/// Micro-steps allowed per UI-agent action.
pub const UI_MICRO_BUDGET: u32 = 15;
/// Consecutive rejected or targetless micro-steps before bailing out.
pub const UI_STALL_REJECTS: u32 = 2;
/// Consecutive no-effect micro-steps before bailing out.
pub const UI_STALL_NO_PROGRESS: u32 = 3;

/// A bounded backend operation with a declared expected postcondition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Action {
    pub verb: String,
    pub args: BTreeMap<String, String>,
    /// The step goal; backends may consult a weaker internal postcondition.
    pub expected_post: GoalPredicate,
    /// Tick budget for the whole invocation.
    pub budget: Tick,
    /// Hard wall: stop issuing micro-steps once the device clock passes it.
    pub deadline: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionStatus {
    Ok,
    Rejected,
    Exhausted,
}

/// One micro-step of a UI-agent action, recorded for the trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MicroRecord {
    pub index: u32,
    pub clock: Tick,
    pub foreground: String,
    pub proposal: String,
    pub outcome: String,
    pub precondition_failure: bool,
    pub ui_bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionResult {
    pub status: ActionStatus,
    pub detail: String,
    pub ticks_spent: Tick,
    pub state_digest: String,
    #[serde(default)]
    pub micro: Vec<MicroRecord>,
}

impl ActionResult {
    fn new(status: ActionStatus, detail: String, ticks: Tick, digest: String) -> Self {
        Self { status, detail, ticks_spent: ticks, state_digest: digest, micro: Vec::new() }
    }
}

/// Execute through the deterministic pathway: the mapped structured command
/// sequence, with UI fault draws bypassed. Status is `ok` iff every command
/// was accepted and the mapping's own bounded postcondition holds.
pub fn deterministic_execute(action: &Action, device: &mut DeviceState, costs: &CostTable) -> ActionResult {
    let mut spent: Tick = 0;
    let arg = |k: &str| action.args.get(k).cloned().unwrap_or_default();
    let issue = |device: &mut DeviceState, cmd: CommandKind, spent: &mut Tick| -> CommandOutcome {
        *spent += costs.deterministic_cmd;
        device.apply_command(&cmd, CmdOrigin::Deterministic, costs.deterministic_cmd)
    };
    let (outcome, bounded_post_ok, detail): (CommandOutcome, bool, String) = match action.verb.as_str() {
        "set_setting" => {
            let key = arg("key");
            let value = arg("value");
            let known = device.query_state(SnapshotScope::Summary).settings.contains_key(&key)
                || device.catalog().apps.iter().any(|a| {
                    a.screens.iter().any(|s| {
                        s.nodes.iter().any(|n| n.effect == format!("toggle_setting:{key}"))
                    })
                });
            if key.is_empty() || !known {
                (CommandOutcome::Rejected { reason: "unknown setting".into() }, false, String::new())
            } else {
                let current = device
                    .query_state(SnapshotScope::Summary)
                    .settings
                    .get(&key)
                    .cloned()
                    .unwrap_or_else(|| "off".into());
                let outcome = if current == value {
                    CommandOutcome::Accepted
                } else {
                    issue(device, CommandKind::ToggleSetting { key: key.clone() }, &mut spent)
                };
                let now = device.query_state(SnapshotScope::Summary);
                let ok = now.settings.get(&key).map(|v| v == &value).unwrap_or(false);
                (outcome, ok, format!("{key}={value}"))
            }
        }
        "launch_app" => {
            let app = arg("app");
            let outcome = issue(device, CommandKind::Launch { app: app.clone() }, &mut spent);
            // Bounded post: the launch is initiated (pending or foregrounded);
            // completion is the scheduler's to verify.
            let snap = device.query_state(SnapshotScope::Summary);
            let initiated = snap.foreground == app
                || snap.pending_launch.as_ref().map(|(a, _)| a == &app).unwrap_or(false);
            (outcome, initiated, format!("launch {app}"))
        }
        "go_home" => {
            let mut outcome = CommandOutcome::Accepted;
            for _ in 0..3 {
                if device.query_state(SnapshotScope::Summary).foreground == LAUNCHER {
                    break;
                }
                outcome = issue(device, CommandKind::PressBack, &mut spent);
            }
            let home = device.query_state(SnapshotScope::Summary).foreground == LAUNCHER;
            (outcome, home, "go home".into())
        }
        "inspect_screen" => {
            // Structured state dump: built from device state and canned
            // content, never from the rendered tree.
            spent += costs.deterministic_cmd;
            device.advance(costs.deterministic_cmd);
            let snap = device.query_state(SnapshotScope::Summary);
            let mut parts = vec![format!("app={} screen={}", snap.foreground, snap.screen)];
            if let Some(query) = device.current_query() {
                parts.push(format!("Results for: {query}"));
                for doc in device.catalog().canned_for(&snap.foreground, &query) {
                    parts.push(format!("{} — {}", doc.title, doc.body));
                }
            }
            (CommandOutcome::Accepted, true, parts.join(" | "))
        }
        _ => (CommandOutcome::Rejected { reason: "unsupported verb".into() }, false, String::new()),
    };
    let digest = device.content_digest();
    match outcome {
        CommandOutcome::Accepted if bounded_post_ok => {
            ActionResult::new(ActionStatus::Ok, detail, spent, digest)
        }
        CommandOutcome::Accepted => {
            ActionResult::new(ActionStatus::Rejected, format!("postcondition not reached: {detail}"), spent, digest)
        }
        CommandOutcome::Rejected { reason } => {
            ActionResult::new(ActionStatus::Rejected, reason, spent, digest)
        }
    }
}

/// Direct UI control: one blind mapped command. Status mirrors command
/// acceptance only; the goal is never consulted here.
pub fn direct_ui_execute(action: &Action, device: &mut DeviceState, costs: &CostTable) -> ActionResult {
    let arg = |k: &str| action.args.get(k).cloned().unwrap_or_default();
    let cmd = match action.verb.as_str() {
        "tap_node" => Some(CommandKind::Tap { node: arg("node") }),
        "type_node" => Some(CommandKind::TypeText { node: arg("node"), text: arg("text") }),
        "launch_app" => Some(CommandKind::Launch { app: arg("app") }),
        "go_home" => Some(CommandKind::PressBack),
        "play_video" => Some(CommandKind::Tap { node: format!("video_{}", slug(&arg("title"))) }),
        "open_comments" => Some(CommandKind::Tap { node: "comments_tab".into() }),
        "post_comment" => Some(CommandKind::Tap { node: "post_btn".into() }),
        "install_app" => Some(CommandKind::Tap { node: "install_btn".into() }),
        "write_note" => Some(CommandKind::Tap { node: "new_note".into() }),
        _ => None,
    };
    let Some(cmd) = cmd else {
        let digest = device.content_digest();
        return ActionResult::new(ActionStatus::Rejected, "unsupported verb".into(), 0, digest);
    };
    let outcome = device.apply_command(&cmd, CmdOrigin::Ui, costs.direct_ui_cmd);
    let digest = device.content_digest();
    match outcome {
        CommandOutcome::Accepted => {
            ActionResult::new(ActionStatus::Ok, format!("{} issued", cmd.name()), costs.direct_ui_cmd, digest)
        }
        CommandOutcome::Rejected { reason } => {
            ActionResult::new(ActionStatus::Rejected, reason, costs.direct_ui_cmd, digest)
        }
    }
}

/// The UI agent's belief test for an action: when this holds the agent
/// reports success, whether or not the step goal is actually met.
enum BeliefPost {
    Structural(GoalPredicate),
    GestureIssued(&'static str),
    LaunchInitiated,
    ExtractDone,
}

fn belief_post(verb: &str, args: &BTreeMap<String, String>) -> BeliefPost {
    let arg = |k: &str| args.get(k).cloned().unwrap_or_default();
    match verb {
        "launch_app" => BeliefPost::LaunchInitiated,
        "web_search" => BeliefPost::Structural(GoalPredicate::NodeVisible("Results for".into())),
        "read_page" => BeliefPost::ExtractDone,
        "play_video" => BeliefPost::Structural(GoalPredicate::All(vec![
            GoalPredicate::VideoPlaying(arg("title")),
            GoalPredicate::PromptAbsent,
        ])),
        "open_comments" => BeliefPost::Structural(GoalPredicate::ScreenIs("youtube".into(), "comments".into())),
        // Submitting gestures are believed done once the tap lands.
        "post_comment" => BeliefPost::GestureIssued("post_btn"),
        "write_note" => BeliefPost::GestureIssued("save_btn"),
        "install_app" => BeliefPost::Structural(GoalPredicate::AppInstalled(arg("app"))),
        "go_home" => BeliefPost::Structural(GoalPredicate::ForegroundIs(LAUNCHER.into())),
        _ => BeliefPost::Structural(GoalPredicate::Always),
    }
}

/// Execute through the UI agent: perceive, ground, act, re-check, bounded
/// by the micro budget and stall detectors.
pub fn ui_agent_execute(action: &Action, device: &mut DeviceState, costs: &CostTable) -> ActionResult {
    let belief = belief_post(&action.verb, &action.args);
    let micro_cost = costs.ui_micro_step;
    let budget_steps = (action.budget / micro_cost.max(1)).min(UI_MICRO_BUDGET as u64) as u32;
    let mut history = MicroHistory::default();
    let mut micros: Vec<MicroRecord> = Vec::new();
    let mut extracted: Vec<String> = Vec::new();
    let mut spent: Tick = 0;
    let mut consecutive_rejects = 0u32;
    let mut no_progress = 0u32;
    let mut last_digest = device.content_digest();

    loop {
        let snap = device.query_state(SnapshotScope::FullUi);
        let believed_done = match &belief {
            BeliefPost::Structural(p) => p.eval(&snap),
            BeliefPost::GestureIssued(node) => micros
                .iter()
                .any(|m| m.outcome == "accepted" && m.proposal == format!("tap {node}")),
            BeliefPost::LaunchInitiated => {
                let app = action.args.get("app").cloned().unwrap_or_default();
                snap.foreground == app
                    || snap.pending_launch.as_ref().map(|(a, _)| a == &app).unwrap_or(false)
            }
            BeliefPost::ExtractDone => !extracted.is_empty(),
        };
        if believed_done {
            let digest = device.content_digest();
            let detail = if extracted.is_empty() {
                format!("{} believed complete", action.verb)
            } else {
                extracted.join(" | ")
            };
            let mut result = ActionResult::new(ActionStatus::Ok, detail, spent, digest);
            result.micro = micros;
            return result;
        }
        let exhausted = micros.len() as u32 >= budget_steps
            || consecutive_rejects >= UI_STALL_REJECTS
            || no_progress >= UI_STALL_NO_PROGRESS
            || device.clock() >= action.deadline;
        if exhausted {
            let digest = device.content_digest();
            let mut result = ActionResult::new(
                ActionStatus::Exhausted,
                format!("budget exhausted after {} micro-steps", micros.len()),
                spent,
                digest,
            );
            result.micro = micros;
            return result;
        }

        let ui_bytes = snap.ui.as_ref().map(|t| t.byte_size()).unwrap_or(0);
        let proposal = grounding::ground(&action.verb, &action.args, &snap, &history);
        let index = micros.len() as u32;
        let mut record = MicroRecord {
            index,
            clock: device.clock(),
            foreground: snap.foreground.clone(),
            proposal: String::new(),
            outcome: String::new(),
            precondition_failure: false,
            ui_bytes,
        };
        match proposal {
            Proposal::Extract => {
                device.advance(micro_cost);
                spent += micro_cost;
                let text = snap.ui.as_ref().map(|t| t.visible_text()).unwrap_or_default();
                extracted.push(text);
                record.proposal = "extract".into();
                record.outcome = "extracted".into();
                consecutive_rejects = 0;
            }
            Proposal::None { precondition_failure, note } => {
                device.advance(micro_cost);
                spent += micro_cost;
                record.proposal = "observe".into();
                record.outcome = note;
                record.precondition_failure = precondition_failure;
                consecutive_rejects += 1;
                no_progress += 1;
            }
            Proposal::Cmd(cmd) => {
                record.proposal = match &cmd {
                    CommandKind::Tap { node } => format!("tap {node}"),
                    CommandKind::TypeText { node, .. } => format!("type {node}"),
                    other => other.name().to_string(),
                };
                let outcome = device.apply_command(&cmd, CmdOrigin::Ui, micro_cost);
                spent += micro_cost;
                match outcome {
                    CommandOutcome::Accepted => {
                        record.outcome = "accepted".into();
                        if let CommandKind::Tap { node } = &cmd {
                            *history.taps.entry(node.clone()).or_insert(0) += 1;
                        }
                        consecutive_rejects = 0;
                        let digest = device.content_digest();
                        if digest == last_digest {
                            no_progress += 1;
                        } else {
                            no_progress = 0;
                            last_digest = digest;
                        }
                    }
                    CommandOutcome::Rejected { reason } => {
                        record.outcome = format!("rejected: {reason}");
                        consecutive_rejects += 1;
                        no_progress += 1;
                    }
                }
            }
        }
        micros.push(record);
    }
}
