//! Planner contract and the scripted planner.
//!
//! The runtime consults a planner each turn with a bounded observation
//! packet and gets back either a plan or a final text. The scripted
//! planner replays a per-task decision list keyed on step outcomes and the
//! summary snapshot, so fault-perturbed runs still find a matching reply.
//! An external planner speaks the same reply schema over the gateway.

use serde::{Deserialize, Serialize};

use crate::device::StateSnapshot;
use crate::error::{Error, Result};
use crate::goal::GoalPredicate;
use crate::memory::MemoryEntry;
use crate::scheduler::{Step, StepFinal, StepOutcome};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "reply", rename_all = "snake_case")]
pub enum PlannerReply {
    Plan { steps: Vec<Step>, rationale: String },
    Text { message: String },
}

/// Machine-readable digest of one finished step, fed back verbatim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub step_id: String,
    pub verb: String,
    pub arg_tag: String,
    pub status: StepFinal,
    pub detail: String,
}

impl From<&StepOutcome> for OutcomeSummary {
    fn from(o: &StepOutcome) -> Self {
        Self {
            step_id: o.step_id.clone(),
            verb: o.verb.clone(),
            arg_tag: o.arg_tag.clone(),
            status: o.final_status,
            detail: o.detail.clone(),
        }
    }
}

/// What a planner sees each turn: instruction, newest step outcomes that
/// fit the byte budget, the summary snapshot, and top memory hits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationPacket {
    pub task_id: String,
    pub instruction: String,
    pub turn: u32,
    pub total_outcomes: u32,
    /// Newest first, oldest trimmed to fit the budget.
    pub outcomes: Vec<OutcomeSummary>,
    pub summary: StateSnapshot,
    pub memory_hits: Vec<MemoryEntry>,
    pub byte_len: u64,
}

pub trait Planner {
    fn plan_turn(&mut self, observation: &ObservationPacket) -> Result<PlannerReply>;
}

/// Script rule matching language over observation packets.
#[derive(Debug, Clone, PartialEq)]
pub enum MatchExpr {
    Start,
    Always,
    Achieved { verb: String, arg: Option<String> },
    Failed { verb: String, arg: Option<String> },
    DetailContains { verb: String, needle: String },
    State(GoalPredicate),
    All(Vec<MatchExpr>),
    Any(Vec<MatchExpr>),
    Not(Box<MatchExpr>),
}

impl MatchExpr {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        for (prefix, kind) in [("all(", 0usize), ("any(", 1), ("not(", 2)] {
            if let Some(rest) = text.strip_prefix(prefix) {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::Task(format!("unterminated match '{text}'")))?;
                let parts = split_top_level(inner);
                let parsed: Result<Vec<_>> = parts.iter().map(|p| Self::parse(p)).collect();
                let parsed = parsed?;
                return Ok(match kind {
                    0 => MatchExpr::All(parsed),
                    1 => MatchExpr::Any(parsed),
                    _ => {
                        if parsed.len() != 1 {
                            return Err(Error::Task("not() takes one argument".into()));
                        }
                        MatchExpr::Not(Box::new(parsed.into_iter().next().unwrap()))
                    }
                });
            }
        }
        if text == "start" {
            return Ok(MatchExpr::Start);
        }
        if text == "always" {
            return Ok(MatchExpr::Always);
        }
        if let Some(rest) = text.strip_prefix("state(") {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| Error::Task(format!("unterminated match '{text}'")))?;
            return Ok(MatchExpr::State(GoalPredicate::parse(inner)?));
        }
        for (prefix, failed) in [("achieved(", false), ("failed(", true)] {
            if let Some(rest) = text.strip_prefix(prefix) {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::Task(format!("unterminated match '{text}'")))?;
                let (verb, arg) = match inner.split_once(':') {
                    Some((v, a)) => (v.trim().to_string(), Some(a.trim().to_string())),
                    None => (inner.trim().to_string(), None),
                };
                return Ok(if failed {
                    MatchExpr::Failed { verb, arg }
                } else {
                    MatchExpr::Achieved { verb, arg }
                });
            }
        }
        if let Some(rest) = text.strip_prefix("detail_contains(") {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| Error::Task(format!("unterminated match '{text}'")))?;
            let (verb, needle) = inner
                .split_once(',')
                .ok_or_else(|| Error::Task("detail_contains(verb, needle)".into()))?;
            return Ok(MatchExpr::DetailContains {
                verb: verb.trim().to_string(),
                needle: needle.trim().trim_matches('"').trim_matches('\'').to_string(),
            });
        }
        Err(Error::Task(format!("unknown match expression '{text}'")))
    }

    pub fn matches(&self, obs: &ObservationPacket) -> bool {
        match self {
            MatchExpr::Start => obs.total_outcomes == 0,
            MatchExpr::Always => true,
            MatchExpr::Achieved { verb, arg } => {
                latest(obs, verb, arg.as_deref()).map(|o| o.status == StepFinal::Achieved).unwrap_or(false)
            }
            MatchExpr::Failed { verb, arg } => latest(obs, verb, arg.as_deref())
                .map(|o| matches!(o.status, StepFinal::Failed | StepFinal::TimedOut))
                .unwrap_or(false),
            MatchExpr::DetailContains { verb, needle } => latest(obs, verb, None)
                .map(|o| o.detail.to_lowercase().contains(&needle.to_lowercase()))
                .unwrap_or(false),
            MatchExpr::State(goal) => goal.eval(&obs.summary),
            MatchExpr::All(es) => es.iter().all(|e| e.matches(obs)),
            MatchExpr::Any(es) => es.iter().any(|e| e.matches(obs)),
            MatchExpr::Not(e) => !e.matches(obs),
        }
    }
}

/// Newest outcome for a verb (optionally narrowed to one argument tag).
fn latest<'a>(obs: &'a ObservationPacket, verb: &str, arg: Option<&str>) -> Option<&'a OutcomeSummary> {
    obs.outcomes
        .iter()
        .find(|o| o.verb == verb && arg.map(|a| o.arg_tag == a).unwrap_or(true))
}

fn split_top_level(text: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for c in text.chars() {
        match c {
            '(' => {
                depth += 1;
                current.push(c);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                current.push(c);
            }
            ',' if depth == 0 => {
                parts.push(current.trim().to_string());
                current.clear();
            }
            _ => current.push(c),
        }
    }
    if !current.trim().is_empty() {
        parts.push(current.trim().to_string());
    }
    parts
}

#[derive(Debug, Clone)]
pub struct ScriptRule {
    pub when: MatchExpr,
    pub reply_text: Option<String>,
    pub steps: Vec<Step>,
}

/// Deterministic planner replaying a task's decision list. In one-shot
/// mode the first turn emits a pre-synthesized whole-task plan and later
/// turns only conclude, modeling script-style agents that compile a task
/// into one multi-step program instead of replanning per phase.
#[derive(Debug, Clone)]
pub struct ScriptedPlanner {
    rules: Vec<ScriptRule>,
    oneshot: Option<Vec<Step>>,
    step_counter: u32,
}

impl ScriptedPlanner {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        Self { rules, oneshot: None, step_counter: 0 }
    }

    pub fn one_shot(oneshot: Vec<Step>, rules: Vec<ScriptRule>) -> Self {
        Self { rules, oneshot: Some(oneshot), step_counter: 0 }
    }

    fn number(&mut self, steps: &[Step]) -> Vec<Step> {
        steps
            .iter()
            .map(|s| {
                self.step_counter += 1;
                let mut step = s.clone();
                step.id = format!("step{}", self.step_counter);
                step
            })
            .collect()
    }
}

impl Planner for ScriptedPlanner {
    fn plan_turn(&mut self, obs: &ObservationPacket) -> Result<PlannerReply> {
        if let Some(oneshot) = self.oneshot.clone() {
            if obs.turn == 1 {
                let steps = self.number(&oneshot);
                return Ok(PlannerReply::Plan { steps, rationale: "one-shot".into() });
            }
            // Conclude with the first matching text rule, or a plain wrap-up.
            for rule in &self.rules {
                if rule.reply_text.is_some() && rule.when.matches(obs) {
                    return Ok(PlannerReply::Text {
                        message: rule.reply_text.clone().unwrap(),
                    });
                }
            }
            return Ok(PlannerReply::Text { message: "Task attempted.".into() });
        }
        for (idx, rule) in self.rules.iter().enumerate() {
            if rule.when.matches(obs) {
                if let Some(text) = &rule.reply_text {
                    return Ok(PlannerReply::Text { message: text.clone() });
                }
                let steps = self.number(&rule.steps.clone());
                return Ok(PlannerReply::Plan {
                    steps,
                    rationale: format!("rule {idx}"),
                });
            }
        }
        Err(Error::PlannerAbort(format!(
            "no script rule matched at turn {} (task {})",
            obs.turn, obs.task_id
        )))
    }
}
