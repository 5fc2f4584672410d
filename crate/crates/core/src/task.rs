//! Task definitions: instruction, weighted machine-checkable checkpoints,
//! involved apps, and the planner script.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goal::GoalPredicate;
use crate::planner::{MatchExpr, ScriptRule};
use crate::registry::BackendClass;
use crate::scheduler::Step;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub name: String,
    /// Integer percent; all checkpoint weights sum to 100.
    pub weight: u32,
    pub goal: GoalPredicate,
    pub goal_text: String,
}

#[derive(Debug, Clone)]
pub struct Task {
    pub id: String,
    pub instruction: String,
    pub apps: Vec<String>,
    pub checkpoints: Vec<Checkpoint>,
    pub rules: Vec<ScriptRule>,
    /// Pre-synthesized whole-task plan for one-shot agents.
    pub oneshot: Vec<Step>,
}

#[derive(Debug, Deserialize)]
struct RawTask {
    id: String,
    instruction: String,
    #[serde(default)]
    apps: Vec<String>,
    #[serde(default, rename = "checkpoint")]
    checkpoints: Vec<RawCheckpoint>,
    #[serde(default, rename = "rule")]
    rules: Vec<RawRule>,
    #[serde(default, rename = "oneshot_step")]
    oneshot: Vec<RawStep>,
}

#[derive(Debug, Deserialize)]
struct RawCheckpoint {
    name: String,
    weight: u32,
    goal: String,
}

#[derive(Debug, Deserialize)]
struct RawRule {
    when: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default, rename = "step")]
    steps: Vec<RawStep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawStep {
    verb: String,
    #[serde(default)]
    args: std::collections::BTreeMap<String, String>,
    goal: String,
    #[serde(default)]
    app: Option<String>,
    #[serde(default)]
    preferred_backend: Option<BackendClass>,
}

impl Task {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawTask =
            toml::from_str(text).map_err(|e| Error::Task(format!("task not parseable: {e}")))?;
        if raw.checkpoints.is_empty() {
            return Err(Error::Task(format!("task '{}' has no checkpoints", raw.id)));
        }
        let total: u32 = raw.checkpoints.iter().map(|c| c.weight).sum();
        if total != 100 {
            return Err(Error::Task(format!(
                "task '{}': checkpoint weights sum to {total}, expected 100",
                raw.id
            )));
        }
        let checkpoints = raw
            .checkpoints
            .into_iter()
            .map(|c| {
                Ok(Checkpoint {
                    goal: GoalPredicate::parse(&c.goal)?,
                    goal_text: c.goal,
                    name: c.name,
                    weight: c.weight,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if raw.rules.is_empty() {
            return Err(Error::Task(format!("task '{}' has no script rules", raw.id)));
        }
        let rules = raw
            .rules
            .into_iter()
            .map(|r| {
                let when = MatchExpr::parse(&r.when)?;
                if r.text.is_none() && r.steps.is_empty() {
                    return Err(Error::Task("rule needs a text or steps".into()));
                }
                let steps = r
                    .steps
                    .into_iter()
                    .map(|s| {
                        Ok(Step {
                            id: String::new(),
                            goal: GoalPredicate::parse(&s.goal)?,
                            goal_text: s.goal,
                            verb: s.verb,
                            args: s.args,
                            app: s.app,
                            preferred_backend: s.preferred_backend,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ScriptRule { when, reply_text: r.text, steps })
            })
            .collect::<Result<Vec<_>>>()?;
        let oneshot = raw
            .oneshot
            .into_iter()
            .map(|s| {
                Ok(Step {
                    id: String::new(),
                    goal: GoalPredicate::parse(&s.goal)?,
                    goal_text: s.goal,
                    verb: s.verb,
                    args: s.args,
                    app: s.app,
                    preferred_backend: s.preferred_backend,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Task {
            id: raw.id,
            instruction: raw.instruction,
            apps: raw.apps,
            checkpoints,
            rules,
            oneshot,
        })
    }

    pub fn scope(&self) -> String {
        self.apps.first().cloned().unwrap_or_else(|| "global".into())
    }
}
