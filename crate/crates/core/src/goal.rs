//! Goal predicates: pure, total boolean expressions over state snapshots.
//!
//! Used for step verification, recovery decisions, task checkpoints, and
//! planner script matching. Atoms over summary fields are cheap; only
//! `node_visible` needs the rendered UI tree.

use serde::{Deserialize, Serialize};

use crate::device::StateSnapshot;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GoalPredicate {
    ForegroundIs(String),
    SettingEquals(String, String),
    AppInstalled(String),
    NoteExistsContaining(String),
    ScreenIs(String, String),
    NodeVisible(String),
    VideoPlaying(String),
    CommentPosted(String),
    PromptAbsent,
    Always,
    All(Vec<GoalPredicate>),
    Any(Vec<GoalPredicate>),
    Not(Box<GoalPredicate>),
}

impl GoalPredicate {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::GoalParse("empty predicate".into()));
        }
        for (prefix, combinator) in [("all(", 0usize), ("any(", 1), ("not(", 2)] {
            if let Some(rest) = text.strip_prefix(prefix) {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::GoalParse(format!("unterminated '{text}'")))?;
                let parts = split_top_level(inner);
                let parsed: Result<Vec<_>> = parts.iter().map(|p| Self::parse(p)).collect();
                let parsed = parsed?;
                return Ok(match combinator {
                    0 => GoalPredicate::All(parsed),
                    1 => GoalPredicate::Any(parsed),
                    _ => {
                        if parsed.len() != 1 {
                            return Err(Error::GoalParse("not() takes one argument".into()));
                        }
                        GoalPredicate::Not(Box::new(parsed.into_iter().next().unwrap()))
                    }
                });
            }
        }
        let (name, args) = match text.find('(') {
            Some(open) => {
                let inner = text[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| Error::GoalParse(format!("unterminated '{text}'")))?;
                let args: Vec<String> = split_top_level(inner)
                    .iter()
                    .map(|s| s.trim().trim_matches('\'').trim_matches('"').to_string())
                    .collect();
                (&text[..open], args)
            }
            None => (text, Vec::new()),
        };
        let arg = |i: usize| -> Result<String> {
            args.get(i)
                .cloned()
                .ok_or_else(|| Error::GoalParse(format!("{name} missing argument {i}")))
        };
        match name {
            "foreground_is" => Ok(GoalPredicate::ForegroundIs(arg(0)?)),
            "setting_equals" => Ok(GoalPredicate::SettingEquals(arg(0)?, arg(1)?)),
            "app_installed" => Ok(GoalPredicate::AppInstalled(arg(0)?)),
            "note_exists_containing" => Ok(GoalPredicate::NoteExistsContaining(arg(0)?)),
            "screen_is" => Ok(GoalPredicate::ScreenIs(arg(0)?, arg(1)?)),
            "node_visible" => Ok(GoalPredicate::NodeVisible(arg(0)?)),
            "video_playing" => Ok(GoalPredicate::VideoPlaying(arg(0)?)),
            "comment_posted" => Ok(GoalPredicate::CommentPosted(arg(0)?)),
            "prompt_absent" => Ok(GoalPredicate::PromptAbsent),
            "always" => Ok(GoalPredicate::Always),
            other => Err(Error::GoalParse(format!("unknown atom '{other}'"))),
        }
    }

    /// Whether evaluation needs the rendered UI tree.
    pub fn needs_ui(&self) -> bool {
        match self {
            GoalPredicate::NodeVisible(_) => true,
            GoalPredicate::All(ps) | GoalPredicate::Any(ps) => ps.iter().any(|p| p.needs_ui()),
            GoalPredicate::Not(p) => p.needs_ui(),
            _ => false,
        }
    }

    pub fn eval(&self, snap: &StateSnapshot) -> bool {
        match self {
            GoalPredicate::ForegroundIs(app) => &snap.foreground == app,
            GoalPredicate::SettingEquals(key, value) => {
                snap.settings.get(key).map(|v| v == value).unwrap_or(value == "off")
            }
            GoalPredicate::AppInstalled(app) => snap.installed.contains(app),
            GoalPredicate::NoteExistsContaining(text) => {
                let needle = text.to_lowercase();
                snap.notes.iter().any(|n| {
                    n.title.to_lowercase().contains(&needle)
                        || n.body.to_lowercase().contains(&needle)
                })
            }
            GoalPredicate::ScreenIs(app, screen) => {
                &snap.foreground == app && &snap.screen == screen
            }
            GoalPredicate::NodeVisible(text) => {
                let needle = text.to_lowercase();
                snap.ui
                    .as_ref()
                    .map(|ui| {
                        ui.visible_text().to_lowercase().contains(&needle)
                            || ui.ids().iter().any(|id| id.to_lowercase().contains(&needle))
                    })
                    .unwrap_or(false)
            }
            GoalPredicate::VideoPlaying(title) => snap
                .media_playing
                .as_ref()
                .map(|t| t.to_lowercase().contains(&title.to_lowercase()))
                .unwrap_or(false),
            GoalPredicate::CommentPosted(text) => {
                let needle = text.to_lowercase();
                snap.comments
                    .values()
                    .any(|list| list.iter().any(|c| c.to_lowercase().contains(&needle)))
            }
            GoalPredicate::PromptAbsent => snap.prompt.is_none(),
            GoalPredicate::Always => true,
            GoalPredicate::All(ps) => ps.iter().all(|p| p.eval(snap)),
            GoalPredicate::Any(ps) => ps.iter().any(|p| p.eval(snap)),
            GoalPredicate::Not(p) => !p.eval(snap),
        }
    }
}

/// Split on commas not nested inside parentheses.
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;
    use crate::catalog::Catalog;
    use crate::device::{DeviceState, SnapshotScope};
    use crate::fault::FaultProfile;
    use std::sync::Arc;

    fn fresh() -> DeviceState {
        let catalog = Arc::new(Catalog::parse(assets::DEFAULT_CATALOG).unwrap());
        DeviceState::load(catalog, FaultProfile::oracle_mode())
    }

    #[test]
    fn parse_atoms_and_combinators() {
        let p = GoalPredicate::parse("all(foreground_is(chrome), not(prompt_absent))").unwrap();
        assert!(p.needs_ui() == false);
        let p2 = GoalPredicate::parse("any(node_visible(Results for), always)").unwrap();
        assert!(p2.needs_ui());
        assert!(GoalPredicate::parse("bogus_atom(x)").is_err());
        assert!(GoalPredicate::parse("all(foreground_is(a)").is_err());
    }

    #[test]
    fn eval_on_fresh_device() {
        let mut dev = fresh();
        let snap = dev.query_state(SnapshotScope::FullUi);
        assert!(GoalPredicate::parse("foreground_is(launcher)").unwrap().eval(&snap));
        assert!(GoalPredicate::parse("setting_equals(dark_theme, off)").unwrap().eval(&snap));
        assert!(!GoalPredicate::parse("app_installed(rednote)").unwrap().eval(&snap));
        assert!(GoalPredicate::parse("prompt_absent").unwrap().eval(&snap));
        assert!(GoalPredicate::parse("node_visible(Chrome)").unwrap().eval(&snap));
        // Total on summary snapshots: UI atoms are simply false without a tree.
        let summary = dev.query_state(SnapshotScope::Summary);
        assert!(!GoalPredicate::parse("node_visible(Chrome)").unwrap().eval(&summary));
    }

    #[test]
    fn evaluation_is_deterministic() {
        let mut dev = fresh();
        let snap = dev.query_state(SnapshotScope::FullUi);
        let p = GoalPredicate::parse("any(setting_equals(dark_theme, on), node_visible(Notes))").unwrap();
        assert_eq!(p.eval(&snap), p.eval(&snap));
    }
}
