//! Rule-based UI grounding: the planner component that picks a target on
//! the current screen for a semantic verb.
//!
//! Pure function of (verb, args, snapshot, this action's prior micro-steps):
//! no randomness, no memory of past actions. System permission dialogs
//! expose nothing actionable, so grounding proposes nothing there; in-app
//! overlays (ads) are ordinary nodes and are handled.

use std::collections::BTreeMap;

use crate::device::{CommandKind, StateSnapshot};
use crate::device::slug;

/// One proposed micro-action.
#[derive(Debug, Clone, PartialEq)]
pub enum Proposal {
    Cmd(CommandKind),
    /// Read the visible page text into the action detail.
    Extract,
    /// Nothing to do on this screen; `precondition_failure` marks the
    /// launcher-instead-of-app case.
    None { precondition_failure: bool, note: String },
}

/// What grounding knows about this action's earlier micro-steps.
#[derive(Debug, Clone, Default)]
pub struct MicroHistory {
    /// Accepted taps per node id within the current action.
    pub taps: BTreeMap<String, u32>,
}

pub fn ground(
    verb: &str,
    args: &BTreeMap<String, String>,
    snap: &StateSnapshot,
    history: &MicroHistory,
) -> Proposal {
    // System overlays first: ads expose a skip control, permission dialogs
    // expose nothing the UI pathway can reach.
    if snap.prompt.is_some() {
        if let Some(ui) = &snap.ui {
            if ui.find("skip_ad").map(|n| n.actionable).unwrap_or(false) {
                return Proposal::Cmd(CommandKind::Tap { node: "skip_ad".into() });
            }
            if ui.find("skip_ad").is_some() {
                // Not skippable yet; try anyway (costs the micro-step).
                return Proposal::Cmd(CommandKind::Tap { node: "skip_ad".into() });
            }
        }
        return Proposal::None {
            precondition_failure: false,
            note: "system dialog exposes no actionable nodes".into(),
        };
    }

    let arg = |k: &str| args.get(k).cloned().unwrap_or_default();
    match verb {
        "launch_app" => {
            let app = arg("app");
            if snap.foreground == app {
                return Proposal::None { precondition_failure: false, note: "already foregrounded".into() };
            }
            if snap.foreground == "launcher" {
                return Proposal::Cmd(CommandKind::Tap { node: format!("icon_{app}") });
            }
            Proposal::Cmd(CommandKind::PressBack)
        }
        "go_home" => Proposal::Cmd(CommandKind::PressBack),
        "web_search" => {
            let query = arg("query");
            match require_app(snap, "chrome") {
                Some(p) => p,
                None => match snap.screen.as_str() {
                    "results" => Proposal::Cmd(CommandKind::PressBack),
                    _ => field_then_type(snap, history, "omnibox", &query),
                },
            }
        }
        "read_page" => match require_app(snap, "chrome") {
            Some(p) => p,
            None => {
                if snap.screen == "results" {
                    Proposal::Extract
                } else {
                    Proposal::None { precondition_failure: false, note: "no results page visible".into() }
                }
            }
        },
        "play_video" => {
            let title = arg("title");
            match require_app(snap, "youtube") {
                Some(p) => p,
                None => match snap.screen.as_str() {
                    "home" => Proposal::Cmd(CommandKind::Tap { node: "search_btn".into() }),
                    "search" => Proposal::Cmd(CommandKind::TypeText {
                        node: "search_field".into(),
                        text: title,
                    }),
                    "results" => match find_by_text(snap, &title) {
                        Some(node) => Proposal::Cmd(CommandKind::Tap { node }),
                        None => Proposal::Cmd(CommandKind::PressBack),
                    },
                    "watch" | "comments" => Proposal::Cmd(CommandKind::PressBack),
                    _ => Proposal::Cmd(CommandKind::PressBack),
                },
            }
        }
        "open_comments" => match require_app(snap, "youtube") {
            Some(p) => p,
            None => match snap.screen.as_str() {
                "watch" => Proposal::Cmd(CommandKind::Tap { node: "comments_tab".into() }),
                "comments" => Proposal::None { precondition_failure: false, note: "comments already open".into() },
                _ => Proposal::None {
                    precondition_failure: true,
                    note: format!("precondition (video open) not met (on {})", snap.screen),
                },
            },
        },
        "post_comment" => {
            let text = arg("text");
            match require_app(snap, "youtube") {
                Some(p) => p,
                None => match snap.screen.as_str() {
                    "comments" => {
                        let typed = field_buffer(snap, "comment_box");
                        if typed.is_empty() {
                            Proposal::Cmd(CommandKind::TypeText { node: "comment_box".into(), text })
                        } else {
                            Proposal::Cmd(CommandKind::Tap { node: "post_btn".into() })
                        }
                    }
                    "watch" => Proposal::Cmd(CommandKind::Tap { node: "comments_tab".into() }),
                    _ => Proposal::None {
                        precondition_failure: true,
                        note: format!("precondition (comments open) not met (on {})", snap.screen),
                    },
                },
            }
        }
        "install_app" => {
            let app = arg("app");
            match require_app(snap, "play_store") {
                Some(p) => p,
                None => match snap.screen.as_str() {
                    "home" => Proposal::Cmd(CommandKind::Tap { node: "ps_search_btn".into() }),
                    "search" => Proposal::Cmd(CommandKind::TypeText {
                        node: "ps_search_field".into(),
                        text: app,
                    }),
                    "results" => {
                        let node = format!("result_{}", slug(&app));
                        if node_exists(snap, &node) {
                            Proposal::Cmd(CommandKind::Tap { node })
                        } else {
                            Proposal::Cmd(CommandKind::PressBack)
                        }
                    }
                    "app_page" => {
                        if node_actionable(snap, "install_btn") {
                            Proposal::Cmd(CommandKind::Tap { node: "install_btn".into() })
                        } else {
                            Proposal::None {
                                precondition_failure: false,
                                note: "install control not available".into(),
                            }
                        }
                    }
                    _ => Proposal::Cmd(CommandKind::PressBack),
                },
            }
        }
        "write_note" => {
            let title = arg("title");
            let body = arg("body");
            match require_app(snap, "notes") {
                Some(p) => p,
                None => match snap.screen.as_str() {
                    "list" => Proposal::Cmd(CommandKind::Tap { node: "new_note".into() }),
                    "editor" => {
                        if field_buffer(snap, "note_title").is_empty() {
                            Proposal::Cmd(CommandKind::TypeText { node: "note_title".into(), text: title })
                        } else if field_buffer(snap, "note_body").is_empty() {
                            Proposal::Cmd(CommandKind::TypeText { node: "note_body".into(), text: body })
                        } else {
                            Proposal::Cmd(CommandKind::Tap { node: "save_btn".into() })
                        }
                    }
                    _ => Proposal::Cmd(CommandKind::PressBack),
                },
            }
        }
        _ => Proposal::None {
            precondition_failure: false,
            note: format!("no grounding rule for verb '{verb}'"),
        },
    }
}

/// Launcher-or-wrong-app guard shared by in-app verbs.
fn require_app(snap: &StateSnapshot, app: &str) -> Option<Proposal> {
    if snap.foreground == app {
        return None;
    }
    if snap.foreground == "launcher" {
        return Some(Proposal::None {
            precondition_failure: true,
            note: format!("precondition ({app} open) was not met (currently on launcher)"),
        });
    }
    Some(Proposal::Cmd(CommandKind::PressBack))
}

/// Canonical field interaction: tap to focus, but after two focus attempts
/// type anyway (the field accepts input either way).
fn field_then_type(snap: &StateSnapshot, history: &MicroHistory, node: &str, text: &str) -> Proposal {
    let focused = snap
        .ui
        .as_ref()
        .and_then(|ui| ui.find(node))
        .map(|n| n.text.contains("(focused)"))
        .unwrap_or(false);
    let attempts = history.taps.get(node).copied().unwrap_or(0);
    if focused || attempts >= 2 {
        Proposal::Cmd(CommandKind::TypeText { node: node.into(), text: text.into() })
    } else {
        Proposal::Cmd(CommandKind::Tap { node: node.into() })
    }
}

fn field_buffer(snap: &StateSnapshot, node: &str) -> String {
    snap.ui
        .as_ref()
        .and_then(|ui| ui.find(node))
        .and_then(|n| {
            let open = n.text.find('[')?;
            let close = n.text.rfind(']')?;
            if close > open {
                Some(n.text[open + 1..close].to_string())
            } else {
                None
            }
        })
        .unwrap_or_default()
}

fn node_exists(snap: &StateSnapshot, id: &str) -> bool {
    snap.ui.as_ref().map(|ui| ui.find(id).is_some()).unwrap_or(false)
}

fn node_actionable(snap: &StateSnapshot, id: &str) -> bool {
    snap.ui
        .as_ref()
        .and_then(|ui| ui.find(id))
        .map(|n| n.actionable)
        .unwrap_or(false)
}

/// First actionable node whose text contains the needle, preferring exact
/// matches; used to pick a search result.
fn find_by_text(snap: &StateSnapshot, needle: &str) -> Option<String> {
    let ui = snap.ui.as_ref()?;
    let mut contains = None;
    let mut stack = vec![ui];
    let needle_lc = needle.to_lowercase();
    while let Some(node) = stack.pop() {
        if node.actionable {
            if node.text.eq_ignore_ascii_case(needle) {
                return Some(node.id.clone());
            }
            if contains.is_none() && node.text.to_lowercase().contains(&needle_lc) {
                contains = Some(node.id.clone());
            }
        }
        for child in node.children.iter().rev() {
            stack.push(child);
        }
    }
    contains
}
