//! Deterministic simulated smartphone.
//!
//! One `DeviceState` owns the complete observable phone: foreground app,
//! per-app screen machines, settings, notes, search history, pending
//! prompts, and simulated time. State changes only through `apply_command`,
//! `advance`, or time-gate resolution on observation. Fault draws come from
//! one seeded generator consumed in a fixed, documented order (per eligible
//! tap: ambiguity first, then silent-fail), so a (catalog, profile, command
//! sequence) triple replays bit-identically.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, NodeDef, NodeRole, ScreenDef, LAUNCHER};
use crate::digest::digest_of;
use crate::fault::FaultProfile;
use crate::rng::SimRng;
use crate::ui::UiNode;

pub type Tick = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Permission,
    Ad,
    Dialog,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptState {
    pub kind: PromptKind,
    pub text: String,
    /// Ad prompts become skippable at this tick.
    pub skippable_at: Option<Tick>,
    /// Ad prompts expire on observation at or after this tick.
    pub expires_at: Option<Tick>,
    /// Permission prompts start this install when dismissed (granted).
    pub grants_install: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrollDir {
    Up,
    Down,
}

/// The bounded command vocabulary backends and the runtime issue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum CommandKind {
    Launch { app: String },
    Tap { node: String },
    TypeText { node: String, text: String },
    Scroll { dir: ScrollDir },
    PressBack,
    ToggleSetting { key: String },
    Install { app: String },
    CreateNote { title: String, body: String },
    DismissPrompt,
    Wait { ticks: Tick },
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Launch { .. } => "launch",
            CommandKind::Tap { .. } => "tap",
            CommandKind::TypeText { .. } => "type_text",
            CommandKind::Scroll { .. } => "scroll",
            CommandKind::PressBack => "press_back",
            CommandKind::ToggleSetting { .. } => "toggle_setting",
            CommandKind::Install { .. } => "install",
            CommandKind::CreateNote { .. } => "create_note",
            CommandKind::DismissPrompt => "dismiss_prompt",
            CommandKind::Wait { .. } => "wait",
        }
    }
}

/// Who issued a command. UI-originated interactions are subject to fault
/// draws and are blocked by system prompts; deterministic and runtime
/// commands model structured system calls and bypass both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmdOrigin {
    Deterministic,
    Ui,
    Runtime,
}

/// `Accepted` does not imply the intended effect occurred: silent tap
/// failures are accepted with no effect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CommandOutcome {
    Accepted,
    Rejected { reason: String },
}

impl CommandOutcome {
    pub fn accepted(&self) -> bool {
        matches!(self, CommandOutcome::Accepted)
    }

    fn rejected(reason: &str) -> Self {
        CommandOutcome::Rejected { reason: reason.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotScope {
    Summary,
    FullUi,
    App,
}

/// Read-only view of the device. `Summary` excludes the UI tree; goal
/// verification fetches the tree only when a goal references UI atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub clock: Tick,
    pub foreground: String,
    pub screen: String,
    pub settings: BTreeMap<String, String>,
    pub prompt: Option<PromptState>,
    pub pending_launch: Option<(String, Tick)>,
    pub pending_install: Option<(String, Tick)>,
    pub installed: BTreeSet<String>,
    pub notes: Vec<Note>,
    pub search_history: Vec<String>,
    /// Playing title; `None` while an ad overlay blocks playback.
    pub media_playing: Option<String>,
    pub comments: BTreeMap<String, Vec<String>>,
    pub ui: Option<UiNode>,
}

impl StateSnapshot {
    pub fn content_digest(&self) -> String {
        // Clock and tree excluded: the digest tracks effective state, so a
        // no-effect interaction leaves it unchanged.
        let view = (
            &self.foreground,
            &self.screen,
            &self.settings,
            &self.prompt,
            &self.pending_launch,
            &self.pending_install,
            &self.installed,
            &self.notes,
            &self.search_history,
            &self.media_playing,
            &self.comments,
        );
        digest_of(&view)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceState {
    clock: Tick,
    foreground: String,
    pending_launch: Option<(String, Tick)>,
    pending_install: Option<(String, Tick)>,
    per_app_screen: BTreeMap<String, String>,
    settings: BTreeMap<String, String>,
    notes: Vec<Note>,
    search_history: Vec<String>,
    pending_prompt: Option<PromptState>,
    installed: BTreeSet<String>,
    /// Per-app scratch state: text-field buffers, current query, page.
    app_data: BTreeMap<String, BTreeMap<String, String>>,
    /// (app, node) of the focused text field, if any.
    focused: Option<(String, String)>,
    playing: Option<String>,
    comments: BTreeMap<String, Vec<String>>,
    rng: SimRng,
    profile: FaultProfile,
    #[serde(skip, default = "empty_catalog")]
    catalog: Arc<Catalog>,
    mutations: u64,
    /// Count of tree renders; lets tests assert that structured pathways
    /// never touch the UI surface.
    #[serde(skip)]
    renders: std::cell::Cell<u64>,
}

fn empty_catalog() -> Arc<Catalog> {
    Arc::new(Catalog { apps: Vec::new() })
}

impl DeviceState {
    /// Initial state at tick 0: launcher foregrounded, dark theme off,
    /// no notes, only catalog-installed apps present.
    pub fn load(catalog: Arc<Catalog>, profile: FaultProfile) -> Self {
        let installed: BTreeSet<String> = catalog
            .apps
            .iter()
            .filter(|a| a.installed && a.id != LAUNCHER)
            .map(|a| a.id.clone())
            .collect();
        let per_app_screen = catalog
            .apps
            .iter()
            .filter(|a| a.id != LAUNCHER)
            .map(|a| (a.id.clone(), a.initial_screen.clone()))
            .collect();
        let search_history = catalog
            .app("chrome")
            .map(|a| a.search_history.clone())
            .unwrap_or_default();
        let mut settings = BTreeMap::new();
        settings.insert("dark_theme".to_string(), "off".to_string());
        Self {
            clock: 0,
            foreground: LAUNCHER.to_string(),
            pending_launch: None,
            pending_install: None,
            per_app_screen,
            settings,
            notes: Vec::new(),
            search_history,
            pending_prompt: None,
            installed,
            app_data: BTreeMap::new(),
            focused: None,
            playing: None,
            comments: BTreeMap::new(),
            rng: SimRng::new(profile.seed),
            profile,
            catalog,
            mutations: 0,
            renders: std::cell::Cell::new(0),
        }
    }

    pub fn clock(&self) -> Tick {
        self.clock
    }

    /// Monotone counter bumped on every mutation; snapshot caches key on it.
    pub fn mutation_counter(&self) -> u64 {
        self.mutations
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    /// How many times the UI tree has been rendered.
    pub fn render_count(&self) -> u64 {
        self.renders.get()
    }

    /// Foreground app's current search query, if one was submitted.
    pub fn current_query(&self) -> Option<String> {
        let q = self.app_data_get(&self.foreground, "current_query");
        if q.is_empty() {
            None
        } else {
            Some(q)
        }
    }

    pub fn profile(&self) -> &FaultProfile {
        &self.profile
    }

    /// Advance simulated time. Time-gated transitions become observable on
    /// the next query or command. Observable content only depends on the
    /// clock while a gate is pending, so only then does advancing count as
    /// a mutation.
    pub fn advance(&mut self, ticks: Tick) {
        self.clock += ticks;
        if ticks > 0 && self.has_pending_gate() {
            self.mutations += 1;
        }
    }

    fn has_pending_gate(&self) -> bool {
        self.pending_launch.is_some()
            || self.pending_install.is_some()
            || self
                .pending_prompt
                .as_ref()
                .map(|p| p.expires_at.is_some() || p.skippable_at.is_some())
                .unwrap_or(false)
    }

    /// Read-only snapshot; resolves due time gates first (launches and ad
    /// expiry complete on observation).
    pub fn query_state(&mut self, scope: SnapshotScope) -> StateSnapshot {
        self.resolve_gates();
        self.snapshot(scope)
    }

    /// Effective-state digest (clock excluded).
    pub fn content_digest(&mut self) -> String {
        self.query_state(SnapshotScope::Summary).content_digest()
    }

    /// Apply one command, advancing the clock by `cost` ticks (the issuing
    /// pathway's rate). Fault draws happen only for UI-originated commands,
    /// in fixed order: ambiguity, then silent-fail.
    pub fn apply_command(&mut self, cmd: &CommandKind, origin: CmdOrigin, cost: Tick) -> CommandOutcome {
        self.resolve_gates();
        self.clock += cost;
        self.resolve_gates();
        self.mutations += 1;
        match cmd {
            CommandKind::Wait { .. } => CommandOutcome::Accepted,
            CommandKind::Launch { app } => self.do_launch(app),
            CommandKind::ToggleSetting { key } => {
                let value = self.settings.entry(key.clone()).or_insert_with(|| "off".into());
                *value = if value == "on" { "off".into() } else { "on".into() };
                CommandOutcome::Accepted
            }
            CommandKind::Install { app } => {
                if self.installed.contains(app) {
                    return CommandOutcome::Accepted;
                }
                let duration = self.catalog.app(app).map(|a| a.install_duration).unwrap_or(0);
                self.pending_install = Some((app.clone(), self.clock + duration));
                CommandOutcome::Accepted
            }
            CommandKind::CreateNote { title, body } => {
                self.notes.push(Note { title: title.clone(), body: body.clone() });
                CommandOutcome::Accepted
            }
            CommandKind::DismissPrompt => self.do_dismiss(),
            CommandKind::Scroll { .. } => {
                if self.pending_prompt.is_some() && origin == CmdOrigin::Ui {
                    return CommandOutcome::rejected("blocked by system prompt");
                }
                CommandOutcome::Accepted
            }
            CommandKind::PressBack => {
                if self.pending_prompt.is_some() && origin == CmdOrigin::Ui {
                    return CommandOutcome::rejected("blocked by system prompt");
                }
                self.do_back();
                CommandOutcome::Accepted
            }
            CommandKind::Tap { node } => self.do_tap(node, origin),
            CommandKind::TypeText { node, text } => self.do_type(node, text, origin),
        }
    }

    fn do_launch(&mut self, app: &str) -> CommandOutcome {
        if self.catalog.app(app).is_none() || !self.installed.contains(app) {
            return CommandOutcome::rejected("not installed");
        }
        if self.foreground == app || matches!(&self.pending_launch, Some((a, _)) if a == app) {
            return CommandOutcome::Accepted;
        }
        let delay = self.catalog.app(app).map(|a| a.launch_delay).unwrap_or(0)
            + self.profile.extra_delay(app);
        self.pending_launch = Some((app.to_string(), self.clock + delay));
        CommandOutcome::Accepted
    }

    fn do_dismiss(&mut self) -> CommandOutcome {
        let Some(prompt) = self.pending_prompt.clone() else {
            return CommandOutcome::rejected("no prompt pending");
        };
        if let Some(at) = prompt.skippable_at {
            if self.clock < at {
                return CommandOutcome::rejected("ad not skippable yet");
            }
        }
        if let Some(app) = &prompt.grants_install {
            let duration = self.catalog.app(app).map(|a| a.install_duration).unwrap_or(0);
            self.pending_install = Some((app.clone(), self.clock + duration));
        }
        self.pending_prompt = None;
        CommandOutcome::Accepted
    }

    fn do_back(&mut self) {
        if self.foreground == LAUNCHER {
            return;
        }
        let app = self.foreground.clone();
        let screen = self.current_screen_id();
        let back_target = self.catalog.screen(&app, &screen).and_then(|s| s.back_to.clone());
        let initial = self.catalog.app(&app).map(|a| a.initial_screen.clone()).unwrap_or_default();
        match back_target {
            Some(target) => {
                self.per_app_screen.insert(app, target);
            }
            None if screen != initial => {
                self.per_app_screen.insert(app, initial);
            }
            _ => {
                self.foreground = LAUNCHER.to_string();
            }
        }
        self.focused = None;
    }

    fn do_tap(&mut self, node_id: &str, origin: CmdOrigin) -> CommandOutcome {
        let tree = self.render_tree();
        let Some(node) = tree.find(node_id).cloned() else {
            return CommandOutcome::rejected("no such target");
        };
        if !node.actionable {
            return CommandOutcome::rejected("no such target");
        }
        if self.pending_prompt.is_some() {
            // The overlay tree contains only prompt nodes, so reaching here
            // means the tap hit a prompt control (e.g. the ad skip button).
            if origin == CmdOrigin::Ui || origin == CmdOrigin::Runtime {
                return self.apply_effect_of(node_id, origin);
            }
        }
        // Fault draws, UI pathway only: ambiguity first, then silent-fail.
        if origin == CmdOrigin::Ui {
            let def = self.node_def(node_id);
            let history_adjacent = def.map(|d| d.history_adjacent).unwrap_or(false);
            if history_adjacent {
                let ambiguous = self.rng.draw(self.profile.ambiguous_target_prob);
                if ambiguous {
                    if let Some(entry) = self.search_history.last().cloned() {
                        self.submit_search(&self.foreground.clone(), &entry, false);
                        return CommandOutcome::Accepted;
                    }
                }
            }
            let silent = self.rng.draw(self.profile.silent_tap_fail_prob);
            if silent {
                return CommandOutcome::Accepted;
            }
        }
        if let Some(node) = self.render_tree().find(node_id) {
            if node.role == NodeRole::TextField {
                // Tapping a text field focuses it; its effect fires on typing.
                self.focused = Some((self.foreground.clone(), node_id.to_string()));
                return CommandOutcome::Accepted;
            }
        }
        self.apply_effect_of(node_id, origin)
    }

    fn do_type(&mut self, node_id: &str, text: &str, origin: CmdOrigin) -> CommandOutcome {
        if self.pending_prompt.is_some() && origin == CmdOrigin::Ui {
            return CommandOutcome::rejected("blocked by system prompt");
        }
        let tree = self.render_tree();
        let Some(node) = tree.find(node_id).cloned() else {
            return CommandOutcome::rejected("no such target");
        };
        if node.role != NodeRole::TextField {
            return CommandOutcome::rejected("no such target");
        }
        let app = self.foreground.clone();
        let effect = self.node_def(node_id).map(|d| d.effect.clone()).unwrap_or_default();
        self.set_app_data(&app, &format!("field_{node_id}"), text);
        if effect == "submit_search" {
            self.submit_search(&app, text, true);
        }
        CommandOutcome::Accepted
    }

    fn apply_effect_of(&mut self, node_id: &str, _origin: CmdOrigin) -> CommandOutcome {
        // Dynamic nodes carry synthesized effects; static ones come from the
        // catalog definition.
        let effect = self
            .dynamic_effect(node_id)
            .or_else(|| self.node_def(node_id).map(|d| d.effect.clone()))
            .unwrap_or_default();
        let app = self.foreground.clone();
        match effect.as_str() {
            "" | "none" => CommandOutcome::Accepted,
            "focus" => {
                self.focused = Some((app, node_id.to_string()));
                CommandOutcome::Accepted
            }
            "back" => {
                self.do_back();
                CommandOutcome::Accepted
            }
            "new_note" => {
                self.set_app_data(&app, "editor_title", "");
                self.set_app_data(&app, "editor_body", "");
                self.set_app_data(&app, "field_note_title", "");
                self.set_app_data(&app, "field_note_body", "");
                self.per_app_screen.insert(app, "editor".into());
                CommandOutcome::Accepted
            }
            "save_note" => {
                let title = self.app_data_get(&app, "field_note_title");
                let body = self.app_data_get(&app, "field_note_body");
                self.notes.push(Note { title, body });
                self.per_app_screen.insert(app, "list".into());
                CommandOutcome::Accepted
            }
            "post_comment" => {
                let text = self.app_data_get(&app, "field_comment_box");
                if let Some(title) = self.playing.clone() {
                    self.comments.entry(title).or_default().push(text);
                }
                self.set_app_data(&app, "field_comment_box", "");
                CommandOutcome::Accepted
            }
            "skip_ad" => self.do_dismiss(),
            other => {
                if let Some(target) = other.strip_prefix("goto:") {
                    self.per_app_screen.insert(app, target.to_string());
                    self.focused = None;
                    return CommandOutcome::Accepted;
                }
                if let Some(key) = other.strip_prefix("toggle_setting:") {
                    let value = self.settings.entry(key.to_string()).or_insert_with(|| "off".into());
                    *value = if value == "on" { "off".into() } else { "on".into() };
                    return CommandOutcome::Accepted;
                }
                if let Some(title) = other.strip_prefix("play_video:") {
                    return self.start_video(&app, title);
                }
                if let Some(page) = other.strip_prefix("open_app_page:") {
                    self.set_app_data(&app, "current_page", page);
                    self.per_app_screen.insert(app, "app_page".into());
                    return CommandOutcome::Accepted;
                }
                if let Some(target) = other.strip_prefix("install:") {
                    return self.start_install(target);
                }
                if other.starts_with("back_to:") {
                    self.do_back();
                    return CommandOutcome::Accepted;
                }
                if let Some(entry) = other.strip_prefix("history_search:") {
                    let entry = entry.to_string();
                    self.submit_search(&app, &entry, false);
                    return CommandOutcome::Accepted;
                }
                if let Some(target) = other.strip_prefix("launch:") {
                    let target = target.to_string();
                    return self.do_launch(&target);
                }
                CommandOutcome::Accepted
            }
        }
    }

    fn start_video(&mut self, app: &str, title: &str) -> CommandOutcome {
        self.playing = Some(title.to_string());
        self.per_app_screen.insert(app.to_string(), "watch".into());
        if self.profile.ad_injection && app == "youtube" {
            self.pending_prompt = Some(PromptState {
                kind: PromptKind::Ad,
                text: "Ad playing".into(),
                skippable_at: Some(self.clock + 5),
                expires_at: Some(self.clock + 10),
                grants_install: None,
            });
        }
        CommandOutcome::Accepted
    }

    fn start_install(&mut self, app: &str) -> CommandOutcome {
        if self.installed.contains(app) || self.pending_install.is_some() {
            return CommandOutcome::Accepted;
        }
        // Store installs require a system confirmation; the prompt is a
        // system surface outside the app UI tree.
        self.pending_prompt = Some(PromptState {
            kind: PromptKind::Permission,
            text: format!("System dialog: allow installing {app}?"),
            skippable_at: None,
            expires_at: None,
            grants_install: Some(app.to_string()),
        });
        CommandOutcome::Accepted
    }

    fn submit_search(&mut self, app: &str, query: &str, record_history: bool) {
        self.set_app_data(app, "current_query", query);
        if record_history {
            self.search_history.push(query.to_string());
        }
        self.per_app_screen.insert(app.to_string(), "results".into());
        self.focused = None;
    }

    fn resolve_gates(&mut self) {
        if let Some((app, ready_at)) = self.pending_launch.clone() {
            if self.clock >= ready_at {
                self.foreground = app;
                self.pending_launch = None;
                self.mutations += 1;
            }
        }
        if let Some((app, ready_at)) = self.pending_install.clone() {
            if self.clock >= ready_at {
                self.installed.insert(app);
                self.pending_install = None;
                self.mutations += 1;
            }
        }
        if let Some(prompt) = &self.pending_prompt {
            if let Some(expiry) = prompt.expires_at {
                if self.clock >= expiry {
                    self.pending_prompt = None;
                    self.mutations += 1;
                }
            }
        }
    }

    fn snapshot(&self, scope: SnapshotScope) -> StateSnapshot {
        let ui = match scope {
            SnapshotScope::Summary => None,
            SnapshotScope::FullUi | SnapshotScope::App => Some(self.render_tree()),
        };
        StateSnapshot {
            clock: self.clock,
            foreground: self.foreground.clone(),
            screen: self.current_screen_id(),
            settings: self.settings.clone(),
            prompt: self.pending_prompt.clone(),
            pending_launch: self.pending_launch.clone(),
            pending_install: self.pending_install.clone(),
            installed: self.installed.clone(),
            notes: self.notes.clone(),
            search_history: self.search_history.clone(),
            media_playing: match (&self.playing, &self.pending_prompt) {
                (Some(t), None) => Some(t.clone()),
                _ => None,
            },
            comments: self.comments.clone(),
            ui,
        }
    }

    fn current_screen_id(&self) -> String {
        if self.foreground == LAUNCHER {
            return "home".into();
        }
        self.per_app_screen
            .get(&self.foreground)
            .cloned()
            .unwrap_or_else(|| "home".into())
    }

    fn node_def(&self, node_id: &str) -> Option<NodeDef> {
        let screen = self.current_screen_id();
        self.catalog
            .screen(&self.foreground, &screen)
            .and_then(|s| s.nodes.iter().find(|n| n.id == node_id))
            .cloned()
    }

    fn app_data_get(&self, app: &str, key: &str) -> String {
        self.app_data
            .get(app)
            .and_then(|m| m.get(key))
            .cloned()
            .unwrap_or_default()
    }

    fn set_app_data(&mut self, app: &str, key: &str, value: &str) {
        self.app_data
            .entry(app.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    /// Effects synthesized for dynamically rendered nodes.
    fn dynamic_effect(&self, node_id: &str) -> Option<String> {
        if self.pending_prompt.is_some() {
            if node_id == "skip_ad" {
                return Some("skip_ad".into());
            }
            return None;
        }
        if self.foreground == LAUNCHER {
            return node_id.strip_prefix("icon_").map(|app| format!("launch:{app}"));
        }
        let app = self.foreground.as_str();
        let screen = self.current_screen_id();
        match (app, screen.as_str()) {
            ("chrome", "home") => node_id.strip_prefix("history_").map(|idx| {
                let entries = self.history_newest_first();
                let entry = idx
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| entries.get(i).cloned())
                    .unwrap_or_default();
                format!("history_search:{entry}")
            }),
            ("youtube", "results") => {
                let query = self.app_data_get(app, "current_query");
                self.catalog
                    .canned_for(app, &query)
                    .iter()
                    .find(|d| node_id == format!("video_{}", slug(&d.title)))
                    .map(|d| format!("play_video:{}", d.title))
            }
            ("play_store", "results") => {
                let query = self.app_data_get(app, "current_query");
                // Store canned docs carry the target app id in `body`.
                self.catalog
                    .canned_for(app, &query)
                    .iter()
                    .find(|d| node_id == format!("result_{}", slug(&d.title)))
                    .map(|d| format!("open_app_page:{}", d.body))
            }
            ("play_store", "app_page") if node_id == "install_btn" => {
                Some(format!("install:{}", self.app_data_get(app, "current_page")))
            }
            _ => None,
        }
    }

    fn history_newest_first(&self) -> Vec<String> {
        self.search_history.iter().rev().cloned().collect()
    }

    /// Render the current tree: the prompt overlay when set, otherwise the
    /// foreground app's screen (or the launcher grid).
    pub fn render_tree(&self) -> UiNode {
        self.renders.set(self.renders.get() + 1);
        if let Some(prompt) = &self.pending_prompt {
            return self.render_prompt(prompt);
        }
        if self.foreground == LAUNCHER {
            return self.render_launcher();
        }
        let app = self.foreground.clone();
        let screen = self.current_screen_id();
        let mut root = UiNode::leaf(&format!("{app}_{screen}"), NodeRole::Label, "", false);
        if let Some(def) = self.catalog.screen(&app, &screen) {
            for node in &def.nodes {
                root.children.push(self.render_static_node(&app, node));
            }
            self.render_dynamic(&app, &screen, def, &mut root);
        }
        root
    }

    fn render_prompt(&self, prompt: &PromptState) -> UiNode {
        let mut root = UiNode::leaf("prompt_overlay", NodeRole::Label, "", false);
        match prompt.kind {
            PromptKind::Ad => {
                root.children.push(UiNode::leaf("ad_banner", NodeRole::Video, &prompt.text, false));
                let skippable = prompt.skippable_at.map(|t| self.clock >= t).unwrap_or(true);
                let label = if skippable { "Skip ad" } else { "Skip ad (soon)" };
                root.children.push(UiNode::leaf("skip_ad", NodeRole::Button, label, true));
            }
            PromptKind::Permission | PromptKind::Dialog => {
                // System dialogs sit outside the app accessibility surface:
                // nothing actionable is exposed to UI backends.
                root.children.push(UiNode::leaf("system_dialog", NodeRole::Label, &prompt.text, false));
            }
        }
        root
    }

    fn render_launcher(&self) -> UiNode {
        let mut root = UiNode::leaf("launcher_root", NodeRole::Label, "Home", false);
        for app in &self.catalog.apps {
            if app.id == LAUNCHER || !self.installed.contains(&app.id) {
                continue;
            }
            let name = if app.name.is_empty() { app.id.clone() } else { app.name.clone() };
            root.children.push(UiNode::leaf(
                &format!("icon_{}", app.id),
                NodeRole::Button,
                &name,
                true,
            ));
        }
        root
    }

    fn render_static_node(&self, app: &str, def: &NodeDef) -> UiNode {
        let mut text = def.text.clone();
        if let Some(key) = def.effect.strip_prefix("toggle_setting:") {
            let value = self.settings.get(key).cloned().unwrap_or_else(|| "off".into());
            text = format!("{}: {}", def.text, value);
        }
        if def.role == NodeRole::TextField {
            let buffer = self.app_data_get(app, &format!("field_{}", def.id));
            if !buffer.is_empty() {
                text = format!("{} [{}]", def.text, buffer);
            }
            if matches!(&self.focused, Some((a, n)) if a == app && n == &def.id) {
                text = format!("{text} (focused)");
            }
        }
        UiNode::leaf(&def.id, def.role, &text, def.actionable)
    }

    fn render_dynamic(&self, app: &str, screen: &str, def: &ScreenDef, root: &mut UiNode) {
        match def.dynamic.as_str() {
            "chrome_home" => {
                for (i, entry) in self.history_newest_first().iter().take(3).enumerate() {
                    root.children.push(UiNode::leaf(
                        &format!("history_{i}"),
                        NodeRole::ListItem,
                        entry,
                        true,
                    ));
                }
            }
            "search_results" => {
                let query = self.app_data_get(app, "current_query");
                root.children.push(UiNode::leaf(
                    "results_header",
                    NodeRole::Label,
                    &format!("Results for: {query}"),
                    false,
                ));
                let docs = self.catalog.canned_for(app, &query);
                if docs.is_empty() {
                    root.children.push(UiNode::leaf(
                        "no_results",
                        NodeRole::Label,
                        &format!("No results found for: {query}"),
                        false,
                    ));
                }
                for doc in docs {
                    match app {
                        "youtube" => root.children.push(UiNode::leaf(
                            &format!("video_{}", slug(&doc.title)),
                            NodeRole::Video,
                            &doc.title,
                            true,
                        )),
                        "play_store" => root.children.push(UiNode::leaf(
                            &format!("result_{}", slug(&doc.title)),
                            NodeRole::ListItem,
                            &doc.title,
                            true,
                        )),
                        _ => root.children.push(UiNode::leaf(
                            &format!("result_{}", slug(&doc.title)),
                            NodeRole::Label,
                            &format!("{} — {}", doc.title, doc.body),
                            false,
                        )),
                    }
                }
            }
            "watch" => {
                let title = self.playing.clone().unwrap_or_default();
                root.children.push(UiNode::leaf(
                    "player",
                    NodeRole::Video,
                    &format!("Playing: {title}"),
                    false,
                ));
            }
            "comments" => {
                let title = self.playing.clone().unwrap_or_default();
                root.children.push(UiNode::leaf(
                    "player_mini",
                    NodeRole::Video,
                    &format!("Playing: {title}"),
                    false,
                ));
                if let Some(list) = self.comments.get(&title) {
                    for (i, c) in list.iter().enumerate() {
                        root.children.push(UiNode::leaf(
                            &format!("comment_{i}"),
                            NodeRole::Label,
                            c,
                            false,
                        ));
                    }
                }
            }
            "app_page" => {
                let page = self.app_data_get(app, "current_page");
                let title = self
                    .catalog
                    .app(&page)
                    .map(|a| if a.name.is_empty() { a.id.clone() } else { a.name.clone() })
                    .unwrap_or_else(|| page.clone());
                root.children.push(UiNode::leaf("app_title", NodeRole::Label, &title, false));
                let (label, actionable) = if self.installed.contains(&page) {
                    ("Installed".to_string(), false)
                } else if self.pending_install.is_some() {
                    ("Installing…".to_string(), false)
                } else {
                    ("Install".to_string(), true)
                };
                root.children.push(UiNode::leaf("install_btn", NodeRole::Button, &label, actionable));
            }
            "notes_list" => {
                for (i, note) in self.notes.iter().enumerate() {
                    root.children.push(UiNode::leaf(
                        &format!("note_{i}"),
                        NodeRole::ListItem,
                        &note.title,
                        true,
                    ));
                }
            }
            _ => {
                let _ = screen;
            }
        }
    }
}

/// Lowercased identifier-safe slug for dynamic node ids.
pub fn slug(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect::<String>()
        .split('_')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}
