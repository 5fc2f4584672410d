//! App catalog: the declarative document describing the simulated phone.
//!
//! The catalog defines apps, their screens, the static UI nodes on each
//! screen, node effects (what a tap or a typed submit does), launch delays,
//! and canned search documents. Screens whose content depends on runtime
//! state (result lists, note lists, watch pages) name a `dynamic` render
//! hook; the device engine injects those nodes when rendering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LAUNCHER: &str = "launcher";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Button,
    TextField,
    ListItem,
    Label,
    Video,
    Toggle,
    Tab,
}

/// A static node declaration in the catalog.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDef {
    pub id: String,
    pub role: NodeRole,
    #[serde(default)]
    pub text: String,
    #[serde(default = "default_true")]
    pub actionable: bool,
    /// Effect string interpreted by the device engine on interaction.
    /// Grammar: `goto:<screen>`, `toggle_setting:<key>`, `submit_search`,
    /// `history_search`, `play_video:<title>`, `open_app_page:<app>`,
    /// `install:<app>`, `new_note`, `save_note`, `post_comment`, `skip_ad`,
    /// `back`, `none`.
    #[serde(default)]
    pub effect: String,
    /// Text-field taps on history-adjacent fields are eligible for the
    /// ambiguous-target fault (the tap may activate an adjacent history
    /// entry instead of focusing the field).
    #[serde(default)]
    pub history_adjacent: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreenDef {
    pub id: String,
    /// Render hook injecting state-dependent nodes, e.g. `search_results`.
    #[serde(default)]
    pub dynamic: String,
    /// Where back navigation lands; defaults to the app's initial screen.
    #[serde(default)]
    pub back_to: Option<String>,
    #[serde(default, rename = "node")]
    pub nodes: Vec<NodeDef>,
}

/// Canned search document; results screens are populated from these.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CannedDoc {
    pub query: String,
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppDef {
    pub id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub launch_delay: u64,
    #[serde(default = "default_true")]
    pub installed: bool,
    pub initial_screen: String,
    #[serde(default, rename = "screen")]
    pub screens: Vec<ScreenDef>,
    #[serde(default, rename = "canned")]
    pub canned: Vec<CannedDoc>,
    /// Seeded search history for the app's search surface.
    #[serde(default)]
    pub search_history: Vec<String>,
    /// Ticks an install started from this app's store page takes to finish.
    #[serde(default)]
    pub install_duration: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Catalog {
    #[serde(default, rename = "app")]
    pub apps: Vec<AppDef>,
}

impl Catalog {
    pub fn parse(text: &str) -> Result<Self> {
        let catalog: Catalog = toml::from_str(text)
            .map_err(|e| Error::CatalogSchema(format!("catalog not parseable: {e}")))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn app(&self, id: &str) -> Option<&AppDef> {
        self.apps.iter().find(|a| a.id == id)
    }

    pub fn screen(&self, app: &str, screen: &str) -> Option<&ScreenDef> {
        self.app(app).and_then(|a| a.screens.iter().find(|s| s.id == screen))
    }

    /// Canned results for a query, matched on normalized text.
    pub fn canned_for(&self, app: &str, query: &str) -> Vec<CannedDoc> {
        let norm = normalize(query);
        self.app(app)
            .map(|a| {
                a.canned
                    .iter()
                    .filter(|c| normalize(&c.query) == norm)
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }

    fn validate(&self) -> Result<()> {
        if self.app(LAUNCHER).is_none() {
            return Err(Error::CatalogSchema(
                "catalog missing required app 'launcher'".into(),
            ));
        }
        let mut seen = BTreeMap::new();
        for app in &self.apps {
            if seen.insert(app.id.clone(), ()).is_some() {
                return Err(Error::CatalogSchema(format!("duplicate app id '{}'", app.id)));
            }
            if app.id != LAUNCHER && app.screens.iter().all(|s| s.id != app.initial_screen) {
                return Err(Error::CatalogSchema(format!(
                    "app '{}': initial screen '{}' not defined",
                    app.id, app.initial_screen
                )));
            }
            for screen in &app.screens {
                let mut ids = BTreeMap::new();
                for node in &screen.nodes {
                    if ids.insert(node.id.clone(), ()).is_some() {
                        return Err(Error::CatalogSchema(format!(
                            "app '{}' screen '{}': duplicate node id '{}'",
                            app.id, screen.id, node.id
                        )));
                    }
                    if let Some(target) = node.effect.strip_prefix("goto:") {
                        if app.screens.iter().all(|s| s.id != target) {
                            return Err(Error::CatalogSchema(format!(
                                "app '{}' screen '{}': node '{}' points at unknown screen '{}'",
                                app.id, screen.id, node.id, target
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Lowercased alphanumeric token list; queries match on this form.
pub fn normalize(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}
