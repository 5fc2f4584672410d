//! Rendered UI trees.

use serde::{Deserialize, Serialize};

use crate::catalog::NodeRole;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiNode {
    pub id: String,
    pub role: NodeRole,
    pub text: String,
    pub actionable: bool,
    #[serde(default)]
    pub children: Vec<UiNode>,
}

impl UiNode {
    pub fn leaf(id: &str, role: NodeRole, text: &str, actionable: bool) -> Self {
        Self {
            id: id.to_string(),
            role,
            text: text.to_string(),
            actionable,
            children: Vec::new(),
        }
    }

    pub fn find(&self, id: &str) -> Option<&UiNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }

    /// Depth-first concatenation of node texts; the extraction surface.
    pub fn visible_text(&self) -> String {
        let mut out = Vec::new();
        self.collect_text(&mut out);
        out.join(" | ")
    }

    fn collect_text(&self, out: &mut Vec<String>) {
        if !self.text.is_empty() {
            out.push(self.text.clone());
        }
        for child in &self.children {
            child.collect_text(out);
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// Serialized byte size, recorded by the UI agent's cost accounting.
    pub fn byte_size(&self) -> u64 {
        serde_json::to_vec(self).map(|v| v.len() as u64).unwrap_or(0)
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids = vec![self.id.clone()];
        for child in &self.children {
            ids.extend(child.ids());
        }
        ids
    }
}
