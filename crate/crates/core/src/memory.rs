//! Runtime knowledge layer: execution preferences, reusable task patterns,
//! and operational knowledge. Biases backend selection (demote-only) and
//! plan context without owning any control logic.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::catalog::normalize;
use crate::device::Tick;
use crate::error::{Error, Result};
use crate::registry::BackendClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    Preference,
    Pattern,
    Knowledge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryContent {
    Knowledge(String),
    Pattern(Vec<String>),
    Preference { verb: String, demote: BackendClass },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub key: String,
    pub kind: MemoryKind,
    /// App id or "global".
    pub scope: String,
    pub content: MemoryContent,
    #[serde(default)]
    pub uses: u64,
    #[serde(default)]
    pub created_at: Tick,
}

impl MemoryEntry {
    fn validate(&self) -> Result<()> {
        let matches = matches!(
            (&self.kind, &self.content),
            (MemoryKind::Knowledge, MemoryContent::Knowledge(_))
                | (MemoryKind::Pattern, MemoryContent::Pattern(_))
                | (MemoryKind::Preference, MemoryContent::Preference { .. })
        );
        if !matches {
            return Err(Error::Memory(format!("content does not match kind for key '{}'", self.key)));
        }
        if let MemoryContent::Preference { demote, .. } = &self.content {
            if *demote == BackendClass::Deterministic {
                return Err(Error::Memory(
                    "preferences may only demote ui_agent or direct_ui".into(),
                ));
            }
        }
        Ok(())
    }

    fn tokens(&self) -> Vec<String> {
        let mut text = self.key.clone();
        match &self.content {
            MemoryContent::Knowledge(k) => text.push_str(&format!(" {k}")),
            MemoryContent::Pattern(verbs) => text.push_str(&format!(" {}", verbs.join(" "))),
            MemoryContent::Preference { verb, demote } => {
                text.push_str(&format!(" {verb} {}", demote.name()))
            }
        }
        normalize(&text).split(' ').map(|s| s.to_string()).collect()
    }
}

/// Single-writer store over a JSON-lines file, compacted on every flush.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    entries: Vec<MemoryEntry>,
    path: Option<PathBuf>,
}

impl MemoryStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        let mut store = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let entry: MemoryEntry = serde_json::from_str(line)
                .map_err(|e| Error::Memory(format!("store line {}: {e}", i + 1)))?;
            entry.validate()?;
            store.entries.push(entry);
        }
        Ok(store)
    }

    pub fn open(path: PathBuf) -> Result<Self> {
        let mut store = if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            Self::from_lines(&text)?
        } else {
            Self::default()
        };
        store.path = Some(path);
        Ok(store)
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) -> Result<()> {
        self.entries.clear();
        self.flush()
    }

    /// Upsert by (key, scope); an overwrite preserves the use counter.
    pub fn put(&mut self, mut entry: MemoryEntry) -> Result<()> {
        entry.validate()?;
        if let Some(existing) = self
            .entries
            .iter_mut()
            .find(|e| e.key == entry.key && e.scope == entry.scope)
        {
            entry.uses = existing.uses;
            *existing = entry;
        } else {
            self.entries.push(entry);
        }
        self.flush()
    }

    /// Token-overlap retrieval: score = |terms ∩ entry tokens|, plus a
    /// fixed bonus of 2 for a scope match; ties break newest-first.
    pub fn query(&mut self, terms: &[String], scope_hint: Option<&str>, k: usize) -> Vec<MemoryEntry> {
        let wanted: BTreeSet<String> = terms.iter().map(|t| normalize(t)).filter(|t| !t.is_empty()).collect();
        let mut scored: Vec<(u64, Tick, usize)> = Vec::new();
        for (idx, entry) in self.entries.iter().enumerate() {
            let tokens: BTreeSet<String> = entry.tokens().into_iter().collect();
            let mut score = wanted.intersection(&tokens).count() as u64;
            if let Some(scope) = scope_hint {
                if entry.scope == scope {
                    score += 2;
                }
            }
            if score > 0 {
                scored.push((score, entry.created_at, idx));
            }
        }
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
        let hits: Vec<usize> = scored.into_iter().take(k).map(|(_, _, idx)| idx).collect();
        for idx in &hits {
            self.entries[*idx].uses += 1;
        }
        hits.into_iter().map(|idx| self.entries[idx].clone()).collect()
    }

    /// Backend classes demoted for a verb by preference entries.
    pub fn demotions(&self, verb: &str) -> BTreeSet<BackendClass> {
        self.entries
            .iter()
            .filter_map(|e| match &e.content {
                MemoryContent::Preference { verb: v, demote } if v == verb => Some(*demote),
                _ => None,
            })
            .collect()
    }

    /// Post-task learning: one pattern per fully successful task, one
    /// preference demotion per backend class that failed verification at
    /// least twice on one verb. Returns what was written.
    pub fn learn(&mut self, learning: &TaskLearning) -> Result<Vec<MemoryEntry>> {
        let mut written = Vec::new();
        if learning.fully_successful && !learning.verb_sequence.is_empty() {
            let entry = MemoryEntry {
                key: format!("pattern {}", learning.task_id),
                kind: MemoryKind::Pattern,
                scope: learning.scope.clone(),
                content: MemoryContent::Pattern(learning.verb_sequence.clone()),
                uses: 0,
                created_at: learning.finished_at,
            };
            self.put(entry.clone())?;
            written.push(entry);
        }
        for ((verb, class), count) in &learning.failed_verifications {
            if *count >= 2 && *class != BackendClass::Deterministic {
                let entry = MemoryEntry {
                    key: format!("avoid {} for {verb}", class.name()),
                    kind: MemoryKind::Preference,
                    scope: "global".into(),
                    content: MemoryContent::Preference { verb: verb.clone(), demote: *class },
                    uses: 0,
                    created_at: learning.finished_at,
                };
                self.put(entry.clone())?;
                written.push(entry);
            }
        }
        Ok(written)
    }

    pub fn flush(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("memory entry serializes"));
            out.push('\n');
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).ok();
        }
        fs::write(path, out).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
    }
}

/// What a finished task contributes to memory.
#[derive(Debug, Clone, Default)]
pub struct TaskLearning {
    pub task_id: String,
    pub scope: String,
    pub verb_sequence: Vec<String>,
    pub fully_successful: bool,
    pub finished_at: Tick,
    pub failed_verifications: std::collections::BTreeMap<(String, BackendClass), u32>,
}
