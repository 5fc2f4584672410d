//! Embedded default data files and the asset loader.
//!
//! The repo ships the catalog, registry, fault profile, tasks, and memory
//! seed as editable files; the same files are embedded here so binaries
//! and tests run without an installation step. `AGENT_HOME` overrides the
//! embedded set with an on-disk layout of the same shape.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::catalog::Catalog;
use crate::cost::CostTable;
use crate::error::{Error, Result};
use crate::fault::FaultProfile;
use crate::memory::MemoryStore;
use crate::registry::CapabilityRegistry;
use crate::task::Task;

pub const DEFAULT_CATALOG: &str = include_str!("../../../catalog/default_phone.toml");
pub const DEFAULT_REGISTRY: &str = include_str!("../../../registry/default.toml");
pub const DEFAULT_PROFILE: &str = include_str!("../../../profiles/default.toml");
pub const DEFAULT_MEMORY: &str = include_str!("../../../memory/store");
pub const DEFAULT_CALIBRATION_GRID: &str = include_str!("../../../bench/calibration_grid.toml");

pub const DEFAULT_TASKS: &[(&str, &str)] = &[
    ("settings_dark", include_str!("../../../tasks/settings_dark.toml")),
    ("chrome_gold", include_str!("../../../tasks/chrome_gold.toml")),
    ("play_install", include_str!("../../../tasks/play_install.toml")),
    ("yt_play", include_str!("../../../tasks/yt_play.toml")),
    ("yt_comment", include_str!("../../../tasks/yt_comment.toml")),
    ("multi_note", include_str!("../../../tasks/multi_note.toml")),
];

/// Twenty fixed seeds committed for reproducible benchmark runs.
pub const BENCH_SEEDS: [u64; 20] = [
    1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20,
];

/// Loaded runtime assets: everything a session needs besides the device.
#[derive(Debug, Clone)]
pub struct Assets {
    pub catalog: Arc<Catalog>,
    pub registry: CapabilityRegistry,
    pub profile: FaultProfile,
    pub costs: CostTable,
    pub tasks: BTreeMap<String, Task>,
    pub memory_seed: String,
    pub home: Option<PathBuf>,
}

impl Assets {
    pub fn load_default() -> Result<Self> {
        let catalog = Arc::new(Catalog::parse(DEFAULT_CATALOG)?);
        let registry = CapabilityRegistry::parse(DEFAULT_REGISTRY)?;
        let profile = FaultProfile::parse(DEFAULT_PROFILE)?;
        let mut tasks = BTreeMap::new();
        for (id, text) in DEFAULT_TASKS {
            tasks.insert(id.to_string(), Task::parse(text)?);
        }
        Ok(Self {
            catalog,
            registry,
            profile,
            costs: CostTable::default(),
            tasks,
            memory_seed: DEFAULT_MEMORY.to_string(),
            home: None,
        })
    }

    /// Load from an `AGENT_HOME` directory laid out like the repo:
    /// `catalog/default_phone.toml`, `registry/default.toml`,
    /// `profiles/default.toml`, `tasks/*.toml`, `memory/store`.
    pub fn load_from_dir(home: &Path) -> Result<Self> {
        let read = |rel: &str| -> Result<String> {
            let path = home.join(rel);
            std::fs::read_to_string(&path)
                .map_err(|e| Error::Io { path: path.display().to_string(), source: e })
        };
        let catalog = Arc::new(Catalog::parse(&read("catalog/default_phone.toml")?)?);
        let registry = CapabilityRegistry::parse(&read("registry/default.toml")?)?;
        let profile = FaultProfile::parse(&read("profiles/default.toml")?)?;
        let mut tasks = BTreeMap::new();
        let tasks_dir = home.join("tasks");
        let mut entries: Vec<_> = std::fs::read_dir(&tasks_dir)
            .map_err(|e| Error::Io { path: tasks_dir.display().to_string(), source: e })?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|x| x == "toml").unwrap_or(false))
            .collect();
        entries.sort();
        for path in entries {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
            let task = Task::parse(&text)?;
            tasks.insert(task.id.clone(), task);
        }
        let memory_seed = std::fs::read_to_string(home.join("memory/store")).unwrap_or_default();
        Ok(Self {
            catalog,
            registry,
            profile,
            costs: CostTable::default(),
            tasks,
            memory_seed,
            home: Some(home.to_path_buf()),
        })
    }

    /// Resolve from `AGENT_HOME` when set, embedded defaults otherwise.
    pub fn load_env() -> Result<Self> {
        match std::env::var_os("AGENT_HOME") {
            Some(dir) => Self::load_from_dir(Path::new(&dir)),
            None => Self::load_default(),
        }
    }

    pub fn task(&self, id: &str) -> Result<&Task> {
        self.tasks
            .get(id)
            .ok_or_else(|| Error::Task(format!("unknown task '{id}'")))
    }

    pub fn memory(&self) -> Result<MemoryStore> {
        MemoryStore::from_lines(&self.memory_seed)
    }

    /// Order tasks the way the benchmark table lists them.
    pub fn task_order(&self) -> Vec<String> {
        let shipped: Vec<String> = DEFAULT_TASKS.iter().map(|(id, _)| id.to_string()).collect();
        let mut ordered: Vec<String> =
            shipped.into_iter().filter(|id| self.tasks.contains_key(id)).collect();
        for id in self.tasks.keys() {
            if !ordered.contains(id) {
                ordered.push(id.clone());
            }
        }
        ordered
    }
}
