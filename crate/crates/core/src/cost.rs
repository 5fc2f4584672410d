//! Tick cost table: the single accounting source for simulated time.
//!
//! One tick is one simulated second. Backend invocations bill at their
//! class rate per issued command (covering perception and serialization),
//! planner turns bill per call, and state queries bill by scope. Runtime
//! recovery commands (dismiss, wait, relaunch) run at raw device cost.

use serde::{Deserialize, Serialize};

use crate::device::CommandKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTable {
    pub planner_turn: u64,
    pub deterministic_cmd: u64,
    pub direct_ui_cmd: u64,
    pub ui_micro_step: u64,
    pub query_summary: u64,
    pub query_full: u64,
    pub raw_cmd: u64,
}

impl Default for CostTable {
    fn default() -> Self {
        // The deterministic/planner/query entries are pinned so that the
        // faults-off settings task totals exactly 21 ticks end to end.
        Self {
            planner_turn: 4,
            deterministic_cmd: 3,
            direct_ui_cmd: 5,
            ui_micro_step: 8,
            query_summary: 1,
            query_full: 4,
            raw_cmd: 1,
        }
    }
}

impl CostTable {
    /// Raw device cost of a command issued outside any backend.
    pub fn raw(&self, cmd: &CommandKind) -> u64 {
        match cmd {
            CommandKind::Wait { ticks } => *ticks,
            _ => self.raw_cmd,
        }
    }
}
