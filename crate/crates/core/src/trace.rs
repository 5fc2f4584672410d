//! Execution traces: the append-only record of planner turns, attempts,
//! verifications, recoveries, and tick costs. Everything downstream
//! (metrics, golden tests, replay checks, the gateway event stream) reads
//! from here.

use serde::{Deserialize, Serialize};

use crate::backends::{ActionStatus, MicroRecord};
use crate::device::Tick;
use crate::digest::digest_of;
use crate::registry::BackendClass;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    TaskStarted {
        clock: Tick,
        task_id: String,
        policy: String,
        seed: u64,
    },
    PlannerTurn {
        clock: Tick,
        turn: u32,
        observation_bytes: u64,
        reply: String,
    },
    StepStarted {
        clock: Tick,
        step_id: String,
        verb: String,
    },
    PolicyDenied {
        clock: Tick,
        step_id: String,
        verb: String,
        level: String,
        pattern: String,
    },
    Attempt {
        clock: Tick,
        step_id: String,
        attempt: u32,
        backend: BackendClass,
        status: ActionStatus,
        ticks_spent: Tick,
        state_digest: String,
        detail: String,
        micro: Vec<MicroRecord>,
    },
    Verification {
        clock: Tick,
        step_id: String,
        goal: String,
        holds: bool,
    },
    Recovery {
        clock: Tick,
        step_id: String,
        index: u32,
        action: String,
    },
    StepFinished {
        clock: Tick,
        step_id: String,
        verb: String,
        outcome: String,
        attempts: u32,
    },
    TaskFinished {
        clock: Tick,
        status: String,
        completion_pct: u32,
        e2e_ticks: Tick,
    },
}

impl TraceEvent {
    pub fn clock(&self) -> Tick {
        match self {
            TraceEvent::TaskStarted { clock, .. }
            | TraceEvent::PlannerTurn { clock, .. }
            | TraceEvent::StepStarted { clock, .. }
            | TraceEvent::PolicyDenied { clock, .. }
            | TraceEvent::Attempt { clock, .. }
            | TraceEvent::Verification { clock, .. }
            | TraceEvent::Recovery { clock, .. }
            | TraceEvent::StepFinished { clock, .. }
            | TraceEvent::TaskFinished { clock, .. } => *clock,
        }
    }
}

/// Append-only trace plus serialization cost accounting.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub events: Vec<TraceEvent>,
    pub observation_bytes: u64,
    pub ui_bytes: u64,
}

impl ExecutionTrace {
    pub fn append(&mut self, event: TraceEvent) {
        if let TraceEvent::Attempt { micro, .. } = &event {
            self.ui_bytes += micro.iter().map(|m| m.ui_bytes).sum::<u64>();
        }
        if let TraceEvent::PlannerTurn { observation_bytes, .. } = &event {
            self.observation_bytes += observation_bytes;
        }
        self.events.push(event);
    }

    pub fn digest(&self) -> String {
        digest_of(&self.events)
    }

    pub fn last(&self) -> Option<&TraceEvent> {
        self.events.last()
    }
}
