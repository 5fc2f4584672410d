//! Smartphone-native agent runtime against a deterministic simulated
//! device: hierarchical orchestrator, heterogeneous control backends,
//! deterministic-first scheduling with verify-and-recover, a runtime
//! memory layer, and a completion-ratio benchmark harness.

pub mod assets;
pub mod backends;
pub mod bench;
pub mod catalog;
pub mod cost;
pub mod device;
pub mod digest;
pub mod error;
pub mod fault;
pub mod goal;
pub mod grounding;
pub mod memory;
pub mod orchestrator;
pub mod planner;
pub mod policy;
pub mod registry;
pub mod rng;
pub mod scheduler;
pub mod task;
pub mod trace;
pub mod ui;

pub use assets::Assets;
pub use backends::{Action, ActionResult, ActionStatus};
pub use catalog::Catalog;
pub use cost::CostTable;
pub use device::{CmdOrigin, CommandKind, CommandOutcome, DeviceState, SnapshotScope, StateSnapshot};
pub use error::{Error, Result};
pub use fault::FaultProfile;
pub use goal::GoalPredicate;
pub use memory::{MemoryEntry, MemoryStore};
pub use orchestrator::{run_task, RunStatus, SessionConfig, TaskReport};
pub use planner::{ObservationPacket, Planner, PlannerReply, ScriptedPlanner};
pub use policy::{evaluate_policy, Decision, PolicyDecision, PolicyLevel, PolicyRule};
pub use registry::{BackendClass, Capability, CapabilityRegistry, ReliabilityClass};
pub use scheduler::{SchedulePolicy, Step, StepFinal, StepOutcome};
pub use task::Task;
pub use trace::{ExecutionTrace, TraceEvent};
