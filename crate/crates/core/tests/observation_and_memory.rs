//! Observation packet construction and the memory layer's integration
//! with the run loop.

use std::collections::BTreeMap;

use agent_core::assets::Assets;
use agent_core::cost::CostTable;
use agent_core::device::DeviceState;
use agent_core::fault::FaultProfile;
use agent_core::memory::MemoryStore;
use agent_core::orchestrator::{build_observation, run_task, SessionConfig};
use agent_core::planner::ScriptedPlanner;
use agent_core::scheduler::{SchedulePolicy, SnapCache, StepFinal, StepOutcome};

fn outcome(verb: &str, n: usize) -> StepOutcome {
    StepOutcome {
        step_id: format!("step{n}"),
        verb: verb.into(),
        arg_tag: String::new(),
        final_status: StepFinal::Achieved,
        attempts: Vec::new(),
        recoveries: Vec::new(),
        detail: format!("outcome {n} padding padding padding padding"),
    }
}

#[test]
fn fresh_task_packet_has_no_outcomes_and_a_summary() {
    let assets = Assets::load_default().unwrap();
    let task = assets.task("settings_dark").unwrap();
    let mut device = DeviceState::load(assets.catalog.clone(), FaultProfile::oracle_mode());
    let mut memory = MemoryStore::from_lines(&assets.memory_seed).unwrap();
    let mut cache = SnapCache::default();
    let packet = build_observation(
        task,
        1,
        &[],
        &mut device,
        &mut memory,
        &CostTable::default(),
        &mut cache,
        8192,
        false,
    );
    assert_eq!(packet.total_outcomes, 0);
    assert!(packet.outcomes.is_empty());
    assert!(packet.summary.ui.is_none());
    assert!(packet.byte_len > 0);
}

#[test]
fn tight_budget_keeps_newest_outcomes_and_records_bytes() {
    let assets = Assets::load_default().unwrap();
    let task = assets.task("multi_note").unwrap();
    let mut device = DeviceState::load(assets.catalog.clone(), FaultProfile::oracle_mode());
    let mut memory = MemoryStore::in_memory();
    let mut cache = SnapCache::default();
    let outcomes: Vec<StepOutcome> = (0..10).map(|i| outcome("web_search", i)).collect();
    let packet = build_observation(
        task,
        3,
        &outcomes,
        &mut device,
        &mut memory,
        &CostTable::default(),
        &mut cache,
        1200,
        false,
    );
    assert_eq!(packet.total_outcomes, 10);
    assert!(packet.outcomes.len() < 10, "tight budget must trim");
    assert!(!packet.outcomes.is_empty());
    // Newest first: the most recent step leads the list.
    assert_eq!(packet.outcomes[0].step_id, "step9");
    assert!(packet.byte_len <= 1200);
}

#[test]
fn install_task_observation_carries_the_install_pattern_hit() {
    let assets = Assets::load_default().unwrap();
    let task = assets.task("play_install").unwrap();
    let mut device = DeviceState::load(assets.catalog.clone(), FaultProfile::oracle_mode());
    let mut memory = MemoryStore::from_lines(&assets.memory_seed).unwrap();
    let mut cache = SnapCache::default();
    let packet = build_observation(
        task,
        1,
        &[],
        &mut device,
        &mut memory,
        &CostTable::default(),
        &mut cache,
        8192,
        false,
    );
    assert!(
        packet.memory_hits.iter().any(|e| e.key.contains("install app play store")),
        "hits: {:?}",
        packet.memory_hits.iter().map(|e| &e.key).collect::<Vec<_>>()
    );
}

#[test]
fn successful_install_run_learns_a_pattern() {
    let assets = Assets::load_default().unwrap();
    let task = assets.task("play_install").unwrap();
    let mut device = DeviceState::load(assets.catalog.clone(), FaultProfile::oracle_mode());
    let mut memory = MemoryStore::from_lines(&assets.memory_seed).unwrap();
    let mut planner = ScriptedPlanner::new(task.rules.clone());
    let report = run_task(
        task,
        &SchedulePolicy::cm(),
        &mut planner,
        &mut device,
        &mut memory,
        &assets.registry,
        &assets.costs,
        &SessionConfig::default(),
        None,
    )
    .unwrap();
    assert_eq!(report.completion_pct, 100);
    assert!(report.learning.fully_successful);
    assert_eq!(report.learning.verb_sequence, vec!["launch_app".to_string(), "install_app".to_string()]);
    let written = memory.learn(&report.learning).unwrap();
    assert!(written.iter().any(|e| matches!(e.content, agent_core::memory::MemoryContent::Pattern(_))));
    let hits = memory.query(&["pattern".into(), "play_install".into()], Some("play_store"), 3);
    assert!(!hits.is_empty());
}

#[test]
fn timed_out_run_learns_no_pattern() {
    let assets = Assets::load_default().unwrap();
    let report = agent_core::bench::run_cell(&assets, "yt_play", "no-ui-agent", 1, &assets.profile, 600).unwrap();
    assert!(!report.learning.fully_successful);
    let mut memory = MemoryStore::in_memory();
    let written = memory.learn(&report.learning).unwrap();
    assert!(written.iter().all(|e| !matches!(e.content, agent_core::memory::MemoryContent::Pattern(_))));
}

#[test]
fn repeated_verification_failures_learn_a_demotion() {
    let assets = Assets::load_default().unwrap();
    // Certain silent taps: the direct escalation keeps failing verification
    // on the decomposed note step.
    let mut profile = assets.profile.clone();
    profile.silent_tap_fail_prob = 1.0;
    profile.ambiguous_target_prob = 0.0;
    let report = agent_core::bench::run_cell(&assets, "multi_note", "cm", 3, &profile, 600).unwrap();
    let mut memory = MemoryStore::in_memory();
    memory.learn(&report.learning).unwrap();
    let demoted: Vec<_> = report
        .learning
        .failed_verifications
        .iter()
        .filter(|((_, class), count)| **count >= 2 && *class != agent_core::BackendClass::Deterministic)
        .collect();
    assert!(!demoted.is_empty(), "expected repeat verification failures");
    assert!(!memory.is_empty());
}

#[test]
fn pre_satisfied_task_terminates_on_first_text_turn() {
    let assets = Assets::load_default().unwrap();
    let task = assets.task("settings_dark").unwrap();
    let mut device = DeviceState::load(assets.catalog.clone(), FaultProfile::oracle_mode());
    // Flip the theme before the run starts.
    device.apply_command(
        &agent_core::CommandKind::ToggleSetting { key: "dark_theme".into() },
        agent_core::CmdOrigin::Runtime,
        0,
    );
    let mut memory = MemoryStore::in_memory();
    let mut planner = ScriptedPlanner::new(task.rules.clone());
    let report = run_task(
        task,
        &SchedulePolicy::cm(),
        &mut planner,
        &mut device,
        &mut memory,
        &assets.registry,
        &assets.costs,
        &SessionConfig::default(),
        None,
    )
    .unwrap();
    assert_eq!(report.completion_pct, 100);
    assert!(report.outcomes.is_empty());
    // One observation query plus one planner turn.
    assert_eq!(report.e2e_ticks, 5);
}

#[test]
fn completion_is_bounded_and_monotone_in_satisfied_checkpoints() {
    let assets = Assets::load_default().unwrap();
    for task in assets.task_order() {
        for policy in ["cm", "ui-only", "no-ui-agent"] {
            for seed in [1u64, 5] {
                let report = agent_core::bench::run_cell(&assets, &task, policy, seed, &assets.profile, 600).unwrap();
                assert!(report.completion_pct <= 100);
                let sum: u32 = report
                    .checkpoints
                    .iter()
                    .filter(|c| c.satisfied)
                    .map(|c| c.weight)
                    .sum();
                assert_eq!(sum, report.completion_pct);
            }
        }
    }
}

#[test]
fn observation_scope_follows_policy() {
    let assets = Assets::load_default().unwrap();
    let task = assets.task("chrome_gold").unwrap();
    let mut device = DeviceState::load(assets.catalog.clone(), FaultProfile::oracle_mode());
    let mut memory = MemoryStore::in_memory();
    let mut cache = SnapCache::default();
    let costs = CostTable::default();
    let full = build_observation(task, 1, &[], &mut device, &mut memory, &costs, &mut cache, 8192, true);
    assert!(full.summary.ui.is_some());
    let mut args = BTreeMap::new();
    args.insert("x".to_string(), "y".to_string());
    drop(args);
    let mut cache = SnapCache::default();
    let mut device = DeviceState::load(assets.catalog.clone(), FaultProfile::oracle_mode());
    let summary = build_observation(task, 1, &[], &mut device, &mut memory, &costs, &mut cache, 8192, false);
    assert!(summary.summary.ui.is_none());
    assert!(full.byte_len > summary.byte_len);
}
