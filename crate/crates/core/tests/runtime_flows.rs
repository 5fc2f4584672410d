//! End-to-end flows for each shipped task under the three policies.

use agent_core::assets::Assets;
use agent_core::bench::run_cell;
use agent_core::device::DeviceState;
use agent_core::fault::FaultProfile;
use agent_core::memory::MemoryStore;
use agent_core::orchestrator::{run_task, RunStatus, SessionConfig};
use agent_core::planner::ScriptedPlanner;
use agent_core::registry::BackendClass;
use agent_core::scheduler::SchedulePolicy;
use agent_core::trace::TraceEvent;
use agent_core::TaskReport;

fn run_with_profile(task_id: &str, policy: SchedulePolicy, profile: FaultProfile) -> TaskReport {
    let assets = Assets::load_default().unwrap();
    let task = assets.task(task_id).unwrap();
    let mut device = DeviceState::load(assets.catalog.clone(), profile);
    let mut memory = MemoryStore::from_lines(&assets.memory_seed).unwrap();
    let mut planner = ScriptedPlanner::new(task.rules.clone());
    run_task(
        task,
        &policy,
        &mut planner,
        &mut device,
        &mut memory,
        &assets.registry,
        &assets.costs,
        &SessionConfig::default(),
        None,
    )
    .unwrap()
}

fn dump(report: &TaskReport) -> String {
    let mut out = String::new();
    for e in &report.trace.events {
        out.push_str(&format!("{e:?}\n"));
    }
    out
}

#[test]
fn settings_cm_faults_off_totals_exactly_21_ticks() {
    let report = run_with_profile("settings_dark", SchedulePolicy::cm(), FaultProfile::oracle_mode());
    assert_eq!(report.status, RunStatus::Done, "{}", dump(&report));
    assert_eq!(report.completion_pct, 100, "{}", dump(&report));
    assert_eq!(report.e2e_ticks, 21, "{}", dump(&report));
}

#[test]
fn settings_cm_uses_only_the_deterministic_backend() {
    let assets = Assets::load_default().unwrap();
    let report = run_with_profile("settings_dark", SchedulePolicy::cm(), assets.profile.clone());
    assert_eq!(report.completion_pct, 100);
    assert_eq!(report.e2e_ticks, 21);
    for outcome in &report.outcomes {
        for attempt in &outcome.attempts {
            assert_eq!(attempt.backend, BackendClass::Deterministic, "{}", dump(&report));
        }
    }
}

#[test]
fn chrome_cm_recovers_from_launch_delay_with_a_wait() {
    let assets = Assets::load_default().unwrap();
    let report = run_with_profile(
        "chrome_gold",
        SchedulePolicy::cm(),
        assets.profile.clone().with_seed(1),
    );
    assert_eq!(report.status, RunStatus::Done, "{}", dump(&report));
    assert_eq!(report.completion_pct, 100, "{}", dump(&report));
    let mut saw_wait = false;
    for e in &report.trace.events {
        if let TraceEvent::Recovery { action, .. } = e {
            if action.starts_with("wait(") {
                saw_wait = true;
            }
        }
    }
    assert!(saw_wait, "expected a wait recovery\n{}", dump(&report));
}

#[test]
fn ui_only_chrome_run_records_precondition_failure_on_launcher() {
    let assets = Assets::load_default().unwrap();
    let report = run_cell(&assets, "chrome_gold", "ui-only", 1, &assets.profile, 600).unwrap();
    let mut witnessed = false;
    for e in &report.trace.events {
        if let TraceEvent::Attempt { micro, .. } = e {
            for m in micro {
                if m.precondition_failure && m.foreground == "launcher" {
                    witnessed = true;
                }
            }
        }
    }
    assert!(witnessed, "{}", dump(&report));
}

#[test]
fn all_tasks_complete_fully_under_cm_with_default_faults() {
    let assets = Assets::load_default().unwrap();
    for task_id in assets.task_order() {
        for seed in [1u64, 7, 13] {
            let report = run_cell(&assets, &task_id, "cm", seed, &assets.profile, 600).unwrap();
            assert_eq!(
                report.completion_pct, 100,
                "task {task_id} seed {seed}\n{}",
                dump(&report)
            );
            assert_eq!(report.status, RunStatus::Done, "task {task_id} seed {seed}");
        }
    }
}

#[test]
fn no_ui_agent_times_out_on_both_youtube_tasks_at_600() {
    let assets = Assets::load_default().unwrap();
    for task_id in ["yt_play", "yt_comment"] {
        let report = run_cell(&assets, task_id, "no-ui-agent", 3, &assets.profile, 600).unwrap();
        assert_eq!(report.status, RunStatus::Timeout, "{task_id}\n{}", dump(&report));
        assert_eq!(report.e2e_ticks, 600, "{task_id}");
        assert!(report.completion_pct < 100, "{task_id}");
    }
}

#[test]
fn ui_only_false_success_on_note_step_with_certain_silent_taps() {
    let assets = Assets::load_default().unwrap();
    let mut profile = assets.profile.clone();
    profile.silent_tap_fail_prob = 1.0;
    profile.ambiguous_target_prob = 0.0;
    let report = run_with_profile("multi_note", SchedulePolicy::ui_only(), profile.clone().with_seed(2));
    let note_outcome = report
        .outcomes
        .iter()
        .filter(|o| o.verb == "write_note" || (o.verb == "tap_node" && o.arg_tag == "new_note"))
        .last()
        .unwrap_or_else(|| panic!("no note step reached\n{}", dump(&report)));
    assert!(note_outcome.achieved(), "{}", dump(&report));
    let note_created = report
        .checkpoints
        .iter()
        .find(|c| c.name == "note_created")
        .unwrap();
    assert!(!note_created.satisfied, "note must not exist\n{}", dump(&report));

    // The verifying policy on the same profile reports the failure instead.
    let cm_report = run_with_profile("multi_note", SchedulePolicy::cm(), profile.with_seed(2));
    assert!(cm_report.completion_pct < 100);
    let saw_note_failure = cm_report.outcomes.iter().any(|o| {
        (o.verb == "write_note" || o.verb == "tap_node") && !o.achieved()
    });
    assert!(saw_note_failure, "{}", dump(&cm_report));
}

#[test]
fn fail_fast_policy_stops_after_unschedulable_step() {
    let report = run_with_profile("settings_dark", SchedulePolicy::ui_only(), FaultProfile::oracle_mode());
    assert_eq!(report.status, RunStatus::Done);
    assert_eq!(report.completion_pct, 0);
    assert!(report.final_text.unwrap().contains("Stopping"));
}

#[test]
fn replay_is_bit_identical_for_fixed_config() {
    let assets = Assets::load_default().unwrap();
    for policy in ["cm", "ui-only", "no-ui-agent"] {
        let a = run_cell(&assets, "multi_note", policy, 11, &assets.profile, 600).unwrap();
        let b = run_cell(&assets, "multi_note", policy, 11, &assets.profile, 600).unwrap();
        assert_eq!(a.trace_digest, b.trace_digest, "{policy}");
        assert_eq!(a.completion_pct, b.completion_pct);
        assert_eq!(a.e2e_ticks, b.e2e_ticks);
    }
}

#[test]
fn text_only_reply_ends_run_with_no_backend_invocations_after() {
    let assets = Assets::load_default().unwrap();
    let report = run_with_profile("settings_dark", SchedulePolicy::cm(), assets.profile.clone());
    let mut saw_final_turn = false;
    for e in &report.trace.events {
        match e {
            TraceEvent::PlannerTurn { reply, .. } if reply == "text" => saw_final_turn = true,
            TraceEvent::Attempt { .. } if saw_final_turn => {
                panic!("backend invocation after text-only reply\n{}", dump(&report))
            }
            _ => {}
        }
    }
    assert!(saw_final_turn);
}
