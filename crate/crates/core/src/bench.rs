//! Benchmark harness: tasks × policies × seeds with completion-ratio and
//! tick metrics, deterministic aggregation, calibration against the
//! ui-only completion targets, and report emission.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assets::Assets;
use crate::device::{DeviceState, Tick};
use crate::digest::digest_of;
use crate::error::{Error, Result};
use crate::fault::FaultProfile;
use crate::orchestrator::{run_task, RunStatus, SessionConfig, TaskReport};
use crate::planner::ScriptedPlanner;
use crate::rng::mix_seed;
use crate::scheduler::SchedulePolicy;
use crate::digest::fnv64;

pub const POLICY_ORDER: [&str; 3] = ["ui-only", "no-ui-agent", "cm"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub tasks: Vec<String>,
    pub policies: Vec<String>,
    pub seeds: Vec<u64>,
    pub profile: FaultProfile,
    pub timeout_ticks: Tick,
}

impl BenchConfig {
    pub fn with_assets(assets: &Assets) -> Self {
        Self {
            tasks: assets.task_order(),
            policies: POLICY_ORDER.iter().map(|s| s.to_string()).collect(),
            seeds: crate::assets::BENCH_SEEDS.to_vec(),
            profile: assets.profile.clone(),
            timeout_ticks: crate::scheduler::DEFAULT_TIMEOUT_TICKS,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub task: String,
    pub policy: String,
    pub seed: u64,
    pub completion_pct: u32,
    pub e2e_ticks: Tick,
    pub status: RunStatus,
    pub trace_digest: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub task: String,
    pub policy: String,
    /// Mean completion in tenths of a percent (integer-exact).
    pub mean_completion_decipct: u64,
    /// Mean end-to-end time in tenths of a tick.
    pub mean_e2e_deciticks: u64,
    /// Share of seeds ending in timeout, percent.
    pub timeout_rate_pct: u32,
    pub seeds: usize,
}

impl Aggregate {
    pub fn mean_completion(&self) -> f64 {
        self.mean_completion_decipct as f64 / 10.0
    }

    pub fn mean_e2e(&self) -> f64 {
        self.mean_e2e_deciticks as f64 / 10.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
    pub digest: String,
}

impl BenchReport {
    pub fn aggregate(&self, task: &str, policy: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.task == task && a.policy == policy)
    }
}

/// Run one benchmark cell: fresh device, fresh memory, fresh session.
pub fn run_cell(
    assets: &Assets,
    task_id: &str,
    policy_name: &str,
    seed: u64,
    profile: &FaultProfile,
    timeout: Tick,
) -> Result<TaskReport> {
    let task = assets.task(task_id)?;
    let policy = SchedulePolicy::from_name(policy_name)
        .ok_or_else(|| Error::Config(format!("unknown policy '{policy_name}'")))?
        .with_timeout(timeout);
    let cell_profile = profile.clone().with_seed(mix_seed(seed, fnv64(task_id.as_bytes())));
    let mut device = DeviceState::load(assets.catalog.clone(), cell_profile);
    let mut memory = assets.memory()?;
    let mut planner = if policy.kind == crate::scheduler::PolicyKind::UiOnly && !task.oneshot.is_empty() {
        ScriptedPlanner::one_shot(task.oneshot.clone(), task.rules.clone())
    } else {
        ScriptedPlanner::new(task.rules.clone())
    };
    let session = SessionConfig { seed, ..Default::default() };
    run_task(
        task,
        &policy,
        &mut planner,
        &mut device,
        &mut memory,
        &assets.registry,
        &assets.costs,
        &session,
        None,
    )
}

pub fn run_bench(assets: &Assets, config: &BenchConfig) -> Result<BenchReport> {
    for task in &config.tasks {
        assets.task(task)?;
    }
    if config.tasks.is_empty() || config.policies.is_empty() || config.seeds.is_empty() {
        return Err(Error::Config("bench needs tasks, policies, and seeds".into()));
    }
    let mut cells = Vec::new();
    for task in &config.tasks {
        for policy in &config.policies {
            for &seed in &config.seeds {
                let report = run_cell(assets, task, policy, seed, &config.profile, config.timeout_ticks)?;
                cells.push(CellResult {
                    task: task.clone(),
                    policy: policy.clone(),
                    seed,
                    completion_pct: report.completion_pct,
                    e2e_ticks: report.e2e_ticks,
                    status: report.status,
                    trace_digest: report.trace_digest,
                });
            }
        }
    }
    let aggregates = aggregate(&cells, config);
    let digest = digest_of(&(&cells, &aggregates));
    Ok(BenchReport { config: config.clone(), cells, aggregates, digest })
}

fn aggregate(cells: &[CellResult], config: &BenchConfig) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for task in &config.tasks {
        for policy in &config.policies {
            let rows: Vec<&CellResult> =
                cells.iter().filter(|c| &c.task == task && &c.policy == policy).collect();
            if rows.is_empty() {
                continue;
            }
            let n = rows.len() as u64;
            let completion_sum: u64 = rows.iter().map(|r| r.completion_pct as u64).sum();
            let e2e_sum: u64 = rows.iter().map(|r| r.e2e_ticks).sum();
            let timeouts = rows.iter().filter(|r| r.status == RunStatus::Timeout).count();
            out.push(Aggregate {
                task: task.clone(),
                policy: policy.clone(),
                mean_completion_decipct: completion_sum * 10 / n,
                mean_e2e_deciticks: e2e_sum * 10 / n,
                timeout_rate_pct: (timeouts * 100 / rows.len()) as u32,
                seeds: rows.len(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Table,
    JsonLines,
}

/// Render a report: a fixed-width table (one row per task, completion and
/// time column groups per policy) or one JSON line per cell.
pub fn emit_report(report: &BenchReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::JsonLines => {
            let mut out = String::new();
            for cell in &report.cells {
                out.push_str(&serde_json::to_string(cell).expect("cell serializes"));
                out.push('\n');
            }
            out
        }
        ReportFormat::Table => {
            let policies = &report.config.policies;
            let mut out = String::new();
            let header_cells: Vec<String> = policies.iter().map(|p| format!("{p:>12}")).collect();
            out.push_str(&format!(
                "{:<16}| Completion Ratio (mean %){}| E2E Time (mean ticks){}\n",
                "Task", "", ""
            ));
            out.push_str(&format!(
                "{:<16}|{}  |{}\n",
                "",
                header_cells.join(""),
                header_cells.join("")
            ));
            out.push_str(&format!("{}\n", "-".repeat(16 + 2 * (policies.len() * 12) + 4)));
            for task in &report.config.tasks {
                let mut line = format!("{task:<16}|");
                for policy in policies {
                    if let Some(a) = report.aggregate(task, policy) {
                        line.push_str(&format!("{:>11.1}%", a.mean_completion()));
                    } else {
                        line.push_str(&format!("{:>12}", "-"));
                    }
                }
                line.push_str("  |");
                for policy in policies {
                    if let Some(a) = report.aggregate(task, policy) {
                        line.push_str(&format!("{:>12.1}", a.mean_e2e()));
                    } else {
                        line.push_str(&format!("{:>12}", "-"));
                    }
                }
                out.push_str(&line);
                out.push('\n');
            }
            out
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct CalibrationGrid {
    pub ambiguous_target_prob: Vec<f64>,
    pub silent_tap_fail_prob: Vec<f64>,
    pub chrome_launch_delay: Vec<u64>,
    pub targets: CalibrationTargets,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub chrome_gold: u64,
    pub play_install: u64,
    pub yt_comment: u64,
    pub multi_note: u64,
    pub half_width: u64,
}

impl CalibrationGrid {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("grid not parseable: {e}")))
    }

    fn targets_map(&self) -> BTreeMap<String, u64> {
        BTreeMap::from([
            ("chrome_gold".to_string(), self.targets.chrome_gold),
            ("play_install".to_string(), self.targets.play_install),
            ("yt_comment".to_string(), self.targets.yt_comment),
            ("multi_note".to_string(), self.targets.multi_note),
        ])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankCheck {
    pub name: String,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateScore {
    pub profile: FaultProfile,
    /// Max absolute deviation from the targets, tenths of a point.
    pub max_deviation_decipts: u64,
    pub achieved: BTreeMap<String, u64>,
    pub rank_checks: Vec<RankCheck>,
    pub feasible: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub chosen: CandidateScore,
    pub candidates_evaluated: usize,
    pub feasible: bool,
    pub targets: CalibrationTargets,
}

/// Grid-search fault parameters: feasibility first (targets within the
/// half-width, time rank orders, cm completeness, timeout rows), then
/// minimal max deviation. Infeasible grids report best-found with a flag.
pub fn calibrate(assets: &Assets, grid: &CalibrationGrid, seeds: &[u64]) -> Result<CalibrationReport> {
    let mut best: Option<CandidateScore> = None;
    let mut evaluated = 0usize;
    for &amb in &grid.ambiguous_target_prob {
        for &silent in &grid.silent_tap_fail_prob {
            for &delay in &grid.chrome_launch_delay {
                let mut profile = assets.profile.clone();
                profile.ambiguous_target_prob = amb;
                profile.silent_tap_fail_prob = silent;
                profile.async_launch_delay.insert("chrome".into(), delay);
                let candidate = score_candidate(assets, &profile, grid, seeds)?;
                evaluated += 1;
                let better = match &best {
                    None => true,
                    Some(current) => {
                        (candidate.feasible, std::cmp::Reverse(candidate.max_deviation_decipts))
                            > (current.feasible, std::cmp::Reverse(current.max_deviation_decipts))
                    }
                };
                if better {
                    best = Some(candidate);
                }
            }
        }
    }
    let chosen = best.ok_or_else(|| Error::Config("empty calibration grid".into()))?;
    Ok(CalibrationReport {
        feasible: chosen.feasible,
        candidates_evaluated: evaluated,
        targets: grid.targets.clone(),
        chosen,
    })
}

fn score_candidate(
    assets: &Assets,
    profile: &FaultProfile,
    grid: &CalibrationGrid,
    seeds: &[u64],
) -> Result<CandidateScore> {
    let config = BenchConfig {
        tasks: assets.task_order(),
        policies: POLICY_ORDER.iter().map(|s| s.to_string()).collect(),
        seeds: seeds.to_vec(),
        profile: profile.clone(),
        timeout_ticks: crate::scheduler::DEFAULT_TIMEOUT_TICKS,
    };
    let report = run_bench(assets, &config)?;
    let targets = grid.targets_map();
    let mut achieved = BTreeMap::new();
    let mut max_dev = 0u64;
    let mut feasible = true;
    for (task, target) in &targets {
        let Some(agg) = report.aggregate(task, "ui-only") else {
            feasible = false;
            continue;
        };
        achieved.insert(task.clone(), agg.mean_completion_decipct);
        let dev = agg.mean_completion_decipct.abs_diff(target * 10);
        max_dev = max_dev.max(dev);
        if dev > grid.targets.half_width * 10 {
            feasible = false;
        }
        if agg.mean_completion_decipct >= 1000 {
            feasible = false;
        }
    }
    let mut rank_checks = rank_checks(&report);
    for check in &rank_checks {
        if !check.holds {
            feasible = false;
        }
    }
    rank_checks.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(CandidateScore {
        profile: profile.clone(),
        max_deviation_decipts: max_dev,
        achieved,
        rank_checks,
        feasible,
    })
}

/// The per-row orderings and structural facts a calibrated profile must
/// reproduce.
pub fn rank_checks(report: &BenchReport) -> Vec<RankCheck> {
    let mean_e2e = |task: &str, policy: &str| report.aggregate(task, policy).map(|a| a.mean_e2e_deciticks);
    let mean_completion =
        |task: &str, policy: &str| report.aggregate(task, policy).map(|a| a.mean_completion_decipct);
    let mut checks = Vec::new();
    let mut push = |name: String, holds: Option<bool>| {
        checks.push(RankCheck { name, holds: holds.unwrap_or(false) });
    };

    for task in ["settings_dark", "chrome_gold", "play_install", "yt_play", "yt_comment", "multi_note"] {
        push(
            format!("cm completion 100 on {task}"),
            mean_completion(task, "cm").map(|c| c == 1000),
        );
    }
    push(
        "cm <= ui-only e2e on settings_dark".into(),
        mean_e2e("settings_dark", "cm")
            .zip(mean_e2e("settings_dark", "ui-only"))
            .map(|(cm, dr)| cm <= dr),
    );
    for task in ["play_install", "yt_play", "yt_comment", "multi_note"] {
        push(
            format!("cm < no-ui-agent e2e on {task}"),
            mean_e2e(task, "cm").zip(mean_e2e(task, "no-ui-agent")).map(|(cm, wo)| cm < wo),
        );
    }
    for task in ["chrome_gold", "yt_comment", "multi_note"] {
        push(
            format!("cm >= ui-only e2e on {task}"),
            mean_e2e(task, "cm").zip(mean_e2e(task, "ui-only")).map(|(cm, dr)| cm >= dr),
        );
    }
    for task in ["yt_play", "yt_comment"] {
        let agg = report.aggregate(task, "no-ui-agent");
        push(
            format!("no-ui-agent timeout rate 100 on {task}"),
            agg.map(|a| a.timeout_rate_pct == 100),
        );
        push(
            format!("no-ui-agent e2e exactly timeout on {task}"),
            agg.map(|a| a.mean_e2e_deciticks == report.config.timeout_ticks * 10),
        );
    }
    for task in ["chrome_gold", "play_install", "yt_comment", "multi_note"] {
        push(
            format!("ui-only completion < 100 on {task}"),
            mean_completion(task, "ui-only").map(|c| c < 1000),
        );
    }
    checks
}
