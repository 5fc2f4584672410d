//! Operator CLI: chat REPL, single task runs, benchmarks, calibration,
//! memory management, trace inspection, and the gateway server.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use agent_core::assets::{Assets, BENCH_SEEDS};
use agent_core::bench::{
    calibrate, emit_report, rank_checks, run_bench, BenchConfig, CalibrationGrid, ReportFormat,
    POLICY_ORDER,
};
use agent_core::device::DeviceState;
use agent_core::digest::fnv64;
use agent_core::fault::FaultProfile;
use agent_core::memory::{MemoryContent, MemoryEntry, MemoryKind, MemoryStore};
use agent_core::orchestrator::{run_task, RunStatus, SessionConfig, TaskReport};
use agent_core::planner::ScriptedPlanner;
use agent_core::rng::mix_seed;
use agent_core::scheduler::{PolicyKind, SchedulePolicy};
use agent_core::trace::TraceEvent;

const EXIT_OK: u8 = 0;
const EXIT_INCOMPLETE: u8 = 1;
const EXIT_TIMEOUT: u8 = 2;
const EXIT_ABORT: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "agent",
    about = "Smartphone-native agent runtime on a simulated device",
    long_about = "Runs scripted tasks against a deterministic simulated phone through \
deterministic-first scheduling with verify-and-recover. Chat matches typed instructions \
to the predefined task files (the planner is scripted, not a language model).",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Task id (file under tasks/), e.g. settings_dark.
    #[arg(long)]
    task: String,
    /// Scheduling policy: cm | ui-only | no-ui-agent.
    #[arg(long, default_value = "cm")]
    policy: String,
    /// Fault seed for this run.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fault profile TOML; defaults to the shipped profile.
    #[arg(long)]
    fault_profile: Option<PathBuf>,
    /// Global timeout in ticks.
    #[arg(long, default_value_t = 600)]
    timeout_ticks: u64,
    /// Write the full task report (JSON) here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one task and print the step-by-step trace.
    Run(RunArgs),
    /// Interactive chat: type a task id or its instruction text.
    Chat {
        #[arg(long, default_value = "cm")]
        policy: String,
        #[arg(long)]
        fault_profile: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the benchmark matrix (tasks x policies x seeds).
    Bench {
        /// Run every shipped task (default when --tasks is omitted).
        #[arg(long)]
        all: bool,
        /// Comma-separated task ids.
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
        /// Comma-separated policies.
        #[arg(long, value_delimiter = ',')]
        policies: Vec<String>,
        /// Number of committed seeds to use (max 20).
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Explicit seed list overriding --seeds.
        #[arg(long, value_delimiter = ',')]
        seed_list: Vec<u64>,
        #[arg(long)]
        fault_profile: Option<PathBuf>,
        #[arg(long, default_value_t = 600)]
        timeout_ticks: u64,
        /// Directory for report files (table.txt, cells.jsonl, report.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Grid-search fault parameters against the completion targets.
    Calibrate {
        /// Calibration grid TOML; defaults to the shipped grid.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Write the winning profile TOML here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the full calibration report (JSON) here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Inspect or edit the memory store.
    Memory {
        #[command(subcommand)]
        action: MemoryAction,
    },
    /// Pretty-print the trace from a saved task report.
    Trace {
        /// Path to a task report JSON written by `agent run --report`.
        report: PathBuf,
    },
    /// Serve the gateway protocol on a TCP port.
    Serve {
        #[arg(long, default_value_t = 7777)]
        port: u16,
    },
}

#[derive(Subcommand)]
enum MemoryAction {
    /// List entries.
    Ls,
    /// Insert or update a knowledge entry.
    Put {
        key: String,
        value: String,
        #[arg(long, default_value = "global")]
        scope: String,
    },
    /// Remove every entry.
    Clear,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version print normally; anything else is usage.
            if err.use_stderr() {
                eprint!("{err}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{err}");
            return ExitCode::from(EXIT_OK);
        }
    };
    let assets = match Assets::load_env() {
        Ok(assets) => assets,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(&assets, &args),
        Command::Chat { policy, fault_profile, seed } => cmd_chat(&assets, &policy, fault_profile, seed),
        Command::Bench { all, tasks, policies, seeds, seed_list, fault_profile, timeout_ticks, report } => {
            cmd_bench(&assets, all, tasks, policies, seeds, seed_list, fault_profile, timeout_ticks, report)
        }
        Command::Calibrate { grid, out, report } => cmd_calibrate(&assets, grid, out, report),
        Command::Memory { action } => cmd_memory(&assets, action),
        Command::Trace { report } => cmd_trace(&report),
        Command::Serve { port } => cmd_serve(assets, port),
    }
}

fn load_profile(assets: &Assets, path: &Option<PathBuf>) -> Result<FaultProfile, String> {
    match path {
        None => Ok(assets.profile.clone()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            FaultProfile::parse(&text).map_err(|e| e.to_string())
        }
    }
}

fn execute_task(
    assets: &Assets,
    task_id: &str,
    policy_name: &str,
    seed: u64,
    profile: &FaultProfile,
    timeout: u64,
) -> Result<TaskReport, String> {
    let task = assets.task(task_id).map_err(|e| e.to_string())?;
    let policy = SchedulePolicy::from_name(policy_name)
        .ok_or_else(|| format!("unknown policy '{policy_name}' (cm | ui-only | no-ui-agent)"))?
        .with_timeout(timeout);
    let cell_profile = profile.clone().with_seed(mix_seed(seed, fnv64(task_id.as_bytes())));
    let mut device = DeviceState::load(assets.catalog.clone(), cell_profile);
    let mut memory = MemoryStore::from_lines(&assets.memory_seed).map_err(|e| e.to_string())?;
    let mut planner = if policy.kind == PolicyKind::UiOnly && !task.oneshot.is_empty() {
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
    .map_err(|e| e.to_string())
}

fn print_trace_line(event: &TraceEvent) {
    match event {
        TraceEvent::PlannerTurn { clock, turn, reply, observation_bytes } => {
            println!("[{clock:>4}] turn {turn}: {reply} ({observation_bytes} obs bytes)");
        }
        TraceEvent::StepStarted { clock, step_id, verb } => {
            println!("[{clock:>4}] {step_id} {verb}");
        }
        TraceEvent::Attempt { clock, step_id, attempt, backend, status, ticks_spent, .. } => {
            println!(
                "[{clock:>4}]   {step_id} attempt {attempt} via {} -> {status:?} ({ticks_spent} ticks)",
                backend.name()
            );
        }
        TraceEvent::Verification { clock, step_id, holds, .. } => {
            println!("[{clock:>4}]   {step_id} verified: {holds}");
        }
        TraceEvent::Recovery { clock, step_id, action, .. } => {
            println!("[{clock:>4}]   {step_id} recover: {action}");
        }
        TraceEvent::PolicyDenied { clock, step_id, verb, level, .. } => {
            println!("[{clock:>4}]   {step_id} {verb} denied at {level} level");
        }
        TraceEvent::StepFinished { clock, step_id, outcome, attempts, .. } => {
            println!("[{clock:>4}]   {step_id} {outcome} after {attempts} attempt(s)");
        }
        TraceEvent::TaskStarted { task_id, policy, seed, .. } => {
            println!("task {task_id} policy {policy} seed {seed}");
        }
        TraceEvent::TaskFinished { clock, status, completion_pct, e2e_ticks } => {
            println!("[{clock:>4}] finished: {status}, completion {completion_pct}%, e2e {e2e_ticks} ticks");
        }
    }
}

fn report_exit(report: &TaskReport) -> ExitCode {
    match report.status {
        RunStatus::Timeout => ExitCode::from(EXIT_TIMEOUT),
        RunStatus::Abort => ExitCode::from(EXIT_ABORT),
        RunStatus::Done if report.completion_pct == 100 => ExitCode::from(EXIT_OK),
        RunStatus::Done => ExitCode::from(EXIT_INCOMPLETE),
    }
}

fn cmd_run(assets: &Assets, args: &RunArgs) -> ExitCode {
    let profile = match load_profile(assets, &args.fault_profile) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let report = match execute_task(assets, &args.task, &args.policy, args.seed, &profile, args.timeout_ticks) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    for event in &report.trace.events {
        print_trace_line(event);
    }
    if let Some(text) = &report.final_text {
        println!("agent: {text}");
    }
    println!(
        "completion {}% | e2e {} ticks | status {:?} | trace {}",
        report.completion_pct, report.e2e_ticks, report.status, report.trace_digest
    );
    if let Some(path) = &args.report {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).ok();
        }
        match serde_json::to_string_pretty(&report) {
            Ok(json) => {
                if let Err(e) = std::fs::write(path, json) {
                    eprintln!("error writing report: {e}");
                    return ExitCode::from(EXIT_ABORT);
                }
            }
            Err(e) => {
                eprintln!("error serializing report: {e}");
                return ExitCode::from(EXIT_ABORT);
            }
        }
    }
    report_exit(&report)
}

fn cmd_chat(assets: &Assets, policy: &str, fault_profile: Option<PathBuf>, seed: u64) -> ExitCode {
    let profile = match load_profile(assets, &fault_profile) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    println!("agent chat — type a task id or its instruction; :trace shows the last trace; :quit exits");
    let stdin = std::io::stdin();
    let mut last: Option<TaskReport> = None;
    let mut run_seed = seed;
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let line = line.trim().to_string();
        if line.is_empty() {
            continue;
        }
        if line == ":quit" {
            println!("bye");
            return ExitCode::from(EXIT_OK);
        }
        if line == ":trace" {
            match &last {
                Some(report) => {
                    for event in &report.trace.events {
                        print_trace_line(event);
                    }
                }
                None => println!("no run yet"),
            }
            continue;
        }
        let task_id = assets
            .tasks
            .values()
            .find(|t| t.id == line || t.instruction.eq_ignore_ascii_case(&line))
            .map(|t| t.id.clone());
        let Some(task_id) = task_id else {
            println!("no matching task; available:");
            for id in assets.task_order() {
                let task = assets.task(&id).unwrap();
                println!("  {id}: {}", task.instruction);
            }
            continue;
        };
        match execute_task(assets, &task_id, policy, run_seed, &profile, 600) {
            Ok(report) => {
                if let Some(text) = &report.final_text {
                    println!("agent: {text}");
                }
                println!(
                    "[{task_id}] completion {}% in {} ticks ({:?})",
                    report.completion_pct, report.e2e_ticks, report.status
                );
                last = Some(report);
                run_seed += 1;
            }
            Err(e) => println!("error: {e}"),
        }
        let _ = std::io::stdout().flush();
    }
    ExitCode::from(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    assets: &Assets,
    _all: bool,
    tasks: Vec<String>,
    policies: Vec<String>,
    seeds: usize,
    seed_list: Vec<u64>,
    fault_profile: Option<PathBuf>,
    timeout_ticks: u64,
    report_dir: Option<PathBuf>,
) -> ExitCode {
    let profile = match load_profile(assets, &fault_profile) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let seeds = if !seed_list.is_empty() {
        seed_list
    } else {
        let n = seeds.clamp(1, BENCH_SEEDS.len());
        BENCH_SEEDS[..n].to_vec()
    };
    let config = BenchConfig {
        tasks: if tasks.is_empty() { assets.task_order() } else { tasks },
        policies: if policies.is_empty() {
            POLICY_ORDER.iter().map(|s| s.to_string()).collect()
        } else {
            policies
        },
        seeds,
        profile,
        timeout_ticks,
    };
    let report = match run_bench(assets, &config) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let table = emit_report(&report, ReportFormat::Table);
    print!("{table}");
    let failing: Vec<_> = rank_checks(&report).into_iter().filter(|c| !c.holds).collect();
    if failing.is_empty() {
        println!("all rank checks hold");
    } else {
        for check in &failing {
            println!("RANK CHECK FAILED: {}", check.name);
        }
    }
    if let Some(dir) = report_dir {
        if let Err(e) = std::fs::create_dir_all(&dir) {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ABORT);
        }
        let jsonl = emit_report(&report, ReportFormat::JsonLines);
        let json = serde_json::to_string_pretty(&report).unwrap_or_default();
        for (name, content) in [("table.txt", table), ("cells.jsonl", jsonl), ("report.json", json)] {
            if let Err(e) = std::fs::write(dir.join(name), content) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_ABORT);
            }
        }
        println!("reports written to {}", dir.display());
    }
    if failing.is_empty() {
        ExitCode::from(EXIT_OK)
    } else {
        ExitCode::from(EXIT_INCOMPLETE)
    }
}

fn cmd_calibrate(
    assets: &Assets,
    grid_path: Option<PathBuf>,
    out: Option<PathBuf>,
    report_path: Option<PathBuf>,
) -> ExitCode {
    let grid_text = match &grid_path {
        None => agent_core::assets::DEFAULT_CALIBRATION_GRID.to_string(),
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(EXIT_USAGE);
            }
        },
    };
    let grid = match CalibrationGrid::parse(&grid_text) {
        Ok(grid) => grid,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let report = match calibrate(assets, &grid, &BENCH_SEEDS) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ABORT);
        }
    };
    println!(
        "calibration {} after {} candidates; max deviation {:.1} points",
        if report.feasible { "feasible" } else { "INFEASIBLE (best effort)" },
        report.candidates_evaluated,
        report.chosen.max_deviation_decipts as f64 / 10.0
    );
    for (task, mean) in &report.chosen.achieved {
        println!("  {task}: mean completion {:.1}%", *mean as f64 / 10.0);
    }
    if let Some(path) = out {
        if let Err(e) = std::fs::write(&path, toml_profile(&report.chosen.profile)) {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ABORT);
        }
        println!("profile written to {}", path.display());
    }
    if let Some(path) = report_path {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).ok();
        }
        if let Err(e) = std::fs::write(&path, serde_json::to_string_pretty(&report).unwrap_or_default()) {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ABORT);
        }
        println!("report written to {}", path.display());
    }
    if report.feasible {
        ExitCode::from(EXIT_OK)
    } else {
        ExitCode::from(EXIT_INCOMPLETE)
    }
}

fn toml_profile(profile: &FaultProfile) -> String {
    let mut out = String::new();
    out.push_str("# Calibrated fault profile.\n\n");
    out.push_str(&format!("ambiguous_target_prob = {:.2}\n", profile.ambiguous_target_prob));
    out.push_str(&format!("silent_tap_fail_prob = {:.2}\n", profile.silent_tap_fail_prob));
    out.push_str(&format!("ad_injection = {}\n", profile.ad_injection));
    out.push_str(&format!("seed = {}\n", profile.seed));
    out.push_str("\n[async_launch_delay]\n");
    for (app, delay) in &profile.async_launch_delay {
        out.push_str(&format!("{app} = {delay}\n"));
    }
    out
}

fn memory_store_path(assets: &Assets) -> PathBuf {
    match &assets.home {
        Some(home) => home.join("memory/store"),
        None => PathBuf::from("memory/store"),
    }
}

fn cmd_memory(assets: &Assets, action: MemoryAction) -> ExitCode {
    let path = memory_store_path(assets);
    let mut store = match MemoryStore::open(path.clone()) {
        Ok(store) => store,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ABORT);
        }
    };
    match action {
        MemoryAction::Ls => {
            for entry in store.entries() {
                let content = match &entry.content {
                    MemoryContent::Knowledge(k) => format!("knowledge: {k}"),
                    MemoryContent::Pattern(verbs) => format!("pattern: {}", verbs.join(" -> ")),
                    MemoryContent::Preference { verb, demote } => {
                        format!("preference: demote {} for {verb}", demote.name())
                    }
                };
                println!(
                    "[{}] ({}) {} — {} (uses {})",
                    entry.scope, entry.created_at, entry.key, content, entry.uses
                );
            }
            println!("{} entries in {}", store.len(), path.display());
        }
        MemoryAction::Put { key, value, scope } => {
            let entry = MemoryEntry {
                key,
                kind: MemoryKind::Knowledge,
                scope,
                content: MemoryContent::Knowledge(value),
                uses: 0,
                created_at: 0,
            };
            if let Err(e) = store.put(entry) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_ABORT);
            }
            println!("stored ({} entries)", store.len());
        }
        MemoryAction::Clear => {
            if let Err(e) = store.clear() {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_ABORT);
            }
            println!("memory cleared");
        }
    }
    ExitCode::from(EXIT_OK)
}

fn cmd_trace(path: &PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let report: TaskReport = match serde_json::from_str(&text) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: not a task report: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    for event in &report.trace.events {
        print_trace_line(event);
    }
    println!(
        "completion {}% | e2e {} ticks | status {:?} | obs {} bytes | ui {} bytes",
        report.completion_pct, report.e2e_ticks, report.status, report.observation_bytes, report.ui_bytes
    );
    ExitCode::from(EXIT_OK)
}

fn cmd_serve(assets: Assets, port: u16) -> ExitCode {
    match agent_gateway::Gateway::serve(&format!("127.0.0.1:{port}"), assets) {
        Ok(gateway) => {
            println!("gateway listening on {}", gateway.addr());
            println!("clients read AGENT_GATEWAY_ADDR={}", gateway.addr());
            loop {
                std::thread::sleep(std::time::Duration::from_secs(3600));
            }
        }
        Err(e) => {
            eprintln!("error: bind failed: {e}");
            ExitCode::from(EXIT_ABORT)
        }
    }
}
