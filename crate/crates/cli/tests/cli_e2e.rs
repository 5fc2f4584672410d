//! Scripted end-to-end runs of every CLI path, with committed expected
//! output for the chat session and total exit-code coverage.

use std::io::Write;
use std::process::{Command, Stdio};

fn agent() -> Command {
    Command::new(env!("CARGO_BIN_EXE_agent"))
}

#[test]
fn run_settings_cm_exits_zero_with_deterministic_trace() {
    let out = agent()
        .args(["run", "--task", "settings_dark", "--policy", "cm", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("via deterministic"));
    assert!(!stdout.contains("via ui_agent"));
    assert!(stdout.contains("e2e 21 ticks"));
}

#[test]
fn run_youtube_comment_without_ui_agent_times_out_with_exit_2() {
    let out = agent()
        .args(["run", "--task", "yt_comment", "--policy", "no-ui-agent", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("e2e 600 ticks"), "{stdout}");
}

#[test]
fn missing_task_id_is_a_usage_error() {
    let out = agent().args(["run", "--policy", "cm"]).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--task"), "{stderr}");
}

#[test]
fn unknown_task_and_unknown_flag_are_usage_errors() {
    let out = agent().args(["run", "--task", "no_such_task"]).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
    let out = agent().args(["run", "--task", "settings_dark", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn partial_completion_exits_one() {
    // The ui-only baseline cannot toggle settings: done, but incomplete.
    let out = agent()
        .args(["run", "--task", "settings_dark", "--policy", "ui-only", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn scripted_chat_session_matches_committed_transcript() {
    let mut child = agent()
        .args(["chat", "--policy", "cm", "--seed", "1"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .as_mut()
        .unwrap()
        .write_all(b"Turn on the dark theme for the system\n:trace\nnonsense input here\n:quit\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let golden = include_str!("golden/chat_session.txt");
    assert_eq!(stdout, golden);
}

#[test]
fn chat_runs_three_instructions_deterministically() {
    let script = b"settings_dark\nchrome_gold\nyt_play\n:quit\n";
    let run = || {
        let mut child = agent()
            .args(["chat", "--policy", "cm", "--seed", "5"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.as_mut().unwrap().write_all(script).unwrap();
        let out = child.wait_with_output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        String::from_utf8_lossy(&out.stdout).to_string()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    assert_eq!(a.matches("completion 100%").count(), 3, "{a}");
}

#[test]
fn bench_subcommand_prints_table_and_writes_reports() {
    let dir = std::env::temp_dir().join(format!("agent_bench_{}", std::process::id()));
    let out = agent()
        .args([
            "bench",
            "--tasks",
            "settings_dark",
            "--seed-list",
            "1,2,3",
            "--report",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("settings_dark"), "{stdout}");
    assert!(dir.join("table.txt").exists());
    assert!(dir.join("cells.jsonl").exists());
    assert!(dir.join("report.json").exists());
    let jsonl = std::fs::read_to_string(dir.join("cells.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 3 * 3, "1 task x 3 policies x 3 seeds");
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn trace_subcommand_replays_a_saved_report() {
    let path = std::env::temp_dir().join(format!("agent_report_{}.json", std::process::id()));
    let out = agent()
        .args([
            "run",
            "--task",
            "chrome_gold",
            "--policy",
            "cm",
            "--seed",
            "2",
            "--report",
            path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = agent().args(["trace", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("web_search"), "{stdout}");
    assert!(stdout.contains("obs"), "{stdout}");
    std::fs::remove_file(path).ok();
}

#[test]
fn memory_commands_round_trip_in_agent_home() {
    let home = std::env::temp_dir().join(format!("agent_home_{}", std::process::id()));
    for sub in ["catalog", "registry", "profiles", "tasks", "memory"] {
        std::fs::create_dir_all(home.join(sub)).unwrap();
    }
    std::fs::write(home.join("catalog/default_phone.toml"), include_str!("../../../catalog/default_phone.toml")).unwrap();
    std::fs::write(home.join("registry/default.toml"), include_str!("../../../registry/default.toml")).unwrap();
    std::fs::write(home.join("profiles/default.toml"), include_str!("../../../profiles/default.toml")).unwrap();
    std::fs::write(home.join("tasks/settings_dark.toml"), include_str!("../../../tasks/settings_dark.toml")).unwrap();
    std::fs::write(home.join("memory/store"), "").unwrap();
    let with_home = |args: &[&str]| {
        let out = agent().env("AGENT_HOME", &home).args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8_lossy(&out.stdout).to_string()
    };
    let listed = with_home(&["memory", "ls"]);
    assert!(listed.contains("0 entries"));
    with_home(&["memory", "put", "wifi toggle api", "api_available(set_setting)"]);
    let listed = with_home(&["memory", "ls"]);
    assert!(listed.contains("wifi toggle api"), "{listed}");
    assert!(listed.contains("1 entries"));
    with_home(&["memory", "clear"]);
    let listed = with_home(&["memory", "ls"]);
    assert!(listed.contains("0 entries"));
    // The home-scoped settings task still runs.
    let out = agent()
        .env("AGENT_HOME", &home)
        .args(["run", "--task", "settings_dark"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    std::fs::remove_dir_all(home).ok();
}

#[test]
fn custom_fault_profile_flag_is_honored() {
    let path = std::env::temp_dir().join(format!("agent_profile_{}.toml", std::process::id()));
    std::fs::write(&path, "silent_tap_fail_prob = 1.0\nseed = 1\n").unwrap();
    let out = agent()
        .args([
            "run",
            "--task",
            "multi_note",
            "--policy",
            "ui-only",
            "--fault-profile",
            path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    // Believed done, but the note never exists: incomplete.
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_file(path).ok();
}

#[test]
fn serve_subcommand_accepts_gateway_clients() {
    use std::io::{BufRead, BufReader};
    // Pick a free port first, then hand it to the server.
    let probe = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = probe.local_addr().unwrap().port();
    drop(probe);
    let mut child = agent()
        .args(["serve", "--port", &port.to_string()])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut first_line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut first_line).unwrap();
    assert!(first_line.contains("listening"), "{first_line}");
    // Gateway handshake over the advertised port.
    let addr: std::net::SocketAddr = format!("127.0.0.1:{port}").parse().unwrap();
    let mut ok = false;
    for _ in 0..50 {
        if let Ok(mut stream) = std::net::TcpStream::connect(addr) {
            stream
                .write_all(b"{\"id\":1,\"kind\":\"hello\",\"payload\":{\"client\":\"e2e\"}}\n")
                .unwrap();
            let mut reply = String::new();
            BufReader::new(stream).read_line(&mut reply).unwrap();
            assert!(reply.contains("hello"), "{reply}");
            ok = true;
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(20));
    }
    child.kill().ok();
    assert!(ok, "could not reach the served gateway");
}
