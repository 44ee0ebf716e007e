use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fpvgl"));
    c.env_remove("FPVGL_ROOT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json_stdout(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    serde_json::from_str(text.lines().last().expect("a JSON line")).unwrap()
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn wait_listening(port: u16) {
    let deadline = Instant::now() + Duration::from_secs(20);
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(Instant::now() < deadline, "port {port} never opened");
        std::thread::sleep(Duration::from_millis(20));
    }
}

struct Reap(Child);

impl Drop for Reap {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(2));
    let all = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(all.contains("Usage"), "{all}");
}

#[test]
fn bad_task_is_a_single_line_usage_error() {
    let out = run(&[
        "analyze",
        "--task",
        "5",
        "--session",
        "x",
        "--ref-lat",
        "0",
        "--ref-lon",
        "1",
        "--out",
        "y",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    let v: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"]["kind"], "usage");
    assert!(v["error"]["message"].as_str().unwrap().contains("task"));
}

#[test]
fn unknown_flag_exits_2() {
    let out = run(&["sim", "--task", "1", "--warp-drive"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = run(&[
        "analyze",
        "--task",
        "1",
        "--session",
        missing.to_str().unwrap(),
        "--ref-lat",
        "43",
        "--ref-lon",
        "-78",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"]["kind"], "runtime");
}

fn sim_session(root: &Path, task: &str, extra: &[&str]) -> Value {
    let mut args = vec![
        "sim",
        "--task",
        task,
        "--pilot",
        "scripted",
        "--out",
        root.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    json_stdout(&run(&args))
}

#[test]
fn simulate_analyze_export() {
    let dir = tempfile::tempdir().unwrap();
    let sim = sim_session(&dir.path().join("sessions"), "1", &["--seed", "7"]);
    assert_eq!(sim["completed"], true);
    let session = sim["session"].as_str().unwrap();
    let (lat, lon) = (
        sim["reference"]["lat"].to_string(),
        sim["reference"]["lon"].to_string(),
    );

    let out = dir.path().join("report");
    let a = json_stdout(&run(&[
        "analyze",
        "--session",
        session,
        "--task",
        "1",
        "--ref-lat",
        &lat,
        "--ref-lon",
        &lon,
        "--out",
        out.to_str().unwrap(),
    ]));
    let m = &a["metrics"];
    assert!(m["hover_distance_to_origin_m"].as_f64().unwrap() < 0.05, "{m}");
    assert!(m["height_deviation_m"].as_f64().unwrap() < 0.05, "{m}");
    assert_eq!(m["platform_tag"], "Digital twin");
    let report = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.contains("Hovering distance to origin (m)"));
    for f in [
        "t_x.csv",
        "t_y.csv",
        "t_z.csv",
        "x_y.csv",
        "x_y_z.csv",
        "metrics.json",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let scenario = dir.path().join("task1.toml");
    json_stdout(&run(&[
        "scenario",
        "--task",
        "1",
        "--out",
        scenario.to_str().unwrap(),
    ]));
    let dataset = dir.path().join("data").join("episode.json");
    let e = json_stdout(&run(&[
        "export",
        "--session",
        session,
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        dataset.to_str().unwrap(),
        "--channels",
        "roll=1,pitch=2,throttle=3,yaw=4",
    ]));
    assert!(e["steps"].as_u64().unwrap() > 100);
    assert!(dataset.is_file());

    let bad = run(&[
        "export",
        "--session",
        session,
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        dataset.to_str().unwrap(),
        "--channels",
        "roll=1,pitch=1",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

fn telemetry_columns(session: &str) -> Vec<String> {
    let csv = std::fs::read_to_string(Path::new(session).join("flight.csv")).unwrap();
    csv.lines()
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            cells[1..cells.len() - 2].join(",")
        })
        .collect()
}

#[test]
fn same_seed_same_session_telemetry() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--seed", "3", "--gps-noise", "0.5"];
    let a = sim_session(&dir.path().join("a"), "2", &args);
    let b = sim_session(&dir.path().join("b"), "2", &args);
    let c = sim_session(&dir.path().join("c"), "2", &["--seed", "4", "--gps-noise", "0.5"]);
    let (a, b, c) = (
        telemetry_columns(a["session"].as_str().unwrap()),
        telemetry_columns(b["session"].as_str().unwrap()),
        telemetry_columns(c["session"].as_str().unwrap()),
    );
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sim_relay_log_chain() {
    let dir = tempfile::tempdir().unwrap();
    let (sim_port, relay_port) = (free_port(), free_port());
    let sim_addr = format!("127.0.0.1:{sim_port}");
    let relay_addr = format!("127.0.0.1:{relay_port}");
    let sim = Reap(
        bin()
            .args([
                "sim",
                "--task",
                "1",
                "--no-log",
                "--duration",
                "8",
                "--listen",
                &sim_addr,
            ])
            .stdout(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let relay = Reap(
        bin()
            .args(["relay", "--source", &sim_addr, "--listen", &relay_addr])
            .stdout(Stdio::piped())
            .spawn()
            .unwrap(),
    );
    wait_listening(relay_port);
    let root = dir.path().join("logs");
    let log = bin()
        .args([
            "log",
            "--from",
            &relay_addr,
            "--out",
            root.to_str().unwrap(),
            "--rate",
            "10",
            "--duration",
            "3",
        ])
        .output()
        .unwrap();
    let v = json_stdout(&log);
    let rows = v["rows"].as_u64().unwrap();
    assert!((28..=31).contains(&rows), "{v}");
    assert!(v["messages"].as_u64().unwrap() > 300, "{v}");
    let session = v["session"].as_str().unwrap();
    let csv = std::fs::read_to_string(Path::new(session).join("flight.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    assert!(!last.split(',').nth(2).unwrap().contains("nan"), "{last}");
    drop(relay);
    drop(sim);
}
