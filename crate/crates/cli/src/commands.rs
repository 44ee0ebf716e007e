use std::fs;
use std::io::Read;
use std::net::TcpStream;
use std::path::Path;
use std::sync::atomic::Ordering;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use chrono::Utc;
use fpvgl_core::analysis::{
    build_track, compute_metrics, course_reference_geodetic, extract_segment, render_tables, write_series,
    TrackOptions, TrailBounds,
};
use fpvgl_core::export::{export_episode, write_dataset, ChannelMap, ExportOptions};
use fpvgl_core::geodesy::{enu_to_geodetic, Ellipsoid, Enu, Geodetic};
use fpvgl_core::logger::{
    read_session, LockstepLogger, RealtimeLogger, Session, SessionSource, SyntheticFrames, SystemClock,
    TelemetrySnapshot, DEFAULT_ARM_THRESHOLD_US,
};
use fpvgl_core::mavlink::Message;
use fpvgl_core::relay::{serve, subscribe, FrameServer, RelayConfig};
use fpvgl_core::sim::{
    run_sim, stick_from_rc, LivePilot, Pacing, Pilot, RunOptions, Scenario, ScriptedPilot, SimConfig, Task,
    TelemetrySink,
};
use fpvgl_core::Latest;
use serde_json::json;

use crate::{
    default_root, interrupted, AnalyzeArgs, BridgeArgs, ExportArgs, LogArgs, PilotKind, RelayArgs,
    ScenarioArgs, SimArgs, SourceKind, Usage,
};

fn task(n: u8) -> Task {
    Task::from_number(n).expect("validated by the parser")
}

fn print_json(v: serde_json::Value) {
    println!("{v}");
}

pub fn sim(a: SimArgs, seed: u64) -> Result<()> {
    let task = task(a.task);
    let scenario = match &a.scenario {
        Some(p) => Scenario::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Scenario::default_for(task),
    };
    if scenario.task != task {
        return Err(Usage(format!(
            "--task {} does not match the scenario's {}",
            a.task, scenario.task
        ))
        .into());
    }
    let config = SimConfig {
        gps_noise_sigma: a.gps_noise,
        seed,
        ..SimConfig::default()
    };
    config.validate().map_err(|e| Usage(e.to_string()))?;

    let cell = Latest::new();
    let mut pilot: Box<dyn Pilot> = match a.pilot {
        PilotKind::Scripted => Box::new(ScriptedPilot::new(&scenario, &config)),
        PilotKind::Live => Box::new(LivePilot::new(cell.clone())),
    };
    let mut server = match a.listen {
        Some(addr) => {
            let live = cell.clone();
            let s = FrameServer::bind(addr, RelayConfig::from_env(), move |m| {
                if let Message::RcChannels(rc) = m {
                    live.set(stick_from_rc(&rc.chan));
                }
            })
            .with_context(|| format!("binding {addr}"))?;
            log::info!("serving MAVLink on {}", s.local_addr());
            Some(s)
        }
        None => None,
    };
    let mut logger = if a.no_log {
        None
    } else {
        let root = default_root(a.out);
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Some(LockstepLogger::new(
            &root,
            Utc::now(),
            config.tick_rate,
            a.log_rate,
        )?)
    };

    let realtime = a.realtime || a.listen.is_some() || a.pilot == PilotKind::Live;
    let options = RunOptions {
        max_duration_s: a.duration,
        pacing: if realtime {
            Pacing::RealTime
        } else {
            Pacing::AsFastAsPossible
        },
        stop: Some(interrupted()),
        ..RunOptions::default()
    };
    let mut sinks: Vec<&mut dyn TelemetrySink> = Vec::new();
    if let Some(l) = logger.as_mut() {
        sinks.push(l);
    }
    if let Some(s) = server.as_mut() {
        sinks.push(s);
    }
    let summary = run_sim(&config, &scenario, pilot.as_mut(), &mut sinks, &options)
        .map_err(|e| Usage(e.to_string()))?;
    if let Some(e) = &summary.sink_error {
        bail!("simulation stopped early: {e}");
    }
    let reference = course_reference_geodetic(&scenario, &config.origin)?;
    print_json(json!({
        "task": scenario.task.number(),
        "session": logger.as_ref().map(|l| l.dir().display().to_string()),
        "rows": logger.as_ref().and_then(|l| l.manifest()).map(|m| m.row_count),
        "ticks": summary.ticks,
        "sim_time_s": summary.sim_time,
        "completed": summary.completed,
        "reference": { "lat": reference.lat, "lon": reference.lon },
    }));
    Ok(())
}

fn open_source(spec: &str) -> Result<Box<dyn Read + Send>> {
    if spec == "-" {
        return Ok(Box::new(std::io::stdin()));
    }
    if Path::new(spec).exists() {
        return Ok(Box::new(
            fs::File::open(spec).with_context(|| format!("opening {spec}"))?,
        ));
    }
    if spec.contains(':') {
        let stream = connect_with_retry(spec, Duration::from_secs(10))?;
        return Ok(Box::new(stream));
    }
    Err(Usage(format!(
        "source {spec:?} is neither an existing path nor host:port"
    ))
    .into())
}

fn connect_with_retry(addr: &str, patience: Duration) -> Result<TcpStream> {
    let deadline = Instant::now() + patience;
    let mut wait = Duration::from_millis(50);
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() >= deadline => {
                return Err(e).with_context(|| format!("connecting to {addr}"))
            }
            Err(e) => {
                log::info!("{addr} not reachable yet ({e}); retrying");
                std::thread::sleep(wait);
                wait = (wait * 2).min(Duration::from_secs(1));
            }
        }
    }
}

pub fn relay(a: RelayArgs) -> Result<()> {
    let source = open_source(&a.source)?;
    let server =
        serve(source, a.listen, RelayConfig::from_env()).with_context(|| format!("binding {}", a.listen))?;
    log::info!("relaying {} on {}", a.source, server.local_addr());
    let stop = interrupted();
    while !stop.load(Ordering::Relaxed) && !server.is_finished() {
        std::thread::sleep(Duration::from_millis(50));
    }
    let frames = server.stats().frames_in.load(Ordering::Relaxed);
    let errors = server.stats().frame_errors.load(Ordering::Relaxed);
    if stop.load(Ordering::Relaxed) {
        server.shutdown();
    } else {
        server.wait().context("reading source")?;
    }
    print_json(json!({ "frames_in": frames, "frame_errors": errors }));
    Ok(())
}

pub fn log(a: LogArgs) -> Result<()> {
    let root = default_root(a.out);
    fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
    let source = match a.source {
        SourceKind::Physical => SessionSource::Physical,
        SourceKind::Sim => SessionSource::Sim,
    };
    let cell: Latest<TelemetrySnapshot> = Latest::new();
    cell.set(TelemetrySnapshot::default());
    let feed = cell.clone();
    let mut snapshot = TelemetrySnapshot::default();
    let addr = a.from.clone();
    connect_with_retry(&addr, Duration::from_secs(10))?;
    let client = subscribe(addr.as_str(), move |_, m| {
        snapshot.apply(m);
        feed.set(snapshot.clone());
    })
    .with_context(|| format!("subscribing to {addr}"))?;

    let session = Session::open(&root, source, Box::new(SystemClock))?;
    let frames = Box::new(SyntheticFrames {
        tick_rate: a.tick_rate,
    });
    let logger = RealtimeLogger::spawn(session, cell, frames, a.rate);
    log::info!("logging to {}", logger.dir().display());

    let stop = interrupted();
    let started = Instant::now();
    let deadline = a.duration.map(|d| started + Duration::from_secs_f64(d));
    while !stop.load(Ordering::Relaxed) && !client.is_closed() {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    let dir = logger.dir().to_path_buf();
    let manifest = logger.stop()?;
    let received = client.received();
    client.close();
    print_json(json!({
        "session": dir.display().to_string(),
        "rows": manifest.row_count,
        "messages": received,
    }));
    Ok(())
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let task = task(a.task);
    let reference = Geodetic::new(a.ref_lat, a.ref_lon, 0.0).map_err(|e| Usage(e.to_string()))?;
    let session = read_session(&a.session).with_context(|| format!("reading {}", a.session.display()))?;
    let options = TrackOptions {
        altitude_mode: a.alt_mode.into(),
        origin_mode: a.origin.into(),
        arm_threshold_us: DEFAULT_ARM_THRESHOLD_US,
    };
    let platform = a.platform.unwrap_or_else(|| {
        match session.manifest.source {
            SessionSource::Sim => "Digital twin",
            SessionSource::Physical => "Physical quadcopter",
        }
        .to_string()
    });
    let track = build_track(&session, &reference, &options)?;
    let segment = extract_segment(&track, task)?;
    let metrics = compute_metrics(&track, &segment, task, TrailBounds::whole(&track), &platform)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_series(&track, &a.out)?;
    fs::write(
        a.out.join("report.md"),
        render_tables(std::slice::from_ref(&metrics)),
    )?;
    let record = json!({
        "session": session.manifest.session_id,
        "metrics": metrics,
        "segment": segment,
        "origin": { "lat": track.origin.lat, "lon": track.origin.lon, "alt": track.origin.alt },
        "alignment_angle_rad": track.alignment_angle,
    });
    fs::write(a.out.join("metrics.json"), serde_json::to_vec_pretty(&record)?)?;
    print_json(record);
    Ok(())
}

pub fn export(a: ExportArgs) -> Result<()> {
    let channel_map: ChannelMap = a
        .channels
        .parse()
        .map_err(|e: fpvgl_core::export::ExportError| Usage(e.to_string()))?;
    let scenario =
        Scenario::load(&a.scenario).with_context(|| format!("loading {}", a.scenario.display()))?;
    let session = read_session(&a.session).with_context(|| format!("reading {}", a.session.display()))?;
    // Without an explicit origin the first fix is taken to be the
    // scenario's start point.
    let origin = match scenario.origin {
        Some(o) => o,
        None => {
            let r = session
                .rows
                .iter()
                .find(|r| r.lat_1e7.is_some() && r.lon_1e7.is_some() && r.alt_mm.is_some())
                .context("session has no GPS fix")?;
            let first = Geodetic::from_scaled(r.lat_1e7.unwrap(), r.lon_1e7.unwrap(), r.alt_mm.unwrap());
            let back = Enu::new(-scenario.start[0], -scenario.start[1], 0.0);
            enu_to_geodetic(&back, &first, &Ellipsoid::WGS84)?
        }
    };
    let dataset_dir = match a.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    fs::create_dir_all(&dataset_dir)?;
    let options = ExportOptions {
        channel_map,
        arm_threshold_us: DEFAULT_ARM_THRESHOLD_US,
    };
    let ds = export_episode(&session, &scenario, &origin, &dataset_dir, &options)?;
    write_dataset(&a.out, &ds)?;
    print_json(json!({
        "dataset": a.out.display().to_string(),
        "steps": ds.steps.len(),
        "schema_version": ds.schema_version,
    }));
    Ok(())
}

pub fn bridge(a: BridgeArgs) -> Result<()> {
    let bridge = crate::bridge::Bridge::start(crate::bridge::BridgeConfig {
        relay: a.relay,
        listen: a.listen,
        sim: a.sim,
        frame_rate_hz: a.frame_rate,
    })?;
    log::info!("console bridge on ws://{}", bridge.local_addr());
    let stop = interrupted();
    while !stop.load(Ordering::Relaxed) {
        std::thread::sleep(Duration::from_millis(50));
    }
    bridge.shutdown();
    Ok(())
}

pub fn scenario(a: ScenarioArgs) -> Result<()> {
    let s = Scenario::default_for(task(a.task));
    s.save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    print_json(json!({ "scenario": a.out.display().to_string(), "task": a.task }));
    Ok(())
}
