//! Scripted simulator flights logged through the lockstep logger.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use fpvgl_core::analysis::{
    analyze_session, course_reference_geodetic, LocalTrack, ManeuverSegment, TaskMetrics, TrackOptions,
};
use fpvgl_core::logger::{
    read_session, FlightSession, LockstepLogger, RealtimeLogger, Session, SessionManifest, SessionSource,
    SyntheticFrames, SystemClock, TelemetrySnapshot,
};
use fpvgl_core::sim::{
    run_sim, Pacing, RunOptions, Scenario, ScriptedPilot, SimConfig, SimRunSummary, SinkError, Task, Tick,
};
use fpvgl_core::Latest;

pub const LOG_RATE_HZ: f64 = 10.0;

pub struct Flight {
    pub summary: SimRunSummary,
    pub session: FlightSession,
    pub scenario: Scenario,
    pub config: SimConfig,
}

pub fn config(sigma: f64, seed: u64) -> SimConfig {
    SimConfig {
        gps_noise_sigma: sigma,
        seed,
        ..SimConfig::default()
    }
}

pub fn fly(task: Task, sigma: f64, seed: u64, root: &Path) -> Flight {
    let config = config(sigma, seed);
    let scenario = Scenario::default_for(task);
    let mut pilot = ScriptedPilot::new(&scenario, &config);
    let start = Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap();
    let mut logger = LockstepLogger::new(root, start, config.tick_rate, LOG_RATE_HZ).unwrap();
    let summary = run_sim(
        &config,
        &scenario,
        &mut pilot,
        &mut [&mut logger],
        &RunOptions::default(),
    )
    .unwrap();
    assert!(summary.completed, "{task} did not complete: {summary:?}");
    assert!(summary.sink_error.is_none(), "{:?}", summary.sink_error);
    let session = read_session(logger.dir()).unwrap();
    Flight {
        summary,
        session,
        scenario,
        config,
    }
}

impl Flight {
    pub fn analyze(&self) -> (LocalTrack, ManeuverSegment, TaskMetrics) {
        let reference = course_reference_geodetic(&self.scenario, &self.config.origin).unwrap();
        analyze_session(
            &self.session,
            self.scenario.task,
            &reference,
            &TrackOptions::default(),
            "sim",
        )
        .unwrap()
    }
}

/// Runs Task 1 in real time with a [`RealtimeLogger`] sampling the live
/// telemetry at `rate_hz` for `seconds` of wall time.
pub fn realtime_session(root: &Path, seconds: f64, rate_hz: f64) -> (SessionManifest, FlightSession) {
    let config = config(0.0, 1);
    let scenario = Scenario::default_for(Task::Task1);
    let cell: Latest<TelemetrySnapshot> = Latest::new();
    cell.set(TelemetrySnapshot::default());
    let stop = Arc::new(AtomicBool::new(false));
    let sim = {
        let (cell, stop, config, scenario) = (cell.clone(), stop.clone(), config.clone(), scenario.clone());
        std::thread::spawn(move || {
            let mut pilot = ScriptedPilot::new(&scenario, &config);
            let mut snapshot = TelemetrySnapshot::default();
            let mut feed = |tick: &Tick<'_>| -> Result<(), SinkError> {
                for m in tick.messages {
                    snapshot.apply(m);
                }
                cell.set(snapshot.clone());
                Ok(())
            };
            let options = RunOptions {
                pacing: Pacing::RealTime,
                stop: Some(stop),
                ..RunOptions::default()
            };
            run_sim(&config, &scenario, &mut pilot, &mut [&mut feed], &options).unwrap()
        })
    };
    let session = Session::open(root, SessionSource::Sim, Box::new(SystemClock)).unwrap();
    let frames = Box::new(SyntheticFrames {
        tick_rate: config.tick_rate,
    });
    let logger = RealtimeLogger::spawn(session, cell, frames, rate_hz);
    std::thread::sleep(Duration::from_secs_f64(seconds));
    let dir = logger.dir().to_path_buf();
    let manifest = logger.stop().unwrap();
    stop.store(true, Ordering::Relaxed);
    sim.join().unwrap();
    (manifest, read_session(&dir).unwrap())
}
