use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::scenario::Scenario;
use super::telemetry::Simulator;
use super::{ConfigError, Pilot, SimConfig, SimState, StickCommand};
use crate::geodesy::Enu;
use crate::mavlink::{Encoder, Message};

pub type SinkError = Box<dyn std::error::Error + Send + Sync>;

/// System and component ids the simulated vehicle uses on the wire.
pub const SIM_SYS_ID: u8 = 1;
pub const SIM_COMP_ID: u8 = 1;

/// Everything produced by one simulation tick.
#[derive(Debug, Clone, Copy)]
pub struct Tick<'a> {
    /// Zero-based tick index.
    pub index: u64,
    pub state: &'a SimState,
    pub command: StickCommand,
    pub messages: &'a [Message],
    /// The messages encoded as consecutive MAVLink frames.
    pub bytes: &'a [u8],
}

pub trait TelemetrySink {
    fn on_tick(&mut self, tick: &Tick<'_>) -> Result<(), SinkError>;

    /// Called once after the last tick, including after a sink failure.
    fn finish(&mut self) -> Result<(), SinkError> {
        Ok(())
    }
}

/// Collects the raw telemetry byte stream.
impl TelemetrySink for Vec<u8> {
    fn on_tick(&mut self, tick: &Tick<'_>) -> Result<(), SinkError> {
        self.extend_from_slice(tick.bytes);
        Ok(())
    }
}

impl<F: FnMut(&Tick<'_>) -> Result<(), SinkError>> TelemetrySink for F {
    fn on_tick(&mut self, tick: &Tick<'_>) -> Result<(), SinkError> {
        self(tick)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// Sleep so ticks line up with the wall clock.
    RealTime,
    AsFastAsPossible,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Seconds on the ground, disarmed, before arming.
    pub preflight_s: f64,
    /// Hard stop in simulated seconds.
    pub max_duration_s: f64,
    pub pacing: Pacing,
    /// Set from another thread to end the run early.
    pub stop: Option<Arc<AtomicBool>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            preflight_s: 3.0,
            max_duration_s: 600.0,
            pacing: Pacing::AsFastAsPossible,
            stop: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimRunSummary {
    pub ticks: u64,
    pub sim_time: f64,
    pub wall_time: Duration,
    pub final_state: SimState,
    /// The pilot finished and the vehicle landed.
    pub completed: bool,
    /// The first sink failure, which ended the run.
    pub sink_error: Option<String>,
}

/// Runs the fixed-step loop until the pilot finishes and the vehicle is
/// back on the ground, the time limit passes, the stop flag is raised or a
/// sink fails.
///
/// Each tick reads the pilot's command, steps the vehicle, synthesizes
/// telemetry and hands it to every sink in order. The scenario origin, when
/// present, overrides `config.origin`.
pub fn run_sim(
    config: &SimConfig,
    scenario: &Scenario,
    pilot: &mut dyn Pilot,
    sinks: &mut [&mut dyn TelemetrySink],
    options: &RunOptions,
) -> Result<SimRunSummary, ConfigError> {
    let mut config = config.clone();
    if let Some(origin) = scenario.origin {
        config.origin = origin;
    }
    let mut sim = Simulator::new(config, Enu::new(scenario.start[0], scenario.start[1], 0.0), 0.0)?;
    let dt = sim.config().dt();
    let preflight_ticks = (options.preflight_s.max(0.0) / dt).round() as u64;
    let max_ticks = (options.max_duration_s / dt).round() as u64;
    let mut encoder = Encoder::new(SIM_SYS_ID, SIM_COMP_ID);
    let mut bytes = Vec::with_capacity(512);
    let started = Instant::now();
    let mut sink_error = None;
    let mut completed = false;

    while sim.ticks() < max_ticks {
        if options.stop.as_ref().is_some_and(|s| s.load(Ordering::Relaxed)) {
            break;
        }
        let index = sim.ticks();
        if index == preflight_ticks && !sim.state().armed {
            sim.state_mut().arm();
        }
        let cmd = pilot.command(sim.state());
        if pilot.finished() && sim.state().armed && sim.state().on_ground() {
            sim.state_mut().disarm();
            completed = true;
            break;
        }
        let messages = sim.tick(cmd);
        bytes.clear();
        for m in &messages {
            encoder.encode_into(m, &mut bytes);
        }
        let tick = Tick {
            index,
            state: sim.state(),
            command: sim.command(),
            messages: &messages,
            bytes: &bytes,
        };
        for sink in sinks.iter_mut() {
            if let Err(e) = sink.on_tick(&tick) {
                sink_error = Some(e.to_string());
                break;
            }
        }
        if sink_error.is_some() {
            break;
        }
        if options.pacing == Pacing::RealTime {
            let due = started + Duration::from_secs_f64((index + 1) as f64 * dt);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
    }
    for sink in sinks.iter_mut() {
        if let Err(e) = sink.finish() {
            sink_error.get_or_insert(e.to_string());
        }
    }
    Ok(SimRunSummary {
        ticks: sim.ticks(),
        sim_time: sim.state().t,
        wall_time: started.elapsed(),
        final_state: *sim.state(),
        completed,
        sink_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{HoldPilot, LivePilot, ScriptedPilot, Task};

    #[test]
    fn ten_seconds_is_five_hundred_ticks() {
        let cfg = SimConfig::default();
        let sc = Scenario::default_for(Task::Task1);
        let mut pilot = ScriptedPilot::new(&sc, &cfg);
        let mut gpi = 0usize;
        let mut count = |t: &Tick<'_>| {
            gpi += t
                .messages
                .iter()
                .filter(|m| matches!(m, Message::GlobalPositionInt(_)))
                .count();
            Ok(())
        };
        let opts = RunOptions {
            max_duration_s: 10.0,
            ..Default::default()
        };
        let summary = run_sim(&cfg, &sc, &mut pilot, &mut [&mut count], &opts).unwrap();
        assert_eq!(summary.ticks, 500);
        assert_eq!(gpi, 500);
        assert!(!summary.completed);
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SimConfig {
            gps_noise_sigma: 0.5,
            seed: 9,
            ..Default::default()
        };
        let sc = Scenario::default_for(Task::Task2);
        let run = || {
            let mut out = Vec::new();
            let mut pilot = ScriptedPilot::new(&sc, &cfg);
            run_sim(&cfg, &sc, &mut pilot, &mut [&mut out], &RunOptions::default()).unwrap();
            out
        };
        let a = run();
        assert!(!a.is_empty());
        assert_eq!(a, run());
        let other = SimConfig {
            seed: 10,
            ..cfg.clone()
        };
        let mut b = Vec::new();
        run_sim(
            &other,
            &sc,
            &mut ScriptedPilot::new(&sc, &other),
            &mut [&mut b],
            &RunOptions::default(),
        )
        .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn scripted_run_completes_and_disarms() {
        let cfg = SimConfig::default();
        let sc = Scenario::default_for(Task::Task2);
        let s = run_sim(
            &cfg,
            &sc,
            &mut ScriptedPilot::new(&sc, &cfg),
            &mut [],
            &RunOptions::default(),
        )
        .unwrap();
        assert!(s.completed);
        assert!(!s.final_state.armed);
        assert!(s.sink_error.is_none());
    }

    #[test]
    fn silent_live_pilot_holds() {
        let cfg = SimConfig::default();
        let sc = Scenario::default_for(Task::Task1);
        let mut pilot = LivePilot::default();
        let opts = RunOptions {
            max_duration_s: 20.0,
            ..Default::default()
        };
        let s = run_sim(&cfg, &sc, &mut pilot, &mut [], &opts).unwrap();
        assert_eq!(s.final_state.position, Enu::default());
        assert!(s.final_state.armed);
    }

    #[test]
    fn sink_failure_ends_run_with_partial_summary() {
        let cfg = SimConfig::default();
        let sc = Scenario::default_for(Task::Task1);
        let mut failing = |t: &Tick<'_>| {
            if t.index == 41 {
                Err("disk full".into())
            } else {
                Ok(())
            }
        };
        let s = run_sim(
            &cfg,
            &sc,
            &mut HoldPilot,
            &mut [&mut failing],
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(s.ticks, 42);
        assert_eq!(s.sink_error.as_deref(), Some("disk full"));
    }

    #[test]
    fn stop_flag_ends_run() {
        let cfg = SimConfig::default();
        let sc = Scenario::default_for(Task::Task1);
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let mut stopper = move |t: &Tick<'_>| {
            if t.index == 9 {
                flag.store(true, Ordering::Relaxed);
            }
            Ok(())
        };
        let opts = RunOptions {
            stop: Some(stop),
            ..Default::default()
        };
        let s = run_sim(&cfg, &sc, &mut HoldPilot, &mut [&mut stopper], &opts).unwrap();
        assert_eq!(s.ticks, 10);
    }
}
