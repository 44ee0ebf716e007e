//! In-browser playground for the flight model and trail analysis.
//!
//! Three operations are exported to JavaScript, each returning a JSON
//! string:
//!
//! * [`fly_task`] flies a course task with the scripted pilot, pushes the
//!   telemetry through the MAVLink codec and returns the aligned trail with
//!   its metrics.
//! * [`step_response`] compares the simulated forward velocity after a
//!   full-stick step with the closed-form first-order response.
//! * [`hover_noise`] parks the vehicle and measures how far the noisy GPS
//!   fixes scatter around it.
//!
//! The same functions are plain Rust underneath (`*_report`), so they are
//! tested natively.

use fpvgl_core::analysis::{
    compute_metrics, course_reference, extract_segment, LocalTrack, TaskMetrics, TrackSample, TrailBounds,
};
use fpvgl_core::geodesy::{geodetic_to_enu, EastAlignment, Ellipsoid, Enu, Geodetic};
use fpvgl_core::mavlink::{Encoder, Message, Parser};
use fpvgl_core::sim::{
    step, Pilot, Scenario, ScriptedPilot, SimConfig, SimState, Simulator, StickCommand, Task, SIM_COMP_ID,
    SIM_SYS_ID,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const PREFLIGHT_S: f64 = 3.0;
const MAX_FLIGHT_S: f64 = 600.0;
/// Cap on points handed to the page for plotting.
const PLOT_POINTS: usize = 1500;

#[derive(Debug, Serialize)]
pub struct FlightReport {
    pub task: u8,
    pub title: &'static str,
    pub completed: bool,
    pub sim_time_s: f64,
    pub frames: usize,
    pub frame_errors: usize,
    /// `[t, x, y, z]` in the aligned frame, thinned for plotting.
    pub trail: Vec<[f64; 4]>,
    pub segment: [usize; 2],
    /// Segment bounds on the thinned trail.
    pub segment_plot: [usize; 2],
    pub obstacles: Vec<[f64; 2]>,
    pub metrics: TaskMetrics,
}

fn thin<T: Copy>(v: &[T]) -> (Vec<T>, usize) {
    let every = v.len().div_ceil(PLOT_POINTS).max(1);
    (v.iter().step_by(every).copied().collect(), every)
}

/// Flies `task` on its default course and analyses the recorded trail.
pub fn fly_report(task: u8, gps_noise: f64, seed: u64) -> Result<FlightReport, String> {
    let task = Task::from_number(task).ok_or_else(|| format!("no task {task}"))?;
    let scenario = Scenario::default_for(task);
    let config = SimConfig {
        gps_noise_sigma: gps_noise,
        seed,
        ..Default::default()
    };
    let origin = config.origin;
    let mut sim = Simulator::new(
        config.clone(),
        Enu::new(scenario.start[0], scenario.start[1], 0.0),
        0.0,
    )
    .map_err(|e| e.to_string())?;
    let mut pilot = ScriptedPilot::new(&scenario, &config);
    let mut encoder = Encoder::new(SIM_SYS_ID, SIM_COMP_ID);
    let mut parser = Parser::new();
    let dt = config.dt();
    let preflight = (PREFLIGHT_S / dt).round() as u64;
    let mut wire = Vec::new();
    let (mut frames, mut frame_errors, mut completed) = (0, 0, false);
    let mut fixes: Vec<(f64, Enu, bool)> = Vec::new();

    while (sim.ticks() as f64) * dt < MAX_FLIGHT_S {
        if sim.ticks() == preflight {
            sim.state_mut().arm();
        }
        let cmd = pilot.command(sim.state());
        if pilot.finished() && sim.state().armed && sim.state().on_ground() {
            completed = true;
            break;
        }
        let armed = sim.state().armed;
        wire.clear();
        for m in sim.tick(cmd) {
            encoder.encode_into(&m, &mut wire);
        }
        for decoded in parser.feed(&wire) {
            match decoded {
                Ok(Message::GlobalPositionInt(g)) => {
                    frames += 1;
                    let fix = Geodetic::from_scaled(g.lat, g.lon, g.alt);
                    let mut p = geodetic_to_enu(&fix, &origin, &Ellipsoid::WGS84);
                    p.u = g.relative_alt as f64 / 1000.0;
                    fixes.push((g.time_boot_ms as f64 / 1000.0, p, armed));
                }
                Ok(_) => frames += 1,
                Err(_) => frame_errors += 1,
            }
        }
    }

    // The pre-arm fixes average out to the local origin.
    let ground: Vec<&Enu> = fixes.iter().filter(|f| !f.2).map(|f| &f.1).collect();
    let n = ground.len().max(1) as f64;
    let home = Enu::new(
        ground.iter().map(|p| p.e).sum::<f64>() / n,
        ground.iter().map(|p| p.n).sum::<f64>() / n,
        0.0,
    );
    let [re, rn] = course_reference(&scenario);
    let rot = EastAlignment::new(&Enu::new(re - home.e, rn - home.n, 0.0)).map_err(|e| e.to_string())?;
    let t0 = fixes.first().map_or(0.0, |f| f.0);
    let samples: Vec<TrackSample> = fixes
        .iter()
        .map(|(t, p, _)| {
            let q = rot.apply(&Enu::new(p.e - home.e, p.n - home.n, p.u));
            TrackSample {
                t: t - t0,
                x: q.e,
                y: q.n,
                z: q.u,
            }
        })
        .collect();
    let track = LocalTrack::from_samples(samples);
    let segment = extract_segment(&track, task).map_err(|e| e.to_string())?;
    let metrics = compute_metrics(&track, &segment, task, TrailBounds::whole(&track), "Digital twin")
        .map_err(|e| e.to_string())?;

    let all: Vec<[f64; 4]> = track.samples.iter().map(|s| [s.t, s.x, s.y, s.z]).collect();
    let (trail, every) = thin(&all);
    let obstacles = scenario
        .obstacles
        .iter()
        .map(|o| {
            let q = rot.apply(&Enu::new(o.center[0] - home.e, o.center[1] - home.n, 0.0));
            [q.e, q.n]
        })
        .collect();
    Ok(FlightReport {
        task: task.number(),
        title: task.title(),
        completed,
        sim_time_s: sim.state().t,
        frames,
        frame_errors,
        trail,
        segment: [segment.start_index, segment.end_index],
        segment_plot: [segment.start_index / every, segment.end_index / every],
        obstacles,
        metrics,
    })
}

#[derive(Debug, Serialize)]
pub struct StepReport {
    pub tau_s: f64,
    pub max_speed: f64,
    /// `[t, simulated, closed form]` forward speed.
    pub samples: Vec<[f64; 3]>,
    pub max_abs_error: f64,
    /// Time to reach 63.2 % of the commanded speed.
    pub rise_time_s: f64,
}

/// Full forward stick from hover for `seconds`.
pub fn step_report(tau: f64, max_speed: f64, seconds: f64) -> Result<StepReport, String> {
    let config = SimConfig {
        response_tau: tau,
        max_horizontal_speed: max_speed,
        ..Default::default()
    };
    config.validate().map_err(|e| e.to_string())?;
    if !(seconds > 0.0 && seconds <= 120.0) {
        return Err(format!("duration must be in (0, 120] s, got {seconds}"));
    }
    let mut state = SimState::at_rest(Enu::new(0.0, 0.0, 2.0), 0.0);
    state.arm();
    let cmd = StickCommand::new(0.0, 1.0, 0.0, 0.0);
    let dt = config.dt();
    let mut samples = vec![[0.0, 0.0, 0.0]];
    let mut rise = f64::NAN;
    while state.t < seconds - 1e-9 {
        state = step(&state, &cmd, &config, dt);
        let v = state.velocity.n;
        let exact = max_speed * (1.0 - (-state.t / tau).exp());
        if rise.is_nan() && v >= max_speed * (1.0 - (-1.0f64).exp()) {
            rise = state.t;
        }
        samples.push([state.t, v, exact]);
    }
    let max_abs_error = samples.iter().map(|s| (s[1] - s[2]).abs()).fold(0.0, f64::max);
    Ok(StepReport {
        tau_s: tau,
        max_speed,
        samples: thin(&samples).0,
        max_abs_error,
        rise_time_s: rise,
    })
}

#[derive(Debug, Serialize)]
pub struct NoiseReport {
    pub sigma_m: f64,
    pub fixes: usize,
    /// Mean horizontal distance between fix and true position.
    pub mean_error_m: f64,
    /// The Rayleigh mean, sigma * sqrt(pi / 2).
    pub expected_m: f64,
    /// `[east, north]` offsets, thinned for plotting.
    pub scatter: Vec<[f64; 2]>,
}

/// Parks the vehicle and samples GPS fixes for `seconds`.
pub fn noise_report(sigma: f64, seed: u64, seconds: f64) -> Result<NoiseReport, String> {
    if !(seconds > 0.0 && seconds <= 3600.0) {
        return Err(format!("duration must be in (0, 3600] s, got {seconds}"));
    }
    let config = SimConfig {
        gps_noise_sigma: sigma,
        seed,
        ..Default::default()
    };
    let origin = config.origin;
    let mut sim = Simulator::new(config, Enu::default(), 0.0).map_err(|e| e.to_string())?;
    let ticks = (seconds * sim.config().tick_rate).round() as u64;
    let mut offsets = Vec::with_capacity(ticks as usize);
    for _ in 0..ticks {
        for m in sim.tick(StickCommand::CENTER) {
            if let Message::GlobalPositionInt(g) = m {
                let p = geodetic_to_enu(
                    &Geodetic::from_scaled(g.lat, g.lon, g.alt),
                    &origin,
                    &Ellipsoid::WGS84,
                );
                offsets.push([p.e, p.n]);
            }
        }
    }
    let mean = offsets.iter().map(|o| o[0].hypot(o[1])).sum::<f64>() / offsets.len().max(1) as f64;
    Ok(NoiseReport {
        sigma_m: sigma,
        fixes: offsets.len(),
        mean_error_m: mean,
        expected_m: sigma * (std::f64::consts::PI / 2.0).sqrt(),
        scatter: thin(&offsets).0,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn fly_task(task: u8, gps_noise: f64, seed: u32) -> Result<String, JsError> {
    to_json(fly_report(task, gps_noise, seed as u64))
}

#[wasm_bindgen]
pub fn step_response(tau: f64, max_speed: f64, seconds: f64) -> Result<String, JsError> {
    to_json(step_report(tau, max_speed, seconds))
}

#[wasm_bindgen]
pub fn hover_noise(sigma: f64, seed: u32, seconds: f64) -> Result<String, JsError> {
    to_json(noise_report(sigma, seed as u64, seconds))
}
