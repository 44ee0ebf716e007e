//! Position-mode quadcopter simulator.
//!
//! Stick deflection commands a body-frame velocity (forward from pitch,
//! right from roll, up from throttle) and yaw rate. The actual velocity
//! follows the command as a first-order lag with time constant
//! `response_tau`; centred sticks command zero velocity, which is position
//! hold. Yaw follows the compass convention: 0 faces north, +pi/2 east.
//!
//! The step is the exact solution of the lag over `dt` for a command held
//! constant across the step, so results do not depend on the tick rate.

pub mod camera;
pub mod pilot;
mod run;
pub mod scenario;
pub mod telemetry;

pub use pilot::{HoldPilot, LivePilot, Pilot, ScriptedPilot};
pub use run::{
    run_sim, Pacing, RunOptions, SimRunSummary, SinkError, TelemetrySink, Tick, SIM_COMP_ID, SIM_SYS_ID,
};
pub use scenario::{Obstacle, Scenario, ScenarioError, Task};
pub use telemetry::{pwm_to_stick, rc_channels_for, servo_outputs, stick_from_rc, stick_to_pwm, Simulator};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{Enu, Geodetic};

/// Default local-frame anchor: an open field at roughly 43.0008 N,
/// 78.788 W, 180 m. Latitude and longitude sit exactly on the 1e-7 degree
/// wire grid.
pub const DEFAULT_ORIGIN: Geodetic = Geodetic {
    lat: 43.0008,
    lon: -78.788,
    alt: 180.0,
};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid simulator config: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Horizontal speed at full stick, m/s.
    pub max_horizontal_speed: f64,
    /// Climb rate at full throttle deflection, m/s.
    pub max_climb_rate: f64,
    /// Yaw rate at full yaw deflection, rad/s.
    pub max_yaw_rate: f64,
    /// Velocity response time constant, s.
    pub response_tau: f64,
    /// Fixed simulation rate, Hz.
    pub tick_rate: f64,
    /// Horizontal GPS noise, per-axis standard deviation in metres.
    pub gps_noise_sigma: f64,
    pub origin: Geodetic,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            max_horizontal_speed: 1.20,
            max_climb_rate: 1.0,
            max_yaw_rate: 1.0,
            response_tau: 0.5,
            tick_rate: 50.0,
            gps_noise_sigma: 0.0,
            origin: DEFAULT_ORIGIN,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("max_horizontal_speed", self.max_horizontal_speed),
            ("max_climb_rate", self.max_climb_rate),
            ("max_yaw_rate", self.max_yaw_rate),
            ("response_tau", self.response_tau),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tick_rate >= 10.0 && self.tick_rate.is_finite()) {
            return Err(ConfigError(format!(
                "tick_rate must be at least 10 Hz, got {}",
                self.tick_rate
            )));
        }
        if !(self.gps_noise_sigma >= 0.0 && self.gps_noise_sigma.is_finite()) {
            return Err(ConfigError(format!(
                "gps_noise_sigma must be >= 0, got {}",
                self.gps_noise_sigma
            )));
        }
        self.origin.validate().map_err(|e| ConfigError(e.to_string()))
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }
}

/// Normalised stick deflections, each in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StickCommand {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub throttle: f64,
}

impl StickCommand {
    pub const CENTER: StickCommand = StickCommand {
        roll: 0.0,
        pitch: 0.0,
        yaw: 0.0,
        throttle: 0.0,
    };

    pub fn new(roll: f64, pitch: f64, yaw: f64, throttle: f64) -> Self {
        Self {
            roll,
            pitch,
            yaw,
            throttle,
        }
        .clamped()
    }

    pub fn clamped(self) -> Self {
        let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        Self {
            roll: c(self.roll),
            pitch: c(self.pitch),
            yaw: c(self.yaw),
            throttle: c(self.throttle),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Seconds since start.
    pub t: f64,
    pub position: Enu,
    pub velocity: Enu,
    /// Heading, radians in (-pi, pi].
    pub yaw: f64,
    pub armed: bool,
    /// Up coordinate at the moment of arming.
    pub arm_altitude: f64,
}

impl SimState {
    pub fn at_rest(position: Enu, yaw: f64) -> Self {
        Self {
            t: 0.0,
            position,
            velocity: Enu::default(),
            yaw: wrap_angle(yaw),
            armed: false,
            arm_altitude: 0.0,
        }
    }

    pub fn arm(&mut self) {
        self.armed = true;
        self.arm_altitude = self.position.u;
    }

    pub fn disarm(&mut self) {
        self.armed = false;
        self.velocity = Enu::default();
    }

    pub fn on_ground(&self) -> bool {
        self.position.u <= 0.0
    }

    pub fn horizontal_speed(&self) -> f64 {
        self.velocity.horizontal_norm()
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Commanded E/N/U velocity for a stick input at heading `yaw`.
///
/// The horizontal command is limited to `max_horizontal_speed` in norm, so
/// diagonal full deflection does not exceed the cap.
pub fn commanded_velocity(cmd: &StickCommand, yaw: f64, config: &SimConfig) -> Enu {
    let cmd = cmd.clamped();
    let vmax = config.max_horizontal_speed;
    let (mut fwd, mut right) = (cmd.pitch * vmax, cmd.roll * vmax);
    let h = fwd.hypot(right);
    if h > vmax {
        fwd *= vmax / h;
        right *= vmax / h;
    }
    let (s, c) = yaw.sin_cos();
    Enu {
        e: fwd * s + right * c,
        n: fwd * c - right * s,
        u: cmd.throttle * config.max_climb_rate,
    }
}

/// Advances the vehicle by `dt` seconds under a constant stick command.
pub fn step(state: &SimState, cmd: &StickCommand, config: &SimConfig, dt: f64) -> SimState {
    let mut next = *state;
    next.t = state.t + dt;
    if !state.armed {
        next.velocity = Enu::default();
        next.position.u = state.position.u.max(0.0);
        return next;
    }
    let cmd = cmd.clamped();
    let target = commanded_velocity(&cmd, state.yaw, config);
    let tau = config.response_tau;
    let decay = (-dt / tau).exp();
    let blend = tau * (1.0 - decay);
    let lag = |v: f64, vc: f64| vc + (v - vc) * decay;
    let travel = |v: f64, vc: f64| vc * dt + (v - vc) * blend;

    next.velocity = Enu {
        e: lag(state.velocity.e, target.e),
        n: lag(state.velocity.n, target.n),
        u: lag(state.velocity.u, target.u),
    };
    next.position = Enu {
        e: state.position.e + travel(state.velocity.e, target.e),
        n: state.position.n + travel(state.velocity.n, target.n),
        u: state.position.u + travel(state.velocity.u, target.u),
    };
    if next.position.u < 0.0 {
        next.position.u = 0.0;
        next.velocity.u = next.velocity.u.max(0.0);
    }
    next.yaw = wrap_angle(state.yaw + cmd.yaw * config.max_yaw_rate * dt);
    next
}
