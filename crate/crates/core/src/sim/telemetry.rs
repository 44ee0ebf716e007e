use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{step, ConfigError, SimConfig, SimState, StickCommand};
use crate::geodesy::{enu_to_geodetic, Ellipsoid, Enu};
use crate::mavlink::{
    Attitude, GlobalPositionInt, GpsRawInt, Heartbeat, Message, RcChannels, ServoOutputRaw, VfrHud,
};

pub const PWM_CENTER: u16 = 1500;
pub const PWM_SPAN: u16 = 500;
/// Servo output while disarmed.
pub const SERVO_IDLE: u16 = 1000;
const SERVO_MIN_ARMED: f64 = 1150.0;
const SERVO_MAX_ARMED: f64 = 1900.0;
const GRAVITY: f64 = 9.80665;

const MAV_TYPE_QUADROTOR: u8 = 2;
const MAV_AUTOPILOT_PX4: u8 = 12;
const MAV_MODE_FLAG_CUSTOM_MODE_ENABLED: u8 = 0x01;
const MAV_MODE_FLAG_SAFETY_ARMED: u8 = 0x80;
const MAV_STATE_STANDBY: u8 = 3;
const MAV_STATE_ACTIVE: u8 = 4;
/// PX4 main mode "Position" in the custom_mode field.
const PX4_CUSTOM_MODE_POSCTL: u32 = 3 << 16;
const GPS_FIX_3D: u8 = 3;

/// Maps a normalised stick value to a PWM pulse width, 1500 +/- 500 us.
pub fn stick_to_pwm(v: f64) -> u16 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
    (PWM_CENTER as f64 + PWM_SPAN as f64 * v).round() as u16
}

/// Inverse of [`stick_to_pwm`], clamped to [-1, 1].
pub fn pwm_to_stick(pwm: u16) -> f64 {
    ((pwm as f64 - PWM_CENTER as f64) / PWM_SPAN as f64).clamp(-1.0, 1.0)
}

/// RC channel values for a stick command in AETR order: roll on channel 1,
/// pitch on 2, throttle on 3, yaw on 4.
pub fn rc_channels_for(cmd: &StickCommand) -> [u16; 18] {
    let mut chan = [0u16; 18];
    chan[0] = stick_to_pwm(cmd.roll);
    chan[1] = stick_to_pwm(cmd.pitch);
    chan[2] = stick_to_pwm(cmd.throttle);
    chan[3] = stick_to_pwm(cmd.yaw);
    chan[4] = PWM_CENTER;
    for c in &mut chan[5..8] {
        *c = 1000;
    }
    chan
}

/// Reads a stick command back out of AETR-ordered RC channels.
pub fn stick_from_rc(chan: &[u16; 18]) -> StickCommand {
    StickCommand::new(
        pwm_to_stick(chan[0]),
        pwm_to_stick(chan[1]),
        pwm_to_stick(chan[3]),
        pwm_to_stick(chan[2]),
    )
}

/// Quad-X motor outputs. Disarmed motors read [`SERVO_IDLE`]; armed motors
/// never drop below 1150 us.
pub fn servo_outputs(cmd: &StickCommand, armed: bool) -> [u16; 8] {
    let mut servo = [0u16; 8];
    if !armed {
        servo[..4].fill(SERVO_IDLE);
        return servo;
    }
    let base = 1500.0 + 250.0 * cmd.throttle;
    let (r, p, y) = (100.0 * cmd.roll, 100.0 * cmd.pitch, 60.0 * cmd.yaw);
    // Front-right, rear-left, front-left, rear-right.
    let mix = [
        base - r - p + y,
        base + r + p + y,
        base + r - p - y,
        base - r + p - y,
    ];
    for (s, m) in servo.iter_mut().zip(mix) {
        *s = m.clamp(SERVO_MIN_ARMED, SERVO_MAX_ARMED).round() as u16;
    }
    servo
}

/// Heading in [0, 360) degrees for a compass yaw in radians.
fn heading_deg(yaw: f64) -> f64 {
    yaw.to_degrees().rem_euclid(360.0)
}

/// The simulated vehicle: dynamics plus the telemetry it would put on the
/// wire.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    state: SimState,
    command: StickCommand,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    ticks: u64,
    last_attitude: Option<(f64, f64)>,
}

impl Simulator {
    pub fn new(config: SimConfig, start: Enu, yaw: f64) -> Result<Self, ConfigError> {
        config.validate()?;
        let noise = (config.gps_noise_sigma > 0.0)
            .then(|| Normal::new(0.0, config.gps_noise_sigma).expect("sigma validated"));
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            state: SimState::at_rest(start, yaw),
            command: StickCommand::CENTER,
            noise,
            ticks: 0,
            last_attitude: None,
            config,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SimState {
        &mut self.state
    }

    pub fn command(&self) -> StickCommand {
        self.command
    }

    /// Number of completed ticks.
    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// One fixed-rate tick: apply `cmd` for one period, then synthesize the
    /// telemetry for the new state.
    pub fn tick(&mut self, cmd: StickCommand) -> Vec<Message> {
        self.command = cmd.clamped();
        self.state = step(&self.state, &self.command, &self.config, self.config.dt());
        let out = self.telemetry_tick();
        self.ticks += 1;
        out
    }

    /// Telemetry for the current state and last command, in emission order:
    /// Heartbeat (1 Hz), GlobalPositionInt, GpsRawInt, Attitude, VfrHud,
    /// RcChannels, ServoOutputRaw.
    pub fn telemetry_tick(&mut self) -> Vec<Message> {
        let s = self.state;
        let cmd = self.command;
        let cfg = &self.config;
        let mut out = Vec::with_capacity(7);

        let per_second = cfg.tick_rate.round().max(1.0) as u64;
        if self.ticks.is_multiple_of(per_second) {
            out.push(Message::Heartbeat(self.heartbeat()));
        }

        let mut measured = s.position;
        if let Some(noise) = &self.noise {
            measured.e += noise.sample(&mut self.rng);
            measured.n += noise.sample(&mut self.rng);
        }
        let geo = enu_to_geodetic(&measured, &cfg.origin, &Ellipsoid::WGS84)
            .expect("local positions stay near the origin");
        let (lat, lon, alt) = geo.to_scaled();

        let time_boot_ms = (s.t * 1000.0).round() as u32;
        let cms = |v: f64| (v * 100.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        let hdg = heading_deg(s.yaw);
        let ground_speed = s.horizontal_speed();

        out.push(Message::GlobalPositionInt(GlobalPositionInt {
            time_boot_ms,
            lat,
            lon,
            alt,
            relative_alt: (s.position.u * 1000.0).round() as i32,
            vx: cms(s.velocity.n),
            vy: cms(s.velocity.e),
            vz: cms(-s.velocity.u),
            hdg: ((hdg * 100.0).round() as u16) % 36000,
        }));

        let cog = if ground_speed > 0.01 {
            ((s.velocity.e.atan2(s.velocity.n).to_degrees().rem_euclid(360.0) * 100.0).round() as u16) % 36000
        } else {
            u16::MAX
        };
        out.push(Message::GpsRawInt(GpsRawInt {
            time_usec: (s.t * 1e6).round() as u64,
            lat,
            lon,
            alt,
            eph: 100,
            epv: 150,
            vel: (ground_speed * 100.0).round() as u16,
            cog,
            fix_type: GPS_FIX_3D,
            satellites_visible: 12,
        }));

        out.push(Message::Attitude(self.attitude(time_boot_ms)));

        out.push(Message::VfrHud(VfrHud {
            airspeed: ground_speed as f32,
            groundspeed: ground_speed as f32,
            alt: geo.alt as f32,
            climb: s.velocity.u as f32,
            heading: (hdg.round() as i16) % 360,
            throttle: if s.armed {
                (50.0 + 50.0 * cmd.throttle).round() as u16
            } else {
                0
            },
        }));

        out.push(Message::RcChannels(RcChannels {
            time_boot_ms,
            chan: rc_channels_for(&cmd),
            chancount: 8,
            rssi: 200,
        }));

        out.push(Message::ServoOutputRaw(ServoOutputRaw {
            time_usec: (s.t * 1e6).round() as u64 as u32,
            servo: servo_outputs(&cmd, s.armed),
            port: 0,
        }));
        out
    }

    fn heartbeat(&self) -> Heartbeat {
        let armed = self.state.armed;
        Heartbeat {
            custom_mode: PX4_CUSTOM_MODE_POSCTL,
            mav_type: MAV_TYPE_QUADROTOR,
            autopilot: MAV_AUTOPILOT_PX4,
            base_mode: MAV_MODE_FLAG_CUSTOM_MODE_ENABLED | if armed { MAV_MODE_FLAG_SAFETY_ARMED } else { 0 },
            system_status: if armed {
                MAV_STATE_ACTIVE
            } else {
                MAV_STATE_STANDBY
            },
            mavlink_version: 3,
        }
    }

    /// Small-angle attitude: tilt is proportional to the acceleration the
    /// velocity loop is currently asking for.
    fn attitude(&mut self, time_boot_ms: u32) -> Attitude {
        let s = &self.state;
        let cfg = &self.config;
        let (roll, pitch) = if s.armed {
            let target = super::commanded_velocity(&self.command, s.yaw, cfg);
            let (ae, an) = (
                (target.e - s.velocity.e) / cfg.response_tau,
                (target.n - s.velocity.n) / cfg.response_tau,
            );
            let (sy, cy) = s.yaw.sin_cos();
            let forward = ae * sy + an * cy;
            let right = ae * cy - an * sy;
            ((right / GRAVITY).atan(), -(forward / GRAVITY).atan())
        } else {
            (0.0, 0.0)
        };
        let dt = cfg.dt();
        let (rollspeed, pitchspeed) = match self.last_attitude {
            Some((r0, p0)) => ((roll - r0) / dt, (pitch - p0) / dt),
            None => (0.0, 0.0),
        };
        self.last_attitude = Some((roll, pitch));
        let yawspeed = if s.armed {
            self.command.yaw * cfg.max_yaw_rate
        } else {
            0.0
        };
        Attitude {
            time_boot_ms,
            roll: roll as f32,
            pitch: pitch as f32,
            yaw: s.yaw as f32,
            rollspeed: rollspeed as f32,
            pitchspeed: pitchspeed as f32,
            yawspeed: yawspeed as f32,
        }
    }
}
