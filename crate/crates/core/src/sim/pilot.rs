//! Stick command sources: the scripted task pilot, a live handoff cell and
//! a do-nothing hold pilot.

use std::f64::consts::{PI, TAU};

use super::scenario::{Scenario, Task, TASK1_HOVER_S};
use super::{SimConfig, SimState, StickCommand};
use crate::latest::Latest;

pub trait Pilot {
    fn command(&mut self, state: &SimState) -> StickCommand;

    /// True once the pilot has nothing left to fly. The run ends when the
    /// pilot is finished and the vehicle is on the ground.
    fn finished(&self) -> bool {
        false
    }
}

/// Centred sticks forever: position hold.
#[derive(Debug, Clone, Copy, Default)]
pub struct HoldPilot;

impl Pilot for HoldPilot {
    fn command(&mut self, _state: &SimState) -> StickCommand {
        StickCommand::CENTER
    }
}

/// Samples the most recent command written by another thread, centred
/// sticks until the first one arrives.
#[derive(Debug, Clone, Default)]
pub struct LivePilot {
    cell: Latest<StickCommand>,
}

impl LivePilot {
    pub fn new(cell: Latest<StickCommand>) -> Self {
        Self { cell }
    }

    pub fn cell(&self) -> Latest<StickCommand> {
        self.cell.clone()
    }
}

impl Pilot for LivePilot {
    fn command(&mut self, _state: &SimState) -> StickCommand {
        self.cell.get().unwrap_or(StickCommand::CENTER).clamped()
    }
}

/// Extra altitude above the target so the climb settles just past it.
const ALTITUDE_MARGIN_M: f64 = 0.05;
/// Hold time after first reaching the Task 1 altitude; one second longer
/// than the analysed hover window.
const HOVER_HOLD_S: f64 = TASK1_HOVER_S + 1.0;
const LOOKAHEAD_M: f64 = 1.0;
const POSITION_GAIN: f64 = 0.8;
const ALTITUDE_GAIN: f64 = 0.5;
const ARRIVE_TOLERANCE_M: f64 = 0.05;
const ARRIVE_SPEED_MS: f64 = 0.05;
const CIRCLE_RADIUS_M: f64 = 2.5;
const LEMNISCATE_HALF_WIDTH_M: f64 = 5.5;

#[derive(Debug, Clone, PartialEq)]
enum Leg {
    /// Climb over `at` until reaching `altitude`.
    Climb { at: [f64; 2], altitude: f64 },
    /// Hold over `at` for `seconds` after reaching the leg.
    Hold { at: [f64; 2], seconds: f64 },
    /// Follow a polyline at cruise speed, then settle on its last point.
    Path { points: Vec<[f64; 2]> },
    /// Descend over `at` until touchdown.
    Descend { at: [f64; 2] },
}

/// Waypoint-following pilot that flies one of the four tasks.
///
/// Horizontal guidance is pure pursuit along a dense polyline with a fixed
/// lookahead; altitude is a proportional hold a few centimetres above the
/// task's target altitude. Heading stays fixed.
#[derive(Debug, Clone)]
pub struct ScriptedPilot {
    legs: Vec<Leg>,
    leg: usize,
    cruise_altitude: f64,
    max_speed: f64,
    max_climb: f64,
    leg_started: Option<f64>,
    progress: usize,
}

impl ScriptedPilot {
    pub fn new(scenario: &Scenario, config: &SimConfig) -> Self {
        let start = scenario.start;
        let landing = scenario.landing;
        let altitude = scenario.target_altitude + ALTITUDE_MARGIN_M;
        let mut legs = vec![Leg::Climb { at: start, altitude }];
        match scenario.task {
            Task::Task1 => {
                legs.push(Leg::Hold {
                    at: start,
                    seconds: HOVER_HOLD_S,
                });
            }
            Task::Task2 => {
                legs.push(Leg::Path {
                    points: densify(&[start, landing]),
                });
            }
            Task::Task3 => {
                let c = scenario.obstacles[0].center;
                legs.push(Leg::Path {
                    points: circle_route(start, landing, c),
                });
            }
            Task::Task4 => {
                let (a, b) = (scenario.obstacles[0].center, scenario.obstacles[1].center);
                legs.push(Leg::Path {
                    points: figure_eight_route(start, landing, a, b),
                });
            }
        }
        legs.push(Leg::Descend { at: landing });
        Self {
            legs,
            leg: 0,
            cruise_altitude: altitude,
            max_speed: config.max_horizontal_speed,
            max_climb: config.max_climb_rate,
            leg_started: None,
            progress: 0,
        }
    }

    /// The planned horizontal route, for display.
    pub fn route(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::new();
        for leg in &self.legs {
            match leg {
                Leg::Climb { at, .. } | Leg::Hold { at, .. } | Leg::Descend { at } => out.push(*at),
                Leg::Path { points } => out.extend_from_slice(points),
            }
        }
        out.dedup();
        out
    }

    fn advance(&mut self) {
        self.leg += 1;
        self.leg_started = None;
        self.progress = 0;
    }

    /// World-frame velocity demand toward `target`, limited to cruise speed.
    fn seek(&self, state: &SimState, target: [f64; 2], gain: f64) -> (f64, f64) {
        let (de, dn) = (target[0] - state.position.e, target[1] - state.position.n);
        let (ve, vn) = (gain * de, gain * dn);
        let v = ve.hypot(vn);
        if v > self.max_speed {
            (ve * self.max_speed / v, vn * self.max_speed / v)
        } else {
            (ve, vn)
        }
    }

    fn altitude_hold(&self, state: &SimState, altitude: f64) -> f64 {
        ALTITUDE_GAIN * (altitude - state.position.u)
    }

    fn sticks(&self, state: &SimState, ve: f64, vn: f64, vu: f64) -> StickCommand {
        let (s, c) = state.yaw.sin_cos();
        let forward = ve * s + vn * c;
        let right = ve * c - vn * s;
        StickCommand::new(
            right / self.max_speed,
            forward / self.max_speed,
            0.0,
            vu / self.max_climb,
        )
    }

    fn pursue(&mut self, state: &SimState, points: &[[f64; 2]]) -> ((f64, f64), bool) {
        let p = [state.position.e, state.position.n];
        let dist = |q: &[f64; 2]| (q[0] - p[0]).hypot(q[1] - p[1]);
        // Progress only moves forward, and only through points already
        // within the lookahead, so self-crossing routes are followed in order.
        while self.progress + 1 < points.len() && dist(&points[self.progress + 1]) < LOOKAHEAD_M {
            self.progress += 1;
        }
        let last = points.len() - 1;
        if self.progress + 1 >= last && dist(&points[last]) < LOOKAHEAD_M {
            return (self.seek(state, points[last], POSITION_GAIN), true);
        }
        let carrot = points[(self.progress + 1).min(last)];
        let (de, dn) = (carrot[0] - p[0], carrot[1] - p[1]);
        let d = de.hypot(dn).max(1e-9);
        ((de / d * self.max_speed, dn / d * self.max_speed), false)
    }
}

fn arrived(state: &SimState, at: [f64; 2]) -> bool {
    (state.position.e - at[0]).hypot(state.position.n - at[1]) < ARRIVE_TOLERANCE_M
        && state.horizontal_speed() < ARRIVE_SPEED_MS
}

impl Pilot for ScriptedPilot {
    fn command(&mut self, state: &SimState) -> StickCommand {
        if !state.armed {
            return StickCommand::CENTER;
        }
        loop {
            let Some(leg) = self.legs.get(self.leg).cloned() else {
                return StickCommand::CENTER;
            };
            match leg {
                Leg::Climb { at, altitude } => {
                    if state.position.u >= altitude - ALTITUDE_MARGIN_M {
                        self.advance();
                        continue;
                    }
                    let (ve, vn) = self.seek(state, at, POSITION_GAIN);
                    return self.sticks(state, ve, vn, self.altitude_hold(state, altitude));
                }
                Leg::Hold { at, seconds } => {
                    let started = *self.leg_started.get_or_insert(state.t);
                    if state.t - started >= seconds {
                        self.advance();
                        continue;
                    }
                    let (ve, vn) = self.seek(state, at, POSITION_GAIN);
                    return self.sticks(state, ve, vn, self.altitude_hold(state, self.cruise_altitude));
                }
                Leg::Path { points } => {
                    let ((ve, vn), settling) = self.pursue(state, &points);
                    if settling && arrived(state, points[points.len() - 1]) {
                        self.advance();
                        continue;
                    }
                    return self.sticks(state, ve, vn, self.altitude_hold(state, self.cruise_altitude));
                }
                Leg::Descend { at } => {
                    if state.on_ground() {
                        self.advance();
                        continue;
                    }
                    let (ve, vn) = self.seek(state, at, POSITION_GAIN);
                    let sink = (0.2 + 0.5 * state.position.u).min(self.max_climb);
                    return self.sticks(state, ve, vn, -sink);
                }
            }
        }
    }

    fn finished(&self) -> bool {
        self.leg >= self.legs.len()
    }
}

/// Splits each segment of a polyline into steps of at most 0.25 m.
fn densify(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = vec![points[0]];
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = ((b[0] - a[0]).hypot(b[1] - a[1]) / 0.25).ceil().max(1.0) as usize;
        for i in 1..=n {
            let f = i as f64 / n as f64;
            out.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
        }
    }
    out
}

fn unit(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let d = dx.hypot(dy);
    [dx / d, dy / d]
}

/// Start, one and a half counter-clockwise turns around `center` (one full
/// circle, then out the far side), landing.
fn circle_route(start: [f64; 2], landing: [f64; 2], center: [f64; 2]) -> Vec<[f64; 2]> {
    let dir = unit(start, landing);
    let theta0 = (-dir[1]).atan2(-dir[0]);
    let entry = [
        center[0] + CIRCLE_RADIUS_M * theta0.cos(),
        center[1] + CIRCLE_RADIUS_M * theta0.sin(),
    ];
    let mut pts = densify(&[start, entry]);
    let steps = 180;
    for i in 1..=steps {
        let th = theta0 + 3.0 * PI * i as f64 / steps as f64;
        pts.push([
            center[0] + CIRCLE_RADIUS_M * th.cos(),
            center[1] + CIRCLE_RADIUS_M * th.sin(),
        ]);
    }
    let exit = *pts.last().unwrap();
    pts.extend(densify(&[exit, landing]).into_iter().skip(1));
    pts
}

/// Start, a lemniscate of Bernoulli whose lobes enclose both obstacles and
/// which crosses itself midway between them, then back to landing.
fn figure_eight_route(start: [f64; 2], landing: [f64; 2], a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let axis = unit(a, b);
    let normal = [-axis[1], axis[0]];
    let half = LEMNISCATE_HALF_WIDTH_M.max(0.5 * (b[0] - a[0]).hypot(b[1] - a[1]) + 2.0);
    let at = |t: f64| {
        let d = 1.0 + t.sin().powi(2);
        let (x, y) = (half * t.cos() / d, half * t.sin() * t.cos() / d);
        [
            mid[0] + x * axis[0] + y * normal[0],
            mid[1] + x * axis[1] + y * normal[1],
        ]
    };
    let entry = at(PI);
    let mut pts = densify(&[start, entry]);
    let steps = 400;
    for i in 1..=steps {
        pts.push(at(PI + TAU * i as f64 / steps as f64));
    }
    pts.extend(densify(&[entry, landing]).into_iter().skip(1));
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::Enu;
    use crate::sim::step;

    fn fly(task: Task) -> Vec<SimState> {
        let cfg = SimConfig::default();
        let sc = Scenario::default_for(task);
        let mut pilot = ScriptedPilot::new(&sc, &cfg);
        let mut s = SimState::at_rest(Enu::new(sc.start[0], sc.start[1], 0.0), 0.0);
        s.arm();
        let mut trace = vec![s];
        for _ in 0..(300.0 * cfg.tick_rate) as usize {
            let cmd = pilot.command(&s);
            if pilot.finished() {
                break;
            }
            s = step(&s, &cmd, &cfg, cfg.dt());
            trace.push(s);
        }
        assert!(pilot.finished(), "{task} did not finish");
        trace
    }

    #[test]
    fn task1_climbs_straight_up() {
        let cfg = SimConfig::default();
        let mut pilot = ScriptedPilot::new(&Scenario::default_for(Task::Task1), &cfg);
        let mut s = SimState::at_rest(Enu::new(0.0, 0.0, 1.0), 0.0);
        s.arm();
        let c = pilot.command(&s);
        assert!(c.throttle > 0.0);
        assert_eq!((c.roll, c.pitch), (0.0, 0.0));
    }

    #[test]
    fn task1_reaches_and_holds_four_metres() {
        let trace = fly(Task::Task1);
        let peak = trace.iter().map(|s| s.position.u).fold(0.0, f64::max);
        assert!((peak - 4.0).abs() <= 0.1, "{peak}");
        let first = trace.iter().position(|s| s.position.u >= 4.0).unwrap();
        let t0 = trace[first].t;
        let held = trace
            .iter()
            .filter(|s| s.t >= t0 && s.t <= t0 + 10.0)
            .all(|s| (s.position.u - 4.0).abs() <= 0.1);
        assert!(held);
        assert!(trace.last().unwrap().t - t0 >= 10.0);
        assert!(trace.last().unwrap().on_ground());
        assert!(trace.iter().all(|s| s.position.horizontal_norm() == 0.0));
    }

    #[test]
    fn every_task_lands_at_its_landing_point() {
        for task in Task::ALL {
            let sc = Scenario::default_for(task);
            let end = *fly(task).last().unwrap();
            assert!(end.on_ground());
            let miss = (end.position.e - sc.landing[0]).hypot(end.position.n - sc.landing[1]);
            assert!(miss < 0.1, "{task}: {miss}");
        }
    }

    #[test]
    fn task3_circles_the_first_obstacle() {
        let trace = fly(Task::Task3);
        let c = Scenario::default_for(Task::Task3).obstacles[0].center;
        // Total swept angle around the obstacle while within 4 m of it.
        let mut swept = 0.0;
        let mut prev: Option<f64> = None;
        for s in &trace {
            let (dx, dy) = (s.position.e - c[0], s.position.n - c[1]);
            if dx.hypot(dy) > 4.0 {
                prev = None;
                continue;
            }
            let a = dy.atan2(dx);
            if let Some(p) = prev {
                swept += crate::sim::wrap_angle(a - p);
            }
            prev = Some(a);
        }
        assert!(swept.abs() >= TAU, "{swept}");
    }

    #[test]
    fn task4_crosses_itself_between_obstacles() {
        let trace = fly(Task::Task4);
        let pts: Vec<[f64; 2]> = trace
            .iter()
            .step_by(5)
            .map(|s| [s.position.e, s.position.n])
            .collect();
        let cross = |a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]| -> Option<[f64; 2]> {
            let r = [b[0] - a[0], b[1] - a[1]];
            let s = [d[0] - c[0], d[1] - c[1]];
            let den = r[0] * s[1] - r[1] * s[0];
            if den.abs() < 1e-12 {
                return None;
            }
            let t = ((c[0] - a[0]) * s[1] - (c[1] - a[1]) * s[0]) / den;
            let u = ((c[0] - a[0]) * r[1] - (c[1] - a[1]) * r[0]) / den;
            ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then(|| [a[0] + t * r[0], a[1] + t * r[1]])
        };
        let mut found = false;
        for i in 0..pts.len() - 1 {
            for j in i + 2..pts.len() - 1 {
                if let Some(p) = cross(pts[i], pts[i + 1], pts[j], pts[j + 1]) {
                    if p[0] > 7.0 && p[0] < 13.0 && p[1].abs() < 1.0 {
                        found = true;
                    }
                }
            }
        }
        assert!(found);
    }
}
