//! Task scenarios and their text file format.
//!
//! Scenario files are TOML:
//!
//! ```toml
//! task = "Task3"
//! start = [0.0, 0.0]
//! landing = [20.0, 0.0]
//! target_altitude = 3.0
//!
//! [[obstacles]]
//! center = [7.0, 0.0]
//! height = 3.0
//!
//! [[obstacles]]
//! center = [13.0, 0.0]
//! height = 3.0
//! ```
//!
//! Positions are local East/North metres. An optional `[origin]` table with
//! `lat`, `lon`, `alt` anchors the local frame geodetically.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::Geodetic;

pub const OBSTACLE_HEIGHT_M: f64 = 3.0;
pub const TASK1_TARGET_ALTITUDE_M: f64 = 4.0;
pub const CRUISE_TARGET_ALTITUDE_M: f64 = 3.0;
pub const TASK1_HOVER_S: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("reading scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown task {0:?}; expected 1-4")]
    UnknownTask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    Task1,
    Task2,
    Task3,
    Task4,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Task1, Task::Task2, Task::Task3, Task::Task4];

    pub fn number(self) -> u8 {
        match self {
            Task::Task1 => 1,
            Task::Task2 => 2,
            Task::Task3 => 3,
            Task::Task4 => 4,
        }
    }

    pub fn from_number(n: u8) -> Option<Task> {
        Task::ALL.get((n as usize).wrapping_sub(1)).copied()
    }

    pub fn title(self) -> &'static str {
        match self {
            Task::Task1 => "Take off, hover, and land",
            Task::Task2 => "Flying from point A to B",
            Task::Task3 => "Obstacle avoidance",
            Task::Task4 => "Flying Figure 8",
        }
    }

    /// Tasks 2-4 are scored on longitudinal motion; Task 1 on hovering.
    pub fn is_longitudinal(self) -> bool {
        self != Task::Task1
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Task {}", self.number())
    }
}

impl FromStr for Task {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let digits = t.trim_start_matches("Task").trim_start_matches("task").trim();
        digits
            .parse::<u8>()
            .ok()
            .and_then(Task::from_number)
            .ok_or_else(|| ScenarioError::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub task: Task,
    pub start: [f64; 2],
    pub landing: [f64; 2],
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub target_altitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Geodetic>,
}

impl Scenario {
    /// Default course: start at the origin, landing 20 m east, obstacles at
    /// 7 m and 13 m on the line between them.
    pub fn default_for(task: Task) -> Scenario {
        let obstacles = vec![
            Obstacle {
                center: [7.0, 0.0],
                height: OBSTACLE_HEIGHT_M,
            },
            Obstacle {
                center: [13.0, 0.0],
                height: OBSTACLE_HEIGHT_M,
            },
        ];
        match task {
            Task::Task1 => Scenario {
                task,
                start: [0.0, 0.0],
                landing: [0.0, 0.0],
                obstacles: Vec::new(),
                target_altitude: TASK1_TARGET_ALTITUDE_M,
                origin: None,
            },
            Task::Task4 => Scenario {
                task,
                start: [0.0, 0.0],
                // The figure-8 trail returns to the departure spot.
                landing: [0.0, 0.0],
                obstacles,
                target_altitude: CRUISE_TARGET_ALTITUDE_M,
                origin: None,
            },
            Task::Task2 | Task::Task3 => Scenario {
                task,
                start: [0.0, 0.0],
                landing: [20.0, 0.0],
                obstacles,
                target_altitude: CRUISE_TARGET_ALTITUDE_M,
                origin: None,
            },
        }
    }

    pub fn with_origin(mut self, origin: Geodetic) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::Invalid(msg));
        let expected_alt = match self.task {
            Task::Task1 => TASK1_TARGET_ALTITUDE_M,
            _ => CRUISE_TARGET_ALTITUDE_M,
        };
        if self.target_altitude != expected_alt {
            return bad(format!(
                "{} flies at {expected_alt} m, got {}",
                self.task, self.target_altitude
            ));
        }
        if self.task == Task::Task1 {
            return Ok(());
        }
        if self.obstacles.len() != 2 {
            return bad(format!(
                "{} needs exactly two obstacles, got {}",
                self.task,
                self.obstacles.len()
            ));
        }
        if let Some(o) = self.obstacles.iter().find(|o| o.height != OBSTACLE_HEIGHT_M) {
            return bad(format!(
                "obstacle heights must be {OBSTACLE_HEIGHT_M} m, got {}",
                o.height
            ));
        }
        // "In line": both centres on the segment from the start to the far
        // end of the course, within 0.5 m laterally.
        let far = if self.landing == self.start {
            self.obstacles[1].center
        } else {
            self.landing
        };
        let (dx, dy) = (far[0] - self.start[0], far[1] - self.start[1]);
        let len = dx.hypot(dy);
        if len <= 0.0 {
            return bad("obstacle line is undefined".into());
        }
        for o in &self.obstacles {
            let (ox, oy) = (o.center[0] - self.start[0], o.center[1] - self.start[1]);
            let along = (ox * dx + oy * dy) / len;
            let across = (ox * dy - oy * dx).abs() / len;
            if across > 0.5 || along <= 0.0 || along > len + 1e-9 {
                return bad(format!(
                    "obstacle at {:?} is not in line between start and landing",
                    o.center
                ));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Scenario, ScenarioError> {
        let sc: Scenario = toml::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }
}
