//! Ground-station and flight-data toolkit for FPV quadcopter experiments.
//!
//! The crate is organised along the data path of a flight:
//!
//! - [`mavlink`]: MAVLink 1 codec for the seven telemetry messages in use.
//! - [`relay`]: timestamping TCP relay from the airborne side to the ground.
//! - [`sim`]: position-mode quadcopter simulator, task scenarios and a
//!   scripted pilot, speaking the same wire protocol as the real vehicle.
//! - [`logger`]: synchronized per-iteration CSV + PNG session logging.
//! - [`geodesy`]: geodetic / ECEF / ENU conversion and due-east alignment.
//! - [`analysis`]: trajectory reconstruction, maneuver segments and metrics.
//! - [`export`]: imitation-learning episode datasets.

pub mod analysis;
pub mod export;
pub mod geodesy;
mod latest;
pub mod logger;
pub mod mavlink;
pub mod relay;
pub mod sim;

pub use latest::Latest;
