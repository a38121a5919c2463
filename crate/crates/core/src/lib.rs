//! Kinetostatic simulation, workspace analysis and position control for a
//! parallel soft-robotic ultrasound end-effector driven by three hydraulic
//! soft fluidic actuators.

pub mod config;
pub mod control;
pub mod environment;
pub mod error;
pub mod mechanics;
pub mod model;
pub mod scenario;
pub mod session;
pub mod workspace;

pub use error::{Result, SeeError};
