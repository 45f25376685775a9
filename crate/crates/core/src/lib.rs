//! Attitude stabilization of a rigid spacecraft with magnetorquers.
//!
//! Quaternions store the vector part first and the scalar last. `A(q)` maps
//! inertial vectors into the body frame.

pub mod analysis;
pub mod attmath;
pub mod control;
pub mod dynamics;
pub mod environment;
pub mod error;
pub mod montecarlo;

pub use attmath::{Mat3, Quaternion, Vec3};
pub use control::{FeedbackLaw, OutputFeedback, OutputFeedbackGains, SaturationConfig, StateFeedback, StateFeedbackGains};
pub use dynamics::{InertiaMatrix, Simulation, SimulationTrace, SpacecraftState};
pub use environment::Environment;
pub use error::{AnalysisError, AttitudeError, DynamicsError, ModelError};
