//! Learning and certifying neural simulation relations between a black-box
//! source control system and a black-box target control system, and
//! transferring source controllers to the target through the learned
//! interface.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix `f64`, which is what training and certification use
//! by default.

pub mod certifier;
pub mod cosim;
pub mod cover;
pub mod error;
pub mod geometry;
pub mod nn;
pub mod parallel;
pub mod rounding;
pub mod scalar;
pub mod system;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type BoxSet = geometry::BoxSet<f64>;
pub type System = system::SystemDef<f64>;
pub type Controller = system::ControllerDef<f64>;
pub type GridCover = cover::GridCover<f64>;
pub type JointDataset = cover::JointDataset<f64>;
pub type Mlp = nn::Mlp<f64>;
pub type TrainState = nn::TrainState<f64>;
pub type Trace = cosim::Trace<f64>;
