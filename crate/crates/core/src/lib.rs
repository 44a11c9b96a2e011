//! Simulation, reinforcement-learning control and explainability for
//! multi-compressor compressed-air plants.
//!
//! * [`plant`]: tank pressure dynamics and compressor flow/power models.
//! * [`env`]: episodic environment, reward, observations and demand data.
//! * [`policy`]: recurrent actor-critic network with hand-written gradients.
//! * [`ppo`]: proximal policy optimization trainer.
//! * [`baseline`]: pressure-band cascade controller.
//! * [`explain`]: perturbation sweeps, gradient saliency and Shapley values.

pub mod baseline;
pub mod config;
pub mod env;
pub mod error;
pub mod explain;
pub mod plant;
pub mod policy;
pub mod ppo;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
