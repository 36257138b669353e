//! Demonstration-accelerated model-based RL at desk scale: a latent world
//! model trained by temporal-difference, reward, and consistency losses; a
//! sampling planner over the learned model; prioritized episodic replay
//! with annealed demonstration oversampling; sparse-reward point tasks with
//! image + proprioception observations; and the three-phase training
//! pipeline that ties them together.

pub mod config;
pub mod envs;
mod error;
pub mod model;
pub mod pipeline;
pub mod planner;
pub mod replay;
pub mod rng;

pub use config::{parse_config, RunConfig};
pub use error::{Error, Result};
