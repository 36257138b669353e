//! Desk-scale sparse-reward tasks with image + proprioception observations.
//!
//! Tasks live behind the [`Env`] trait and are looked up by name in
//! [`task_registry`], so the pipeline and CLI select them at runtime.

mod oracle;
mod point;

pub use oracle::{generate_demos, oracle_names, uniform_action, OracleKind};
pub use point::{disc_footprint, draw_radius, PointEnv, AGENT_RADIUS, OBJECT_RADIUS};

use autodiff::Tensor;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::planner::PlanModel;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub task: String,
    pub grid_size: usize,
    pub episode_len: usize,
    pub action_repeat: usize,
    pub goal_radius: f64,
    pub frame_stack: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            task: "point_reach".into(),
            grid_size: 32,
            episode_len: 50,
            action_repeat: 2,
            goal_radius: 0.2,
            frame_stack: 2,
        }
    }
}

/// One observation as the agent sees it: a frame-stacked grid render plus a
/// flat proprioceptive vector. Image values lie in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Shape [stack, channels, S, S].
    pub image: Tensor,
    pub proprio: Vec<f64>,
}

pub struct StepOut {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

pub trait Env {
    fn config(&self) -> &EnvConfig;
    fn action_dim(&self) -> usize;
    fn proprio_dim(&self) -> usize;
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Observation;
    /// Advance one control step (`action_repeat` physics updates). Actions
    /// are clipped to [-1, 1] internally.
    fn step(&mut self, action: &[f64]) -> StepOut;
    /// Ground-truth dynamics and a dense guidance objective, for planning
    /// without a learned model.
    fn true_plan_model(&self) -> Box<dyn PlanModel>;
    /// Current physical state as the vector the true plan model rolls out.
    fn plan_state(&self) -> Vec<f64>;
    /// Hand-written controller action for the current state.
    fn scripted_action(&self) -> Vec<f64>;
}

pub struct TaskSpec {
    pub name: &'static str,
    pub build: fn(EnvConfig) -> Box<dyn Env>,
}

pub fn task_registry() -> &'static [TaskSpec] {
    &[
        TaskSpec { name: "point_reach", build: |cfg| Box::new(PointEnv::reach(cfg)) },
        TaskSpec { name: "point_push", build: |cfg| Box::new(PointEnv::push(cfg)) },
    ]
}

pub fn task_names() -> String {
    task_registry().iter().map(|t| t.name).collect::<Vec<_>>().join(", ")
}

pub fn make_env(cfg: &EnvConfig) -> Result<Box<dyn Env>> {
    task_registry()
        .iter()
        .find(|t| t.name == cfg.task)
        .map(|t| (t.build)(cfg.clone()))
        .ok_or_else(|| Error::UnknownTask(cfg.task.clone(), task_names()))
}
