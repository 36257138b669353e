//! Demonstration generators standing in for human teleoperation: a
//! scripted PD controller, or receding-horizon planning against the task's
//! ground-truth dynamics. Episodes that fail the success predicate are
//! rejected and regenerated.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{make_env, EnvConfig};
use crate::error::{Error, Result};
use crate::planner::{mppi_plan, PlanState, PlannerConfig};
use crate::replay::{Episode, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    /// Hand-written PD controller toward the task target.
    Scripted,
    /// Sampling planner over the ground-truth dynamics.
    Planner,
}

impl OracleKind {
    pub fn from_name(name: &str) -> Result<OracleKind> {
        match name {
            "scripted" => Ok(OracleKind::Scripted),
            "planner" => Ok(OracleKind::Planner),
            other => Err(Error::UnknownOracle(other.to_string(), oracle_names())),
        }
    }
}

pub fn oracle_names() -> String {
    "scripted, planner".to_string()
}

fn oracle_planner_config(horizon: usize) -> PlannerConfig {
    PlannerConfig {
        horizon,
        discount: 1.0,
        population: 64,
        elites: 8,
        policy_fraction: 0.25,
        iterations: 3,
        momentum: 0.1,
        temperature: 0.5,
        particles: 1,
        init_mean: 0.0,
        init_std: 1.0,
        min_std: 0.05,
        explore_start: 0.0,
        explore_end: 0.0,
        explore_steps: 1,
    }
}

/// Generate `n` successful episodes with the selected oracle, adding
/// Gaussian action noise of the given std before clipping. Fails if
/// 10 n attempts do not yield n successes.
pub fn generate_demos(
    env_cfg: &EnvConfig,
    kind: OracleKind,
    n: usize,
    noise_std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Episode>> {
    assert!(n >= 1, "demo count must be at least 1");
    assert!(noise_std >= 0.0, "demo noise std must be non-negative");
    let mut env = make_env(env_cfg)?;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let plan_cfg = oracle_planner_config(5);
    let mut episodes = Vec::with_capacity(n);
    let max_attempts = 10 * n;
    let mut attempts = 0;
    while episodes.len() < n && attempts < max_attempts {
        attempts += 1;
        let mut observations = vec![env.reset(rng)];
        let mut actions = Vec::with_capacity(env_cfg.episode_len);
        let mut rewards = Vec::with_capacity(env_cfg.episode_len);
        let mut plan_state = PlanState::fresh(&plan_cfg, env.action_dim());
        let mut success = false;
        loop {
            let mut action = match kind {
                OracleKind::Scripted => env.scripted_action(),
                OracleKind::Planner => {
                    let model = env.true_plan_model();
                    let z0 = env.plan_state();
                    let (a, next, _) = mppi_plan(model.as_ref(), &z0, &plan_cfg, &plan_state, 0.0, rng)?;
                    plan_state = next;
                    a
                }
            };
            if noise_std > 0.0 {
                for v in &mut action {
                    *v = (*v + noise_std * normal.sample(rng)).clamp(-1.0, 1.0);
                }
            }
            let out = env.step(&action);
            observations.push(out.obs);
            actions.push(action);
            rewards.push(out.reward);
            success |= out.success;
            if out.done {
                break;
            }
        }
        if !success {
            continue;
        }
        episodes.push(Episode { observations, actions, rewards, success, source: Source::Demo });
    }
    if episodes.len() < n {
        return Err(Error::OracleFailed { need: n, got: episodes.len(), attempts });
    }
    Ok(episodes)
}

/// Draw independent uniform actions in [-1, 1]^A (random-exploration
/// seeding and baseline rollouts).
pub fn uniform_action(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}
