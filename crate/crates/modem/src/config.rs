//! Flat `key = value` experiment configuration: defaults, file parsing,
//! flag overrides, strict unknown-key rejection, and a canonical snapshot
//! writer whose output re-parses to the same configuration.

use std::fmt::Write as _;
use std::path::Path;

use autodiff::AdamConfig;

use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::model::{LossConfig, NetConfig};
use crate::planner::PlannerConfig;
use crate::replay::ReplayConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // environment
    pub task: String,
    pub grid_size: usize,
    pub episode_len: usize,
    pub action_repeat: usize,
    pub goal_radius: f64,
    // run
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub demo_count: usize,
    pub interaction_budget: usize,
    pub seed_steps: usize,
    pub batch_size: usize,
    pub updates_per_step: usize,
    pub target_update_freq: usize,
    pub pretrain_updates: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    // phase toggles
    pub pretrain_policy: bool,
    pub bc_seeding: bool,
    pub oversample: bool,
    // model
    pub latent_dim: usize,
    pub mlp_hidden: usize,
    pub enc_hidden: usize,
    pub conv_channels: usize,
    pub frame_stack: usize,
    pub lr: f64,
    pub grad_clip: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub ema_coef: f64,
    // loss
    pub discount: f64,
    pub temporal_coef: f64,
    pub td_coef: f64,
    pub reward_coef: f64,
    pub consistency_coef: f64,
    pub horizon: usize,
    // planner
    pub plan_population: usize,
    pub plan_elites: usize,
    pub plan_policy_fraction: f64,
    pub plan_iterations: usize,
    pub plan_momentum: f64,
    pub plan_temperature: f64,
    pub plan_particles: usize,
    pub plan_init_mean: f64,
    pub plan_init_std: f64,
    pub plan_min_std: f64,
    pub explore_start: f64,
    pub explore_end: f64,
    pub explore_steps: usize,
    // replay
    pub demo_ratio_start: f64,
    pub demo_ratio_end: f64,
    pub demo_ratio_steps: usize,
    pub demo_ratio_constant: bool,
    pub per_alpha: f64,
    pub per_beta: f64,
    pub per_floor: f64,
    pub augment: bool,
    /// `None` = derived from the grid size at the full-scale pixel ratio.
    pub max_shift: Option<usize>,
    // io
    pub demo_file: String,
    pub out_dir: String,
    pub demo_oracle: String,
    pub demo_noise: f64,
    pub log_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: "point_reach".into(),
            grid_size: 32,
            episode_len: 50,
            action_repeat: 2,
            goal_radius: 0.2,
            seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            demo_count: 5,
            interaction_budget: 20_000,
            seed_steps: 5_000,
            batch_size: 256,
            updates_per_step: 1,
            target_update_freq: 2,
            pretrain_updates: 2_000,
            eval_interval: 1_000,
            eval_episodes: 10,
            pretrain_policy: true,
            bc_seeding: true,
            oversample: true,
            latent_dim: 24,
            mlp_hidden: 128,
            enc_hidden: 64,
            conv_channels: 16,
            frame_stack: 2,
            lr: 3e-4,
            grad_clip: 10.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            ema_coef: 0.99,
            discount: 0.99,
            temporal_coef: 0.5,
            td_coef: 0.1,
            reward_coef: 0.5,
            consistency_coef: 2.0,
            horizon: 5,
            plan_population: 512,
            plan_elites: 64,
            plan_policy_fraction: 0.05,
            plan_iterations: 6,
            plan_momentum: 0.1,
            plan_temperature: 0.5,
            plan_particles: 1,
            plan_init_mean: 0.0,
            plan_init_std: 2.0,
            plan_min_std: 0.05,
            explore_start: 0.1,
            explore_end: 0.05,
            explore_steps: 25_000,
            demo_ratio_start: 0.75,
            demo_ratio_end: 0.25,
            demo_ratio_steps: 100_000,
            demo_ratio_constant: false,
            per_alpha: 0.6,
            per_beta: 0.4,
            per_floor: 1e-4,
            augment: true,
            max_shift: None,
            demo_file: "demos.jsonl".into(),
            out_dir: "runs".into(),
            demo_oracle: "scripted".into(),
            demo_noise: 0.0,
            log_wall_time: false,
        }
    }
}

/// Every recognized key, in canonical snapshot order.
pub const KEYS: &[&str] = &[
    "task",
    "grid_size",
    "episode_len",
    "action_repeat",
    "goal_radius",
    "seed",
    "seeds",
    "demo_count",
    "interaction_budget",
    "seed_steps",
    "batch_size",
    "updates_per_step",
    "target_update_freq",
    "pretrain_updates",
    "eval_interval",
    "eval_episodes",
    "pretrain_policy",
    "bc_seeding",
    "oversample",
    "latent_dim",
    "mlp_hidden",
    "enc_hidden",
    "conv_channels",
    "frame_stack",
    "lr",
    "grad_clip",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "ema_coef",
    "discount",
    "temporal_coef",
    "td_coef",
    "reward_coef",
    "consistency_coef",
    "horizon",
    "plan_population",
    "plan_elites",
    "plan_policy_fraction",
    "plan_iterations",
    "plan_momentum",
    "plan_temperature",
    "plan_particles",
    "plan_init_mean",
    "plan_init_std",
    "plan_min_std",
    "explore_start",
    "explore_end",
    "explore_steps",
    "demo_ratio_start",
    "demo_ratio_end",
    "demo_ratio_steps",
    "demo_ratio_constant",
    "per_alpha",
    "per_beta",
    "per_floor",
    "augment",
    "max_shift",
    "demo_file",
    "out_dir",
    "demo_oracle",
    "demo_noise",
    "log_wall_time",
];

fn parse_as<T: std::str::FromStr>(key: &str, value: &str, kind: &str) -> Result<T> {
    value.trim().parse::<T>().map_err(|_| Error::BadValue {
        key: key.into(),
        message: format!("'{}' is not a valid {}", value.trim(), kind),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        other => Err(Error::BadValue {
            key: key.into(),
            message: format!("'{}' is not a boolean (true/false)", other),
        }),
    }
}

fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn nearest_key(unknown: &str) -> Option<String> {
    KEYS.iter()
        .map(|k| (edit_distance(unknown, k), *k))
        .min()
        .filter(|(d, _)| *d <= 3)
        .map(|(_, k)| k.to_string())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "task" => self.task = value.trim().to_string(),
            "grid_size" => self.grid_size = parse_as(key, value, "unsigned integer")?,
            "episode_len" => self.episode_len = parse_as(key, value, "unsigned integer")?,
            "action_repeat" => self.action_repeat = parse_as(key, value, "unsigned integer")?,
            "goal_radius" => self.goal_radius = parse_as(key, value, "number")?,
            "seed" => self.seed = parse_as(key, value, "unsigned integer")?,
            "seeds" => {
                let mut seeds = Vec::new();
                for part in value.split(',') {
                    seeds.push(parse_as::<u64>(key, part, "unsigned integer")?);
                }
                if seeds.is_empty() {
                    return Err(Error::BadValue { key: key.into(), message: "empty list".into() });
                }
                self.seeds = seeds;
            }
            "demo_count" => self.demo_count = parse_as(key, value, "unsigned integer")?,
            "interaction_budget" => {
                self.interaction_budget = parse_as(key, value, "unsigned integer")?
            }
            "seed_steps" => self.seed_steps = parse_as(key, value, "unsigned integer")?,
            "batch_size" => self.batch_size = parse_as(key, value, "unsigned integer")?,
            "updates_per_step" => self.updates_per_step = parse_as(key, value, "unsigned integer")?,
            "target_update_freq" => {
                self.target_update_freq = parse_as(key, value, "unsigned integer")?
            }
            "pretrain_updates" => self.pretrain_updates = parse_as(key, value, "unsigned integer")?,
            "eval_interval" => self.eval_interval = parse_as(key, value, "unsigned integer")?,
            "eval_episodes" => self.eval_episodes = parse_as(key, value, "unsigned integer")?,
            "pretrain_policy" => self.pretrain_policy = parse_bool(key, value)?,
            "bc_seeding" => self.bc_seeding = parse_bool(key, value)?,
            "oversample" => self.oversample = parse_bool(key, value)?,
            "latent_dim" => self.latent_dim = parse_as(key, value, "unsigned integer")?,
            "mlp_hidden" => self.mlp_hidden = parse_as(key, value, "unsigned integer")?,
            "enc_hidden" => self.enc_hidden = parse_as(key, value, "unsigned integer")?,
            "conv_channels" => self.conv_channels = parse_as(key, value, "unsigned integer")?,
            "frame_stack" => self.frame_stack = parse_as(key, value, "unsigned integer")?,
            "lr" => self.lr = parse_as(key, value, "number")?,
            "grad_clip" => self.grad_clip = parse_as(key, value, "number")?,
            "adam_beta1" => self.adam_beta1 = parse_as(key, value, "number")?,
            "adam_beta2" => self.adam_beta2 = parse_as(key, value, "number")?,
            "adam_eps" => self.adam_eps = parse_as(key, value, "number")?,
            "ema_coef" => self.ema_coef = parse_as(key, value, "number")?,
            "discount" => self.discount = parse_as(key, value, "number")?,
            "temporal_coef" => self.temporal_coef = parse_as(key, value, "number")?,
            "td_coef" => self.td_coef = parse_as(key, value, "number")?,
            "reward_coef" => self.reward_coef = parse_as(key, value, "number")?,
            "consistency_coef" => self.consistency_coef = parse_as(key, value, "number")?,
            "horizon" => self.horizon = parse_as(key, value, "unsigned integer")?,
            "plan_population" => self.plan_population = parse_as(key, value, "unsigned integer")?,
            "plan_elites" => self.plan_elites = parse_as(key, value, "unsigned integer")?,
            "plan_policy_fraction" => {
                self.plan_policy_fraction = parse_as(key, value, "number")?
            }
            "plan_iterations" => self.plan_iterations = parse_as(key, value, "unsigned integer")?,
            "plan_momentum" => self.plan_momentum = parse_as(key, value, "number")?,
            "plan_temperature" => self.plan_temperature = parse_as(key, value, "number")?,
            "plan_particles" => self.plan_particles = parse_as(key, value, "unsigned integer")?,
            "plan_init_mean" => self.plan_init_mean = parse_as(key, value, "number")?,
            "plan_init_std" => self.plan_init_std = parse_as(key, value, "number")?,
            "plan_min_std" => self.plan_min_std = parse_as(key, value, "number")?,
            "explore_start" => self.explore_start = parse_as(key, value, "number")?,
            "explore_end" => self.explore_end = parse_as(key, value, "number")?,
            "explore_steps" => self.explore_steps = parse_as(key, value, "unsigned integer")?,
            "demo_ratio_start" => self.demo_ratio_start = parse_as(key, value, "number")?,
            "demo_ratio_end" => self.demo_ratio_end = parse_as(key, value, "number")?,
            "demo_ratio_steps" => {
                self.demo_ratio_steps = parse_as(key, value, "unsigned integer")?
            }
            "demo_ratio_constant" => self.demo_ratio_constant = parse_bool(key, value)?,
            "per_alpha" => self.per_alpha = parse_as(key, value, "number")?,
            "per_beta" => self.per_beta = parse_as(key, value, "number")?,
            "per_floor" => self.per_floor = parse_as(key, value, "number")?,
            "augment" => self.augment = parse_bool(key, value)?,
            "max_shift" => {
                self.max_shift = if value.trim() == "auto" {
                    None
                } else {
                    Some(parse_as(key, value, "unsigned integer or 'auto'")?)
                }
            }
            "demo_file" => self.demo_file = value.trim().to_string(),
            "out_dir" => self.out_dir = value.trim().to_string(),
            "demo_oracle" => self.demo_oracle = value.trim().to_string(),
            "demo_noise" => self.demo_noise = parse_as(key, value, "number")?,
            "log_wall_time" => self.log_wall_time = parse_bool(key, value)?,
            _ => {
                return Err(Error::UnknownKey { key: key.into(), nearest: nearest_key(key) });
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> String {
        match key {
            "task" => self.task.clone(),
            "grid_size" => self.grid_size.to_string(),
            "episode_len" => self.episode_len.to_string(),
            "action_repeat" => self.action_repeat.to_string(),
            "goal_radius" => self.goal_radius.to_string(),
            "seed" => self.seed.to_string(),
            "seeds" => {
                self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
            }
            "demo_count" => self.demo_count.to_string(),
            "interaction_budget" => self.interaction_budget.to_string(),
            "seed_steps" => self.seed_steps.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "updates_per_step" => self.updates_per_step.to_string(),
            "target_update_freq" => self.target_update_freq.to_string(),
            "pretrain_updates" => self.pretrain_updates.to_string(),
            "eval_interval" => self.eval_interval.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "pretrain_policy" => self.pretrain_policy.to_string(),
            "bc_seeding" => self.bc_seeding.to_string(),
            "oversample" => self.oversample.to_string(),
            "latent_dim" => self.latent_dim.to_string(),
            "mlp_hidden" => self.mlp_hidden.to_string(),
            "enc_hidden" => self.enc_hidden.to_string(),
            "conv_channels" => self.conv_channels.to_string(),
            "frame_stack" => self.frame_stack.to_string(),
            "lr" => self.lr.to_string(),
            "grad_clip" => self.grad_clip.to_string(),
            "adam_beta1" => self.adam_beta1.to_string(),
            "adam_beta2" => self.adam_beta2.to_string(),
            "adam_eps" => self.adam_eps.to_string(),
            "ema_coef" => self.ema_coef.to_string(),
            "discount" => self.discount.to_string(),
            "temporal_coef" => self.temporal_coef.to_string(),
            "td_coef" => self.td_coef.to_string(),
            "reward_coef" => self.reward_coef.to_string(),
            "consistency_coef" => self.consistency_coef.to_string(),
            "horizon" => self.horizon.to_string(),
            "plan_population" => self.plan_population.to_string(),
            "plan_elites" => self.plan_elites.to_string(),
            "plan_policy_fraction" => self.plan_policy_fraction.to_string(),
            "plan_iterations" => self.plan_iterations.to_string(),
            "plan_momentum" => self.plan_momentum.to_string(),
            "plan_temperature" => self.plan_temperature.to_string(),
            "plan_particles" => self.plan_particles.to_string(),
            "plan_init_mean" => self.plan_init_mean.to_string(),
            "plan_init_std" => self.plan_init_std.to_string(),
            "plan_min_std" => self.plan_min_std.to_string(),
            "explore_start" => self.explore_start.to_string(),
            "explore_end" => self.explore_end.to_string(),
            "explore_steps" => self.explore_steps.to_string(),
            "demo_ratio_start" => self.demo_ratio_start.to_string(),
            "demo_ratio_end" => self.demo_ratio_end.to_string(),
            "demo_ratio_steps" => self.demo_ratio_steps.to_string(),
            "demo_ratio_constant" => self.demo_ratio_constant.to_string(),
            "per_alpha" => self.per_alpha.to_string(),
            "per_beta" => self.per_beta.to_string(),
            "per_floor" => self.per_floor.to_string(),
            "augment" => self.augment.to_string(),
            "max_shift" => self.resolved_max_shift().to_string(),
            "demo_file" => self.demo_file.clone(),
            "out_dir" => self.out_dir.clone(),
            "demo_oracle" => self.demo_oracle.clone(),
            "demo_noise" => self.demo_noise.to_string(),
            "log_wall_time" => self.log_wall_time.to_string(),
            _ => unreachable!("get: unknown key {}", key),
        }
    }

    /// Shift magnitude at the full-scale pixel ratio (10/224 of the image
    /// side, rounded up) unless set explicitly.
    pub fn resolved_max_shift(&self) -> usize {
        self.max_shift
            .unwrap_or_else(|| (self.grid_size as f64 * 10.0 / 224.0).ceil() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| -> Result<()> {
            Err(Error::BadValue { key: key.into(), message: message.into() })
        };
        if self.grid_size < 16 {
            return bad("grid_size", "must be at least 16");
        }
        if self.episode_len == 0 {
            return bad("episode_len", "must be positive");
        }
        if self.action_repeat == 0 {
            return bad("action_repeat", "must be at least 1");
        }
        if self.goal_radius <= 0.0 {
            return bad("goal_radius", "must be positive");
        }
        if !(0.0..1.0).contains(&self.discount) {
            return bad("discount", "must lie in [0, 1)");
        }
        if !(self.temporal_coef > 0.0 && self.temporal_coef <= 1.0) {
            return bad("temporal_coef", "must lie in (0, 1]");
        }
        if self.td_coef < 0.0 || self.reward_coef < 0.0 || self.consistency_coef < 0.0 {
            return bad("td_coef", "loss coefficients must be non-negative");
        }
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1");
        }
        if self.episode_len < self.horizon + 1 {
            return bad("episode_len", "must be at least horizon + 1");
        }
        if self.seed_steps == 0 || self.seed_steps > self.interaction_budget {
            return bad("seed_steps", "must lie in 1..=interaction_budget");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.updates_per_step == 0 {
            return bad("updates_per_step", "must be at least 1");
        }
        if self.target_update_freq == 0 {
            return bad("target_update_freq", "must be at least 1");
        }
        if self.eval_interval == 0 {
            return bad("eval_interval", "must be positive");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes", "must be positive");
        }
        if self.frame_stack == 0 {
            return bad("frame_stack", "must be at least 1");
        }
        if self.latent_dim == 0 || self.mlp_hidden == 0 || self.enc_hidden == 0 {
            return bad("latent_dim", "model widths must be positive");
        }
        if self.conv_channels == 0 {
            return bad("conv_channels", "must be positive");
        }
        if self.lr <= 0.0 {
            return bad("lr", "must be positive");
        }
        if self.grad_clip < 0.0 {
            return bad("grad_clip", "must be non-negative (0 disables)");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam_beta1", "betas must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.ema_coef) {
            return bad("ema_coef", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.demo_ratio_start)
            || !(0.0..=1.0).contains(&self.demo_ratio_end)
        {
            return bad("demo_ratio_start", "ratios must lie in [0, 1]");
        }
        if self.per_alpha < 0.0 || self.per_beta < 0.0 {
            return bad("per_alpha", "PER exponents must be non-negative");
        }
        if self.per_floor <= 0.0 {
            return bad("per_floor", "must be positive");
        }
        if self.resolved_max_shift() >= self.grid_size {
            return bad("max_shift", "must be smaller than the image side");
        }
        self.planner_config().validate()?;
        Ok(())
    }

    // ── derived views ───────────────────────────────────────────────────

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            task: self.task.clone(),
            grid_size: self.grid_size,
            episode_len: self.episode_len,
            action_repeat: self.action_repeat,
            goal_radius: self.goal_radius,
            frame_stack: self.frame_stack,
        }
    }

    pub fn net_config(&self, proprio_dim: usize, action_dim: usize) -> NetConfig {
        NetConfig {
            image_side: self.grid_size,
            image_channels: 1,
            frame_stack: self.frame_stack,
            proprio_dim,
            action_dim,
            latent_dim: self.latent_dim,
            mlp_hidden: self.mlp_hidden,
            enc_hidden: self.enc_hidden,
            conv_channels: self.conv_channels,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            discount: self.discount,
            temporal_coef: self.temporal_coef,
            td_coef: self.td_coef,
            reward_coef: self.reward_coef,
            consistency_coef: self.consistency_coef,
            horizon: self.horizon,
        }
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            horizon: self.horizon,
            discount: self.discount,
            population: self.plan_population,
            elites: self.plan_elites,
            policy_fraction: self.plan_policy_fraction,
            iterations: self.plan_iterations,
            momentum: self.plan_momentum,
            temperature: self.plan_temperature,
            particles: self.plan_particles,
            init_mean: self.plan_init_mean,
            init_std: self.plan_init_std,
            min_std: self.plan_min_std,
            explore_start: self.explore_start,
            explore_end: self.explore_end,
            explore_steps: self.explore_steps,
        }
    }

    pub fn replay_config(&self) -> ReplayConfig {
        ReplayConfig {
            demo_ratio_start: self.demo_ratio_start,
            demo_ratio_end: self.demo_ratio_end,
            demo_ratio_steps: self.demo_ratio_steps,
            demo_ratio_constant: self.demo_ratio_constant,
            per_alpha: self.per_alpha,
            per_beta: self.per_beta,
            per_floor: self.per_floor,
            augment: self.augment,
            max_shift: self.resolved_max_shift(),
            horizon: self.horizon,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// Canonical snapshot: every key, schema order, `key = value` lines.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{} = {}", key, self.get(key)).unwrap();
        }
        out
    }
}

/// Parse a config file (flat `key = value` lines, `#` comments) and apply
/// flag overrides on top. Defaults fill everything else. Unknown keys and
/// out-of-range values are rejected with the offending key named.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        apply_config_text(&mut cfg, &text)?;
    }
    for (key, value) in overrides {
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn apply_config_text(cfg: &mut RunConfig, text: &str) -> Result<()> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::BadLine { line: lineno + 1, text: raw.to_string() });
        };
        cfg.set(key.trim(), value.trim())?;
    }
    Ok(())
}
