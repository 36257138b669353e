//! Point-mass tasks on the [-1, 1]^2 arena: reach a goal region, or push a
//! free object into it. Damped double-integrator dynamics keep the tasks
//! smooth and PD-solvable while the sparse reward starves undirected
//! exploration.

use std::collections::VecDeque;

use autodiff::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Env, EnvConfig, Observation, StepOut};
use crate::planner::PlanModel;

pub const DAMPING: f64 = 0.9;
pub const MAX_SPEED: f64 = 0.1;
pub const ACCEL_GAIN: f64 = 0.02;
pub const AGENT_RADIUS: f64 = 0.12;
pub const OBJECT_RADIUS: f64 = 0.10;

const GOAL_LEVEL: f64 = 0.25;
const OBJECT_LEVEL: f64 = 0.4;
const AGENT_LEVEL: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskMode {
    Reach,
    Push,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointState {
    pub agent: [f64; 2],
    pub vel: [f64; 2],
    pub object: [f64; 2],
    pub goal: [f64; 2],
    pub t: usize,
}

pub struct PointEnv {
    cfg: EnvConfig,
    mode: TaskMode,
    state: PointState,
    frames: VecDeque<Vec<f64>>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl PointEnv {
    pub fn reach(cfg: EnvConfig) -> PointEnv {
        Self::new(cfg, TaskMode::Reach)
    }

    pub fn push(cfg: EnvConfig) -> PointEnv {
        Self::new(cfg, TaskMode::Push)
    }

    fn new(cfg: EnvConfig, mode: TaskMode) -> PointEnv {
        assert!(cfg.grid_size >= 16, "grid size {} below minimum 16", cfg.grid_size);
        assert!(cfg.episode_len > 0 && cfg.action_repeat >= 1 && cfg.goal_radius > 0.0);
        PointEnv {
            cfg,
            mode,
            state: PointState {
                agent: [0.0; 2],
                vel: [0.0; 2],
                object: [10.0; 2],
                goal: [0.5; 2],
                t: 0,
            },
            frames: VecDeque::new(),
        }
    }

    pub fn mode(&self) -> TaskMode {
        self.mode
    }

    pub fn state(&self) -> PointState {
        self.state
    }

    /// Place entities directly (scripted scenarios and tests).
    pub fn place(&mut self, agent: [f64; 2], vel: [f64; 2], object: [f64; 2], goal: [f64; 2]) {
        self.state = PointState { agent, vel, object, goal, t: self.state.t };
        self.refill_frames();
    }

    fn refill_frames(&mut self) {
        let frame = self.render_frame();
        self.frames.clear();
        for _ in 0..self.cfg.frame_stack {
            self.frames.push_back(frame.clone());
        }
    }

    fn success_now(&self) -> bool {
        match self.mode {
            TaskMode::Reach => dist(self.state.agent, self.state.goal) <= self.cfg.goal_radius,
            TaskMode::Push => dist(self.state.object, self.state.goal) <= self.cfg.goal_radius,
        }
    }

    fn physics_step(&mut self, action: [f64; 2]) {
        let s = &mut self.state;
        for k in 0..2 {
            s.vel[k] = (s.vel[k] + action[k] * ACCEL_GAIN) * DAMPING;
        }
        let speed = (s.vel[0] * s.vel[0] + s.vel[1] * s.vel[1]).sqrt();
        if speed > MAX_SPEED {
            let f = MAX_SPEED / speed;
            s.vel[0] *= f;
            s.vel[1] *= f;
        }
        for k in 0..2 {
            s.agent[k] = (s.agent[k] + s.vel[k]).clamp(-1.0, 1.0);
        }
        if self.mode == TaskMode::Push {
            let contact = AGENT_RADIUS + OBJECT_RADIUS;
            let d = dist(s.agent, s.object);
            if d < contact {
                let n = if d > 1e-9 {
                    [(s.object[0] - s.agent[0]) / d, (s.object[1] - s.agent[1]) / d]
                } else {
                    [1.0, 0.0]
                };
                for k in 0..2 {
                    s.object[k] =
                        (s.agent[k] + n[k] * contact).clamp(-1.0 + OBJECT_RADIUS, 1.0 - OBJECT_RADIUS);
                }
            }
        }
    }

    /// Deterministic rasterization of the current state: goal, object and
    /// agent discs blended additively (clamped to 1) on an S x S grid, so
    /// overlaps keep a distinct brightness signature instead of occluding.
    pub fn render_frame(&self) -> Vec<f64> {
        let s = self.cfg.grid_size;
        let mut img: Vec<f64> = vec![0.0; s * s];
        let mut discs: Vec<([f64; 2], f64, f64)> =
            vec![(self.state.goal, self.cfg.goal_radius, GOAL_LEVEL)];
        if self.mode == TaskMode::Push {
            discs.push((self.state.object, OBJECT_RADIUS, OBJECT_LEVEL));
        }
        discs.push((self.state.agent, AGENT_RADIUS, AGENT_LEVEL));
        for (center, radius, level) in discs {
            disc_footprint(s, center, draw_radius(s, radius), |idx, cov| {
                img[idx] = (img[idx] + level * cov).min(1.0);
            });
        }
        img
    }

    fn observe(&mut self) -> Observation {
        let frame = self.render_frame();
        self.frames.push_back(frame);
        while self.frames.len() > self.cfg.frame_stack {
            self.frames.pop_front();
        }
        let s = self.cfg.grid_size;
        let mut data = Vec::with_capacity(self.cfg.frame_stack * s * s);
        for f in &self.frames {
            data.extend_from_slice(f);
        }
        Observation {
            image: Tensor::new(vec![self.cfg.frame_stack, 1, s, s], data),
            proprio: vec![self.state.agent[0], self.state.agent[1], self.state.vel[0], self.state.vel[1]],
        }
    }
}

/// Radius a disc is drawn with: the physical radius, floored so every
/// entity stays resolvable on coarse grids.
pub fn draw_radius(grid: usize, radius: f64) -> f64 {
    radius.max(1.5 * 2.0 / grid as f64)
}

/// Pixel coverage of a disc, cell by cell. Coverage is 1 deep inside the
/// disc and falls off linearly over one pixel at the rim, so sub-pixel
/// positions remain visible in the render.
pub fn disc_footprint(
    grid: usize,
    center: [f64; 2],
    radius: f64,
    mut visit: impl FnMut(usize, f64),
) {
    let pitch = 2.0 / grid as f64;
    for row in 0..grid {
        let y = -1.0 + (2.0 * row as f64 + 1.0) / grid as f64;
        for col in 0..grid {
            let x = -1.0 + (2.0 * col as f64 + 1.0) / grid as f64;
            let d = ((x - center[0]).powi(2) + (y - center[1]).powi(2)).sqrt();
            let cov = ((radius - d) / pitch + 0.5).clamp(0.0, 1.0);
            if cov > 0.0 {
                visit(row * grid + col, cov);
            }
        }
    }
}

impl Env for PointEnv {
    fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn proprio_dim(&self) -> usize {
        4
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Observation {
        let min_sep = (2.0 * self.cfg.goal_radius).max(0.8);
        // Goals stay in the central region: near the walls the zero-padded
        // convolution reads positions poorly at coarse grids.
        let goal = [rng.gen_range(-0.55..0.55), rng.gen_range(-0.55..0.55)];
        let agent = loop {
            let a = [rng.gen_range(-0.85..0.85), rng.gen_range(-0.85..0.85)];
            let d = dist(a, goal);
            match self.mode {
                TaskMode::Reach if d >= min_sep => break a,
                TaskMode::Push if (0.9..=1.7).contains(&d) => break a,
                _ => continue,
            }
        };
        let object = if self.mode == TaskMode::Push {
            loop {
                let u: f64 = rng.gen_range(0.35..0.55);
                let jitter: f64 = rng.gen_range(-0.06..0.06);
                let dir = [goal[0] - agent[0], goal[1] - agent[1]];
                let len = dist(agent, goal).max(1e-9);
                let perp = [-dir[1] / len, dir[0] / len];
                let o = [
                    (agent[0] + u * dir[0] + jitter * perp[0]).clamp(-0.7, 0.7),
                    (agent[1] + u * dir[1] + jitter * perp[1]).clamp(-0.7, 0.7),
                ];
                if dist(o, goal) >= 2.0 * self.cfg.goal_radius
                    && dist(o, agent) > AGENT_RADIUS + OBJECT_RADIUS
                {
                    break o;
                }
            }
        } else {
            // Parked far outside the arena; reach renders no object.
            [10.0, 10.0]
        };
        self.state = PointState { agent, vel: [0.0; 2], object, goal, t: 0 };
        let frame = self.render_frame();
        self.frames.clear();
        for _ in 0..self.cfg.frame_stack.saturating_sub(1) {
            self.frames.push_back(frame.clone());
        }
        self.frames.push_back(frame);
        let s = self.cfg.grid_size;
        let mut data = Vec::with_capacity(self.cfg.frame_stack * s * s);
        for f in &self.frames {
            data.extend_from_slice(f);
        }
        Observation {
            image: Tensor::new(vec![self.cfg.frame_stack, 1, s, s], data),
            proprio: vec![agent[0], agent[1], 0.0, 0.0],
        }
    }

    fn step(&mut self, action: &[f64]) -> StepOut {
        assert_eq!(action.len(), 2, "point task takes 2-d actions");
        let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
        for _ in 0..self.cfg.action_repeat {
            self.physics_step(a);
        }
        self.state.t += 1;
        let success = self.success_now();
        StepOut {
            obs: self.observe(),
            reward: if success { 1.0 } else { 0.0 },
            done: self.state.t >= self.cfg.episode_len,
            success,
        }
    }

    fn true_plan_model(&self) -> Box<dyn PlanModel> {
        Box::new(TruePointModel {
            mode: self.mode,
            action_repeat: self.cfg.action_repeat,
            goal: self.state.goal,
        })
    }

    fn plan_state(&self) -> Vec<f64> {
        let s = &self.state;
        vec![s.agent[0], s.agent[1], s.vel[0], s.vel[1], s.object[0], s.object[1]]
    }

    fn scripted_action(&self) -> Vec<f64> {
        let s = &self.state;
        let target = match self.mode {
            TaskMode::Reach => s.goal,
            TaskMode::Push => {
                // Blend smoothly between a point behind the object (on the
                // object-goal line) and the goal itself as the approach
                // direction lines up, so the cloned action field has no
                // discontinuity.
                let to_goal = [s.goal[0] - s.object[0], s.goal[1] - s.object[1]];
                let len = dist(s.object, s.goal).max(1e-9);
                let behind = [
                    s.object[0] - to_goal[0] / len * (AGENT_RADIUS + OBJECT_RADIUS) * 0.8,
                    s.object[1] - to_goal[1] / len * (AGENT_RADIUS + OBJECT_RADIUS) * 0.8,
                ];
                let to_obj = [s.object[0] - s.agent[0], s.object[1] - s.agent[1]];
                let d = dist(s.agent, s.object).max(1e-9);
                let dot = (to_obj[0] * to_goal[0] + to_obj[1] * to_goal[1]) / (d * len);
                let blend = ((dot - 0.5) / 0.45).clamp(0.0, 1.0);
                [
                    behind[0] + blend * (s.goal[0] - behind[0]),
                    behind[1] + blend * (s.goal[1] - behind[1]),
                ]
            }
        };
        pd_action(s.agent, s.vel, target)
    }
}

/// PD controller toward a target point, tuned for the damped
/// double-integrator above.
pub fn pd_action(pos: [f64; 2], vel: [f64; 2], target: [f64; 2]) -> Vec<f64> {
    const KP: f64 = 6.0;
    const KD: f64 = 40.0;
    (0..2).map(|k| (KP * (target[k] - pos[k]) - KD * vel[k]).clamp(-1.0, 1.0)).collect()
}

/// Ground-truth dynamics over the raw physical state, with a dense
/// progress objective standing in for reward and value heads.
/// State layout: [agent_x, agent_y, vel_x, vel_y, object_x, object_y].
struct TruePointModel {
    mode: TaskMode,
    action_repeat: usize,
    goal: [f64; 2],
}

impl PlanModel for TruePointModel {
    fn latent_dim(&self) -> usize {
        6
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn step(&self, z: &Tensor, a: &Tensor) -> (Tensor, Vec<f64>) {
        let n = z.shape()[0];
        let mut out = vec![0.0; n * 6];
        let mut rewards = vec![0.0; n];
        for i in 0..n {
            let s = &z.data()[i * 6..(i + 1) * 6];
            let mut agent = [s[0], s[1]];
            let mut vel = [s[2], s[3]];
            let mut object = [s[4], s[5]];
            let act = [a.data()[i * 2].clamp(-1.0, 1.0), a.data()[i * 2 + 1].clamp(-1.0, 1.0)];
            for _ in 0..self.action_repeat {
                for k in 0..2 {
                    vel[k] = (vel[k] + act[k] * ACCEL_GAIN) * DAMPING;
                }
                let speed = (vel[0] * vel[0] + vel[1] * vel[1]).sqrt();
                if speed > MAX_SPEED {
                    let f = MAX_SPEED / speed;
                    vel[0] *= f;
                    vel[1] *= f;
                }
                for k in 0..2 {
                    agent[k] = (agent[k] + vel[k]).clamp(-1.0, 1.0);
                }
                if self.mode == TaskMode::Push {
                    let contact = AGENT_RADIUS + OBJECT_RADIUS;
                    let d = dist(agent, object);
                    if d < contact {
                        let nvec = if d > 1e-9 {
                            [(object[0] - agent[0]) / d, (object[1] - agent[1]) / d]
                        } else {
                            [1.0, 0.0]
                        };
                        for k in 0..2 {
                            object[k] = (agent[k] + nvec[k] * contact)
                                .clamp(-1.0 + OBJECT_RADIUS, 1.0 - OBJECT_RADIUS);
                        }
                    }
                }
            }
            out[i * 6..(i + 1) * 6]
                .copy_from_slice(&[agent[0], agent[1], vel[0], vel[1], object[0], object[1]]);
            rewards[i] = match self.mode {
                TaskMode::Reach => -dist(agent, self.goal),
                TaskMode::Push => -dist(object, self.goal) - 0.3 * dist(agent, object),
            };
        }
        (Tensor::new(vec![n, 6], out), rewards)
    }

    fn terminal_value(&self, z: &Tensor) -> Vec<f64> {
        let n = z.shape()[0];
        (0..n)
            .map(|i| {
                let s = &z.data()[i * 6..(i + 1) * 6];
                match self.mode {
                    TaskMode::Reach => -dist([s[0], s[1]], self.goal),
                    TaskMode::Push => {
                        -dist([s[4], s[5]], self.goal) - 0.3 * dist([s[0], s[1]], [s[4], s[5]])
                    }
                }
            })
            .collect()
    }

    fn prior_action(&self, z: &Tensor) -> Tensor {
        let n = z.shape()[0];
        let mut out = vec![0.0; n * 2];
        for i in 0..n {
            let s = &z.data()[i * 6..(i + 1) * 6];
            let target = match self.mode {
                TaskMode::Reach => self.goal,
                TaskMode::Push => [s[4], s[5]],
            };
            let a = pd_action([s[0], s[1]], [s[2], s[3]], target);
            out[i * 2] = a[0];
            out[i * 2 + 1] = a[1];
        }
        Tensor::new(vec![n, 2], out)
    }
}
