//! The three training phases wired together: policy pretraining on
//! demonstrations, seeding rollouts plus model pretraining, then
//! interactive learning with planning, prioritized replay, and
//! demonstration oversampling. Evaluation interleaves on the interaction
//! step counter.

use std::time::Instant;

use autodiff::{AdamState, Graph, Tensor};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::envs::{make_env, uniform_action, Env, Observation};
use crate::error::{Error, Result};
use crate::model::{
    bc_loss, ema_update, policy_loss, tdmpc_loss, LossConfig, ModelParams, TrainBatch,
};
use crate::planner::{explore_noise, mppi_plan, LearnedPlanModel, PlanState, PlannerConfig};
use crate::replay::{demo_ratio, BufferPools, Episode, SampleHandle, Source};
use crate::rng::derive_rng;

/// Scale a gradient set so its global L2 norm stays within `max_norm`.
/// Returns `None` when no rescaling is needed (or clipping is disabled).
pub fn clip_gradients(grads: &[Option<Tensor>], max_norm: f64) -> Option<Vec<Option<Tensor>>> {
    if max_norm <= 0.0 {
        return None;
    }
    let sq: f64 = grads
        .iter()
        .flatten()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm <= max_norm {
        return None;
    }
    let scale = max_norm / norm;
    Some(
        grads
            .iter()
            .map(|g| {
                g.as_ref().map(|t| {
                    Tensor::new(t.shape().to_vec(), t.iter().map(|v| v * scale).collect())
                })
            })
            .collect(),
    )
}

/// Encode one observation with the given parameters: latent row [1, Z].
pub fn encode_observation(params: &ModelParams, obs: &Observation) -> Tensor {
    let mut g = Graph::inference();
    let cfg = &params.cfg;
    let img = Tensor::new(
        vec![1, cfg.conv_in_channels(), cfg.image_side, cfg.image_side],
        obs.image.data().to_vec(),
    );
    let prop = Tensor::new(vec![1, cfg.proprio_dim], obs.proprio.clone());
    params.encode(&mut g, &img, &prop)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseToggles {
    pub pretrain_policy: bool,
    pub bc_seeding: bool,
    pub oversample: bool,
}

/// One metrics record. Missing values stay `None` and are written as empty
/// CSV fields, never as zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub phase: u8,
    pub td_loss: Option<f64>,
    pub reward_loss: Option<f64>,
    pub consistency_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub bc_loss: Option<f64>,
    pub kappa: f64,
    pub epsilon: f64,
    pub episode_return: Option<f64>,
    pub eval_success_rate: Option<f64>,
    pub wall_seconds: Option<f64>,
}

pub struct RunOutput {
    pub metrics: Vec<MetricsRow>,
    pub params: ModelParams,
    pub final_eval_success: f64,
    pub final_eval_return: f64,
    pub parameter_count: usize,
}

#[derive(Default)]
struct LossAccum {
    td: f64,
    reward: f64,
    consistency: f64,
    policy: f64,
    n: usize,
}

impl LossAccum {
    fn push(&mut self, td: f64, reward: f64, consistency: f64, policy: f64) {
        self.td += td;
        self.reward += reward;
        self.consistency += consistency;
        self.policy += policy;
        self.n += 1;
    }

    fn drain(&mut self) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
        if self.n == 0 {
            return (None, None, None, None);
        }
        let n = self.n as f64;
        let out =
            (Some(self.td / n), Some(self.reward / n), Some(self.consistency / n), Some(self.policy / n));
        *self = LossAccum::default();
        out
    }
}

/// Phase-by-phase pipeline driver. [`run_modem`] wires the phases together;
/// tests and tools can run them individually.
pub struct Runner {
    cfg: RunConfig,
    loss_cfg: LossConfig,
    plan_cfg: PlannerConfig,
    env: Box<dyn Env>,
    params: ModelParams,
    target: ModelParams,
    adam: AdamState,
    pools: BufferPools,
    step: usize,
    update_count: usize,
    eval_count: usize,
    env_rng: ChaCha8Rng,
    act_rng: ChaCha8Rng,
    plan_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    losses: LossAccum,
    metrics: Vec<MetricsRow>,
    started: Instant,
    final_eval: (f64, f64),
}

impl Runner {
    pub fn new(cfg: &RunConfig, demos: Vec<Episode>) -> Result<Runner> {
        cfg.validate()?;
        let env = make_env(&cfg.env_config())?;
        let net_cfg = cfg.net_config(env.proprio_dim(), env.action_dim());
        let mut init_rng = derive_rng(cfg.seed, 0x1217);
        let params = ModelParams::init(net_cfg, &mut init_rng)?;
        let target = params.clone();
        let flat = params.flat();
        let refs: Vec<&Tensor> = flat.iter().collect();
        let adam = AdamState::new(&refs, cfg.adam_config());
        let mut pools = BufferPools::new(cfg.replay_config());
        for ep in &demos {
            ep.validate()?;
        }
        pools.load_demo_pool(demos);
        Ok(Runner {
            cfg: cfg.clone(),
            loss_cfg: cfg.loss_config(),
            plan_cfg: cfg.planner_config(),
            env,
            params,
            target,
            adam,
            pools,
            step: 0,
            update_count: 0,
            eval_count: 0,
            env_rng: derive_rng(cfg.seed, 0xE2),
            act_rng: derive_rng(cfg.seed, 0xAC),
            plan_rng: derive_rng(cfg.seed, 0x71A2),
            replay_rng: derive_rng(cfg.seed, 0x3E91A),
            losses: LossAccum::default(),
            metrics: Vec::new(),
            started: Instant::now(),
            final_eval: (0.0, 0.0),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn target(&self) -> &ModelParams {
        &self.target
    }

    pub fn pools(&self) -> &BufferPools {
        &self.pools
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn metrics(&self) -> &[MetricsRow] {
        &self.metrics
    }

    fn toggles(&self) -> PhaseToggles {
        PhaseToggles {
            pretrain_policy: self.cfg.pretrain_policy,
            bc_seeding: self.cfg.bc_seeding,
            oversample: self.cfg.oversample,
        }
    }

    /// Demo-pool probability actually used at this step: the annealed
    /// schedule under oversampling, the pool-size ratio without it, and 0
    /// whenever there are no demonstrations.
    fn effective_kappa(&self, step: usize) -> f64 {
        let demo_steps = self.pools.demo.total_steps();
        if demo_steps == 0 {
            return 0.0;
        }
        if self.toggles().oversample {
            demo_ratio(step, self.pools.config())
        } else {
            let online = self.pools.online.total_steps();
            demo_steps as f64 / (demo_steps + online) as f64
        }
    }

    fn wall(&self) -> Option<f64> {
        self.cfg.log_wall_time.then(|| self.started.elapsed().as_secs_f64())
    }

    fn emit(&mut self, row: MetricsRow, sink: &mut dyn FnMut(&MetricsRow)) {
        sink(&row);
        self.metrics.push(row);
    }

    fn encode_obs(&self, obs: &Observation) -> Tensor {
        encode_observation(&self.params, obs)
    }

    fn train_update(&mut self, kappa: f64, phase: &'static str) -> Result<()> {
        let (batch, handles): (TrainBatch, Vec<SampleHandle>) =
            self.pools.sample_batch(kappa, self.cfg.batch_size, &mut self.replay_rng)?;
        let td_out = tdmpc_loss(&self.params, &self.target, &batch, &self.loss_cfg)?;
        if !td_out.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                phase,
                step: self.step,
                detail: format!(
                    "model loss: td={} reward={} consistency={}",
                    td_out.td, td_out.reward, td_out.consistency
                ),
            });
        }
        self.apply_grads(&td_out.grads);
        let pi_out =
            policy_loss(&self.params, &td_out.latents[..=self.loss_cfg.horizon], &self.loss_cfg)?;
        if !pi_out.loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                phase,
                step: self.step,
                detail: format!("policy loss {}", pi_out.loss),
            });
        }
        self.apply_grads(&pi_out.grads);
        self.pools.update_priorities(&handles, &td_out.td_errors)?;
        self.update_count += 1;
        if self.update_count % self.cfg.target_update_freq == 0 {
            ema_update(&mut self.target, &self.params, self.cfg.ema_coef);
        }
        self.losses.push(td_out.td, td_out.reward, td_out.consistency, pi_out.loss);
        Ok(())
    }

    fn apply_grads(&mut self, grads: &[Option<Tensor>]) {
        let clipped = clip_gradients(grads, self.cfg.grad_clip);
        let grads = clipped.as_deref().unwrap_or(grads);
        let mut idx = 0;
        let adam = &mut self.adam;
        self.params.for_each_mut(&mut |_, t| {
            adam.step_one(idx, t, grads[idx].as_ref());
            idx += 1;
        });
    }

    /// Phase 1: behavior cloning on demonstration pairs (encoder and policy
    /// heads only), then a deterministic-policy evaluation at step 0.
    pub fn phase1(&mut self, sink: &mut dyn FnMut(&MetricsRow)) -> Result<()> {
        let mut bc_mean = None;
        if self.toggles().pretrain_policy {
            if self.pools.demo.episodes().is_empty() {
                return Err(Error::PoolEmpty { pool: "demo" });
            }
            let mut total = 0.0;
            for _ in 0..self.cfg.pretrain_updates {
                let batch = self.pools.sample_bc(self.cfg.batch_size, &mut self.replay_rng)?;
                let out = bc_loss(&self.params, &batch)?;
                if !out.loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        phase: "pretrain",
                        step: 0,
                        detail: format!("bc loss {}", out.loss),
                    });
                }
                self.apply_grads(&out.grads);
                total += out.loss;
            }
            if self.cfg.pretrain_updates > 0 {
                bc_mean = Some(total / self.cfg.pretrain_updates as f64);
            }
        }
        let (success, mean_return) = self.eval_with_policy()?;
        let row = MetricsRow {
            step: 0,
            phase: 1,
            td_loss: None,
            reward_loss: None,
            consistency_loss: None,
            policy_loss: None,
            bc_loss: bc_mean,
            kappa: self.effective_kappa(0),
            epsilon: explore_noise(0, &self.plan_cfg),
            episode_return: Some(mean_return),
            eval_success_rate: Some(success),
            wall_seconds: self.wall(),
        };
        self.emit(row, sink);
        Ok(())
    }

    /// Phase 2: collect seed episodes with the (pretrained) policy plus
    /// exploration noise, or uniform random actions; then one model update
    /// per collected step, sampling with the step-0 oversampling ratio.
    pub fn phase2(&mut self, sink: &mut dyn FnMut(&MetricsRow)) -> Result<()> {
        let noise = explore_noise(0, &self.plan_cfg);
        let kappa0 = self.effective_kappa(0);
        let mut pending: Option<MetricsRow> = None;
        while self.step < self.cfg.seed_steps {
            let mut obs = self.env.reset(&mut self.env_rng);
            let mut observations = vec![obs.clone()];
            let mut actions = Vec::new();
            let mut rewards = Vec::new();
            let mut success = false;
            loop {
                let action = if self.toggles().bc_seeding {
                    let z = self.encode_obs(&obs);
                    self.params.policy_action(&z, noise, &mut self.act_rng)
                } else {
                    uniform_action(self.env.action_dim(), &mut self.act_rng)
                };
                let out = self.env.step(&action);
                obs = out.obs.clone();
                observations.push(out.obs);
                actions.push(action);
                rewards.push(out.reward);
                success |= out.success;
                self.step += 1;
                if out.done {
                    break;
                }
            }
            let episode = Episode { observations, actions, rewards, success, source: Source::Seed };
            let episode_return = episode.episode_return();
            self.pools.push_online(episode);
            if let Some(row) = pending.take() {
                self.emit(row, sink);
            }
            pending = Some(MetricsRow {
                step: self.step,
                phase: 2,
                td_loss: None,
                reward_loss: None,
                consistency_loss: None,
                policy_loss: None,
                bc_loss: None,
                kappa: kappa0,
                epsilon: noise,
                episode_return: Some(episode_return),
                eval_success_rate: None,
                wall_seconds: self.wall(),
            });
        }
        // One update per collected step; the final episode row carries the
        // mean losses of this update block.
        for _ in 0..self.step {
            self.train_update(kappa0, "seed")?;
        }
        if let Some(mut row) = pending.take() {
            let (td, reward, consistency, policy) = self.losses.drain();
            row.td_loss = td;
            row.reward_loss = reward;
            row.consistency_loss = consistency;
            row.policy_loss = policy;
            row.wall_seconds = self.wall();
            self.emit(row, sink);
        }
        Ok(())
    }

    /// Phase 3: receding-horizon interaction with one gradient update per
    /// environment step; episodes append to the online pool; evaluation
    /// runs on the interaction counter with noise-free planning.
    pub fn phase3(&mut self, sink: &mut dyn FnMut(&MetricsRow)) -> Result<()> {
        let budget = self.cfg.interaction_budget;
        let mut next_eval = {
            // First multiple of the interval not consumed by seeding.
            let k = self.step / self.cfg.eval_interval + 1;
            k * self.cfg.eval_interval
        };
        while self.step < budget {
            let mut obs = self.env.reset(&mut self.env_rng);
            let mut plan_state = PlanState::fresh(&self.plan_cfg, self.env.action_dim());
            let mut observations = vec![obs.clone()];
            let mut actions = Vec::new();
            let mut rewards = Vec::new();
            let mut success = false;
            loop {
                let z = self.encode_obs(&obs);
                let eps = explore_noise(self.step, &self.plan_cfg);
                let model = LearnedPlanModel { params: &self.params };
                let (action, next_state, _) =
                    mppi_plan(&model, z.data(), &self.plan_cfg, &plan_state, eps, &mut self.plan_rng)?;
                plan_state = next_state;
                let out = self.env.step(&action);
                obs = out.obs.clone();
                observations.push(out.obs);
                actions.push(action);
                rewards.push(out.reward);
                success |= out.success;
                self.step += 1;
                for _ in 0..self.cfg.updates_per_step {
                    let kappa = self.effective_kappa(self.step);
                    self.train_update(kappa, "interact")?;
                }
                if out.done || self.step >= budget {
                    break;
                }
            }
            let episode =
                Episode { observations, actions, rewards, success, source: Source::Interaction };
            let episode_return = episode.episode_return();
            self.pools.push_online(episode);

            let mut eval_fields = None;
            if self.step >= next_eval || self.step >= budget {
                let (success_rate, mean_return) = self.eval_with_planner()?;
                eval_fields = Some((success_rate, mean_return));
                while next_eval <= self.step {
                    next_eval += self.cfg.eval_interval;
                }
                self.final_eval = (success_rate, mean_return);
            }
            let (td, reward, consistency, policy) = self.losses.drain();
            let row = MetricsRow {
                step: self.step,
                phase: 3,
                td_loss: td,
                reward_loss: reward,
                consistency_loss: consistency,
                policy_loss: policy,
                bc_loss: None,
                kappa: self.effective_kappa(self.step),
                epsilon: explore_noise(self.step, &self.plan_cfg),
                episode_return: Some(episode_return),
                eval_success_rate: eval_fields.map(|(s, _)| s),
                wall_seconds: self.wall(),
            };
            self.emit(row, sink);
        }
        Ok(())
    }

    /// Noise-free planning rollouts on fresh environment instances.
    fn eval_with_planner(&mut self) -> Result<(f64, f64)> {
        self.eval_count += 1;
        let mut rng = derive_rng(self.cfg.seed, 0xE7A1_0000 + self.eval_count as u64);
        let mut env = make_env(&self.cfg.env_config())?;
        let mut successes = 0usize;
        let mut total_return = 0.0;
        for _ in 0..self.cfg.eval_episodes {
            let mut obs = env.reset(&mut rng);
            let mut plan_state = PlanState::fresh(&self.plan_cfg, env.action_dim());
            let mut success = false;
            loop {
                let z = self.encode_obs(&obs);
                let model = LearnedPlanModel { params: &self.params };
                let (action, next_state, _) =
                    mppi_plan(&model, z.data(), &self.plan_cfg, &plan_state, 0.0, &mut rng)?;
                plan_state = next_state;
                let out = env.step(&action);
                obs = out.obs;
                total_return += out.reward;
                success |= out.success;
                if out.done {
                    break;
                }
            }
            successes += usize::from(success);
        }
        Ok((
            successes as f64 / self.cfg.eval_episodes as f64,
            total_return / self.cfg.eval_episodes as f64,
        ))
    }

    /// Deterministic-policy rollouts (the step-0 probe of the pretrained
    /// policy before any model learning).
    fn eval_with_policy(&mut self) -> Result<(f64, f64)> {
        self.eval_count += 1;
        let mut rng = derive_rng(self.cfg.seed, 0xE7A1_0000 + self.eval_count as u64);
        let mut env = make_env(&self.cfg.env_config())?;
        let mut successes = 0usize;
        let mut total_return = 0.0;
        for _ in 0..self.cfg.eval_episodes {
            let mut obs = env.reset(&mut rng);
            let mut success = false;
            loop {
                let z = self.encode_obs(&obs);
                let action = self.params.policy_action(&z, 0.0, &mut rng);
                let out = env.step(&action);
                obs = out.obs;
                total_return += out.reward;
                success |= out.success;
                if out.done {
                    break;
                }
            }
            successes += usize::from(success);
        }
        Ok((
            successes as f64 / self.cfg.eval_episodes as f64,
            total_return / self.cfg.eval_episodes as f64,
        ))
    }
}

/// Run the full pipeline: phases 1-3 in order, honoring the phase toggles.
/// Demonstrations are the already loaded demo episodes (empty for the
/// no-demonstration baseline). Each metrics row is passed to `sink` as soon
/// as it is final.
pub fn run_modem(
    cfg: &RunConfig,
    demos: Vec<Episode>,
    sink: &mut dyn FnMut(&MetricsRow),
) -> Result<RunOutput> {
    let mut runner = Runner::new(cfg, demos)?;
    runner.phase1(sink)?;
    runner.phase2(sink)?;
    runner.phase3(sink)?;
    debug_assert_eq!(runner.step, cfg.interaction_budget);
    let parameter_count = runner.params.parameter_count();
    Ok(RunOutput {
        metrics: runner.metrics,
        params: runner.params,
        final_eval_success: runner.final_eval.0,
        final_eval_return: runner.final_eval.1,
        parameter_count,
    })
}
