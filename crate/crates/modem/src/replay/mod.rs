//! Episodic storage with per-step prioritized sampling, demonstration
//! oversampling, and shift augmentation.

mod demo_io;
mod sumtree;

pub use demo_io::{load_demos, save_demos, DemoHeader};
pub use sumtree::SumTree;

use autodiff::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::envs::Observation;
use crate::error::{Error, Result};
use crate::model::{BcBatch, TrainBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Demo,
    Seed,
    Interaction,
}

/// One stored episode: T+1 observations, T actions, T rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub observations: Vec<Observation>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub success: bool,
    pub source: Source,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn episode_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.actions.len();
        if self.observations.len() != t + 1 || self.rewards.len() != t {
            return Err(Error::DemoFormat(format!(
                "inconsistent episode lengths: {} observations, {} actions, {} rewards",
                self.observations.len(),
                t,
                self.rewards.len()
            )));
        }
        if !self.rewards.iter().all(|r| *r == 0.0 || *r == 1.0) {
            return Err(Error::DemoFormat("rewards outside {0, 1}".into()));
        }
        if self.success != self.rewards.iter().any(|r| *r == 1.0) {
            return Err(Error::DemoFormat("success flag disagrees with rewards".into()));
        }
        for o in &self.observations {
            if !o.image.iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(Error::DemoFormat("image values outside [0, 1]".into()));
            }
            if !o.proprio.iter().all(|v| v.is_finite()) {
                return Err(Error::DemoFormat("non-finite proprio values".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    pub demo_ratio_start: f64,
    pub demo_ratio_end: f64,
    pub demo_ratio_steps: usize,
    pub demo_ratio_constant: bool,
    pub per_alpha: f64,
    pub per_beta: f64,
    pub per_floor: f64,
    pub augment: bool,
    pub max_shift: usize,
    pub horizon: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            demo_ratio_start: 0.75,
            demo_ratio_end: 0.25,
            demo_ratio_steps: 100_000,
            demo_ratio_constant: false,
            per_alpha: 0.6,
            per_beta: 0.4,
            per_floor: 1e-4,
            augment: true,
            max_shift: 2,
            horizon: 5,
        }
    }
}

/// Demonstration oversampling ratio: linear from `start` at step 0 to `end`
/// at `demo_ratio_steps`, clamped afterwards. Constant mode (the annealing
/// ablation) always returns `end`.
pub fn demo_ratio(step: usize, cfg: &ReplayConfig) -> f64 {
    if cfg.demo_ratio_constant {
        return cfg.demo_ratio_end;
    }
    if step >= cfg.demo_ratio_steps {
        cfg.demo_ratio_end
    } else {
        let frac = step as f64 / cfg.demo_ratio_steps as f64;
        cfg.demo_ratio_start + (cfg.demo_ratio_end - cfg.demo_ratio_start) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolId {
    Demo,
    Online,
}

impl PoolId {
    fn name(self) -> &'static str {
        match self {
            PoolId::Demo => "demo",
            PoolId::Online => "online",
        }
    }
}

/// Ticket for a sampled snippet, used to write back its new priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleHandle {
    pub pool: PoolId,
    pub item: usize,
}

/// One episode pool with a per-snippet-start priority tree.
pub struct Pool {
    id: PoolId,
    episodes: Vec<Episode>,
    /// item index -> (episode, start step)
    items: Vec<(u32, u32)>,
    tree: SumTree,
    /// Highest raw priority seen; new snippets enter at this value.
    max_priority: f64,
    total_steps: usize,
}

impl Pool {
    fn new(id: PoolId) -> Pool {
        Pool {
            id,
            episodes: Vec::new(),
            items: Vec::new(),
            tree: SumTree::new(),
            max_priority: 1.0,
            total_steps: 0,
        }
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn priority_mass(&self, item: usize) -> f64 {
        self.tree.get(item)
    }

    fn add_episode(&mut self, episode: Episode, cfg: &ReplayConfig) {
        debug_assert!(episode.validate().is_ok());
        let need = cfg.horizon + 1;
        let ep_idx = self.episodes.len() as u32;
        self.total_steps += episode.len();
        if episode.len() >= need {
            let mass = transformed(self.max_priority, cfg.per_alpha);
            for start in 0..=(episode.len() - need) {
                self.items.push((ep_idx, start as u32));
                self.tree.push(mass);
            }
        }
        self.episodes.push(episode);
    }
}

/// The demonstration pool (immutable after load) and the online pool
/// (seed episodes, then interaction episodes; append-only).
pub struct BufferPools {
    pub demo: Pool,
    pub online: Pool,
    cfg: ReplayConfig,
}

fn transformed(raw_priority: f64, alpha: f64) -> f64 {
    raw_priority.powf(alpha)
}

impl BufferPools {
    pub fn new(cfg: ReplayConfig) -> BufferPools {
        BufferPools { demo: Pool::new(PoolId::Demo), online: Pool::new(PoolId::Online), cfg }
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.cfg
    }

    pub fn load_demo_pool(&mut self, episodes: Vec<Episode>) {
        assert!(self.demo.episodes.is_empty(), "demo pool is immutable once loaded");
        let cfg = self.cfg.clone();
        for ep in episodes {
            debug_assert_eq!(ep.source, Source::Demo);
            self.demo.add_episode(ep, &cfg);
        }
    }

    pub fn push_online(&mut self, episode: Episode) {
        let cfg = self.cfg.clone();
        self.online.add_episode(episode, &cfg);
    }

    fn pool(&self, id: PoolId) -> &Pool {
        match id {
            PoolId::Demo => &self.demo,
            PoolId::Online => &self.online,
        }
    }

    fn pool_mut(&mut self, id: PoolId) -> &mut Pool {
        match id {
            PoolId::Demo => &mut self.demo,
            PoolId::Online => &mut self.online,
        }
    }

    fn check_sampleable(&self, id: PoolId) -> Result<()> {
        let p = self.pool(id);
        if p.episodes.is_empty() {
            return Err(Error::PoolEmpty { pool: p.id.name() });
        }
        if p.items.is_empty() {
            return Err(Error::NoSampleableEpisode {
                pool: p.id.name(),
                horizon: self.cfg.horizon,
                need: self.cfg.horizon + 1,
            });
        }
        Ok(())
    }

    /// Draw a batch of sub-trajectories. Each sample independently comes
    /// from the demo pool with probability `kappa`, else the online pool;
    /// within a pool, snippet starts are drawn proportionally to their
    /// priority mass. Returns the assembled batch (augmented when enabled)
    /// and one handle per sample for priority write-back.
    pub fn sample_batch(
        &self,
        kappa: f64,
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(TrainBatch, Vec<SampleHandle>)> {
        assert!(batch_size > 0, "batch_size must be positive");
        assert!((0.0..=1.0).contains(&kappa), "kappa {} outside [0, 1]", kappa);
        if kappa > 0.0 {
            self.check_sampleable(PoolId::Demo)?;
        }
        if kappa < 1.0 {
            self.check_sampleable(PoolId::Online)?;
        }

        let h = self.cfg.horizon;
        let mut handles = Vec::with_capacity(batch_size);
        let mut raw_weights = Vec::with_capacity(batch_size);
        let mut picks: Vec<(PoolId, usize, usize, (isize, isize))> = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let pool_id = if rng.gen::<f64>() < kappa { PoolId::Demo } else { PoolId::Online };
            let pool = self.pool(pool_id);
            let item = pool.tree.sample(rng.gen::<f64>());
            let (ep, start) = pool.items[item];
            let n = pool.items.len() as f64;
            let mass = pool.tree.get(item);
            // w = (N * P(i))^(-beta), normalized below by the batch max.
            let w = ((mass * n) / pool.tree.total()).powf(-self.cfg.per_beta);
            raw_weights.push(w);
            let shift = if self.cfg.augment && self.cfg.max_shift > 0 {
                let m = self.cfg.max_shift as isize;
                (rng.gen_range(-m..=m), rng.gen_range(-m..=m))
            } else {
                (0, 0)
            };
            handles.push(SampleHandle { pool: pool_id, item });
            picks.push((pool_id, ep as usize, start as usize, shift));
        }
        let w_max = raw_weights.iter().cloned().fold(f64::MIN, f64::max);
        let weights: Vec<f64> = raw_weights.iter().map(|w| w / w_max).collect();

        // Assemble time-major tensors.
        let first = {
            let (pid, ep, _, _) = picks[0];
            &self.pool(pid).episodes[ep].observations[0]
        };
        let img_shape = first.image.shape().to_vec();
        let (stack_c, side) = (img_shape[0] * img_shape[1], img_shape[2]);
        let img_len = first.image.len();
        let p_dim = first.proprio.len();
        let a_dim = {
            let (pid, ep, _, _) = picks[0];
            self.pool(pid).episodes[ep].actions[0].len()
        };

        let mut images = Vec::with_capacity(h + 2);
        let mut proprios = Vec::with_capacity(h + 2);
        for j in 0..=(h + 1) {
            let mut img = Vec::with_capacity(batch_size * img_len);
            let mut prop = Vec::with_capacity(batch_size * p_dim);
            for &(pid, ep, start, shift) in &picks {
                let obs = &self.pool(pid).episodes[ep].observations[start + j];
                shift_image_into(obs.image.data(), stack_c, side, shift.0, shift.1, &mut img);
                prop.extend_from_slice(&obs.proprio);
            }
            images.push(Tensor::new(vec![batch_size, stack_c, side, side], img));
            proprios.push(Tensor::new(vec![batch_size, p_dim], prop));
        }
        let mut actions = Vec::with_capacity(h + 1);
        let mut rewards = Vec::with_capacity(h + 1);
        for i in 0..=h {
            let mut act = Vec::with_capacity(batch_size * a_dim);
            let mut rew = Vec::with_capacity(batch_size);
            for &(pid, ep, start, _) in &picks {
                let episode = &self.pool(pid).episodes[ep];
                act.extend_from_slice(&episode.actions[start + i]);
                rew.push(episode.rewards[start + i]);
            }
            actions.push(Tensor::new(vec![batch_size, a_dim], act));
            rewards.push(rew);
        }

        Ok((TrainBatch { images, proprios, actions, rewards, weights }, handles))
    }

    /// Write back per-sample TD errors: priority <- |error| + floor; new
    /// maxima raise the entry priority for future snippets.
    pub fn update_priorities(&mut self, handles: &[SampleHandle], td_errors: &[f64]) -> Result<()> {
        assert_eq!(handles.len(), td_errors.len(), "handles and errors disagree");
        let (alpha, floor) = (self.cfg.per_alpha, self.cfg.per_floor);
        for (handle, err) in handles.iter().zip(td_errors) {
            let pool = self.pool_mut(handle.pool);
            if handle.item >= pool.items.len() {
                return Err(Error::StaleHandle {
                    pool: handle.pool.name(),
                    item: handle.item,
                    len: pool.items.len(),
                });
            }
            let raw = err.abs() + floor;
            pool.tree.update(handle.item, transformed(raw, alpha));
            if raw > pool.max_priority {
                pool.max_priority = raw;
            }
        }
        Ok(())
    }

    /// Uniform (observation, action) pairs from the demo pool, augmented
    /// like snippet samples. Used by policy pretraining.
    pub fn sample_bc(&self, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<BcBatch> {
        if self.demo.episodes.is_empty() {
            return Err(Error::PoolEmpty { pool: "demo" });
        }
        assert!(batch_size > 0, "batch_size must be positive");
        let pairs: usize = self.demo.episodes.iter().map(|e| e.len()).sum();
        let first = &self.demo.episodes[0].observations[0];
        let shape = first.image.shape().to_vec();
        let (stack_c, side) = (shape[0] * shape[1], shape[2]);
        let p_dim = first.proprio.len();
        let a_dim = self.demo.episodes[0].actions[0].len();

        let mut img = Vec::with_capacity(batch_size * first.image.len());
        let mut prop = Vec::with_capacity(batch_size * p_dim);
        let mut act = Vec::with_capacity(batch_size * a_dim);
        for _ in 0..batch_size {
            let mut k = rng.gen_range(0..pairs);
            let mut ep = 0;
            while k >= self.demo.episodes[ep].len() {
                k -= self.demo.episodes[ep].len();
                ep += 1;
            }
            let episode = &self.demo.episodes[ep];
            let shift = if self.cfg.augment && self.cfg.max_shift > 0 {
                let m = self.cfg.max_shift as isize;
                (rng.gen_range(-m..=m), rng.gen_range(-m..=m))
            } else {
                (0, 0)
            };
            shift_image_into(episode.observations[k].image.data(), stack_c, side, shift.0, shift.1, &mut img);
            prop.extend_from_slice(&episode.observations[k].proprio);
            act.extend_from_slice(&episode.actions[k]);
        }
        Ok(BcBatch {
            images: Tensor::new(vec![batch_size, stack_c, side, side], img),
            proprios: Tensor::new(vec![batch_size, p_dim], prop),
            actions: Tensor::new(vec![batch_size, a_dim], act),
        })
    }
}

fn shift_image_into(
    data: &[f64],
    channels: usize,
    side: usize,
    dx: isize,
    dy: isize,
    out: &mut Vec<f64>,
) {
    if dx == 0 && dy == 0 {
        out.extend_from_slice(data);
        return;
    }
    for c in 0..channels {
        let plane = &data[c * side * side..(c + 1) * side * side];
        for row in 0..side as isize {
            let src_row = row - dy;
            for col in 0..side as isize {
                let src_col = col - dx;
                let v = if src_row >= 0
                    && src_row < side as isize
                    && src_col >= 0
                    && src_col < side as isize
                {
                    plane[(src_row * side as isize + src_col) as usize]
                } else {
                    0.0
                };
                out.push(v);
            }
        }
    }
}

/// Translate every frame of one observation by a shared integer offset
/// drawn uniformly from [-max_shift, +max_shift]^2, zero-padded. The
/// proprioceptive part is untouched.
pub fn shift_augment(obs: &Observation, max_shift: usize, rng: &mut ChaCha8Rng) -> Observation {
    let shape = obs.image.shape().to_vec();
    assert!(max_shift < shape[2], "shift {} must be smaller than image side {}", max_shift, shape[2]);
    let (dx, dy) = if max_shift == 0 {
        (0, 0)
    } else {
        let m = max_shift as isize;
        (rng.gen_range(-m..=m), rng.gen_range(-m..=m))
    };
    let mut out = Vec::with_capacity(obs.image.len());
    shift_image_into(obs.image.data(), shape[0] * shape[1], shape[2], dx, dy, &mut out);
    Observation { image: Tensor::new(shape, out), proprio: obs.proprio.clone() }
}
