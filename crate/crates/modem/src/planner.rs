//! Receding-horizon action selection: iteratively refit a per-timestep
//! diagonal Gaussian over action sequences by rolling candidates through a
//! model, exponentially weighting the elites, and executing only the first
//! action of the final mean.

use autodiff::{Graph, Tensor};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Anything the planner can roll out: a learned latent model, ground-truth
/// task dynamics, or a synthetic system in tests. All calls are batched
/// over the candidate dimension and read-only.
pub trait PlanModel {
    fn latent_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// z: [N, Z], a: [N, A] -> (next z [N, Z], per-candidate reward [N]).
    fn step(&self, z: &Tensor, a: &Tensor) -> (Tensor, Vec<f64>);
    /// Terminal value of the final latent: [N, Z] -> [N].
    fn terminal_value(&self, z: &Tensor) -> Vec<f64>;
    /// Prior policy action used for the policy fraction: [N, Z] -> [N, A].
    fn prior_action(&self, z: &Tensor) -> Tensor;
}

/// The learned world model as a planning target: latent dynamics + reward
/// head, with min(Q1, Q2) of the policy action as terminal value.
pub struct LearnedPlanModel<'a> {
    pub params: &'a ModelParams,
}

impl PlanModel for LearnedPlanModel<'_> {
    fn latent_dim(&self) -> usize {
        self.params.cfg.latent_dim
    }

    fn action_dim(&self) -> usize {
        self.params.cfg.action_dim
    }

    fn step(&self, z: &Tensor, a: &Tensor) -> (Tensor, Vec<f64>) {
        let mut g = Graph::inference();
        let r = self.params.predict_reward(&mut g, z, a);
        let zn = self.params.dynamics_step(&mut g, z, a);
        (zn, r.data().to_vec())
    }

    fn terminal_value(&self, z: &Tensor) -> Vec<f64> {
        let mut g = Graph::inference();
        let a = self.params.policy(&mut g, z);
        self.params.q_min(&mut g, z, &a).data().to_vec()
    }

    fn prior_action(&self, z: &Tensor) -> Tensor {
        let mut g = Graph::inference();
        self.params.policy(&mut g, z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub discount: f64,
    pub population: usize,
    pub elites: usize,
    pub policy_fraction: f64,
    pub iterations: usize,
    pub momentum: f64,
    pub temperature: f64,
    pub particles: usize,
    pub init_mean: f64,
    pub init_std: f64,
    pub min_std: f64,
    pub explore_start: f64,
    pub explore_end: f64,
    pub explore_steps: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            horizon: 5,
            discount: 0.99,
            population: 512,
            elites: 64,
            policy_fraction: 0.05,
            iterations: 6,
            momentum: 0.1,
            temperature: 0.5,
            particles: 1,
            init_mean: 0.0,
            init_std: 2.0,
            min_std: 0.05,
            explore_start: 0.1,
            explore_end: 0.05,
            explore_steps: 25_000,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::BadValue { key: key.into(), message });
        if self.elites == 0 || self.elites > self.population {
            return bad("plan_elites", format!("{} must be in 1..=population", self.elites));
        }
        if !(0.0..=1.0).contains(&self.policy_fraction) {
            return bad("plan_policy_fraction", "must lie in [0, 1]".into());
        }
        if self.iterations == 0 {
            return bad("plan_iterations", "must be at least 1".into());
        }
        if self.init_std <= 0.0 {
            return bad("plan_init_std", "must be positive".into());
        }
        if self.particles == 0 {
            return bad("plan_particles", "must be at least 1".into());
        }
        Ok(())
    }
}

/// Exploration noise schedule: linear from `explore_start` at step 0 to
/// `explore_end` at `explore_steps`, clamped afterwards.
pub fn explore_noise(step: usize, cfg: &PlannerConfig) -> f64 {
    if step >= cfg.explore_steps {
        cfg.explore_end
    } else {
        let frac = step as f64 / cfg.explore_steps as f64;
        cfg.explore_start + (cfg.explore_end - cfg.explore_start) * frac
    }
}

/// Per-timestep Gaussian over action sequences, carried across receding-
/// horizon steps for warm starting.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanState {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    pub valid: bool,
}

impl PlanState {
    pub fn fresh(cfg: &PlannerConfig, action_dim: usize) -> PlanState {
        PlanState {
            mean: vec![vec![cfg.init_mean; action_dim]; cfg.horizon],
            std: vec![vec![cfg.init_std; action_dim]; cfg.horizon],
            valid: false,
        }
    }
}

/// Per-call planner diagnostics.
#[derive(Debug, Clone)]
pub struct PlanStats {
    /// Best elite return of each iteration, in order.
    pub iteration_best: Vec<f64>,
    /// Estimated return of the final mean sequence.
    pub plan_return: f64,
}

/// Discounted return of one action sequence under the model:
/// sum of per-step rewards plus the discounted terminal value.
pub fn estimate_return(
    model: &dyn PlanModel,
    z0: &[f64],
    sequence: &[Vec<f64>],
    discount: f64,
) -> Result<f64> {
    let seqs: Vec<Tensor> = sequence
        .iter()
        .map(|a| Tensor::new(vec![1, model.action_dim()], a.clone()))
        .collect();
    let z = Tensor::new(vec![1, model.latent_dim()], z0.to_vec());
    Ok(estimate_returns_batch(model, &z, &seqs, discount)?[0])
}

/// Batched return estimation: per-timestep action tensors [N, A] over a
/// shared batch of latents [N, Z].
fn estimate_returns_batch(
    model: &dyn PlanModel,
    z0: &Tensor,
    actions_by_step: &[Tensor],
    discount: f64,
) -> Result<Vec<f64>> {
    let n = z0.shape()[0];
    let mut z = z0.clone();
    let mut returns = vec![0.0; n];
    let mut disc = 1.0;
    for a in actions_by_step {
        let (zn, rewards) = model.step(&z, a);
        for (g, r) in returns.iter_mut().zip(&rewards) {
            *g += disc * r;
        }
        disc *= discount;
        z = zn;
    }
    for (g, v) in returns.iter_mut().zip(model.terminal_value(&z)) {
        *g += disc * v;
    }
    if let Some(i) = returns.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinitePlan { candidate: i });
    }
    Ok(returns)
}

fn replicate_rows(row_src: &Tensor, n: usize) -> Tensor {
    let cols = row_src.len();
    let mut data = Vec::with_capacity(n * cols);
    for _ in 0..n {
        data.extend_from_slice(row_src.data());
    }
    Tensor::new(vec![n, cols], data)
}

/// One receding-horizon planning call.
///
/// Per iteration: sample `population - n_policy` sequences from the current
/// Gaussian (clipped to bounds) plus `floor(policy_fraction * population)`
/// sequences from the prior policy rolled in latent space; score everything
/// by [`estimate_return`]; refit mean/std from the exponentially weighted
/// elites (weights `exp((G_i - G_max)/temperature)`); blend the mean with
/// `momentum`. Executes the first action of the final mean plus
/// `explore_std` Gaussian noise, clipped. The returned [`PlanState`] is the
/// final distribution shifted one step for warm starting.
pub fn mppi_plan(
    model: &dyn PlanModel,
    z0: &[f64],
    cfg: &PlannerConfig,
    prev: &PlanState,
    explore_std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, PlanState, PlanStats)> {
    cfg.validate()?;
    let h = cfg.horizon;
    let a_dim = model.action_dim();
    let n_policy = (cfg.policy_fraction * cfg.population as f64).floor() as usize;
    let n_gauss = cfg.population - n_policy;
    let normal = Normal::new(0.0, 1.0).unwrap();

    let mut mean = if prev.valid {
        prev.mean.clone()
    } else {
        vec![vec![cfg.init_mean; a_dim]; h]
    };
    // std restarts from init_std at every environment step.
    let mut std = vec![vec![cfg.init_std; a_dim]; h];

    // The prior policy rollout is deterministic, so compute it once and
    // replicate it across the policy slots.
    let policy_seq: Vec<Vec<f64>> = if n_policy > 0 && h > 0 {
        let mut z = Tensor::new(vec![1, model.latent_dim()], z0.to_vec());
        let mut seq = Vec::with_capacity(h);
        for _ in 0..h {
            let a_t = model.prior_action(&z);
            let clipped: Vec<f64> = a_t.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
            let a_t = Tensor::new(vec![1, a_dim], clipped.clone());
            let (zn, _) = model.step(&z, &a_t);
            z = zn;
            seq.push(clipped);
        }
        seq
    } else {
        Vec::new()
    };

    let z0_batch = replicate_rows(&Tensor::new(vec![1, z0.len()], z0.to_vec()), cfg.population);
    let mut stats = PlanStats { iteration_best: Vec::with_capacity(cfg.iterations), plan_return: 0.0 };

    // candidates[c] is the c-th action sequence, [h][a_dim].
    let mut candidates = vec![vec![vec![0.0; a_dim]; h]; cfg.population];
    for _ in 0..cfg.iterations {
        for cand in candidates.iter_mut().take(n_gauss) {
            for (t, row) in cand.iter_mut().enumerate() {
                for (k, v) in row.iter_mut().enumerate() {
                    let draw: f64 = normal.sample(rng);
                    *v = (mean[t][k] + std[t][k] * draw).clamp(-1.0, 1.0);
                }
            }
        }
        for cand in candidates.iter_mut().skip(n_gauss) {
            for (t, row) in cand.iter_mut().enumerate() {
                row.copy_from_slice(&policy_seq[t]);
            }
        }

        let actions_by_step: Vec<Tensor> = (0..h)
            .map(|t| {
                let mut data = Vec::with_capacity(cfg.population * a_dim);
                for cand in &candidates {
                    data.extend_from_slice(&cand[t]);
                }
                Tensor::new(vec![cfg.population, a_dim], data)
            })
            .collect();
        let returns = estimate_returns_batch(model, &z0_batch, &actions_by_step, cfg.discount)?;

        let mut order: Vec<usize> = (0..cfg.population).collect();
        order.sort_by(|&i, &j| {
            returns[j].partial_cmp(&returns[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j))
        });
        let elites = &order[..cfg.elites];
        let g_max = returns[elites[0]];
        stats.iteration_best.push(g_max);

        let weights: Vec<f64> =
            elites.iter().map(|&i| ((returns[i] - g_max) / cfg.temperature).exp()).collect();
        let w_sum: f64 = weights.iter().sum();

        for t in 0..h {
            for k in 0..a_dim {
                let mut m = 0.0;
                for (&e, &w) in elites.iter().zip(&weights) {
                    m += w * candidates[e][t][k];
                }
                m /= w_sum;
                let mut var = 0.0;
                for (&e, &w) in elites.iter().zip(&weights) {
                    var += w * (candidates[e][t][k] - m) * (candidates[e][t][k] - m);
                }
                var /= w_sum;
                mean[t][k] = (cfg.momentum * mean[t][k] + (1.0 - cfg.momentum) * m).clamp(-1.0, 1.0);
                std[t][k] = var.sqrt().max(cfg.min_std);
            }
        }
    }

    stats.plan_return = estimate_return(model, z0, &mean, cfg.discount)?;

    let action: Vec<f64> = if h > 0 {
        mean[0]
            .iter()
            .map(|&v| {
                let noise =
                    if explore_std > 0.0 { explore_std * normal.sample(rng) } else { 0.0 };
                (v + noise).clamp(-1.0, 1.0)
            })
            .collect()
    } else {
        vec![0.0; a_dim]
    };

    let mut next = PlanState { mean, std, valid: true };
    if h > 0 {
        next.mean.rotate_left(1);
        next.mean[h - 1] = vec![0.0; a_dim];
        next.std.rotate_left(1);
        next.std[h - 1] = vec![cfg.init_std; a_dim];
    }
    Ok((action, next, stats))
}
