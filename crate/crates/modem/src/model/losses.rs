use autodiff::{Graph, Tensor};

use crate::error::{Error, Result};
use crate::model::{ModelParams, Track};

/// Loss weights and rollout horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub discount: f64,
    pub temporal_coef: f64,
    pub td_coef: f64,
    pub reward_coef: f64,
    pub consistency_coef: f64,
    pub horizon: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            discount: 0.99,
            temporal_coef: 0.5,
            td_coef: 0.1,
            reward_coef: 0.5,
            consistency_coef: 2.0,
            horizon: 5,
        }
    }
}

/// A batch of length-(H+1) sub-trajectories, assembled time-major.
///
/// With horizon H: `images`/`proprios` have H+2 entries (observations at
/// offsets 0..=H+1), `actions`/`rewards` have H+1 entries (transitions at
/// offsets 0..=H). All tensors share the batch dimension.
pub struct TrainBatch {
    pub images: Vec<Tensor>,
    pub proprios: Vec<Tensor>,
    pub actions: Vec<Tensor>,
    pub rewards: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl TrainBatch {
    pub fn batch_size(&self) -> usize {
        self.weights.len()
    }

    fn validate(&self, horizon: usize) -> Result<usize> {
        let b = self.batch_size();
        if b == 0 {
            return Err(Error::EmptyBatch);
        }
        if self.actions.len() < horizon + 1 {
            return Err(Error::SnippetTooShort {
                horizon,
                need: horizon + 1,
                got: self.actions.len(),
            });
        }
        assert!(
            self.images.len() >= horizon + 2 && self.proprios.len() >= horizon + 2,
            "batch: {} observation steps for horizon {}",
            self.images.len(),
            horizon
        );
        Ok(b)
    }
}

/// A batch of (observation, action) pairs for behavior cloning.
pub struct BcBatch {
    pub images: Tensor,
    pub proprios: Tensor,
    pub actions: Tensor,
}

pub struct BcOut {
    pub loss: f64,
    pub grads: Vec<Option<Tensor>>,
}

pub struct TdOut {
    pub total: f64,
    pub td: f64,
    pub reward: f64,
    pub consistency: f64,
    /// Per-sample priority signal: |TD residual| averaged over the H+1
    /// steps and the two value heads.
    pub td_errors: Vec<f64>,
    /// Detached unrolled latents z_0..z_{H+1}, each [B, Z].
    pub latents: Vec<Tensor>,
    pub grads: Vec<Option<Tensor>>,
}

pub struct PolicyOut {
    pub loss: f64,
    pub grads: Vec<Option<Tensor>>,
}

/// Behavior cloning: mean squared error between the policy output on the
/// encoded observation and the demonstrated action. Gradients flow into the
/// encoder and policy only.
pub fn bc_loss(params: &ModelParams, batch: &BcBatch) -> Result<BcOut> {
    if batch.actions.shape()[0] == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut g = Graph::new();
    let bound = params.bind(&mut g, Track::BC);
    let z = bound.encode(&mut g, &batch.images, &batch.proprios);
    let pred = bound.policy(&mut g, &z);
    let loss = g.mse(&pred, &batch.actions);
    g.backward(&loss)?;
    Ok(BcOut { loss: loss.item(), grads: bound.extract_grads(&g) })
}

/// The composite model objective over an H-step latent rollout: per step,
/// a clipped-double TD term against the EMA target network, a reward
/// prediction term, and a latent consistency term against the target
/// encoder, each weighted by `temporal_coef^i` and its coefficient.
/// Per-sample importance weights multiply each sample's summed loss.
pub fn tdmpc_loss(
    params: &ModelParams,
    target: &ModelParams,
    batch: &TrainBatch,
    cfg: &LossConfig,
) -> Result<TdOut> {
    let h = cfg.horizon;
    let b = batch.validate(h)?;

    // Targets are plain values: stop-gradient plus target network. All
    // H+1 next observations go through the target encoder as one batch.
    let mut gi = Graph::inference();
    let (cons_targets, td_targets) = {
        let img_len = batch.images[1].len() / b;
        let prop_len = batch.proprios[1].len() / b;
        let mut img_data = Vec::with_capacity((h + 1) * b * img_len);
        let mut prop_data = Vec::with_capacity((h + 1) * b * prop_len);
        for i in 0..=h {
            img_data.extend_from_slice(batch.images[i + 1].data());
            prop_data.extend_from_slice(batch.proprios[i + 1].data());
        }
        let shape = batch.images[1].shape();
        let images = Tensor::new(
            vec![(h + 1) * b, shape[1], shape[2], shape[3]],
            img_data,
        );
        let proprios = Tensor::new(vec![(h + 1) * b, prop_len], prop_data);
        let zp_all = target.encode(&mut gi, &images, &proprios);
        let pi_all = params.policy(&mut gi, &zp_all);
        let qbar_all = target.q_min(&mut gi, &zp_all, &pi_all);
        let z_dim = zp_all.shape()[1];
        let mut cons = Vec::with_capacity(h + 1);
        let mut td = Vec::with_capacity(h + 1);
        for i in 0..=h {
            let z_slice = zp_all.data()[i * b * z_dim..(i + 1) * b * z_dim].to_vec();
            cons.push(Tensor::new(vec![b, z_dim], z_slice));
            let q_slice = &qbar_all.data()[i * b..(i + 1) * b];
            let t: Vec<f64> =
                (0..b).map(|s| batch.rewards[i][s] + cfg.discount * q_slice[s]).collect();
            td.push(Tensor::new(vec![b], t));
        }
        (cons, td)
    };

    let mut g = Graph::new();
    let bound = params.bind(&mut g, Track::MODEL);
    let mut z = bound.encode(&mut g, &batch.images[0], &batch.proprios[0]);
    let mut latents = vec![z.detach()];
    let mut total_b = Tensor::zeros(vec![b]);
    let mut td_errors = vec![0.0; b];
    let (mut td_comp, mut rew_comp, mut cons_comp) = (0.0, 0.0, 0.0);
    let mut temporal = 1.0;
    for i in 0..=h {
        let (q1, q2) = bound.q_pair(&mut g, &z, &batch.actions[i]);
        let r = bound.predict_reward(&mut g, &z, &batch.actions[i]);
        let z_next = bound.dynamics_step(&mut g, &z, &batch.actions[i]);

        let d1 = g.sub(&q1, &td_targets[i]);
        let d1s = g.square(&d1);
        let d2 = g.sub(&q2, &td_targets[i]);
        let d2s = g.square(&d2);
        let td_i = g.add(&d1s, &d2s);

        let reward_const = Tensor::new(vec![b], batch.rewards[i].clone());
        let dr = g.sub(&r, &reward_const);
        let rew_i = g.square(&dr);

        let dc = g.sub(&z_next, &cons_targets[i]);
        let dcs = g.square(&dc);
        let cons_i = g.mean_rows(&dcs);

        let td_w = g.scale(&td_i, temporal * cfg.td_coef);
        let rew_w = g.scale(&rew_i, temporal * cfg.reward_coef);
        let cons_w = g.scale(&cons_i, temporal * cfg.consistency_coef);
        let step1 = g.add(&td_w, &rew_w);
        let step = g.add(&step1, &cons_w);
        total_b = g.add(&total_b, &step);

        td_comp += td_w.iter().sum::<f64>() / b as f64;
        rew_comp += rew_w.iter().sum::<f64>() / b as f64;
        cons_comp += cons_w.iter().sum::<f64>() / b as f64;
        for s in 0..b {
            td_errors[s] += 0.5 * (d1.data()[s].abs() + d2.data()[s].abs());
        }

        temporal *= cfg.temporal_coef;
        z = z_next;
        latents.push(z.detach());
    }
    for e in &mut td_errors {
        *e /= (h + 1) as f64;
    }

    let w = Tensor::new(vec![b], batch.weights.clone());
    let weighted = g.mul(&w, &total_b);
    let loss = g.mean_all(&weighted);
    g.backward(&loss)?;
    Ok(TdOut {
        total: loss.item(),
        td: td_comp,
        reward: rew_comp,
        consistency: cons_comp,
        td_errors,
        latents,
        grads: bound.extract_grads(&g),
    })
}

/// Policy improvement objective: maximize the temporally weighted clipped
/// value along the (stop-gradient) unrolled latents. Only policy parameters
/// receive gradient.
pub fn policy_loss(params: &ModelParams, latents: &[Tensor], cfg: &LossConfig) -> Result<PolicyOut> {
    assert!(!latents.is_empty(), "policy_loss: no latents");
    let b = latents[0].shape()[0];
    if b == 0 {
        return Err(Error::EmptyBatch);
    }
    let steps = latents.len().min(cfg.horizon + 1);
    let mut g = Graph::new();
    let bound = params.bind(&mut g, Track::POLICY);
    let mut obj = Tensor::zeros(vec![b]);
    let mut temporal = 1.0;
    for z in latents.iter().take(steps) {
        let z = z.detach();
        let a = bound.policy(&mut g, &z);
        let q = bound.q_min(&mut g, &z, &a);
        let qw = g.scale(&q, temporal);
        obj = g.add(&obj, &qw);
        temporal *= cfg.temporal_coef;
    }
    let mean = g.mean_all(&obj);
    let loss = g.scale(&mean, -1.0);
    g.backward(&loss)?;
    Ok(PolicyOut { loss: loss.item(), grads: bound.extract_grads(&g) })
}
