//! The learned components: encoder (conv image branch + proprio branch +
//! fusion), latent dynamics, reward head, two value heads, and the policy
//! head, plus their EMA target copy and checkpoint serialization.

mod checkpoint;
mod losses;

pub use checkpoint::{load_params, save_params};
pub use losses::{
    bc_loss, policy_loss, tdmpc_loss, BcBatch, BcOut, LossConfig, PolicyOut, TdOut, TrainBatch,
};

use autodiff::{Graph, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Kernel sizes of the six stride-2 convolution layers.
pub const CONV_KERNELS: [usize; 6] = [7, 5, 3, 3, 3, 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    pub image_side: usize,
    pub image_channels: usize,
    pub frame_stack: usize,
    pub proprio_dim: usize,
    pub action_dim: usize,
    pub latent_dim: usize,
    pub mlp_hidden: usize,
    pub enc_hidden: usize,
    pub conv_channels: usize,
}

impl NetConfig {
    /// Spatial side after each conv layer; the stack must end at 1x1.
    pub fn conv_schedule(&self) -> Result<Vec<usize>> {
        let mut sides = Vec::with_capacity(CONV_KERNELS.len() + 1);
        let mut s = self.image_side;
        sides.push(s);
        for _ in 0..CONV_KERNELS.len() {
            s = s.div_ceil(2);
            sides.push(s);
        }
        if s != 1 {
            return Err(Error::IncompatibleImage { side: self.image_side, final_side: s });
        }
        Ok(sides)
    }

    pub fn image_len(&self) -> usize {
        self.frame_stack * self.image_channels * self.image_side * self.image_side
    }

    pub fn conv_in_channels(&self) -> usize {
        self.frame_stack * self.image_channels
    }
}

#[derive(Clone)]
pub struct LinearP {
    pub w: Tensor, // [in, out]
    pub b: Tensor, // [out]
}

#[derive(Clone)]
pub struct ConvP {
    pub w: Tensor, // [out, in, k, k]
    pub b: Tensor, // [out]
}

#[derive(Clone)]
pub struct QHeadP {
    pub l1: LinearP,
    pub ln_gamma: Tensor,
    pub ln_beta: Tensor,
    pub l2: LinearP,
    pub l3: LinearP,
}

/// Which parameter groups a forward pass differentiates through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Track {
    pub encoder: bool,
    pub dynamics: bool,
    pub reward: bool,
    pub value: bool,
    pub policy: bool,
}

impl Track {
    pub const NONE: Track =
        Track { encoder: false, dynamics: false, reward: false, value: false, policy: false };
    pub const MODEL: Track =
        Track { encoder: true, dynamics: true, reward: true, value: true, policy: false };
    pub const BC: Track =
        Track { encoder: true, dynamics: false, reward: false, value: false, policy: true };
    pub const POLICY: Track =
        Track { encoder: false, dynamics: false, reward: false, value: false, policy: true };
}

/// All learned parameters. A value of this type doubles as the "bound" view
/// used inside a loss: [`ModelParams::bind`] returns a copy whose tracked
/// tensors are graph leaves.
#[derive(Clone)]
pub struct ModelParams {
    pub cfg: NetConfig,
    pub conv: Vec<ConvP>,
    pub img_out: LinearP,
    pub prop: [LinearP; 2],
    pub fuse: [LinearP; 2],
    pub dynamics: [LinearP; 3],
    pub reward: [LinearP; 3],
    pub q1: QHeadP,
    pub q2: QHeadP,
    pub policy: [LinearP; 3],
}

fn init_linear(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> LinearP {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = Tensor::new(
        vec![fan_in, fan_out],
        (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect(),
    );
    let b = Tensor::new(vec![fan_out], (0..fan_out).map(|_| rng.gen_range(-bound..bound)).collect());
    LinearP { w, b }
}

fn zero_linear(fan_in: usize, fan_out: usize) -> LinearP {
    LinearP { w: Tensor::zeros(vec![fan_in, fan_out]), b: Tensor::zeros(vec![fan_out]) }
}

fn init_conv(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize, k: usize) -> ConvP {
    let fan_in = c_in * k * k;
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = Tensor::new(
        vec![c_out, c_in, k, k],
        (0..c_out * fan_in).map(|_| rng.gen_range(-bound..bound)).collect(),
    );
    let b = Tensor::new(vec![c_out], (0..c_out).map(|_| rng.gen_range(-bound..bound)).collect());
    ConvP { w, b }
}

fn init_q_head(rng: &mut ChaCha8Rng, z_a: usize, hidden: usize) -> QHeadP {
    QHeadP {
        l1: init_linear(rng, z_a, hidden),
        ln_gamma: Tensor::full(vec![hidden], 1.0),
        ln_beta: Tensor::zeros(vec![hidden]),
        l2: init_linear(rng, hidden, hidden),
        // Zero-init final layer: fresh models predict value 0 everywhere.
        l3: zero_linear(hidden, 1),
    }
}

impl ModelParams {
    pub fn init(cfg: NetConfig, rng: &mut ChaCha8Rng) -> Result<ModelParams> {
        cfg.conv_schedule()?;
        let c = cfg.conv_channels;
        let mut conv = Vec::with_capacity(CONV_KERNELS.len());
        let mut c_in = cfg.conv_in_channels();
        for &k in &CONV_KERNELS {
            conv.push(init_conv(rng, c_in, c, k));
            c_in = c;
        }
        let z = cfg.latent_dim;
        let a = cfg.action_dim;
        let h = cfg.mlp_hidden;
        let eh = cfg.enc_hidden;
        Ok(ModelParams {
            cfg,
            conv,
            img_out: init_linear(rng, c, z),
            prop: [init_linear(rng, cfg.proprio_dim, eh), init_linear(rng, eh, z)],
            fuse: [init_linear(rng, z, eh), init_linear(rng, eh, z)],
            dynamics: [init_linear(rng, z + a, h), init_linear(rng, h, h), init_linear(rng, h, z)],
            reward: [init_linear(rng, z + a, h), init_linear(rng, h, h), zero_linear(h, 1)],
            q1: init_q_head(rng, z + a, h),
            q2: init_q_head(rng, z + a, h),
            policy: [init_linear(rng, z, h), init_linear(rng, h, h), init_linear(rng, h, a)],
        })
    }

    /// Visit every tensor in the canonical (checkpoint) order.
    pub fn for_each(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, layer) in self.conv.iter().enumerate() {
            f(&format!("enc.conv{}.w", i), &layer.w);
            f(&format!("enc.conv{}.b", i), &layer.b);
        }
        f("enc.img_out.w", &self.img_out.w);
        f("enc.img_out.b", &self.img_out.b);
        for (i, l) in self.prop.iter().enumerate() {
            f(&format!("enc.prop{}.w", i), &l.w);
            f(&format!("enc.prop{}.b", i), &l.b);
        }
        for (i, l) in self.fuse.iter().enumerate() {
            f(&format!("enc.fuse{}.w", i), &l.w);
            f(&format!("enc.fuse{}.b", i), &l.b);
        }
        for (i, l) in self.dynamics.iter().enumerate() {
            f(&format!("dyn.{}.w", i), &l.w);
            f(&format!("dyn.{}.b", i), &l.b);
        }
        for (i, l) in self.reward.iter().enumerate() {
            f(&format!("rew.{}.w", i), &l.w);
            f(&format!("rew.{}.b", i), &l.b);
        }
        for (name, q) in [("q1", &self.q1), ("q2", &self.q2)] {
            f(&format!("{}.l1.w", name), &q.l1.w);
            f(&format!("{}.l1.b", name), &q.l1.b);
            f(&format!("{}.ln.gamma", name), &q.ln_gamma);
            f(&format!("{}.ln.beta", name), &q.ln_beta);
            f(&format!("{}.l2.w", name), &q.l2.w);
            f(&format!("{}.l2.b", name), &q.l2.b);
            f(&format!("{}.l3.w", name), &q.l3.w);
            f(&format!("{}.l3.b", name), &q.l3.b);
        }
        for (i, l) in self.policy.iter().enumerate() {
            f(&format!("pi.{}.w", i), &l.w);
            f(&format!("pi.{}.b", i), &l.b);
        }
    }

    /// Mutable visit; must enumerate in the same order as [`Self::for_each`].
    pub fn for_each_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, layer) in self.conv.iter_mut().enumerate() {
            f(&format!("enc.conv{}.w", i), &mut layer.w);
            f(&format!("enc.conv{}.b", i), &mut layer.b);
        }
        f("enc.img_out.w", &mut self.img_out.w);
        f("enc.img_out.b", &mut self.img_out.b);
        for (i, l) in self.prop.iter_mut().enumerate() {
            f(&format!("enc.prop{}.w", i), &mut l.w);
            f(&format!("enc.prop{}.b", i), &mut l.b);
        }
        for (i, l) in self.fuse.iter_mut().enumerate() {
            f(&format!("enc.fuse{}.w", i), &mut l.w);
            f(&format!("enc.fuse{}.b", i), &mut l.b);
        }
        for (i, l) in self.dynamics.iter_mut().enumerate() {
            f(&format!("dyn.{}.w", i), &mut l.w);
            f(&format!("dyn.{}.b", i), &mut l.b);
        }
        for (i, l) in self.reward.iter_mut().enumerate() {
            f(&format!("rew.{}.w", i), &mut l.w);
            f(&format!("rew.{}.b", i), &mut l.b);
        }
        for (name, q) in [("q1", &mut self.q1), ("q2", &mut self.q2)] {
            f(&format!("{}.l1.w", name), &mut q.l1.w);
            f(&format!("{}.l1.b", name), &mut q.l1.b);
            f(&format!("{}.ln.gamma", name), &mut q.ln_gamma);
            f(&format!("{}.ln.beta", name), &mut q.ln_beta);
            f(&format!("{}.l2.w", name), &mut q.l2.w);
            f(&format!("{}.l2.b", name), &mut q.l2.b);
            f(&format!("{}.l3.w", name), &mut q.l3.w);
            f(&format!("{}.l3.b", name), &mut q.l3.b);
        }
        for (i, l) in self.policy.iter_mut().enumerate() {
            f(&format!("pi.{}.w", i), &mut l.w);
            f(&format!("pi.{}.b", i), &mut l.b);
        }
    }

    /// Tensor handles in canonical order (cheap clones of shared storage).
    pub fn flat(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        self.for_each(&mut |_, t| out.push(t.clone()));
        out
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each(&mut |n, _| out.push(n.to_string()));
        out
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.for_each(&mut |_, t| n += t.len());
        n
    }

    /// Copy with the tracked groups registered as graph leaves.
    pub fn bind(&self, g: &mut Graph, track: Track) -> ModelParams {
        let lin = |g: &mut Graph, l: &LinearP, on: bool| {
            if on {
                LinearP { w: g.leaf(&l.w), b: g.leaf(&l.b) }
            } else {
                l.clone()
            }
        };
        let q_head = |g: &mut Graph, q: &QHeadP, on: bool| {
            if on {
                QHeadP {
                    l1: lin(g, &q.l1, true),
                    ln_gamma: g.leaf(&q.ln_gamma),
                    ln_beta: g.leaf(&q.ln_beta),
                    l2: lin(g, &q.l2, true),
                    l3: lin(g, &q.l3, true),
                }
            } else {
                q.clone()
            }
        };
        ModelParams {
            cfg: self.cfg,
            conv: self
                .conv
                .iter()
                .map(|c| {
                    if track.encoder {
                        ConvP { w: g.leaf(&c.w), b: g.leaf(&c.b) }
                    } else {
                        c.clone()
                    }
                })
                .collect(),
            img_out: lin(g, &self.img_out, track.encoder),
            prop: [lin(g, &self.prop[0], track.encoder), lin(g, &self.prop[1], track.encoder)],
            fuse: [lin(g, &self.fuse[0], track.encoder), lin(g, &self.fuse[1], track.encoder)],
            dynamics: [
                lin(g, &self.dynamics[0], track.dynamics),
                lin(g, &self.dynamics[1], track.dynamics),
                lin(g, &self.dynamics[2], track.dynamics),
            ],
            reward: [
                lin(g, &self.reward[0], track.reward),
                lin(g, &self.reward[1], track.reward),
                lin(g, &self.reward[2], track.reward),
            ],
            q1: q_head(g, &self.q1, track.value),
            q2: q_head(g, &self.q2, track.value),
            policy: [
                lin(g, &self.policy[0], track.policy),
                lin(g, &self.policy[1], track.policy),
                lin(g, &self.policy[2], track.policy),
            ],
        }
    }

    /// Gradients in canonical order; untracked tensors get `None`.
    pub fn extract_grads(&self, g: &Graph) -> Vec<Option<Tensor>> {
        let mut out = Vec::new();
        self.for_each(&mut |_, t| {
            out.push(if t.node().is_some() { Some(g.grad_or_zeros(t)) } else { None })
        });
        out
    }

    // ── forward passes ──────────────────────────────────────────────────

    fn linear(g: &mut Graph, l: &LinearP, x: &Tensor) -> Tensor {
        let y = g.matmul(x, &l.w);
        g.add(&y, &l.b)
    }

    /// images: [B, stack*channels, S, S], proprio: [B, P] -> latent [B, Z].
    pub fn encode(&self, g: &mut Graph, images: &Tensor, proprio: &Tensor) -> Tensor {
        let batch = images.shape()[0];
        let mut h = images.clone();
        for layer in &self.conv {
            let c = g.conv2d(&h, &layer.w, &layer.b);
            h = g.relu(&c);
        }
        let flat = g.reshape(&h, vec![batch, self.cfg.conv_channels]);
        let img_feat = Self::linear(g, &self.img_out, &flat);

        let p = Self::linear(g, &self.prop[0], proprio);
        let p = g.elu(&p);
        let prop_feat = Self::linear(g, &self.prop[1], &p);

        let summed = g.add(&img_feat, &prop_feat);
        let f = Self::linear(g, &self.fuse[0], &summed);
        let f = g.elu(&f);
        Self::linear(g, &self.fuse[1], &f)
    }

    fn mlp3(g: &mut Graph, layers: &[LinearP; 3], x: &Tensor) -> Tensor {
        let h = Self::linear(g, &layers[0], x);
        let h = g.elu(&h);
        let h = Self::linear(g, &layers[1], &h);
        let h = g.elu(&h);
        Self::linear(g, &layers[2], &h)
    }

    /// z: [B, Z], a: [B, A] -> next latent [B, Z].
    pub fn dynamics_step(&self, g: &mut Graph, z: &Tensor, a: &Tensor) -> Tensor {
        let x = g.concat_cols(z, a);
        Self::mlp3(g, &self.dynamics, &x)
    }

    /// z: [B, Z], a: [B, A] -> predicted reward [B].
    pub fn predict_reward(&self, g: &mut Graph, z: &Tensor, a: &Tensor) -> Tensor {
        let x = g.concat_cols(z, a);
        let r = Self::mlp3(g, &self.reward, &x);
        g.reshape(&r, vec![z.shape()[0]])
    }

    fn q_head(g: &mut Graph, q: &QHeadP, x: &Tensor) -> Tensor {
        let h = Self::linear(g, &q.l1, x);
        let h = g.layer_norm(&h, &q.ln_gamma, &q.ln_beta);
        let h = g.tanh(&h);
        let h = Self::linear(g, &q.l2, &h);
        let h = g.elu(&h);
        Self::linear(g, &q.l3, &h)
    }

    /// Both value heads: z: [B, Z], a: [B, A] -> ([B], [B]).
    pub fn q_pair(&self, g: &mut Graph, z: &Tensor, a: &Tensor) -> (Tensor, Tensor) {
        let batch = z.shape()[0];
        let x = g.concat_cols(z, a);
        let q1 = Self::q_head(g, &self.q1, &x);
        let q2 = Self::q_head(g, &self.q2, &x);
        (g.reshape(&q1, vec![batch]), g.reshape(&q2, vec![batch]))
    }

    /// Clipped value estimate min(Q1, Q2): [B].
    pub fn q_min(&self, g: &mut Graph, z: &Tensor, a: &Tensor) -> Tensor {
        let (q1, q2) = self.q_pair(g, z, a);
        g.min_elem(&q1, &q2)
    }

    /// z: [B, Z] -> action [B, A] (unclipped head output).
    pub fn policy(&self, g: &mut Graph, z: &Tensor) -> Tensor {
        Self::mlp3(g, &self.policy, z)
    }

    /// Deterministic policy output for one latent, plus Gaussian exploration
    /// noise, clipped to the action bounds.
    pub fn policy_action(&self, z: &Tensor, noise_std: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        assert!(noise_std >= 0.0, "policy_action: negative noise std");
        let mut g = Graph::inference();
        let z2 = g.reshape(z, vec![1, self.cfg.latent_dim]);
        let a = self.policy(&mut g, &z2);
        let normal = Normal::new(0.0, 1.0).unwrap();
        a.iter()
            .map(|&v| {
                let n = if noise_std > 0.0 { noise_std * normal.sample(rng) } else { 0.0 };
                (v + n).clamp(-1.0, 1.0)
            })
            .collect()
    }
}

/// EMA target update: every tensor moves as `t <- zeta*t + (1-zeta)*p`.
pub fn ema_update(target: &mut ModelParams, params: &ModelParams, zeta: f64) {
    let src = params.flat();
    let mut idx = 0;
    target.for_each_mut(&mut |_, t| {
        let s = &src[idx];
        assert_eq!(t.shape(), s.shape(), "ema: shape mismatch at tensor {}", idx);
        for (tv, &sv) in t.data_mut().iter_mut().zip(s.iter()) {
            *tv = zeta * *tv + (1.0 - zeta) * sv;
        }
        idx += 1;
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    pub(crate) fn tiny_cfg() -> NetConfig {
        NetConfig {
            image_side: 16,
            image_channels: 1,
            frame_stack: 2,
            proprio_dim: 4,
            action_dim: 2,
            latent_dim: 6,
            mlp_hidden: 8,
            enc_hidden: 4,
            conv_channels: 3,
        }
    }

    #[test]
    fn visit_orders_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = ModelParams::init(tiny_cfg(), &mut rng).unwrap();
        let names = p.names();
        let mut names_mut = Vec::new();
        p.for_each_mut(&mut |n, _| names_mut.push(n.to_string()));
        assert_eq!(names, names_mut);
        assert_eq!(names.len(), 14 + 4 + 4 + 6 + 6 + 16 + 6);
    }

    #[test]
    fn incompatible_image_side_fails_at_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = NetConfig { image_side: 224, ..tiny_cfg() };
        let err = match ModelParams::init(cfg, &mut rng) {
            Err(e) => e,
            Ok(_) => panic!("construction should fail"),
        };
        assert!(matches!(err, Error::IncompatibleImage { .. }));
    }

    #[test]
    fn parameter_count_reported_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ModelParams::init(tiny_cfg(), &mut rng).unwrap();
        let n = p.parameter_count();
        assert!(n > 0);
        let mut sum = 0.0;
        p.for_each(&mut |_, t| sum += t.iter().map(|v| v.abs()).sum::<f64>());
        assert!(sum.is_finite());
    }
}
