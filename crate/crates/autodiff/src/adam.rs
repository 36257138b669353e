use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam over a fixed list of parameter tensors.
///
/// Moments are zero-initialized with the parameter shapes; each tensor keeps
/// its own step count, incremented only when it receives a gradient.
pub struct AdamState {
    cfg: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: Vec<u64>,
}

impl AdamState {
    pub fn new(params: &[&Tensor], cfg: AdamConfig) -> AdamState {
        AdamState {
            cfg,
            first_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step_count: vec![0; params.len()],
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    pub fn step_count(&self, idx: usize) -> u64 {
        self.step_count[idx]
    }

    pub fn first_moment(&self, idx: usize) -> &[f64] {
        &self.first_moment[idx]
    }

    pub fn second_moment(&self, idx: usize) -> &[f64] {
        &self.second_moment[idx]
    }

    /// Update one parameter in place; `None` leaves the parameter (and its
    /// moments and step count) untouched.
    pub fn step_one(&mut self, idx: usize, param: &mut Tensor, grad: Option<&Tensor>) {
        assert!(idx < self.first_moment.len(), "adam: tensor index {} out of range", idx);
        let Some(g) = grad else { return };
        assert_eq!(
            param.shape(),
            g.shape(),
            "adam: param {} shape {:?} vs grad shape {:?}",
            idx,
            param.shape(),
            g.shape()
        );
        self.step_count[idx] += 1;
        let t = self.step_count[idx] as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        let m = &mut self.first_moment[idx];
        let v = &mut self.second_moment[idx];
        let data = param.data_mut();
        for (((pv, &gv), mv), vv) in data.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut())
        {
            *mv = self.cfg.beta1 * *mv + (1.0 - self.cfg.beta1) * gv;
            *vv = self.cfg.beta2 * *vv + (1.0 - self.cfg.beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
        }
    }

    /// Apply one update in place. `grads[i] = None` leaves parameter `i`
    /// (and its moments and step count) untouched.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<Tensor>]) {
        assert_eq!(params.len(), self.first_moment.len(), "adam: parameter count changed");
        assert_eq!(params.len(), grads.len(), "adam: {} params, {} grads", params.len(), grads.len());
        for (i, grad) in grads.iter().enumerate() {
            self.step_one(i, params[i], grad.as_ref());
        }
    }
}
