use autodiff::{finite_difference_grad, AdamConfig, AdamState, Graph, Tensor};

/// Scalar Adam reference, written independently of [`AdamState`].
struct ScalarAdam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: f64,
    v: f64,
    t: u32,
}

impl ScalarAdam {
    fn new(lr: f64) -> Self {
        ScalarAdam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: 0.0, v: 0.0, t: 0 }
    }

    fn step(&mut self, p: f64, g: f64) -> f64 {
        self.t += 1;
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g;
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g;
        let m_hat = self.m / (1.0 - self.beta1.powi(self.t as i32));
        let v_hat = self.v / (1.0 - self.beta2.powi(self.t as i32));
        p - self.lr * m_hat / (v_hat.sqrt() + self.eps)
    }
}

#[test]
fn zero_gradient_leaves_params_and_moments_untouched() {
    let mut p = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]);
    let mut adam = AdamState::new(&[&p], AdamConfig::default());
    let grads = vec![Some(Tensor::zeros(vec![3]))];
    adam.step(&mut [&mut p], &grads);
    assert_eq!(p.data(), &[1.0, -2.0, 0.5]);
    assert!(adam.first_moment(0).iter().all(|&v| v == 0.0));
    assert!(adam.second_moment(0).iter().all(|&v| v == 0.0));
    assert_eq!(adam.step_count(0), 1);
}

#[test]
fn first_step_magnitude_is_learning_rate() {
    // With eps ~ 0, the bias-corrected first step is lr * sign(g).
    let cfg = AdamConfig { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-16 };
    for &g in &[0.7, -123.0, 1e-3] {
        let mut p = Tensor::scalar(1.0);
        let mut adam = AdamState::new(&[&p], cfg);
        adam.step(&mut [&mut p], &[Some(Tensor::scalar(g))]);
        let delta = 1.0 - p.item();
        assert!(
            (delta.abs() - cfg.lr).abs() < 1e-9,
            "step magnitude {} for grad {}",
            delta.abs(),
            g
        );
        assert_eq!(delta.signum(), g.signum());
    }
}

#[test]
fn matches_scalar_reference_over_steps() {
    let cfg = AdamConfig { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
    let mut p = Tensor::scalar(0.2);
    let mut adam = AdamState::new(&[&p], cfg);
    let mut reference = ScalarAdam::new(3e-4);
    let mut ref_p = 0.2;

    // Two successive identical gradients g = 1, then a few varied ones.
    for &g in &[1.0, 1.0, -0.3, 2.5, 0.0, -1.0] {
        adam.step(&mut [&mut p], &[Some(Tensor::scalar(g))]);
        ref_p = reference.step(ref_p, g);
        assert!((p.item() - ref_p).abs() < 1e-15, "{} vs {}", p.item(), ref_p);
    }
    assert!(ref_p < 0.2, "param should have decreased after positive gradients");
}

#[test]
fn none_gradient_skips_tensor() {
    let mut a = Tensor::scalar(1.0);
    let mut b = Tensor::scalar(2.0);
    let mut adam = AdamState::new(&[&a, &b], AdamConfig::default());
    adam.step(&mut [&mut a, &mut b], &[Some(Tensor::scalar(1.0)), None]);
    assert!(a.item() < 1.0);
    assert_eq!(b.item(), 2.0);
    assert_eq!(adam.step_count(0), 1);
    assert_eq!(adam.step_count(1), 0);
}

#[test]
#[should_panic(expected = "adam")]
fn shape_mismatch_is_rejected() {
    let mut p = Tensor::new(vec![2], vec![1.0, 2.0]);
    let mut adam = AdamState::new(&[&p], AdamConfig::default());
    adam.step(&mut [&mut p], &[Some(Tensor::scalar(1.0))]);
}

#[test]
fn fd_quadratic() {
    // f(x) = x^2 at x = 3 -> 6 within 1e-8.
    let g = finite_difference_grad(|x| x.item() * x.item(), &Tensor::scalar(3.0), 1e-5).unwrap();
    assert!((g.item() - 6.0).abs() < 1e-8);
}

#[test]
fn fd_linear_is_all_ones() {
    let x = Tensor::new(vec![4], vec![0.3, -1.2, 5.0, 0.0]);
    let g = finite_difference_grad(|x| x.iter().sum(), &x, 1e-5).unwrap();
    for v in g.iter() {
        assert!((v - 1.0).abs() < 1e-9);
    }
}

#[test]
fn fd_rejects_non_finite_evaluation() {
    let x = Tensor::scalar(0.0);
    let err = finite_difference_grad(|x| x.item().ln(), &x, 1e-5);
    assert!(err.is_err());
}

#[test]
fn fd_agrees_with_backward_on_two_layer_net() {
    // Duplicated here at the adam/fd level: the optimizer consumes exactly
    // the gradients that backward produces.
    let w0 = Tensor::new(vec![2, 2], vec![0.4, -0.7, 1.1, 0.2]);
    let x = Tensor::new(vec![2, 1], vec![0.5, -1.0]);
    let mut g = Graph::new();
    let w = g.leaf(&w0);
    let h = g.matmul(&w, &x);
    let a = g.elu(&h);
    let loss = g.sum_all(&a);
    g.backward(&loss).unwrap();
    let got = g.grad_or_zeros(&w);
    let want = finite_difference_grad(
        |p| {
            let mut g = Graph::inference();
            let h = g.matmul(p, &x);
            let a = g.elu(&h);
            g.sum_all(&a).item()
        },
        &w0,
        1e-5,
    )
    .unwrap();
    assert!(autodiff::max_rel_error(&got, &want, 1e-6) < 1e-6);
}
