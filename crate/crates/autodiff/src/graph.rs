use std::sync::Arc;

use crate::kernels::{self, ConvGeom};
use crate::tensor::{NodeId, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward: loss tensor was not produced under tracing on this graph")]
    LossNotTraced,
    #[error("{op}: non-finite evaluation at probe index {index}")]
    NonFinite { op: &'static str, index: usize },
}

struct BufEntry {
    data: Arc<Vec<f64>>,
    requires_grad: bool,
}

#[derive(Clone, Debug)]
enum Op {
    Add { a: NodeId, b: NodeId, out: NodeId },
    AddBias { a: NodeId, bias: NodeId, out: NodeId, rows: usize, cols: usize },
    Sub { a: NodeId, b: NodeId, out: NodeId },
    Mul { a: NodeId, b: NodeId, out: NodeId },
    Scale { a: NodeId, c: f64, out: NodeId },
    Matmul { a: NodeId, b: NodeId, out: NodeId, m: usize, k: usize, n: usize },
    Conv2d { x: NodeId, w: NodeId, bias: NodeId, out: NodeId, geom: ConvGeom },
    Elu { a: NodeId, out: NodeId },
    Relu { a: NodeId, out: NodeId },
    Tanh { a: NodeId, out: NodeId },
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, out: NodeId, rows: usize, cols: usize },
    ConcatCols { a: NodeId, b: NodeId, out: NodeId, rows: usize, ca: usize, cb: usize },
    SumAll { a: NodeId, out: NodeId },
    MeanAll { a: NodeId, out: NodeId },
    MeanRows { a: NodeId, out: NodeId, rows: usize, cols: usize },
    MinElem { a: NodeId, b: NodeId, out: NodeId },
    LogGauss { x: NodeId, mu: NodeId, out: NodeId, var: f64 },
    Reshape { a: NodeId, out: NodeId },
}

const LAYER_NORM_EPS: f64 = 1e-5;

/// Append-only tape of recorded operations.
///
/// One graph per training step; a graph built with [`Graph::inference`]
/// computes values without recording anything. An op is recorded only when
/// tracing is on and at least one operand is attached to this graph, so
/// plain value math flows through the same methods at no tape cost.
pub struct Graph {
    enabled: bool,
    bufs: Vec<BufEntry>,
    ops: Vec<Op>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

macro_rules! check_finite {
    ($data:expr, $op:expr) => {
        debug_assert!(
            $data.iter().all(|v| v.is_finite()),
            "{}: non-finite value in forward output",
            $op
        );
    };
}

impl Graph {
    /// A recording graph.
    pub fn new() -> Graph {
        Graph { enabled: true, bufs: Vec::new(), ops: Vec::new(), grads: Vec::new() }
    }

    /// A non-recording graph: the same ops, values only.
    pub fn inference() -> Graph {
        Graph { enabled: false, bufs: Vec::new(), ops: Vec::new(), grads: Vec::new() }
    }

    pub fn is_recording(&self) -> bool {
        self.enabled
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    /// Register a differentiable leaf. The returned tensor shares storage
    /// with the input but is attached to this graph.
    pub fn leaf(&mut self, t: &Tensor) -> Tensor {
        if !self.enabled {
            return t.detach();
        }
        let id = self.push_buf(Arc::clone(t.storage()), true);
        Tensor::with_node(t.shape().to_vec(), Arc::clone(t.storage()), Some(id))
    }

    fn push_buf(&mut self, data: Arc<Vec<f64>>, requires_grad: bool) -> NodeId {
        let id = self.bufs.len();
        self.bufs.push(BufEntry { data, requires_grad });
        self.grads.push(None);
        id
    }

    /// Buffer id for an operand: reuse its node, or intern it as a constant.
    fn operand(&mut self, t: &Tensor) -> NodeId {
        match t.node() {
            Some(id) => {
                assert!(id < self.bufs.len(), "operand node {} does not belong to this graph", id);
                id
            }
            None => self.push_buf(Arc::clone(t.storage()), false),
        }
    }

    fn rg(&self, id: NodeId) -> bool {
        self.bufs[id].requires_grad
    }

    fn alloc_out(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> (NodeId, Tensor) {
        let data = Arc::new(data);
        let id = self.push_buf(Arc::clone(&data), requires_grad);
        (id, Tensor::with_node(shape, data, Some(id)))
    }

    fn tracing(&self, inputs: &[&Tensor]) -> bool {
        self.enabled && inputs.iter().any(|t| t.node().is_some())
    }

    // ── elementwise and shape ops ───────────────────────────────────────

    /// Elementwise sum. `b` may also be a vector broadcast across the rows
    /// of a 2-d `a` (bias add).
    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        if a.shape() == b.shape() {
            let data: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x + y).collect();
            check_finite!(data, "add");
            if !self.tracing(&[a, b]) {
                return Tensor::new(a.shape().to_vec(), data);
            }
            let ia = self.operand(a);
            let ib = self.operand(b);
            let rg = self.rg(ia) || self.rg(ib);
            let (out, t) = self.alloc_out(a.shape().to_vec(), data, rg);
            self.ops.push(Op::Add { a: ia, b: ib, out });
            return t;
        }
        if a.shape().len() == 2 && b.shape().len() == 1 && a.shape()[1] == b.shape()[0] {
            let (rows, cols) = (a.shape()[0], a.shape()[1]);
            let mut data = a.data().to_vec();
            for r in 0..rows {
                for (v, bv) in data[r * cols..(r + 1) * cols].iter_mut().zip(b.iter()) {
                    *v += bv;
                }
            }
            check_finite!(data, "add");
            if !self.tracing(&[a, b]) {
                return Tensor::new(vec![rows, cols], data);
            }
            let ia = self.operand(a);
            let ib = self.operand(b);
            let rg = self.rg(ia) || self.rg(ib);
            let (out, t) = self.alloc_out(vec![rows, cols], data, rg);
            self.ops.push(Op::AddBias { a: ia, bias: ib, out, rows, cols });
            return t;
        }
        panic!("add: incompatible shapes {:?} and {:?}", a.shape(), b.shape());
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!(a.shape(), b.shape(), "sub: shapes {:?} and {:?}", a.shape(), b.shape());
        let data: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
        check_finite!(data, "sub");
        if !self.tracing(&[a, b]) {
            return Tensor::new(a.shape().to_vec(), data);
        }
        let ia = self.operand(a);
        let ib = self.operand(b);
        let rg = self.rg(ia) || self.rg(ib);
        let (out, t) = self.alloc_out(a.shape().to_vec(), data, rg);
        self.ops.push(Op::Sub { a: ia, b: ib, out });
        t
    }

    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!(a.shape(), b.shape(), "mul: shapes {:?} and {:?}", a.shape(), b.shape());
        let data: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x * y).collect();
        check_finite!(data, "mul");
        if !self.tracing(&[a, b]) {
            return Tensor::new(a.shape().to_vec(), data);
        }
        let ia = self.operand(a);
        let ib = self.operand(b);
        let rg = self.rg(ia) || self.rg(ib);
        let (out, t) = self.alloc_out(a.shape().to_vec(), data, rg);
        self.ops.push(Op::Mul { a: ia, b: ib, out });
        t
    }

    pub fn scale(&mut self, a: &Tensor, c: f64) -> Tensor {
        let data: Vec<f64> = a.iter().map(|x| x * c).collect();
        check_finite!(data, "scale");
        if !self.tracing(&[a]) {
            return Tensor::new(a.shape().to_vec(), data);
        }
        let ia = self.operand(a);
        let rg = self.rg(ia);
        let (out, t) = self.alloc_out(a.shape().to_vec(), data, rg);
        self.ops.push(Op::Scale { a: ia, c, out });
        t
    }

    pub fn square(&mut self, a: &Tensor) -> Tensor {
        let a2 = a.clone();
        self.mul(&a2, a)
    }

    /// Elementwise minimum; ties route their gradient to the first operand.
    pub fn min_elem(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!(a.shape(), b.shape(), "min: shapes {:?} and {:?}", a.shape(), b.shape());
        let data: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x.min(*y)).collect();
        if !self.tracing(&[a, b]) {
            return Tensor::new(a.shape().to_vec(), data);
        }
        let ia = self.operand(a);
        let ib = self.operand(b);
        let rg = self.rg(ia) || self.rg(ib);
        let (out, t) = self.alloc_out(a.shape().to_vec(), data, rg);
        self.ops.push(Op::MinElem { a: ia, b: ib, out });
        t
    }

    pub fn reshape(&mut self, a: &Tensor, shape: impl Into<Vec<usize>>) -> Tensor {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        assert_eq!(n, a.len(), "reshape: {:?} -> {:?}", a.shape(), shape);
        if !self.tracing(&[a]) {
            return Tensor::new(shape, a.data().to_vec());
        }
        let ia = self.operand(a);
        let rg = self.rg(ia);
        let (out, t) = self.alloc_out(shape, a.data().to_vec(), rg);
        self.ops.push(Op::Reshape { a: ia, out });
        t
    }

    // ── linear algebra ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        assert!(
            a.shape().len() == 2 && b.shape().len() == 2 && a.shape()[1] == b.shape()[0],
            "matmul: shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        );
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let data = kernels::matmul(a.data(), b.data(), m, k, n);
        check_finite!(data, "matmul");
        if !self.tracing(&[a, b]) {
            return Tensor::new(vec![m, n], data);
        }
        let ia = self.operand(a);
        let ib = self.operand(b);
        let rg = self.rg(ia) || self.rg(ib);
        let (out, t) = self.alloc_out(vec![m, n], data, rg);
        self.ops.push(Op::Matmul { a: ia, b: ib, out, m, k, n });
        t
    }

    /// Stride-2 convolution with halving zero padding, so the spatial side
    /// goes `s -> ceil(s/2)`.
    /// x: [b, c_in, s, s], w: [c_out, c_in, k, k] (k odd), bias: [c_out].
    pub fn conv2d(&mut self, x: &Tensor, w: &Tensor, bias: &Tensor) -> Tensor {
        let xs = x.shape().to_vec();
        let ws = w.shape().to_vec();
        assert!(
            xs.len() == 4 && ws.len() == 4 && xs[2] == xs[3] && ws[2] == ws[3] && xs[1] == ws[1],
            "conv2d: shapes {:?} and {:?}",
            xs,
            ws
        );
        assert!(ws[2] % 2 == 1, "conv2d: kernel size {} is not odd", ws[2]);
        assert_eq!(bias.shape(), &[ws[0]], "conv2d: bias shape {:?}", bias.shape());
        let geom = ConvGeom::new(xs[0], xs[1], ws[0], xs[2], ws[2]);
        let data = kernels::conv2d(&geom, x.data(), w.data(), bias.data());
        check_finite!(data, "conv2d");
        let shape = vec![geom.batch, geom.c_out, geom.side_out, geom.side_out];
        if !self.tracing(&[x, w, bias]) {
            return Tensor::new(shape, data);
        }
        let ix = self.operand(x);
        let iw = self.operand(w);
        let ib = self.operand(bias);
        let rg = self.rg(ix) || self.rg(iw) || self.rg(ib);
        let (out, t) = self.alloc_out(shape, data, rg);
        self.ops.push(Op::Conv2d { x: ix, w: iw, bias: ib, out, geom });
        t
    }

    pub fn concat_cols(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        assert!(
            a.shape().len() == 2 && b.shape().len() == 2 && a.shape()[0] == b.shape()[0],
            "concat: shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        );
        let (rows, ca, cb) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
        }
        if !self.tracing(&[a, b]) {
            return Tensor::new(vec![rows, ca + cb], data);
        }
        let ia = self.operand(a);
        let ib = self.operand(b);
        let rg = self.rg(ia) || self.rg(ib);
        let (out, t) = self.alloc_out(vec![rows, ca + cb], data, rg);
        self.ops.push(Op::ConcatCols { a: ia, b: ib, out, rows, ca, cb });
        t
    }

    // ── nonlinearities ──────────────────────────────────────────────────

    pub fn elu(&mut self, a: &Tensor) -> Tensor {
        let data: Vec<f64> = a.iter().map(|&x| kernels::elu(x)).collect();
        check_finite!(data, "elu");
        if !self.tracing(&[a]) {
            return Tensor::new(a.shape().to_vec(), data);
        }
        let ia = self.operand(a);
        let rg = self.rg(ia);
        let (out, t) = self.alloc_out(a.shape().to_vec(), data, rg);
        self.ops.push(Op::Elu { a: ia, out });
        t
    }

    pub fn relu(&mut self, a: &Tensor) -> Tensor {
        let data: Vec<f64> = a.iter().map(|&x| x.max(0.0)).collect();
        if !self.tracing(&[a]) {
            return Tensor::new(a.shape().to_vec(), data);
        }
        let ia = self.operand(a);
        let rg = self.rg(ia);
        let (out, t) = self.alloc_out(a.shape().to_vec(), data, rg);
        self.ops.push(Op::Relu { a: ia, out });
        t
    }

    pub fn tanh(&mut self, a: &Tensor) -> Tensor {
        let data: Vec<f64> = a.iter().map(|&x| x.tanh()).collect();
        if !self.tracing(&[a]) {
            return Tensor::new(a.shape().to_vec(), data);
        }
        let ia = self.operand(a);
        let rg = self.rg(ia);
        let (out, t) = self.alloc_out(a.shape().to_vec(), data, rg);
        self.ops.push(Op::Tanh { a: ia, out });
        t
    }

    /// Row-wise layer normalization with affine parameters.
    /// x: [rows, cols], gamma/beta: [cols].
    pub fn layer_norm(&mut self, x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Tensor {
        assert!(
            x.shape().len() == 2
                && gamma.shape() == [x.shape()[1]]
                && beta.shape() == [x.shape()[1]],
            "layer_norm: shapes {:?}, {:?}, {:?}",
            x.shape(),
            gamma.shape(),
            beta.shape()
        );
        let (rows, cols) = (x.shape()[0], x.shape()[1]);
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &x.data()[r * cols..(r + 1) * cols];
            let (mean, rstd) = row_moments(row);
            for (j, (&xv, o)) in row.iter().zip(&mut data[r * cols..(r + 1) * cols]).enumerate() {
                *o = gamma.data()[j] * (xv - mean) * rstd + beta.data()[j];
            }
        }
        check_finite!(data, "layer_norm");
        if !self.tracing(&[x, gamma, beta]) {
            return Tensor::new(vec![rows, cols], data);
        }
        let ix = self.operand(x);
        let ig = self.operand(gamma);
        let ib = self.operand(beta);
        let rg = self.rg(ix) || self.rg(ig) || self.rg(ib);
        let (out, t) = self.alloc_out(vec![rows, cols], data, rg);
        self.ops.push(Op::LayerNorm { x: ix, gamma: ig, beta: ib, out, rows, cols });
        t
    }

    /// Elementwise log density of a Gaussian with the given variance.
    pub fn log_gauss_var(&mut self, x: &Tensor, mu: &Tensor, var: f64) -> Tensor {
        assert_eq!(x.shape(), mu.shape(), "log_gauss: shapes {:?}, {:?}", x.shape(), mu.shape());
        assert!(var > 0.0, "log_gauss: variance {} must be positive", var);
        let norm = 0.5 * (2.0 * std::f64::consts::PI * var).ln();
        let data: Vec<f64> = x
            .iter()
            .zip(mu.iter())
            .map(|(&xv, &mv)| -0.5 * (xv - mv) * (xv - mv) / var - norm)
            .collect();
        check_finite!(data, "log_gauss");
        if !self.tracing(&[x, mu]) {
            return Tensor::new(x.shape().to_vec(), data);
        }
        let ix = self.operand(x);
        let imu = self.operand(mu);
        let rg = self.rg(ix) || self.rg(imu);
        let (out, t) = self.alloc_out(x.shape().to_vec(), data, rg);
        self.ops.push(Op::LogGauss { x: ix, mu: imu, out, var });
        t
    }

    /// Log density under a unit-variance Gaussian.
    pub fn log_gauss(&mut self, x: &Tensor, mu: &Tensor) -> Tensor {
        self.log_gauss_var(x, mu, 1.0)
    }

    // ── reductions ──────────────────────────────────────────────────────

    pub fn sum_all(&mut self, a: &Tensor) -> Tensor {
        let data = vec![a.iter().sum::<f64>()];
        check_finite!(data, "sum");
        if !self.tracing(&[a]) {
            return Tensor::new(vec![1], data);
        }
        let ia = self.operand(a);
        let rg = self.rg(ia);
        let (out, t) = self.alloc_out(vec![1], data, rg);
        self.ops.push(Op::SumAll { a: ia, out });
        t
    }

    pub fn mean_all(&mut self, a: &Tensor) -> Tensor {
        assert!(!a.is_empty(), "mean: empty tensor");
        let data = vec![a.iter().sum::<f64>() / a.len() as f64];
        check_finite!(data, "mean");
        if !self.tracing(&[a]) {
            return Tensor::new(vec![1], data);
        }
        let ia = self.operand(a);
        let rg = self.rg(ia);
        let (out, t) = self.alloc_out(vec![1], data, rg);
        self.ops.push(Op::MeanAll { a: ia, out });
        t
    }

    /// Per-row mean of a 2-d tensor: [rows, cols] -> [rows].
    pub fn mean_rows(&mut self, a: &Tensor) -> Tensor {
        assert_eq!(a.shape().len(), 2, "mean_rows: shape {:?}", a.shape());
        let (rows, cols) = (a.shape()[0], a.shape()[1]);
        assert!(cols > 0, "mean_rows: zero columns");
        let data: Vec<f64> = (0..rows)
            .map(|r| a.data()[r * cols..(r + 1) * cols].iter().sum::<f64>() / cols as f64)
            .collect();
        if !self.tracing(&[a]) {
            return Tensor::new(vec![rows], data);
        }
        let ia = self.operand(a);
        let rg = self.rg(ia);
        let (out, t) = self.alloc_out(vec![rows], data, rg);
        self.ops.push(Op::MeanRows { a: ia, out, rows, cols });
        t
    }

    /// Mean squared error over all elements of two same-shape tensors.
    pub fn mse(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        let d = self.sub(a, b);
        let sq = self.square(&d);
        self.mean_all(&sq)
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Gradients of leaves are then
    /// available via [`Graph::grad`] / [`Graph::grad_or_zeros`].
    pub fn backward(&mut self, loss: &Tensor) -> Result<(), Error> {
        let id = match loss.node() {
            Some(id) if id < self.bufs.len() => id,
            _ => return Err(Error::LossNotTraced),
        };
        if loss.len() != 1 {
            return Err(Error::NonScalarLoss(loss.shape().to_vec()));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[id] = Some(vec![1.0]);
        for i in (0..self.ops.len()).rev() {
            let op = self.ops[i].clone();
            self.backward_op(&op);
        }
        Ok(())
    }

    /// Gradient accumulated for a traced tensor, if any reached it.
    pub fn grad(&self, t: &Tensor) -> Option<&[f64]> {
        t.node().and_then(|id| self.grads.get(id)).and_then(|g| g.as_deref())
    }

    /// Gradient for a leaf; leaves not reached by the loss get zeros.
    pub fn grad_or_zeros(&self, leaf: &Tensor) -> Tensor {
        match self.grad(leaf) {
            Some(g) => Tensor::new(leaf.shape().to_vec(), g.to_vec()),
            None => Tensor::zeros(leaf.shape().to_vec()),
        }
    }

    fn acc(&mut self, id: NodeId, delta: &[f64]) {
        if !self.bufs[id].requires_grad {
            return;
        }
        debug_assert_eq!(self.bufs[id].data.len(), delta.len());
        match &mut self.grads[id] {
            Some(g) => {
                for (gv, dv) in g.iter_mut().zip(delta) {
                    *gv += dv;
                }
            }
            None => self.grads[id] = Some(delta.to_vec()),
        }
    }

    fn val(&self, id: NodeId) -> &[f64] {
        &self.bufs[id].data
    }

    fn backward_op(&mut self, op: &Op) {
        match *op {
            Op::Add { a, b, out } => {
                if let Some(g) = self.grads[out].clone() {
                    self.acc(a, &g);
                    self.acc(b, &g);
                }
            }
            Op::AddBias { a, bias, out, rows, cols } => {
                if let Some(g) = self.grads[out].clone() {
                    self.acc(a, &g);
                    if self.rg(bias) {
                        let mut db = vec![0.0; cols];
                        for r in 0..rows {
                            for (dv, gv) in db.iter_mut().zip(&g[r * cols..(r + 1) * cols]) {
                                *dv += gv;
                            }
                        }
                        self.acc(bias, &db);
                    }
                }
            }
            Op::Sub { a, b, out } => {
                if let Some(g) = self.grads[out].clone() {
                    self.acc(a, &g);
                    if self.rg(b) {
                        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                        self.acc(b, &neg);
                    }
                }
            }
            Op::Mul { a, b, out } => {
                if let Some(g) = self.grads[out].clone() {
                    if self.rg(a) {
                        let da: Vec<f64> =
                            g.iter().zip(self.val(b)).map(|(gv, bv)| gv * bv).collect();
                        self.acc(a, &da);
                    }
                    if self.rg(b) {
                        let db: Vec<f64> =
                            g.iter().zip(self.val(a)).map(|(gv, av)| gv * av).collect();
                        self.acc(b, &db);
                    }
                }
            }
            Op::Scale { a, c, out } => {
                if let Some(g) = self.grads[out].clone() {
                    if self.rg(a) {
                        let da: Vec<f64> = g.iter().map(|gv| gv * c).collect();
                        self.acc(a, &da);
                    }
                }
            }
            Op::Matmul { a, b, out, m, k, n } => {
                if let Some(g) = self.grads[out].clone() {
                    if self.rg(a) {
                        let mut da = vec![0.0; m * k];
                        kernels::matmul_nt_acc(&g, self.val(b), &mut da, m, n, k);
                        self.acc(a, &da);
                    }
                    if self.rg(b) {
                        let mut db = vec![0.0; k * n];
                        kernels::matmul_tn_acc(self.val(a), &g, &mut db, k, m, n);
                        self.acc(b, &db);
                    }
                }
            }
            Op::Conv2d { x, w, bias, out, ref geom } => {
                if let Some(g) = self.grads[out].clone() {
                    let need_dx = self.rg(x);
                    let (dx, dw, db) =
                        kernels::conv2d_backward(geom, self.val(x), self.val(w), &g, need_dx);
                    if need_dx {
                        self.acc(x, &dx);
                    }
                    self.acc(w, &dw);
                    self.acc(bias, &db);
                }
            }
            Op::Elu { a, out } => {
                if let Some(g) = self.grads[out].clone() {
                    if self.rg(a) {
                        let da: Vec<f64> = g
                            .iter()
                            .zip(self.val(out))
                            .map(|(gv, &ov)| gv * kernels::elu_grad_from_out(ov))
                            .collect();
                        self.acc(a, &da);
                    }
                }
            }
            Op::Relu { a, out } => {
                if let Some(g) = self.grads[out].clone() {
                    if self.rg(a) {
                        let da: Vec<f64> = g
                            .iter()
                            .zip(self.val(a))
                            .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                            .collect();
                        self.acc(a, &da);
                    }
                }
            }
            Op::Tanh { a, out } => {
                if let Some(g) = self.grads[out].clone() {
                    if self.rg(a) {
                        let da: Vec<f64> = g
                            .iter()
                            .zip(self.val(out))
                            .map(|(gv, &ov)| gv * (1.0 - ov * ov))
                            .collect();
                        self.acc(a, &da);
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, out, rows, cols } => {
                if let Some(g) = self.grads[out].clone() {
                    let xd = self.val(x).to_vec();
                    let gd = self.val(gamma).to_vec();
                    let mut dx = vec![0.0; rows * cols];
                    let mut dgamma = vec![0.0; cols];
                    let mut dbeta = vec![0.0; cols];
                    for r in 0..rows {
                        let row = &xd[r * cols..(r + 1) * cols];
                        let grow = &g[r * cols..(r + 1) * cols];
                        let (mean, rstd) = row_moments(row);
                        let xhat: Vec<f64> = row.iter().map(|&v| (v - mean) * rstd).collect();
                        let gxh: Vec<f64> =
                            grow.iter().zip(&gd).map(|(gv, gam)| gv * gam).collect();
                        let m1 = gxh.iter().sum::<f64>() / cols as f64;
                        let m2 =
                            gxh.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                        for j in 0..cols {
                            dx[r * cols + j] = rstd * (gxh[j] - m1 - xhat[j] * m2);
                            dgamma[j] += grow[j] * xhat[j];
                            dbeta[j] += grow[j];
                        }
                    }
                    self.acc(x, &dx);
                    self.acc(gamma, &dgamma);
                    self.acc(beta, &dbeta);
                }
            }
            Op::ConcatCols { a, b, out, rows, ca, cb } => {
                if let Some(g) = self.grads[out].clone() {
                    if self.rg(a) {
                        let mut da = vec![0.0; rows * ca];
                        for r in 0..rows {
                            da[r * ca..(r + 1) * ca]
                                .copy_from_slice(&g[r * (ca + cb)..r * (ca + cb) + ca]);
                        }
                        self.acc(a, &da);
                    }
                    if self.rg(b) {
                        let mut db = vec![0.0; rows * cb];
                        for r in 0..rows {
                            db[r * cb..(r + 1) * cb]
                                .copy_from_slice(&g[r * (ca + cb) + ca..(r + 1) * (ca + cb)]);
                        }
                        self.acc(b, &db);
                    }
                }
            }
            Op::SumAll { a, out } => {
                if let Some(g) = self.grads[out].clone() {
                    if self.rg(a) {
                        let da = vec![g[0]; self.val(a).len()];
                        self.acc(a, &da);
                    }
                }
            }
            Op::MeanAll { a, out } => {
                if let Some(g) = self.grads[out].clone() {
                    if self.rg(a) {
                        let n = self.val(a).len();
                        let da = vec![g[0] / n as f64; n];
                        self.acc(a, &da);
                    }
                }
            }
            Op::MeanRows { a, out, rows, cols } => {
                if let Some(g) = self.grads[out].clone() {
                    if self.rg(a) {
                        let mut da = vec![0.0; rows * cols];
                        for r in 0..rows {
                            let gv = g[r] / cols as f64;
                            for v in &mut da[r * cols..(r + 1) * cols] {
                                *v = gv;
                            }
                        }
                        self.acc(a, &da);
                    }
                }
            }
            Op::MinElem { a, b, out } => {
                if let Some(g) = self.grads[out].clone() {
                    let av = self.val(a).to_vec();
                    let bv = self.val(b).to_vec();
                    if self.rg(a) {
                        let da: Vec<f64> = g
                            .iter()
                            .zip(av.iter().zip(&bv))
                            .map(|(gv, (x, y))| if x <= y { *gv } else { 0.0 })
                            .collect();
                        self.acc(a, &da);
                    }
                    if self.rg(b) {
                        let db: Vec<f64> = g
                            .iter()
                            .zip(av.iter().zip(&bv))
                            .map(|(gv, (x, y))| if x <= y { 0.0 } else { *gv })
                            .collect();
                        self.acc(b, &db);
                    }
                }
            }
            Op::LogGauss { x, mu, out, var } => {
                if let Some(g) = self.grads[out].clone() {
                    let xd = self.val(x).to_vec();
                    let md = self.val(mu).to_vec();
                    if self.rg(x) {
                        let dx: Vec<f64> = g
                            .iter()
                            .zip(xd.iter().zip(&md))
                            .map(|(gv, (xv, mv))| -gv * (xv - mv) / var)
                            .collect();
                        self.acc(x, &dx);
                    }
                    if self.rg(mu) {
                        let dmu: Vec<f64> = g
                            .iter()
                            .zip(xd.iter().zip(&md))
                            .map(|(gv, (xv, mv))| gv * (xv - mv) / var)
                            .collect();
                        self.acc(mu, &dmu);
                    }
                }
            }
            Op::Reshape { a, out } => {
                if let Some(g) = self.grads[out].clone() {
                    self.acc(a, &g);
                }
            }
        }
    }
}

fn row_moments(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}
