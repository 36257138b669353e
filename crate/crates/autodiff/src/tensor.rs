use std::fmt;
use std::sync::Arc;

/// Handle into a [`crate::Graph`] tape. Present only on tensors produced
/// while tracing.
pub type NodeId = usize;

/// Dense row-major f64 tensor. Cheap to clone (shared storage).
///
/// A tensor without a `node` is a plain immutable value and may be shared
/// freely between threads. A tensor with a `node` participates in the
/// differentiation graph that produced it and is only meaningful together
/// with that graph.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    node: Option<NodeId>,
}

impl Tensor {
    /// Build a tensor from a shape and flat row-major data.
    ///
    /// Panics if `product(shape) != data.len()`.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "tensor: shape {:?} implies {} elements but data has {}",
            shape,
            numel,
            data.len()
        );
        Tensor { shape, data: Arc::new(data), node: None }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(vec![1], vec![v])
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Tensor { shape, data: Arc::new(vec![0.0; n]), node: None }
    }

    pub fn full(shape: impl Into<Vec<usize>>, v: f64) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Tensor { shape, data: Arc::new(vec![v; n]), node: None }
    }

    pub(crate) fn with_node(shape: Vec<usize>, data: Arc<Vec<f64>>, node: Option<NodeId>) -> Self {
        Tensor { shape, data, node }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn storage(&self) -> &Arc<Vec<f64>> {
        &self.data
    }

    pub fn node(&self) -> Option<NodeId> {
        self.node
    }

    /// Value of a 1-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// Stop-gradient: the same values with no graph attachment.
    pub fn detach(&self) -> Tensor {
        Tensor { shape: self.shape.clone(), data: Arc::clone(&self.data), node: None }
    }

    /// Mutable access to the underlying storage. Clones if shared.
    /// Only valid on value tensors; a traced tensor's storage is owned
    /// by the tape.
    pub fn data_mut(&mut self) -> &mut Vec<f64> {
        assert!(self.node.is_none(), "cannot mutate a traced tensor");
        Arc::make_mut(&mut self.data)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if let Some(id) = self.node {
            write!(f, "@{}", id)?;
        }
        if self.len() <= 8 {
            write!(f, " {:?}", &self.data[..])
        } else {
            write!(f, " [{:.4}, {:.4}, ..; {}]", self.data[0], self.data[1], self.len())
        }
    }
}


impl PartialEq for Tensor {
    /// Value equality: same shape, same data. Graph attachment is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data[..] == other.data[..]
    }
}
