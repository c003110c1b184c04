//! Dense f32 tensors with reverse-mode automatic differentiation.
//!
//! The engine is a Wengert tape: every operation appends a node to a
//! [`Graph`] and [`Graph::backward`] replays the tape in reverse, pushing
//! vector-Jacobian products toward the leaves. The op set is exactly what
//! the conditional CycleGAN models need (2-D convolution, gated and sigmoid
//! linear units, instance normalization, pixel shuffling) plus the scalar
//! reductions used by the losses. Everything runs on the CPU, single
//! threaded, with a fixed accumulation order, so results are deterministic
//! for a given input.

mod adam;
mod graph;
mod ops;

pub use adam::{AdamOptimizer, AdamState};
pub use graph::{Bind, Graph, NodeId};

use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

/// Errors surfaced by tensor construction, graph ops, and the optimizer.
#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("parameter {name:?} has no gradient")]
    MissingGrad { name: String },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

fn shape_err(op: &'static str, detail: impl Into<String>) -> AutodiffError {
    AutodiffError::Shape { op, detail: detail.into() }
}

/// Row-major dense tensor of f32 values.
///
/// All dims are positive; `data.len()` always equals the product of the
/// dims. Equality is element-wise (bit-exact for the checkpoint tests).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(AutodiffError::Invalid(format!("zero dim in shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(AutodiffError::Invalid(format!(
                "shape {shape:?} wants {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero dim in shape {shape:?}");
        let n: usize = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn scalar(value: f32) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> f32) -> Self {
        let mut t = Self::zeros(shape);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = f(i);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> Result<f32> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(AutodiffError::NonScalarLoss { shape: self.shape.clone() })
        }
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    /// Dims of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [a, b] => Ok((a, b)),
            _ => Err(AutodiffError::Invalid(format!("expected rank 2, got {:?}", self.shape))),
        }
    }

    /// Dims of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(AutodiffError::Invalid(format!("expected rank 3, got {:?}", self.shape))),
        }
    }
}

/// A tensor value plus its gradient slot.
///
/// `grad`, when present, has the same shape as `value`. Gradients are
/// written by [`Graph::backward`] via [`Parameter`] export; tensors that
/// never participate in a graph keep whatever was in their slot.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffTensor {
    pub value: Tensor,
    pub requires_grad: bool,
    pub grad: Option<Tensor>,
}

impl DiffTensor {
    pub fn new(value: Tensor, requires_grad: bool) -> Self {
        Self { value, requires_grad, grad: None }
    }
}

/// Process-unique identity of a [`Parameter`].
///
/// Registration in a [`Graph`] is keyed by this id, so one parameter used
/// in several forward passes of the same graph accumulates into a single
/// gradient buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(u64);

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(1);

impl ParamId {
    fn fresh() -> Self {
        Self(NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// A named trainable tensor.
///
/// Names are unique within a model and stable across checkpoint round
/// trips. The id is never serialized; a fresh one is minted per in-memory
/// parameter so graph binding can key on identity rather than name.
#[derive(Debug)]
pub struct Parameter {
    name: String,
    id: ParamId,
    pub tensor: DiffTensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let name = name.into();
        assert!(!name.is_empty(), "parameter name must be nonempty");
        Self { name, id: ParamId::fresh(), tensor: DiffTensor::new(value, true) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn value(&self) -> &Tensor {
        &self.tensor.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor {
        &mut self.tensor.value
    }

    pub fn grad(&self) -> Option<&Tensor> {
        self.tensor.grad.as_ref()
    }

    pub fn set_grad(&mut self, grad: Tensor) {
        debug_assert_eq!(grad.shape(), self.tensor.value.shape());
        self.tensor.grad = Some(grad);
    }

    pub fn clear_grad(&mut self) {
        self.tensor.grad = None;
    }
}
