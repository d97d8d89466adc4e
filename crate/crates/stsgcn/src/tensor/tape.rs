//! Reverse-mode tape: eager forward execution with recorded backward rules.

use super::ops::Record;
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value living on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) struct Node {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
    pub(crate) grad: Option<Vec<f64>>,
    /// True if a gradient should be accumulated here (a requires-grad leaf or
    /// anything computed from one).
    pub(crate) needs_grad: bool,
}

/// Ordered record of executed differentiable operations.
///
/// The tape is single-shot: run one forward pass, call [`Tape::backward`]
/// once, read gradients, drop it. Repeated backward calls are rejected.
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    pub(crate) records: Vec<Record>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            records: Vec::new(),
            backward_done: false,
        }
    }

    /// Register a tensor as a leaf. Data is snapshotted, so later mutation of
    /// the original does not affect this tape.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push_node(t.shape().to_vec(), t.data().to_vec(), t.requires_grad())
    }

    /// Register a non-trainable input.
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape.to_vec(), data)?;
        Ok(self.push_node(t.shape().to_vec(), t.data().to_vec(), false))
    }

    pub(crate) fn push_node(&mut self, shape: Vec<usize>, data: Vec<f64>, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            shape,
            data,
            grad: None,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape_of(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn numel(&self, v: Var) -> usize {
        self.nodes[v.0].data.len()
    }

    /// Gradient accumulated at `v`, if any flowed during backward.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Copy a tape value out into an owned tensor.
    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.nodes[v.0].shape.clone(), self.nodes[v.0].data.clone())
            .expect("tape node is always a valid tensor")
    }

    /// Copy the gradient at `v` into the tensor's grad buffer.
    pub fn write_grad(&self, v: Var, target: &mut Tensor) -> Result<()> {
        let zeros;
        let g = match self.grad(v) {
            Some(g) => g,
            None => {
                zeros = vec![0.0; target.numel()];
                &zeros
            }
        };
        target.set_grad(g)
    }

    pub(crate) fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Run the backward pass from a scalar loss, filling gradients for every
    /// needs-grad node reachable from it.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardAlreadyRan);
        }
        if self.records.is_empty() {
            return Err(Error::EmptyTape);
        }
        if self.numel(loss) != 1 {
            return Err(Error::NonScalarLoss(self.shape_of(loss).to_vec()));
        }
        self.backward_done = true;
        self.nodes[loss.0].grad = Some(vec![1.0]);
        let records = std::mem::take(&mut self.records);
        for rec in records.iter().rev() {
            rec.backward(&mut self.nodes);
        }
        self.records = records;
        Ok(())
    }
}

/// Take the gradient buffer for accumulation, allocating zeros on first use.
pub(crate) fn take_grad(nodes: &mut [Node], idx: usize) -> Vec<f64> {
    let n = nodes[idx].data.len();
    nodes[idx].grad.take().unwrap_or_else(|| vec![0.0; n])
}

pub(crate) fn put_grad(nodes: &mut [Node], idx: usize, grad: Vec<f64>) {
    nodes[idx].grad = Some(grad);
}
