//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Tensors are immutable row-major value arrays. Operations build a
//! computation graph; [`Tensor::backward`] walks it in reverse topological
//! order and accumulates gradients on every participating tensor. Gradient
//! recording can be suspended with [`no_grad`] for inference paths.

mod init;
pub mod ops;

pub use init::{xavier_uniform, xavier_uniform_fan};

use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` with gradient recording disabled on this thread.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let out = f();
    GRAD_ENABLED.with(|g| g.set(prev));
    out
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Propagates the output gradient into the parents of a node.
/// Arguments: parents, forward output data, output gradient.
type BackwardFn = Box<dyn Fn(&[Tensor], &[f64], &[f64])>;

struct Node {
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    node: Option<Node>,
}

/// A dense n-dimensional array of `f64` scalars in row-major order.
#[derive(Clone)]
pub struct Tensor(Rc<Inner>);

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Tensor {
    /// Builds a leaf tensor. Rejects shapes with zero-sized dimensions or a
    /// data length that does not match the shape product.
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidShape {
                op: "new",
                shape: shape.to_vec(),
                reason: "dimensions must be positive".into(),
            });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidShape {
                op: "new",
                shape: shape.to_vec(),
                reason: format!("shape product {} != data length {}", numel, data.len()),
            });
        }
        Ok(Tensor::leaf(data, shape.to_vec(), false))
    }

    fn leaf(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Tensor {
        Tensor(Rc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            node: None,
        }))
    }

    /// Internal constructor for op outputs. The node is attached only when
    /// gradients are enabled and some parent participates in grad flow.
    pub(crate) fn from_op(
        data: Vec<f64>,
        shape: Vec<usize>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Tensor {
        let track = grad_enabled() && parents.iter().any(|p| p.0.requires_grad);
        Tensor(Rc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad: track,
            grad: RefCell::new(None),
            node: track.then(|| Node { parents, backward }),
        }))
    }

    pub fn zeros(shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        Tensor::new(vec![0.0; numel], shape)
    }

    pub fn ones(shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        Tensor::new(vec![1.0; numel], shape)
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        Tensor::new(vec![value; numel], shape)
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::leaf(vec![value], vec![1], false)
    }

    /// Marks this leaf as a gradient target. Panics if called on an op output.
    pub fn requires_grad(self) -> Tensor {
        assert!(
            self.0.node.is_none(),
            "requires_grad applies to leaf tensors only"
        );
        match Rc::try_unwrap(self.0) {
            Ok(inner) => Tensor(Rc::new(Inner {
                requires_grad: true,
                ..inner
            })),
            Err(rc) => Tensor::leaf(rc.data.clone(), rc.shape.clone(), true),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() requires a single-element tensor");
        self.0.data[0]
    }

    pub fn is_requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Gradient accumulated by the last backward pass, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    /// Gradient, with zeros standing in for tensors the loss never reached.
    pub fn grad_or_zeros(&self) -> Vec<f64> {
        self.grad().unwrap_or_else(|| vec![0.0; self.numel()])
    }

    pub fn clear_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    fn accumulate_grad(&self, delta: &[f64]) {
        if !self.0.requires_grad {
            return;
        }
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// Reverse-mode pass from a scalar loss. Every tensor reachable from this
    /// one that participates in grad flow receives a fully populated gradient.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::InvalidShape {
                op: "backward",
                shape: self.shape().to_vec(),
                reason: "loss must be scalar".into(),
            });
        }
        if !self.0.requires_grad {
            return Err(Error::InvalidArgument(
                "backward: loss is not connected to any gradient target".into(),
            ));
        }
        let order = topological_order(self);
        self.accumulate_grad(&[1.0]);
        for t in &order {
            if let Some(node) = &t.0.node {
                let grad = t
                    .0
                    .grad
                    .borrow()
                    .clone()
                    .unwrap_or_else(|| vec![0.0; t.numel()]);
                (node.backward)(&node.parents, &t.0.data, &grad);
            }
        }
        Ok(())
    }
}

/// Depth-first topological sort; returned with the root first so gradients
/// are complete before each node propagates to its parents.
fn topological_order(root: &Tensor) -> Vec<Tensor> {
    let mut visited: HashSet<u64> = HashSet::new();
    let mut order = Vec::new();
    // Explicit stack: graphs from long sequences overflow recursion.
    let mut stack: Vec<(Tensor, usize)> = vec![(root.clone(), 0)];
    visited.insert(root.0.id);
    while let Some((t, child_idx)) = stack.pop() {
        let n_parents = t.0.node.as_ref().map_or(0, |n| n.parents.len());
        if child_idx < n_parents {
            let parent = t.0.node.as_ref().unwrap().parents[child_idx].clone();
            stack.push((t, child_idx + 1));
            if parent.0.requires_grad && visited.insert(parent.0.id) {
                stack.push((parent, 0));
            }
        } else {
            order.push(t);
        }
    }
    order.reverse();
    order
}

pub(crate) fn accum_into(parent: &Tensor, delta: &[f64]) {
    parent.accumulate_grad(delta);
}
