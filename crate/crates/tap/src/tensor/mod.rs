//! Dense `f64` tensors with reverse-mode automatic differentiation.
//!
//! Tensors are immutable row-major arrays. Ops build a dynamic graph when any
//! input is tracked; [`Tensor::backward`] walks it once in reverse topological
//! order, accumulates gradients into leaves, and frees the graph as it goes.
//! Every kernel has a fixed accumulation order, so results are bit-identical
//! across runs and thread counts.
//!
//! Non-finite values are rejected at op boundaries while
//! [`set_check_finite`] is enabled (the default); training loops switch the
//! check off for speed.

pub mod check;
mod compose;
mod conv;
mod linalg;
mod ops;
mod reduce;
mod shape;

pub use compose::{cosine_similarity, l1_mean, l2_norm, variance_last};

use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::{Rc, Weak};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use crate::error::{Result, TapError};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);
static CHECK_FINITE: AtomicBool = AtomicBool::new(true);

/// Toggles NaN/Inf detection at op boundaries.
pub fn set_check_finite(enabled: bool) {
    CHECK_FINITE.store(enabled, Ordering::Relaxed);
}

/// Whether NaN/Inf detection is currently enabled.
pub fn check_finite_enabled() -> bool {
    CHECK_FINITE.load(Ordering::Relaxed)
}

pub(crate) type BackFn = Box<dyn Fn(&[f64]) -> Vec<Option<Vec<f64>>>>;

pub(crate) struct Node {
    parents: Vec<Tensor>,
    back: BackFn,
}

pub(crate) struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    /// True when a gradient must flow through this value.
    tracked: bool,
    /// True for leaves created with `requires_grad`.
    leaf_requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    node: RefCell<Option<Node>>,
}

/// Handle to an immutable tensor value, cheap to clone.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("tracked", &self.inner.tracked)
            .finish()
    }
}

fn check_values(op: &'static str, data: &[f64]) -> Result<()> {
    if check_finite_enabled() {
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(TapError::Numeric(format!(
                "non-finite value {bad} produced by `{op}`"
            )));
        }
    }
    Ok(())
}

impl Tensor {
    fn alloc(shape: Vec<usize>, data: Vec<f64>, tracked: bool, leaf_requires_grad: bool) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                tracked,
                leaf_requires_grad,
                grad: RefCell::new(None),
                node: RefCell::new(None),
            }),
        }
    }

    /// Creates an untracked constant tensor.
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TapError::Shape {
                op: "from_vec",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        check_values("from_vec", &data)?;
        Ok(Tensor::alloc(shape.to_vec(), data, false, false))
    }

    /// Creates a leaf that accumulates a gradient during backward.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let t = Tensor::from_vec(data, shape)?;
        Ok(Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape: t.inner.shape.clone(),
                data: t.inner.data.clone(),
                tracked: true,
                leaf_requires_grad: true,
                grad: RefCell::new(None),
                node: RefCell::new(None),
            }),
        })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel = shape.iter().product();
        Tensor::alloc(shape.to_vec(), vec![0.0; numel], false, false)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        let numel = shape.iter().product();
        Tensor::alloc(shape.to_vec(), vec![value; numel], false, false)
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::alloc(vec![1], vec![value], false, false)
    }

    /// Normal samples with the given std, driven by the caller's RNG stream.
    pub fn randn(shape: &[usize], std: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Tensor {
        use rand_distr::Distribution;
        let dist = rand_distr::Normal::new(0.0, std).expect("std must be finite");
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = (0..numel).map(|_| dist.sample(rng)).collect();
        Tensor::alloc(shape.to_vec(), data, false, false)
    }

    /// Creates an op result and attaches its backward closure when tracked.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        back: impl FnOnce() -> BackFn,
    ) -> Result<Tensor> {
        check_values(op, &data)?;
        let tracked = parents.iter().any(|p| p.inner.tracked);
        let out = Tensor::alloc(shape, data, tracked, false);
        if tracked {
            *out.inner.node.borrow_mut() = Some(Node {
                parents,
                back: back(),
            });
        }
        Ok(out)
    }

    /// Weak handle for backward closures that need the op's own output.
    pub(crate) fn downgrade(&self) -> Weak<Inner> {
        Rc::downgrade(&self.inner)
    }

    pub(crate) fn upgrade_data(weak: &Weak<Inner>) -> Vec<f64> {
        weak.upgrade()
            .expect("op output alive during backward")
            .data
            .clone()
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn len(&self) -> usize {
        self.inner.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.inner.data.len(), 1, "item() requires a 1-element tensor");
        self.inner.data[0]
    }

    pub fn tracked(&self) -> bool {
        self.inner.tracked
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.leaf_requires_grad
    }

    fn is_leaf(&self) -> bool {
        self.inner.node.borrow().is_none() && self.inner.leaf_requires_grad
    }

    /// Accumulated gradient, if backward has reached this leaf.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.id
    }

    /// Reverse-mode sweep from a scalar loss.
    ///
    /// Frees the graph while walking it; calling backward a second time on
    /// the same graph is a usage error.
    pub fn backward(&self) -> Result<()> {
        if self.inner.data.len() != 1 {
            return Err(TapError::Tape(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.inner.shape
            )));
        }
        if !self.inner.tracked {
            return Err(TapError::Tape(
                "backward through an untracked graph: no input requires a gradient".into(),
            ));
        }
        if !self.inner.leaf_requires_grad && self.inner.node.borrow().is_none() {
            return Err(TapError::Tape(
                "graph already consumed by a previous backward; rebuild the forward pass".into(),
            ));
        }

        let order = topo_order(self);
        *self.inner.grad.borrow_mut() = Some(vec![1.0]);

        for t in order.iter().rev() {
            let node = t.inner.node.borrow_mut().take();
            let Some(node) = node else { continue };
            // Non-leaf grads are consumed here so memory is released as the
            // sweep proceeds.
            let grad = t.inner.grad.borrow_mut().take();
            let Some(grad) = grad else { continue };
            let parent_grads = (node.back)(&grad);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (parent, pg) in node.parents.iter().zip(parent_grads) {
                if let Some(pg) = pg {
                    debug_assert_eq!(pg.len(), parent.len());
                    accumulate(parent, pg);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(t: &Tensor, contribution: Vec<f64>) {
    let mut slot = t.inner.grad.borrow_mut();
    match slot.as_mut() {
        Some(buf) => {
            for (dst, src) in buf.iter_mut().zip(&contribution) {
                *dst += src;
            }
        }
        None => *slot = Some(contribution),
    }
}

fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited: HashSet<u64> = HashSet::new();
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.id()) {
            continue;
        }
        stack.push((t.clone(), true));
        if let Some(node) = t.inner.node.borrow().as_ref() {
            for p in &node.parents {
                if p.inner.tracked && !visited.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
    }
    order
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_and_constant_flags() {
        let c = Tensor::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        assert!(!c.tracked());
        let p = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
        assert!(p.tracked() && p.requires_grad());
    }

    #[test]
    fn from_vec_rejects_shape_mismatch() {
        let err = Tensor::from_vec(vec![1.0; 3], &[2, 2]).unwrap_err();
        assert!(matches!(err, TapError::Shape { .. }));
    }

    #[test]
    fn non_finite_rejected_when_check_enabled() {
        assert!(check_finite_enabled());
        let err = Tensor::from_vec(vec![f64::NAN], &[1]).unwrap_err();
        assert!(matches!(err, TapError::Numeric(_)));
    }

    #[test]
    fn simple_grad_sum_of_squares() {
        // loss = sum(x * x)  =>  dloss/dx = 2x
        let x = Tensor::param(vec![1.0, -2.0, 3.0], &[3]).unwrap();
        let loss = x.mul(&x).unwrap().sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, -4.0, 6.0]);
    }

    #[test]
    fn disconnected_leaf_gets_no_grad() {
        let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
        let y = Tensor::param(vec![5.0], &[1]).unwrap();
        let loss = x.sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0]);
        // y never participated: its grad stays absent, i.e. exactly zero.
        assert!(y.grad().is_none());
    }

    #[test]
    fn backward_twice_is_an_error() {
        let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
        let loss = x.sum_all().unwrap();
        loss.backward().unwrap();
        let err = loss.backward().unwrap_err();
        assert!(matches!(err, TapError::Tape(_)));
    }

    #[test]
    fn backward_through_untracked_graph_is_an_error() {
        let x = Tensor::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        let loss = x.sum_all().unwrap();
        let err = loss.backward().unwrap_err();
        assert!(matches!(err, TapError::Tape(_)));
    }

    #[test]
    fn backward_requires_scalar() {
        let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
        let y = x.mul(&x).unwrap();
        assert!(y.backward().is_err());
    }

    #[test]
    fn grad_accumulates_across_backwards_from_distinct_graphs() {
        let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
        x.sum_all().unwrap().backward().unwrap();
        x.sum_all().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }
}
