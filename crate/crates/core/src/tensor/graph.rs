use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::Scalar;

static NEXT_ID: AtomicUsize = AtomicUsize::new(1);

thread_local! {
    static GRAD_MODE: Cell<bool> = const { Cell::new(true) };
}

fn fresh_id() -> usize {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Whether newly created tensors record the ops that produced them.
pub fn is_grad_enabled() -> bool {
    GRAD_MODE.with(|m| m.get())
}

struct ModeGuard(bool);

impl Drop for ModeGuard {
    fn drop(&mut self) {
        GRAD_MODE.with(|m| m.set(self.0));
    }
}

pub(crate) fn with_grad_mode<R>(enabled: bool, f: impl FnOnce() -> R) -> R {
    let prev = GRAD_MODE.with(|m| m.replace(enabled));
    let _guard = ModeGuard(prev);
    f()
}

/// Runs `f` without recording a graph.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    with_grad_mode(false, f)
}

/// Local derivative rule of one recorded op.
///
/// Implementations must build parent gradients out of tensor ops so that the
/// result is itself differentiable when the graph is being recorded.
pub(crate) trait Backward<T: Scalar> {
    fn name(&self) -> &'static str;

    /// Gradients for each parent; entries whose `needs` flag is false may be `None`.
    fn backward(&self, parents: &[Tensor<T>], grad: &Tensor<T>, needs: &[bool])
        -> Vec<Option<Tensor<T>>>;
}

struct GradFn<T: Scalar> {
    parents: Vec<Tensor<T>>,
    op: Box<dyn Backward<T>>,
}

struct Node<T: Scalar> {
    id: usize,
    shape: Vec<usize>,
    data: Rc<Vec<T>>,
    requires_grad: bool,
    grad_fn: Option<GradFn<T>>,
}

/// Dense row-major tensor with optional gradient tracking.
///
/// Cloning is cheap: the node and its buffer are reference counted.
pub struct Tensor<T: Scalar = f32>(Rc<Node<T>>);

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.0.grad_fn.as_ref().map(|g| g.op.name()))
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    fn leaf(data: Rc<Vec<T>>, shape: Vec<usize>, requires_grad: bool) -> Self {
        assert_eq!(
            data.len(),
            numel(&shape),
            "buffer of {} elements does not fit shape {:?}",
            data.len(),
            shape
        );
        Tensor(Rc::new(Node { id: fresh_id(), shape, data, requires_grad, grad_fn: None }))
    }

    pub fn new(data: Vec<T>, shape: &[usize]) -> Self {
        Self::leaf(Rc::new(data), shape.to_vec(), false)
    }

    /// Trainable leaf.
    pub fn param(data: Vec<T>, shape: &[usize]) -> Self {
        Self::leaf(Rc::new(data), shape.to_vec(), true)
    }

    pub fn scalar(v: T) -> Self {
        Self::new(vec![v], &[])
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self::new(vec![v; numel(shape)], shape)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn from_f64(data: &[f64], shape: &[usize]) -> Self {
        Self::new(data.iter().map(|&v| T::c(v)).collect(), shape)
    }

    /// Result of an op. Records `op` only if grad mode is on and a parent is tracked.
    pub(crate) fn from_op(
        data: Vec<T>,
        shape: Vec<usize>,
        parents: Vec<Tensor<T>>,
        op: impl Backward<T> + 'static,
    ) -> Self {
        let track = is_grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if !track {
            return Self::leaf(Rc::new(data), shape, false);
        }
        assert_eq!(data.len(), numel(&shape), "op {} produced a mis-sized buffer", op.name());
        Tensor(Rc::new(Node {
            id: fresh_id(),
            shape,
            data: Rc::new(data),
            requires_grad: true,
            grad_fn: Some(GradFn { parents, op: Box::new(op) }),
        }))
    }

    /// Same as [`from_op`](Self::from_op) but reusing an existing buffer (reshape).
    pub(crate) fn from_op_shared(
        data: Rc<Vec<T>>,
        shape: Vec<usize>,
        parents: Vec<Tensor<T>>,
        op: impl Backward<T> + 'static,
    ) -> Self {
        let track = is_grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if !track {
            return Self::leaf(data, shape, false);
        }
        Tensor(Rc::new(Node {
            id: fresh_id(),
            shape,
            data,
            requires_grad: true,
            grad_fn: Some(GradFn { parents, op: Box::new(op) }),
        }))
    }

    pub fn id(&self) -> usize {
        self.0.id
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

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub(crate) fn buffer(&self) -> &Rc<Vec<T>> {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.to_vec()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.0.data.iter().map(|v| v.f64()).collect()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    /// Untracked view of the same buffer.
    pub fn detach(&self) -> Self {
        Self::leaf(Rc::clone(&self.0.data), self.0.shape.clone(), false)
    }

    /// Fresh tracked leaf sharing this tensor's buffer.
    pub fn tracked_leaf(&self) -> Self {
        Self::leaf(Rc::clone(&self.0.data), self.0.shape.clone(), true)
    }

    /// In-place edit of a leaf's values; copies the buffer if it is shared.
    /// The tensor keeps its id so optimizer state stays attached.
    pub fn update_data(&mut self, f: impl FnOnce(&mut [T])) {
        if let Some(node) = Rc::get_mut(&mut self.0) {
            f(Rc::make_mut(&mut node.data).as_mut_slice());
            return;
        }
        let mut data = self.0.data.to_vec();
        f(&mut data);
        self.0 = Rc::new(Node {
            id: self.0.id,
            shape: self.0.shape.clone(),
            data: Rc::new(data),
            requires_grad: self.0.requires_grad,
            grad_fn: None,
        });
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::new(self.data().iter().map(|v| U::c(v.f64())).collect(), self.shape())
    }
}

/// Gradients of the scalar `output` with respect to `inputs`.
///
/// With `create_graph` the returned gradients are themselves recorded and can
/// be differentiated again. Inputs the output does not depend on yield `None`.
pub fn grad<T: Scalar>(
    output: &Tensor<T>,
    inputs: &[&Tensor<T>],
    create_graph: bool,
) -> Vec<Option<Tensor<T>>> {
    assert_eq!(output.numel(), 1, "grad() needs a scalar output, got {:?}", output.shape());
    let wanted: HashSet<usize> = inputs.iter().map(|t| t.id()).collect();
    if !output.requires_grad() {
        return vec![None; inputs.len()];
    }

    // Post-order over the recorded graph: parents before children.
    let mut order: Vec<Tensor<T>> = Vec::new();
    let mut visited: HashSet<usize> = HashSet::new();
    let mut stack: Vec<(Tensor<T>, usize)> = vec![(output.clone(), 0)];
    visited.insert(output.id());
    while let Some((node, next)) = stack.pop() {
        let parents = node.0.grad_fn.as_ref().map(|g| g.parents.as_slice()).unwrap_or(&[]);
        if next < parents.len() {
            let p = parents[next].clone();
            stack.push((node, next + 1));
            if p.requires_grad() && visited.insert(p.id()) {
                stack.push((p, 0));
            }
        } else {
            order.push(node);
        }
    }

    // Only nodes that lead to a requested input are worth differentiating.
    let mut needed: HashSet<usize> = HashSet::new();
    for node in &order {
        let leads = wanted.contains(&node.id())
            || node
                .0
                .grad_fn
                .as_ref()
                .is_some_and(|g| g.parents.iter().any(|p| needed.contains(&p.id())));
        if leads {
            needed.insert(node.id());
        }
    }

    with_grad_mode(create_graph, || {
        let mut grads: HashMap<usize, Tensor<T>> = HashMap::new();
        grads.insert(output.id(), Tensor::ones(output.shape()));
        let mut results: HashMap<usize, Tensor<T>> = HashMap::new();
        for node in order.iter().rev() {
            let Some(g) = grads.remove(&node.id()) else { continue };
            if wanted.contains(&node.id()) {
                results.insert(node.id(), g.clone());
            }
            let Some(gf) = node.0.grad_fn.as_ref() else { continue };
            let needs: Vec<bool> = gf.parents.iter().map(|p| needed.contains(&p.id())).collect();
            if !needs.iter().any(|&n| n) {
                continue;
            }
            let pgrads = gf.op.backward(&gf.parents, &g, &needs);
            for ((parent, pg), need) in gf.parents.iter().zip(pgrads).zip(&needs) {
                let (Some(pg), true) = (pg, *need) else { continue };
                debug_assert_eq!(pg.shape(), parent.shape(), "bad gradient shape from {}", gf.op.name());
                let acc = match grads.remove(&parent.id()) {
                    Some(prev) => prev.add(&pg),
                    None => pg,
                };
                grads.insert(parent.id(), acc);
            }
        }
        inputs.iter().map(|t| results.remove(&t.id())).collect()
    })
}
