//! Minimal dense tensor library with reverse-mode automatic differentiation.
//!
//! Tensors are row-major `f32` buffers with an optional gradient. Every
//! differentiable operation records its parents and a backward closure, so a
//! scalar loss can push gradients back through the whole computation graph
//! with [`Tensor::backward`]. Graph execution is single-threaded; gradients
//! accumulate until explicitly cleared.

mod kernels;
mod ops;

use crate::error::{Error, Result};
use std::cell::RefCell;
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;

/// Backward closure: maps the output gradient to one gradient buffer per
/// parent, in parent order. Closures capture the forward values they need by
/// value and never touch the graph, which keeps borrow handling trivial.
type BackFn = Box<dyn Fn(&[f32]) -> Vec<Vec<f32>>>;

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
    requires_grad: bool,
    parents: Vec<Tensor>,
    back: Option<BackFn>,
}

thread_local! {
    static NEXT_ID: RefCell<u64> = const { RefCell::new(0) };
}

fn fresh_id() -> u64 {
    NEXT_ID.with(|c| {
        let mut c = c.borrow_mut();
        *c += 1;
        *c
    })
}

/// Dense n-dimensional array of 32-bit reals with optional gradient.
///
/// Cloning is cheap and shares the underlying node, so a clone sees the same
/// data, gradient, and graph identity as the original.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Node>>,
}

impl Tensor {
    /// Builds a tensor from a flat row-major buffer.
    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Contract(format!(
                "tensor: shape {:?} implies {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self::leaf(shape.to_vec(), data, false))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self::leaf(shape.to_vec(), vec![0.0; n], false)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let n: usize = shape.iter().product();
        Self::leaf(shape.to_vec(), vec![value; n], false)
    }

    pub fn scalar(value: f32) -> Self {
        Self::leaf(vec![1], vec![value], false)
    }

    /// Marks this leaf as a trainable parameter and returns it.
    pub fn with_grad(self) -> Self {
        self.inner.borrow_mut().requires_grad = true;
        self
    }

    fn leaf(shape: Vec<usize>, data: Vec<f32>, requires_grad: bool) -> Self {
        Tensor {
            inner: Rc::new(RefCell::new(Node {
                id: fresh_id(),
                shape,
                data,
                grad: None,
                requires_grad,
                parents: Vec::new(),
                back: None,
            })),
        }
    }

    /// Internal op-result constructor; requires_grad is inherited from parents.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f32>,
        parents: Vec<Tensor>,
        back: BackFn,
    ) -> Self {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let (parents, back) = if requires_grad {
            (parents, Some(back))
        } else {
            // No gradient can flow here; drop the graph edges so constant
            // subtrees are freed eagerly.
            (Vec::new(), None)
        };
        Tensor {
            inner: Rc::new(RefCell::new(Node {
                id: fresh_id(),
                shape,
                data,
                grad: None,
                requires_grad,
                parents,
                back,
            })),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    /// Copies the data out as a flat row-major vector.
    pub fn to_vec(&self) -> Vec<f32> {
        self.inner.borrow().data.clone()
    }

    /// The value of a single-element tensor.
    pub fn item(&self) -> f32 {
        let n = self.inner.borrow();
        assert_eq!(n.data.len(), 1, "item() on non-scalar tensor");
        n.data[0]
    }

    pub fn value_at(&self, flat_index: usize) -> f32 {
        self.inner.borrow().data[flat_index]
    }

    /// Accumulated gradient, if any backward pass has reached this tensor.
    pub fn grad(&self) -> Option<Vec<f32>> {
        self.inner.borrow().grad.clone()
    }

    /// Gradient buffer, defaulting to zeros when none has been accumulated.
    pub fn grad_or_zeros(&self) -> Vec<f32> {
        let n = self.inner.borrow();
        n.grad.clone().unwrap_or_else(|| vec![0.0; n.data.len()])
    }

    /// Clears the accumulated gradient.
    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// A detached copy of the data: same values, fresh leaf, no graph.
    pub fn detach(&self) -> Tensor {
        let n = self.inner.borrow();
        Self::leaf(n.shape.clone(), n.data.clone(), false)
    }

    /// Overwrites the data in place. Length must match.
    pub fn set_data(&self, values: &[f32]) -> Result<()> {
        let mut n = self.inner.borrow_mut();
        if values.len() != n.data.len() {
            return Err(Error::Contract(format!(
                "set_data: expected {} elements, got {}",
                n.data.len(),
                values.len()
            )));
        }
        n.data.copy_from_slice(values);
        Ok(())
    }

    /// Runs `f` over the mutable data and the current gradient, e.g. for an
    /// optimizer update.
    pub fn apply_update(&self, f: impl FnOnce(&mut [f32], Option<&[f32]>)) {
        let mut n = self.inner.borrow_mut();
        let Node { data, grad, .. } = &mut *n;
        f(data, grad.as_deref());
    }

    pub fn all_finite(&self) -> bool {
        self.inner.borrow().data.iter().all(|v| v.is_finite())
    }

    /// Reverse-mode pass from a scalar root. Every tensor with
    /// `requires_grad` reachable through the graph receives its gradient;
    /// repeated calls without [`Tensor::zero_grad`] accumulate.
    pub fn backward(&self) -> Result<()> {
        {
            let n = self.inner.borrow();
            if n.data.len() != 1 {
                return Err(Error::Contract(format!(
                    "backward: root must be scalar, got shape {:?}",
                    n.shape
                )));
            }
            if !n.requires_grad {
                // Constant root: nothing in the graph wants a gradient.
                return Ok(());
            }
        }

        let order = self.topo_order();

        // Per-pass flow buffers, so repeated backward calls accumulate
        // instead of re-propagating previously stored gradients.
        let mut flows: std::collections::HashMap<u64, Vec<f32>> = std::collections::HashMap::new();
        flows.insert(self.inner.borrow().id, vec![1.0]);

        for t in order.iter().rev() {
            let node = t.inner.borrow();
            let flow = match flows.remove(&node.id) {
                Some(f) => f,
                None => continue,
            };
            drop(node);

            {
                let mut node = t.inner.borrow_mut();
                match &mut node.grad {
                    Some(g) => {
                        for (gi, fi) in g.iter_mut().zip(&flow) {
                            *gi += *fi;
                        }
                    }
                    None => node.grad = Some(flow.clone()),
                }
            }

            let node = t.inner.borrow();
            if let Some(back) = &node.back {
                let contributions = back(&flow);
                debug_assert_eq!(contributions.len(), node.parents.len());
                for (parent, contrib) in node.parents.iter().zip(contributions) {
                    let p = parent.inner.borrow();
                    if !p.requires_grad {
                        continue;
                    }
                    let pid = p.id;
                    let plen = p.data.len();
                    drop(p);
                    debug_assert_eq!(contrib.len(), plen);
                    let entry = flows.entry(pid).or_insert_with(|| vec![0.0; plen]);
                    for (e, c) in entry.iter_mut().zip(&contrib) {
                        *e += *c;
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over the requires-grad subgraph rooted here.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];

        while let Some((t, parent_idx)) = stack.pop() {
            let node = t.inner.borrow();
            if parent_idx == 0 && !visited.insert(node.id) {
                continue;
            }
            if parent_idx < node.parents.len() {
                let parent = node.parents[parent_idx].clone();
                drop(node);
                stack.push((t, parent_idx + 1));
                let p = parent.inner.borrow();
                if p.requires_grad && !visited.contains(&p.id) {
                    drop(p);
                    stack.push((parent, 0));
                }
            } else {
                drop(node);
                order.push(t);
            }
        }
        order
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &n.shape)
            .field("requires_grad", &n.requires_grad)
            .finish()
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clone_shares_node() {
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap().with_grad();
        let y = x.clone();
        x.set_data(&[5.0, 6.0]).unwrap();
        assert_eq!(y.to_vec(), vec![5.0, 6.0]);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0]).is_err());
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap().with_grad();
        let y = x.relu();
        assert!(matches!(
            y.backward(),
            Err(crate::error::Error::Contract(_))
        ));
    }

    #[test]
    fn constant_loss_leaves_grads_empty() {
        let x = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0])
            .unwrap()
            .with_grad();
        let loss = Tensor::scalar(4.0);
        loss.backward().unwrap();
        assert!(x.grad().is_none());
        assert_eq!(x.grad_or_zeros(), vec![0.0; 3]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::from_vec(&[2], vec![3.0, -1.0]).unwrap().with_grad();
        let loss = x.mul(&x).unwrap().sum_all();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0, -2.0]);
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![12.0, -4.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.9, 0.9]), 1);
    }
}
