use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Vector-Jacobian product: receives the output gradient and returns one
/// optional gradient per parent, in parent order.
pub(crate) type BackwardFn = Box<dyn FnOnce(&Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    value: Arc<Tensor>,
    requires_grad: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    param: Option<ParamId>,
}

/// Dynamically recorded computation tape.
///
/// Nodes are appended in execution order, so parents always precede their
/// children and the reverse sweep is a plain descending walk. A graph lives
/// for one forward/backward step and is then dropped.
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    grad_enabled: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            grad_enabled: true,
        }
    }

    /// Graph that never records backward closures.
    pub fn inference() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            grad_enabled: false,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(Arc::new(value), false, None)
    }

    /// Leaf that receives a gradient on backward.
    pub fn variable(&self, value: Tensor) -> Var {
        let rg = self.grad_enabled;
        self.leaf(Arc::new(value), rg, None)
    }

    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var {
        let rg = self.grad_enabled;
        self.leaf(store.shared(id), rg, Some(id))
    }

    fn leaf(&self, value: Arc<Tensor>, requires_grad: bool, param: Option<ParamId>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            requires_grad,
            parents: Vec::new(),
            backward: None,
            param,
        });
        Var(nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    /// Records an op result. `make_backward` only runs when some parent
    /// participates in differentiation.
    pub(crate) fn push<F>(&self, value: Tensor, parents: &[Var], make_backward: F) -> Var
    where
        F: FnOnce() -> BackwardFn,
    {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = self.grad_enabled && parents.iter().any(|p| nodes[p.0].requires_grad);
        let backward = requires_grad.then(make_backward);
        nodes.push(Node {
            value: Arc::new(value),
            requires_grad,
            parents: parents.iter().map(|p| p.0).collect(),
            backward,
            param: None,
        });
        Var(nodes.len() - 1)
    }

    /// Reverse sweep from a scalar `loss`. Consumes the recorded closures, so
    /// a graph supports a single backward pass.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let mut nodes = self.nodes.borrow_mut();
        let shape = nodes[loss.0].value.shape().to_vec();
        if nodes[loss.0].value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(&shape, 1.0));
        for id in (0..=loss.0).rev() {
            if !nodes[id].requires_grad {
                continue;
            }
            let Some(backward) = nodes[id].backward.take() else {
                continue;
            };
            // Non-leaf grads are dropped once propagated.
            let Some(grad_out) = grads[id].take() else {
                continue;
            };
            let parent_grads = backward(&grad_out);
            debug_assert_eq!(parent_grads.len(), nodes[id].parents.len());
            for (k, g) in parent_grads.into_iter().enumerate() {
                let p = nodes[id].parents[k];
                let Some(g) = g else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(g.shape(), nodes[p].value.shape());
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        let params = nodes.iter().map(|n| n.param).collect();
        Ok(Gradients { grads, params })
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of a backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<Option<ParamId>>,
}

impl Gradients {
    /// Gradient of a leaf (variable or parameter node).
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Per-parameter gradients, summed over every node that read the
    /// parameter. Indexed by [`ParamId::index`].
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Option<Tensor>> {
        let mut out: Vec<Option<Tensor>> = (0..store.len()).map(|_| None).collect();
        for (g, p) in self.grads.iter().zip(&self.params) {
            if let (Some(g), Some(p)) = (g, p) {
                match &mut out[p.index()] {
                    Some(acc) => acc.add_assign(g),
                    slot @ None => *slot = Some(g.clone()),
                }
            }
        }
        out
    }
}
