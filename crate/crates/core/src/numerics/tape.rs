//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its value and a closure that maps the
//! output gradient to input gradients. Only nodes reachable from a leaf created
//! with [`Tape::leaf`] carry a closure; constants and [`Var::detach`] outputs
//! stop the gradient.

use std::cell::RefCell;
use std::rc::Rc;

use crate::numerics::real::Real;
use crate::numerics::tensor::Tensor;

pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T: Real> {
    value: Rc<Tensor<T>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
    is_leaf: bool,
}

pub struct Tape<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Real> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()) }
    }

    fn push(&self, node: Node<T>) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    /// A differentiable input; its gradient is reported by [`Tape::backward`].
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        let id = self.push(Node {
            value: Rc::new(value),
            parents: Vec::new(),
            backward: None,
            requires_grad: true,
            is_leaf: true,
        });
        Var { tape: self, id }
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.constant_rc(Rc::new(value))
    }

    pub(crate) fn constant_rc(&self, value: Rc<Tensor<T>>) -> Var<'_, T> {
        let id = self.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad: false,
            is_leaf: false,
        });
        Var { tape: self, id }
    }

    pub(crate) fn op<'t>(
        &'t self,
        value: Tensor<T>,
        parents: &[Var<'t, T>],
        backward: impl Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Var<'t, T> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.id].requires_grad)
        };
        let id = self.push(Node {
            value: Rc::new(value),
            parents: parents.iter().map(|p| p.id).collect(),
            backward: if requires_grad { Some(Box::new(backward)) } else { None },
            requires_grad,
            is_leaf: false,
        });
        Var { tape: self, id }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Back-propagates from a scalar output.
    pub fn backward(&self, output: Var<'_, T>) -> Gradients<T> {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        let out_shape = nodes[output.id].value.shape().to_vec();
        grads[output.id] = Some(Tensor::ones(&out_shape));
        let mut leaf_grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();

        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if node.is_leaf {
                leaf_grads[id] = Some(g);
                continue;
            }
            let Some(backward) = &node.backward else { continue };
            let need: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
            let parent_grads = backward(&g, &need);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for ((&p, pg), &needed) in node.parents.iter().zip(parent_grads).zip(&need) {
                let Some(pg) = pg else { continue };
                if !needed {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[p].value.shape(), "gradient shape for node {p}");
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Gradients { grads: leaf_grads }
    }
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a leaf; `None` when the output does not depend on it.
    pub fn get(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient of a leaf, zero-filled when the output does not depend on it.
    pub fn get_or_zero(&self, v: Var<'_, T>) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(v.value().shape()))
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Scalar value of a one-element var.
    pub fn item(&self) -> T {
        self.value().item()
    }

    /// Same value, no gradient flow.
    pub fn detach(&self) -> Var<'t, T> {
        self.tape.constant_rc(self.value())
    }
}
