//! Reverse-mode differentiation on a flat tape.
//!
//! Each operation appends a node holding its output value and, when gradients
//! are enabled and some input requires them, a backward closure. `backward`
//! walks the tape in reverse; the tape is topologically ordered by
//! construction. Execution is single-threaded and the node order is fixed, so
//! repeated runs on equal inputs are bit-identical.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(u32);

impl Var {
    #[inline]
    pub(crate) fn index(self) -> usize {
        self.0 as usize
    }
}

pub(crate) type BackFn<T> = Box<dyn Fn(&Tensor<T>, &mut Gradients<T>)>;

struct Node<T: Scalar> {
    value: Tensor<T>,
    needs_grad: bool,
    back: Option<BackFn<T>>,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grad_enabled: bool,
}

impl<T: Scalar> Graph<T> {
    pub fn new(grad_enabled: bool) -> Self {
        Graph {
            nodes: Vec::new(),
            grad_enabled,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    /// Inserts a value that never receives gradients (inputs, grids,
    /// positional encodings).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.insert(value, false, None)
    }

    /// Inserts a trainable leaf. Gradients are tracked only when the graph
    /// was created with them enabled.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        let needs = self.grad_enabled;
        self.insert(value, needs, None)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.index()].value
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.index()].needs_grad
    }

    /// True when an op with these inputs must record a backward closure.
    pub(crate) fn wants_grad(&self, inputs: &[Var]) -> bool {
        self.grad_enabled && inputs.iter().any(|&v| self.needs_grad(v))
    }

    pub(crate) fn insert(
        &mut self,
        value: Tensor<T>,
        needs_grad: bool,
        back: Option<BackFn<T>>,
    ) -> Var {
        debug_assert!(self.nodes.len() < u32::MAX as usize);
        self.nodes.push(Node {
            value,
            needs_grad,
            back,
        });
        Var(self.nodes.len() as u32 - 1)
    }

    /// Accumulates `d root / d leaf` for every leaf reachable from `root`.
    /// `root` must be a single-element tensor.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert!(self.grad_enabled, "backward on a no-grad graph");
        assert_eq!(self.value(root).numel(), 1, "backward root must be scalar");
        let mut grads = Gradients {
            slots: vec![None; self.nodes.len()],
        };
        grads.slots[root.index()] = Some(Tensor::scalar(T::ONE));
        for i in (0..=root.index()).rev() {
            let Some(g) = grads.slots[i].take() else {
                continue;
            };
            if let Some(back) = &self.nodes[i].back {
                back(&g, &mut grads);
            } else if self.nodes[i].needs_grad {
                // Leaf: keep the accumulated gradient for the caller.
                grads.slots[i] = Some(g);
            }
        }
        grads
    }
}

pub struct Gradients<T: Scalar> {
    slots: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.slots[v.index()].take()
    }

    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.slots[v.index()].as_ref()
    }

    pub(crate) fn accumulate(&mut self, v: Var, g: Tensor<T>) {
        let slot = &mut self.slots[v.index()];
        match slot.take() {
            None => *slot = Some(g),
            Some(prev) => {
                debug_assert_eq!(prev.shape(), g.shape(), "gradient shape mismatch");
                *slot = Some(prev.zip(&g, |a, b| a + b));
            }
        }
    }
}
