//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! Every operation appends a node holding its forward value and a closure
//! that maps the node's output gradient onto its inputs' gradients. Nodes
//! are appended in topological order, so the backward sweep is a single
//! reverse walk over the tape.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &mut Grads)>;

struct Node {
    shape: Vec<usize>,
    value: Rc<Vec<f64>>,
    backward: Option<BackwardFn>,
    param: Option<ParamId>,
}

/// A single computation graph. Build it with leaves and ops, then call
/// [`Tape::backward`] once on a scalar output.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradient slots indexed by tape node, filled by [`Tape::backward`].
pub struct Grads {
    slots: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Grads {
    /// Mutable gradient buffer for node `id`, zero-initialised on first use.
    pub(crate) fn slot(&mut self, id: usize) -> &mut [f64] {
        let len = self.lens[id];
        self.slots[id].get_or_insert_with(|| vec![0.0; len])
    }

    pub fn get(&self, var: Var<'_>) -> Option<&[f64]> {
        self.slots.get(var.id).and_then(|s| s.as_deref())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn push(
        &self,
        op: &'static str,
        shape: Vec<usize>,
        value: Vec<f64>,
        backward: Option<BackwardFn>,
    ) -> Result<Var<'_>> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op });
        }
        Ok(self.leaf(shape, value, backward))
    }

    /// Records a node without the finiteness check. Leaves take values as
    /// given; the first op that consumes a non-finite value reports it.
    fn leaf(&self, shape: Vec<usize>, value: Vec<f64>, backward: Option<BackwardFn>) -> Var<'_> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            shape,
            value: Rc::new(value),
            backward,
            param: None,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A leaf that never receives gradient bookkeeping beyond its own slot.
    pub fn constant(&self, tensor: &Tensor) -> Var<'_> {
        self.leaf(tensor.shape().to_vec(), tensor.data().to_vec(), None)
    }

    /// A leaf bound to a stored parameter; [`Tape::accumulate`] routes its
    /// gradient back into the store.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        let t = store.tensor(id);
        let var = self.leaf(t.shape().to_vec(), t.data().to_vec(), None);
        self.nodes.borrow_mut()[var.id].param = Some(id);
        var
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var<'_>) -> Result<Grads> {
        let nodes = self.nodes.borrow();
        let out = &nodes[output.id];
        if out.value.len() != 1 {
            return Err(Error::invalid(
                "backward",
                format!("output must be scalar, has shape {:?}", out.shape),
            ));
        }
        let mut grads = Grads {
            slots: vec![None; nodes.len()],
            lens: nodes.iter().map(|n| n.value.len()).collect(),
        };
        grads.slots[output.id] = Some(vec![1.0]);
        for id in (0..=output.id).rev() {
            let Some(g) = grads.slots[id].take() else {
                continue;
            };
            if let Some(bw) = &nodes[id].backward {
                bw(&g, &mut grads);
            }
            grads.slots[id] = Some(g);
        }
        Ok(grads)
    }

    /// Adds the gradients of every parameter leaf into the store's grad slots.
    pub fn accumulate(&self, grads: &Grads, store: &mut ParamStore) {
        let nodes = self.nodes.borrow();
        for (id, node) in nodes.iter().enumerate() {
            if let (Some(pid), Some(g)) = (node.param, grads.slots[id].as_deref()) {
                store.tensor_mut(pid).accumulate_grad(g);
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].shape.clone()
    }

    pub fn value(&self) -> Rc<Vec<f64>> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    /// First element; intended for scalar outputs.
    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value[0]
    }

    pub fn to_tensor(&self) -> Tensor {
        let nodes = self.tape.nodes.borrow();
        let n = &nodes[self.id];
        Tensor::new(n.shape.clone(), n.value.as_ref().clone()).expect("recorded shape is valid")
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub(crate) fn same_tape(&self, other: &Var<'_>) -> bool {
        std::ptr::eq(self.tape, other.tape)
    }
}
