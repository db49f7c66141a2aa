use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::tensor::{numel, Tensor};

/// What the adjoint rule of one recorded operation sees.
pub struct BackwardCtx<'a> {
    /// Adjoint of the operation output.
    pub grad: &'a [f64],
    /// `needs[i]` is false when parent `i` does not require a gradient;
    /// rules may return `None` for such parents.
    pub needs: &'a [bool],
}

type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>) -> Vec<Option<Vec<f64>>>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// Trainable leaf.
    Param,
    /// Data leaf (network input or regression target).
    Input,
    /// Leaf that is neither trained nor data.
    Constant,
    /// Output of a recorded operation.
    Op,
}

struct Node {
    op: &'static str,
    shape: Vec<usize>,
    value: Rc<Vec<f64>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
    data_dependent: bool,
    origin: Origin,
    saved: usize,
    grad: Option<Vec<f64>>,
}

/// Retained-activation summary of a tape.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Footprint {
    /// Elements of data-dependent operation outputs plus the auxiliary
    /// buffers their adjoint rules keep alive.
    pub activation_elements: u64,
    /// Per-operation breakdown, in recording order.
    pub by_op: Vec<(&'static str, u64)>,
}

/// Append-only record of a forward pass.
///
/// Nodes are pushed in execution order, so the recording order is already a
/// topological order and [`Tape::backward`] is a single reverse sweep.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    symbolic: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.len())
            .field("symbolic", &self.symbolic)
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            symbolic: false,
        }
    }

    /// A tape whose operations propagate shapes only. Values are empty and
    /// `backward` is unavailable.
    pub fn symbolic() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            symbolic: true,
        }
    }

    pub fn is_symbolic(&self) -> bool {
        self.symbolic
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_leaf(&self, t: &Tensor, origin: Origin, requires_grad: bool) -> Var<'_> {
        let value = if self.symbolic {
            Vec::new()
        } else {
            t.data().to_vec()
        };
        self.push(Node {
            op: "leaf",
            shape: t.shape().to_vec(),
            value: Rc::new(value),
            parents: Vec::new(),
            backward: None,
            requires_grad,
            data_dependent: origin == Origin::Input,
            origin,
            saved: 0,
            grad: None,
        })
    }

    fn push(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Trainable leaf; its gradient accumulates across `backward` calls.
    pub fn param(&self, t: &Tensor) -> Var<'_> {
        self.push_leaf(t, Origin::Param, true)
    }

    /// Data leaf without gradient.
    pub fn input(&self, t: &Tensor) -> Var<'_> {
        self.push_leaf(t, Origin::Input, false)
    }

    /// Data leaf known only by shape (symbolic tapes).
    pub fn input_shape(&self, shape: &[usize]) -> Var<'_> {
        self.push(Node {
            op: "leaf",
            shape: shape.to_vec(),
            value: Rc::new(Vec::new()),
            parents: Vec::new(),
            backward: None,
            requires_grad: false,
            data_dependent: true,
            origin: Origin::Input,
            saved: 0,
            grad: None,
        })
    }

    pub fn constant(&self, t: &Tensor) -> Var<'_> {
        self.push_leaf(t, Origin::Constant, false)
    }

    /// Leaf with an explicit gradient flag, for tests and custom drivers.
    pub fn leaf(&self, t: &Tensor, requires_grad: bool) -> Var<'_> {
        let origin = if requires_grad {
            Origin::Param
        } else {
            Origin::Constant
        };
        self.push_leaf(t, origin, requires_grad)
    }

    fn derived_flags(&self, parents: &[Var<'_>]) -> (bool, bool) {
        let nodes = self.nodes.borrow();
        let rg = parents.iter().any(|p| nodes[p.id].requires_grad);
        let dd = parents.iter().any(|p| nodes[p.id].data_dependent);
        (rg, dd)
    }

    fn check_parents(&self, parents: &[Var<'_>]) {
        for p in parents {
            assert!(
                std::ptr::eq(p.tape, self),
                "variable recorded on a different tape"
            );
        }
    }

    /// Records an operation output together with its adjoint rule.
    ///
    /// `saved` is the number of auxiliary elements (beyond the output and
    /// the parents) that the rule keeps alive. The rule receives the output
    /// adjoint and must return one entry per parent, each either `None` or a
    /// buffer with the parent's element count.
    pub fn record<F>(
        &self,
        op: &'static str,
        shape: Vec<usize>,
        value: Vec<f64>,
        parents: &[Var<'_>],
        saved: usize,
        backward: F,
    ) -> Result<Var<'_>>
    where
        F: Fn(&BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> + 'static,
    {
        self.record_rc(op, shape, Rc::new(value), parents, saved, backward)
    }

    /// Like [`Tape::record`] but shares an existing value buffer.
    pub fn record_rc<F>(
        &self,
        op: &'static str,
        shape: Vec<usize>,
        value: Rc<Vec<f64>>,
        parents: &[Var<'_>],
        saved: usize,
        backward: F,
    ) -> Result<Var<'_>>
    where
        F: Fn(&BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> + 'static,
    {
        self.check_parents(parents);
        if self.symbolic {
            return Ok(self.record_symbolic(op, shape, parents, saved));
        }
        if numel(&shape) != value.len() {
            return Err(TensorError::shape(
                op,
                format!("output shape {shape:?} but {} values", value.len()),
            ));
        }
        if !value.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op });
        }
        let (requires_grad, data_dependent) = self.derived_flags(parents);
        let backward: Option<BackwardFn> = if requires_grad {
            Some(Box::new(backward))
        } else {
            None
        };
        Ok(self.push(Node {
            op,
            shape,
            value,
            parents: parents.iter().map(|p| p.id).collect(),
            backward,
            requires_grad,
            data_dependent,
            origin: Origin::Op,
            saved,
            grad: None,
        }))
    }

    /// Shape-only record, used by operations on symbolic tapes.
    pub fn record_symbolic(
        &self,
        op: &'static str,
        shape: Vec<usize>,
        parents: &[Var<'_>],
        saved: usize,
    ) -> Var<'_> {
        self.check_parents(parents);
        let (requires_grad, data_dependent) = self.derived_flags(parents);
        self.push(Node {
            op,
            shape,
            value: Rc::new(Vec::new()),
            parents: parents.iter().map(|p| p.id).collect(),
            backward: None,
            requires_grad,
            data_dependent,
            origin: Origin::Op,
            saved,
            grad: None,
        })
    }

    /// Reverse sweep from a scalar `loss`, accumulating into the gradient
    /// slots of every leaf that requires a gradient.
    pub fn backward(&self, loss: Var<'_>) -> Result<()> {
        self.check_parents(&[loss]);
        if self.symbolic {
            return Err(TensorError::Usage("backward on a symbolic tape".into()));
        }
        let mut nodes = self.nodes.borrow_mut();
        if numel(&nodes[loss.id].shape) != 1 {
            return Err(TensorError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].shape
            )));
        }
        if !nodes[loss.id].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.origin != Origin::Op {
                if node.requires_grad {
                    match &mut nodes[id].grad {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        slot => *slot = Some(g),
                    }
                }
                continue;
            }
            let Some(rule) = &node.backward else { continue };
            let needs: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
            let parent_grads = rule(&BackwardCtx {
                grad: &g,
                needs: &needs,
            });
            debug_assert_eq!(parent_grads.len(), node.parents.len(), "{}", node.op);
            let parents = node.parents.clone();
            for (pid, pg) in parents.into_iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !nodes[pid].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.len(), numel(&nodes[pid].shape), "{}", node.op);
                match &mut grads[pid] {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(pg),
                }
            }
        }
        Ok(())
    }

    /// Accumulated gradient of a leaf, if any has been computed.
    pub fn grad(&self, v: Var<'_>) -> Option<Vec<f64>> {
        self.nodes.borrow()[v.id].grad.clone()
    }

    pub fn zero_grad(&self) {
        for n in self.nodes.borrow_mut().iter_mut() {
            n.grad = None;
        }
    }

    /// Operation name and output shape of every node, in recording order.
    pub fn trace(&self) -> Vec<(&'static str, Vec<usize>)> {
        self.nodes.borrow().iter().map(|n| (n.op, n.shape.clone())).collect()
    }

    /// Sums the retained activations: outputs of every data-dependent
    /// operation node plus their saved auxiliary buffers. Reshapes share
    /// their parent's storage and are not counted.
    pub fn footprint(&self) -> Footprint {
        let nodes = self.nodes.borrow();
        let mut fp = Footprint::default();
        for n in nodes.iter() {
            if n.origin == Origin::Op && n.data_dependent && n.op != "reshape" {
                let e = (numel(&n.shape) + n.saved) as u64;
                fp.activation_elements += e;
                fp.by_op.push((n.op, e));
            }
        }
        fp
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = &self.tape.nodes.borrow()[self.id];
        write!(f, "Var#{}({} {:?})", self.id, n.op, n.shape)
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].shape.clone()
    }

    pub fn numel(&self) -> usize {
        numel(&self.tape.nodes.borrow()[self.id].shape)
    }

    /// Shared value buffer (empty on symbolic tapes).
    pub fn value(&self) -> Rc<Vec<f64>> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    pub fn origin(&self) -> Origin {
        self.tape.nodes.borrow()[self.id].origin
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape(), self.value().as_ref().clone())
            .expect("node values always match their shape")
    }

    /// Value of a single-element variable.
    pub fn item(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.len(), 1, "item() on a non-scalar variable");
        v[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.tape.grad(*self)
    }
}
