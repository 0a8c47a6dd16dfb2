use std::collections::HashMap;

use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// `(grad_out, parent_values, out_value) -> parent_grads`
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Tensor> + Send + Sync>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Define-by-run computation tape.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid topological order for the backward sweep.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: HashMap<usize, Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Inserts a value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Node { value, parents: Vec::new(), backward: None, requires_grad: false })
    }

    /// Inserts a differentiable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Node { value, parents: Vec::new(), backward: None, requires_grad: true })
    }

    /// Binds a named parameter of `store` as a leaf. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        let idx = store
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        if let Some(&v) = self.bound.get(&idx) {
            return v;
        }
        let v = self.leaf(store.tensor(idx).clone());
        self.bound.insert(idx, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn op(&mut self, value: Tensor, parents: &[Var], backward: BackwardFn) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(Node {
            value,
            parents: parents.iter().map(|p| p.0).collect(),
            backward: requires_grad.then_some(backward),
            requires_grad,
        })
    }

    /// Reverse sweep from a single-element `root`.
    pub fn backward(&self, root: Var) -> Grads {
        assert_eq!(self.value(root).numel(), 1, "backward root must be a scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::new(self.value(root).shape(), vec![1.0]));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Some(bw) = &node.backward {
                let parent_vals: Vec<&Tensor> =
                    node.parents.iter().map(|&p| &self.nodes[p].value).collect();
                let pg = bw(&g, &parent_vals, &node.value);
                debug_assert_eq!(pg.len(), node.parents.len());
                for (&p, gp) in node.parents.iter().zip(pg) {
                    if !self.nodes[p].requires_grad {
                        continue;
                    }
                    debug_assert_eq!(gp.shape(), self.nodes[p].value.shape());
                    match &mut grads[p] {
                        Some(acc) => acc.add_assign(&gp),
                        slot @ None => *slot = Some(gp),
                    }
                }
            }
            grads[i] = Some(g);
        }
        Grads { grads, bound: self.bound.clone() }
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Grads {
    grads: Vec<Option<Tensor>>,
    bound: HashMap<usize, Var>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for every parameter of `store`, in store order. Unbound or
    /// unreached parameters get `None`.
    pub fn for_params(&self, store: &ParamStore) -> Vec<Option<Tensor>> {
        (0..store.len())
            .map(|i| self.bound.get(&i).and_then(|&v| self.get(v).cloned()))
            .collect()
    }
}
