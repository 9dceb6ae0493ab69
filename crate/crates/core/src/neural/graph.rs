//! Reverse-mode tape.
//!
//! Every op appends a node holding its output and, when any input requires
//! a gradient, a closure that maps the output gradient onto input
//! gradients. `backward` replays the closures in reverse order. Parameters
//! are borrowed from a [`ParamStore`] rather than copied.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

pub(crate) type BackwardFn = Box<dyn FnOnce(&Values<'_>, &[f64], &mut Grads)>;

enum Value {
    Owned(Vec<f64>),
    Param(usize),
}

pub(crate) struct Node {
    shape: Vec<usize>,
    value: Value,
    requires_grad: bool,
    backward: Option<BackwardFn>,
}

/// Read-only view of node values handed to backward closures.
pub(crate) struct Values<'g> {
    nodes: &'g [Node],
    store: &'g ParamStore,
}

impl Values<'_> {
    pub(crate) fn get(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].value {
            Value::Owned(d) => d,
            Value::Param(id) => self.store.get(*id).tensor.data(),
        }
    }
}

/// Gradient accumulators, allocated on first write.
pub(crate) struct Grads {
    bufs: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
    wants: Vec<bool>,
}

impl Grads {
    pub(crate) fn wants(&self, v: Var) -> bool {
        self.wants[v.0]
    }

    /// Mutable accumulator for `v`; callers add into it.
    pub(crate) fn acc(&mut self, v: Var) -> &mut [f64] {
        let len = self.lens[v.0];
        self.bufs[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    pub(crate) fn add(&mut self, v: Var, g: &[f64]) {
        if !self.wants(v) {
            return;
        }
        for (a, b) in self.acc(v).iter_mut().zip(g) {
            *a += b;
        }
    }
}

/// Running-statistic replacement produced by a train-mode batchnorm.
#[derive(Debug, Clone)]
pub struct StatUpdate {
    pub param: usize,
    pub values: Vec<f64>,
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<usize, Var>,
    mode: Mode,
    grad_enabled: bool,
    rng: ChaCha8Rng,
    stat_updates: Vec<StatUpdate>,
}

impl<'a> Graph<'a> {
    /// A graph that records gradients for trainable parameters.
    pub fn new(store: &'a ParamStore, mode: Mode, seed: u64) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            mode,
            grad_enabled: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            stat_updates: Vec::new(),
        }
    }

    /// Inference graph: no closures are recorded.
    pub fn inference(store: &'a ParamStore) -> Self {
        let mut g = Self::new(store, Mode::Infer, 0);
        g.grad_enabled = false;
        g
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].value {
            Value::Owned(d) => d,
            Value::Param(id) => self.store.get(*id).tensor.data(),
        }
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("node shape")
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn any_requires_grad(&self, vs: &[Var]) -> bool {
        vs.iter().any(|&v| self.requires_grad(v))
    }

    pub(crate) fn push_stat_update(&mut self, u: StatUpdate) {
        self.stat_updates.push(u);
    }

    pub fn take_stat_updates(&mut self) -> Vec<StatUpdate> {
        std::mem::take(&mut self.stat_updates)
    }

    /// Appends a node; `backward` is dropped when no input requires a gradient.
    pub(crate) fn push(
        &mut self,
        shape: Vec<usize>,
        data: Vec<f64>,
        inputs: &[Var],
        backward: Option<BackwardFn>,
    ) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = self.any_requires_grad(inputs);
        self.nodes.push(Node {
            shape,
            value: Value::Owned(data),
            requires_grad,
            backward: if requires_grad { backward } else { None },
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input (never differentiated).
    pub fn input(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), &[], None)
    }

    /// Constant input that the caller wants a gradient for (used by
    /// finite-difference checks).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.nodes.push(Node {
            shape,
            value: Value::Owned(t.into_data()),
            requires_grad: self.grad_enabled,
            backward: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: usize) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let p = self.store.get(id);
        self.nodes.push(Node {
            shape: p.tensor.shape().to_vec(),
            value: Value::Param(id),
            requires_grad: self.grad_enabled && p.trainable,
            backward: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    /// Runs reverse accumulation from scalar `loss`. Returns the gradient of
    /// every trainable parameter touched by the graph, ordered by parameter id,
    /// followed by gradients of [`Graph::leaf`] inputs via [`Gradients::of`].
    pub fn backward(mut self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].shape.iter().product::<usize>() != 1 {
            return Err(Error::shape("backward requires a scalar loss"));
        }
        let n = self.nodes.len();
        let mut grads = Grads {
            bufs: vec![None; n],
            lens: self.nodes.iter().map(|nd| nd.shape.iter().product()).collect(),
            wants: self.nodes.iter().map(|nd| nd.requires_grad).collect(),
        };
        grads.bufs[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(out_grad) = grads.bufs[i].take() else {
                continue;
            };
            let is_leaf = self.nodes[i].backward.is_none();
            if let Some(f) = self.nodes[i].backward.take() {
                let values = Values {
                    nodes: &self.nodes,
                    store: self.store,
                };
                f(&values, &out_grad, &mut grads);
            }
            if is_leaf {
                grads.bufs[i] = Some(out_grad);
            }
        }
        for (i, b) in grads.bufs.iter().enumerate() {
            if let Some(g) = b {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::TrainingDiverged(format!(
                        "non-finite gradient at node {i}"
                    )));
                }
            }
        }
        let mut params: Vec<(usize, Vec<f64>)> = self
            .param_vars
            .iter()
            .filter_map(|(&id, &v)| grads.bufs[v.0].take().map(|g| (id, g)))
            .collect();
        params.sort_by_key(|(id, _)| *id);
        Ok(Gradients {
            params,
            nodes: grads.bufs,
        })
    }
}

pub struct Gradients {
    pub params: Vec<(usize, Vec<f64>)>,
    nodes: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf created with [`Graph::leaf`].
    pub fn of(&self, v: Var) -> Option<&[f64]> {
        self.nodes.get(v.0).and_then(|g| g.as_deref())
    }
}
