//! Named parameter storage and per-step binding onto a [`Tape`].

use std::collections::HashMap;

use crate::autodiff::{NormMode, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Trained by the optimizer.
    Weight,
    /// Non-trainable state such as batch-norm running averages.
    Buffer,
}

#[derive(Clone, Debug)]
pub struct ParamEntry<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub kind: ParamKind,
    /// Symmetric bound enforced after every optimizer step.
    pub clip: Option<f64>,
}

/// Ordered collection of named tensors. Insertion order is the
/// serialization order and also the order in which parameters are bound
/// to a tape, so `ParamId(i)` maps to the tape leaf `Var(i)`.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, ParamId>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new(), index: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, kind: ParamKind) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.entries.len());
        self.index.insert(name.clone(), id);
        self.entries.push(ParamEntry { name, value, kind, clip: None });
        id
    }

    pub fn weight(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.add(name, value, ParamKind::Weight)
    }

    pub fn set_clip(&mut self, id: ParamId, bound: f64) {
        self.entries[id.0].clip = Some(bound);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn entries(&self) -> impl Iterator<Item = (ParamId, &ParamEntry<T>)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    /// Replaces a value, keeping its shape.
    pub fn assign(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let slot = &mut self.entries[id.0];
        if slot.value.shape() != value.shape() {
            return Err(Error::CheckpointMismatch(format!(
                "{}: shape {:?} vs stored {:?}",
                slot.name,
                value.shape(),
                slot.value.shape()
            )));
        }
        slot.value = value;
        Ok(())
    }

    /// Same layout in another precision.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry { name: e.name.clone(), value: e.value.cast(), kind: e.kind, clip: e.clip })
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Batch statistics produced by a training-mode batch norm, to be folded
/// into the running averages after the step.
#[derive(Clone, Debug)]
pub struct RunningUpdate<T> {
    pub mean_id: ParamId,
    pub var_id: ParamId,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

/// One forward/backward pass: a fresh tape with every stored parameter
/// bound as a leaf.
pub struct Session<'s, T> {
    pub tape: Tape<T>,
    store: &'s ParamStore<T>,
    pub mode: NormMode,
    updates: Vec<RunningUpdate<T>>,
}

impl<'s, T: Scalar> Session<'s, T> {
    pub fn new(store: &'s ParamStore<T>, mode: NormMode) -> Self {
        let mut tape = Tape::new();
        for (_, e) in store.entries() {
            match e.kind {
                ParamKind::Weight => tape.leaf(e.value.clone()),
                ParamKind::Buffer => tape.constant(e.value.clone()),
            };
        }
        Self { tape, store, mode, updates: Vec::new() }
    }

    pub fn p(&self, id: ParamId) -> Var {
        Var(id.0)
    }

    pub fn store(&self) -> &'s ParamStore<T> {
        self.store
    }

    pub fn record_running(&mut self, update: RunningUpdate<T>) {
        self.updates.push(update);
    }

    pub fn running_updates(&self) -> &[RunningUpdate<T>] {
        &self.updates
    }

    /// Gradient of every parameter after [`Tape::backward`], by `ParamId`.
    pub fn param_grads(&self) -> Vec<Option<Tensor<T>>> {
        self.store.ids().map(|id| self.tape.grad(Var(id.0)).cloned()).collect()
    }
}

/// Applies batch-norm running-average updates: `r ← m·r + (1−m)·batch`.
pub fn apply_running_updates<T: Scalar>(store: &mut ParamStore<T>, updates: &[RunningUpdate<T>], momentum: f64) {
    let m = T::of(momentum);
    let one_m = T::one() - m;
    for u in updates {
        for (id, batch) in [(u.mean_id, &u.batch_mean), (u.var_id, &u.batch_var)] {
            for (r, &b) in store.get_mut(id).data_mut().iter_mut().zip(batch) {
                *r = m * *r + one_m * b;
            }
        }
    }
}

/// [`gradient_check`](crate::autodiff::gradient_check) over every weight of
/// a store: `op` builds the output on a fresh session each time, with the
/// store's weights perturbed one element at a time.
pub fn gradient_check_params<F>(store: &ParamStore<f64>, mode: NormMode, op: F, eps: f64) -> Result<f64>
where
    F: Fn(&mut Session<'_, f64>) -> Result<Var>,
{
    let weights: Vec<ParamId> = store.entries().filter(|(_, e)| e.kind == ParamKind::Weight).map(|(id, _)| id).collect();
    let inputs: Vec<Tensor<f64>> = weights.iter().map(|&id| store.get(id).clone()).collect();
    let mut projection = None;
    let eval = |values: &[Tensor<f64>], want_grads: bool| -> Result<(f64, Vec<Tensor<f64>>)> {
        let mut local = store.clone();
        for (&id, v) in weights.iter().zip(values) {
            *local.get_mut(id) = v.clone();
        }
        let mut s = Session::new(&local, mode);
        let out = op(&mut s)?;
        let loss = crate::autodiff::project_output(&mut s.tape, out, &mut projection)?;
        let value = s.tape.value(loss).item();
        let mut grads = Vec::new();
        if want_grads {
            s.tape.backward(loss)?;
            for (&id, v) in weights.iter().zip(values) {
                grads.push(s.tape.grad(s.p(id)).cloned().unwrap_or_else(|| Tensor::zeros(v.shape())));
            }
        }
        Ok((value, grads))
    };
    crate::autodiff::compare_gradients(&inputs, eps, eval)
}
