use serde::{Deserialize, Serialize};

use crate::autodiff::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamKind, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// First and second moment estimates of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

/// Bias-corrected Adam over the trainable entries of a [`ParamStore`].
/// Parameters outside the trainable set own no state and are never touched.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub t: u64,
    /// Indexed by `ParamId`.
    slots: Vec<Option<Moments<T>>>,
}

impl<T: Scalar> Adam<T> {
    /// State for every `Weight` entry accepted by `trainable`.
    pub fn new(config: AdamConfig, store: &ParamStore<T>, trainable: impl Fn(ParamId) -> bool) -> Self {
        let slots = store
            .entries()
            .map(|(id, e)| {
                (e.kind == ParamKind::Weight && trainable(id)).then(|| Moments {
                    m: Tensor::zeros(e.value.shape()),
                    v: Tensor::zeros(e.value.shape()),
                })
            })
            .collect();
        Self { config, t: 0, slots }
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.slots.get(id.0).is_some_and(Option::is_some)
    }

    pub fn moments(&self, id: ParamId) -> Option<&Moments<T>> {
        self.slots.get(id.0).and_then(Option::as_ref)
    }

    pub(crate) fn set_moments(&mut self, id: ParamId, moments: Moments<T>) {
        self.slots[id.0] = Some(moments);
    }

    pub fn state_count(&self) -> usize {
        self.slots.iter().flatten().count()
    }

    /// One update from `grads` (indexed by `ParamId`; a missing gradient
    /// counts as zero). Any non-finite gradient of a trainable parameter
    /// aborts the step before anything is modified. Clip bounds are
    /// enforced after the update.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Option<Tensor<T>>]) -> Result<()> {
        if grads.len() != store.len() || self.slots.len() != store.len() {
            return Err(Error::Contract(format!(
                "{} gradients and {} optimizer slots for {} parameters",
                grads.len(),
                self.slots.len(),
                store.len()
            )));
        }
        for (id, e) in store.entries() {
            if self.slots[id.0].is_none() {
                continue;
            }
            if let Some(g) = &grads[id.0] {
                if g.shape() != e.value.shape() {
                    return Err(Error::shape("adam", format!("{}: gradient {:?} vs {:?}", e.name, g.shape(), e.value.shape())));
                }
                if !g.all_finite() {
                    return Err(Error::NonFiniteGradient(e.name.clone()));
                }
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (i, slot) in self.slots.iter_mut().enumerate() {
            let Some(Moments { m, v }) = slot else { continue };
            let id = ParamId(i);
            let clip = store.entry(id).clip;
            let grad = grads[i].as_ref();
            let param = store.get_mut(id).data_mut();
            for j in 0..param.len() {
                let g = grad.map_or(0.0, |g| g.data()[j].as_f64());
                let mj = beta1 * m.data()[j].as_f64() + (1.0 - beta1) * g;
                let vj = beta2 * v.data()[j].as_f64() + (1.0 - beta2) * g * g;
                m.data_mut()[j] = T::of(mj);
                v.data_mut()[j] = T::of(vj);
                let mut p = param[j].as_f64() - lr * (mj / c1) / ((vj / c2).sqrt() + eps);
                if let Some(bound) = clip {
                    p = p.clamp(-bound, bound);
                }
                param[j] = T::of(p);
            }
        }
        Ok(())
    }
}
