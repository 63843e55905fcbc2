use rand::Rng;

use super::init::truncated_normal;
use crate::autodiff::{Scalar, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore, Session};

/// Linear map to `(valence, arousal)` per frame, unbounded.
#[derive(Clone, Debug, PartialEq)]
pub struct FcHead {
    pub input: usize,
    pub w: ParamId,
    pub b: ParamId,
}

impl FcHead {
    pub fn register<T: Scalar, R: Rng>(store: &mut ParamStore<T>, prefix: &str, input: usize, rng: &mut R) -> Self {
        let w = store.weight(format!("{prefix}/w"), truncated_normal(rng, &[2, input], 0.1));
        let b = store.weight(format!("{prefix}/b"), Tensor::zeros(&[2]));
        Self { input, w, b }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }

    /// `B·L×h` features to `B×L×2` predictions.
    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, features: Var, batch: usize, steps: usize) -> Result<Var> {
        let shape = s.tape.shape(features);
        if shape != [batch * steps, self.input] {
            return Err(Error::shape(
                "fc_head",
                format!("features {shape:?} for batch {batch}, length {steps}, width {}", self.input),
            ));
        }
        let (w, b) = (s.p(self.w), s.p(self.b));
        let y = s.tape.dense(features, w, b)?;
        s.tape.reshape(y, &[batch, steps, 2])
    }
}
