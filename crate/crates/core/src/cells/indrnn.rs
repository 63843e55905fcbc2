use rand::Rng;

use super::init::{fan_in_uniform, uniform};
use crate::autodiff::{Scalar, Tensor, Var};
use crate::error::Result;
use crate::params::{ParamId, ParamStore, Session};

/// Independently recurrent layer: `h_t = relu(W x_t + u ⊙ h_{t−1} + b)`,
/// each hidden unit seeing only its own previous value. `|u_i|` is kept
/// within `recurrent_max` by the optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct IndRnnParams {
    pub input: usize,
    pub hidden: usize,
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub recurrent_max: f64,
}

/// `2^(1/T)` for sequences of `T` steps.
pub fn recurrent_max_for(steps: usize) -> f64 {
    2f64.powf(1.0 / steps.max(1) as f64)
}

impl IndRnnParams {
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        recurrent_max: f64,
        rng: &mut R,
    ) -> Self {
        let w = store.weight(format!("{prefix}/w"), fan_in_uniform(rng, &[hidden, input], input));
        let u = store.weight(format!("{prefix}/u"), uniform(rng, &[hidden], 0.0, recurrent_max));
        store.set_clip(u, recurrent_max);
        let b = store.weight(format!("{prefix}/b"), Tensor::zeros(&[hidden]));
        Self { input, hidden, w, u, b, recurrent_max }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        vec![self.w, self.u, self.b]
    }

    pub fn step<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var, h_prev: Var) -> Result<Var> {
        let (w, u, b) = (s.p(self.w), s.p(self.u), s.p(self.b));
        let wx = s.tape.matmul_nt(x, w)?;
        let uh = s.tape.mul_last(h_prev, u)?;
        let pre = s.tape.add(wx, uh)?;
        let pre = s.tape.add_bias(pre, b)?;
        Ok(s.tape.relu(pre))
    }
}
