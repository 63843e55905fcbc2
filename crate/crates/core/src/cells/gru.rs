use rand::Rng;

use super::init::fan_in_uniform;
use crate::autodiff::{Scalar, Tensor, Var};
use crate::error::Result;
use crate::params::{ParamId, ParamStore, Session};

/// Gated recurrent unit:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// h' = tanh(W_c x + r ⊙ U_c h)
/// h_t = z ⊙ h_{t−1} + (1 − z) ⊙ h'
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub input: usize,
    pub hidden: usize,
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_c: ParamId,
    pub u_c: ParamId,
}

impl GruParams {
    pub fn register<T: Scalar, R: Rng>(store: &mut ParamStore<T>, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut w = |name: &str, store: &mut ParamStore<T>| {
            store.weight(format!("{prefix}/{name}"), fan_in_uniform(rng, &[hidden, input], input))
        };
        let w_z = w("w_z", store);
        let w_r = w("w_r", store);
        let w_c = w("w_c", store);
        let mut u = |name: &str, store: &mut ParamStore<T>| {
            store.weight(format!("{prefix}/{name}"), fan_in_uniform(rng, &[hidden, hidden], hidden))
        };
        let u_z = u("u_z", store);
        let u_r = u("u_r", store);
        let u_c = u("u_c", store);
        let b_z = store.weight(format!("{prefix}/b_z"), Tensor::zeros(&[hidden]));
        let b_r = store.weight(format!("{prefix}/b_r"), Tensor::zeros(&[hidden]));
        Self { input, hidden, w_z, u_z, b_z, w_r, u_r, b_r, w_c, u_c }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        vec![self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_c, self.u_c]
    }

    /// One step for a `B×d` input and `B×h` previous state.
    pub fn step<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var, h_prev: Var) -> Result<Var> {
        let gate = |s: &mut Session<'_, T>, w: ParamId, u: ParamId, b: ParamId| -> Result<Var> {
            let (w, u, b) = (s.p(w), s.p(u), s.p(b));
            let wx = s.tape.matmul_nt(x, w)?;
            let uh = s.tape.matmul_nt(h_prev, u)?;
            let pre = s.tape.add(wx, uh)?;
            let pre = s.tape.add_bias(pre, b)?;
            Ok(s.tape.sigmoid(pre))
        };
        let z = gate(s, self.w_z, self.u_z, self.b_z)?;
        let r = gate(s, self.w_r, self.u_r, self.b_r)?;
        let (w_c, u_c) = (s.p(self.w_c), s.p(self.u_c));
        let wx = s.tape.matmul_nt(x, w_c)?;
        let uh = s.tape.matmul_nt(h_prev, u_c)?;
        let gated = s.tape.mul(r, uh)?;
        let pre = s.tape.add(wx, gated)?;
        let cand = s.tape.tanh(pre);
        let keep = s.tape.mul(z, h_prev)?;
        let neg = s.tape.scale(z, -1.0);
        let one_minus_z = s.tape.add_const(neg, 1.0);
        let take = s.tape.mul(one_minus_z, cand)?;
        s.tape.add(keep, take)
    }
}
