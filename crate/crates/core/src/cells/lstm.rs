use rand::Rng;

use super::init::{fan_in_uniform, uniform};
use crate::autodiff::{Scalar, Tensor, Var};
use crate::error::Result;
use crate::params::{ParamId, ParamStore, Session};

/// LSTM with optional diagonal peephole connections:
///
/// ```text
/// i = σ(W_ix x + U_i h + W_ic ⊙ c_{t−1} + b_i)
/// f = σ(W_fx x + U_f h + W_fc ⊙ c_{t−1} + b_f)
/// g = tanh(W_g x + U_g h + b_g)
/// c_t = f ⊙ c_{t−1} + i ⊙ g
/// o = σ(W_ox x + U_o h + W_oc ⊙ c_t + b_o)
/// h_t = o ⊙ tanh(c_t)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub input: usize,
    pub hidden: usize,
    pub w_ix: ParamId,
    pub u_i: ParamId,
    pub b_i: ParamId,
    pub w_fx: ParamId,
    pub u_f: ParamId,
    pub b_f: ParamId,
    pub w_g: ParamId,
    pub u_g: ParamId,
    pub b_g: ParamId,
    pub w_ox: ParamId,
    pub u_o: ParamId,
    pub b_o: ParamId,
    /// `(W_ic, W_fc, W_oc)` when peepholes are enabled.
    pub peepholes: Option<(ParamId, ParamId, ParamId)>,
}

impl LstmParams {
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        peepholes: bool,
        rng: &mut R,
    ) -> Self {
        let mut gate = |g: &str, x_name: &str| {
            let w = store.weight(format!("{prefix}/{x_name}"), fan_in_uniform(rng, &[hidden, input], input));
            let u = store.weight(format!("{prefix}/u_{g}"), fan_in_uniform(rng, &[hidden, hidden], hidden));
            let b = store.weight(format!("{prefix}/b_{g}"), Tensor::zeros(&[hidden]));
            (w, u, b)
        };
        let (w_ix, u_i, b_i) = gate("i", "w_ix");
        let (w_fx, u_f, b_f) = gate("f", "w_fx");
        let (w_g, u_g, b_g) = gate("g", "w_g");
        let (w_ox, u_o, b_o) = gate("o", "w_ox");
        let peepholes = peepholes.then(|| {
            let bound = 1.0 / (hidden as f64).sqrt();
            let mut p = |name: &str| store.weight(format!("{prefix}/{name}"), uniform(rng, &[hidden], -bound, bound));
            (p("w_ic"), p("w_fc"), p("w_oc"))
        });
        Self { input, hidden, w_ix, u_i, b_i, w_fx, u_f, b_f, w_g, u_g, b_g, w_ox, u_o, b_o, peepholes }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut v = vec![
            self.w_ix, self.u_i, self.b_i, self.w_fx, self.u_f, self.b_f, self.w_g, self.u_g, self.b_g, self.w_ox,
            self.u_o, self.b_o,
        ];
        if let Some((a, b, c)) = self.peepholes {
            v.extend([a, b, c]);
        }
        v
    }

    /// Returns `(h_t, c_t)`.
    pub fn step<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
        let pre = |s: &mut Session<'_, T>, w: ParamId, u: ParamId, b: ParamId, peep: Option<(ParamId, Var)>| -> Result<Var> {
            let (w, u, b) = (s.p(w), s.p(u), s.p(b));
            let wx = s.tape.matmul_nt(x, w)?;
            let uh = s.tape.matmul_nt(h_prev, u)?;
            let mut acc = s.tape.add(wx, uh)?;
            if let Some((p, c)) = peep {
                let p = s.p(p);
                let pc = s.tape.mul_last(c, p)?;
                acc = s.tape.add(acc, pc)?;
            }
            s.tape.add_bias(acc, b)
        };
        let peep = self.peepholes;
        let i = pre(s, self.w_ix, self.u_i, self.b_i, peep.map(|p| (p.0, c_prev)))?;
        let i = s.tape.sigmoid(i);
        let f = pre(s, self.w_fx, self.u_f, self.b_f, peep.map(|p| (p.1, c_prev)))?;
        let f = s.tape.sigmoid(f);
        let g = pre(s, self.w_g, self.u_g, self.b_g, None)?;
        let g = s.tape.tanh(g);
        let fc = s.tape.mul(f, c_prev)?;
        let ig = s.tape.mul(i, g)?;
        let c = s.tape.add(fc, ig)?;
        let o = pre(s, self.w_ox, self.u_o, self.b_o, peep.map(|p| (p.2, c)))?;
        let o = s.tape.sigmoid(o);
        let tc = s.tape.tanh(c);
        let h = s.tape.mul(o, tc)?;
        Ok((h, c))
    }
}
