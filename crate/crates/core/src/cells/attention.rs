use std::collections::VecDeque;

use rand::Rng;

use super::init::fan_in_uniform;
use crate::autodiff::{Scalar, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore, Session};

/// Windowed additive attention around a recurrent block.
///
/// Per step, with `attns` the previous attention vector:
///
/// ```text
/// x'       = M_in [x, attns] + b_in                  (width d)
/// cell_out, state = block(x', state)
/// s_i      = vᵀ tanh(W₁ out_i + W₂ q)               q = concatenated block state
/// p        = softmax(s)
/// atten    = Σ_i p_i out_i
/// out      = M_out [cell_out, atten] + b_out         (width h, pushed into history)
/// ```
///
/// With an empty history the attention vector is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub input: usize,
    pub hidden: usize,
    pub query: usize,
    pub size: usize,
    pub window: usize,
    pub m_in: ParamId,
    pub b_in: ParamId,
    pub w1: ParamId,
    pub w2: ParamId,
    pub v: ParamId,
    pub m_out: ParamId,
    pub b_out: ParamId,
}

/// Attention carry between steps.
#[derive(Clone, Debug)]
pub struct AttentionState {
    /// `(out_i, W₁ out_i)`, oldest first.
    pub history: VecDeque<(Var, Var)>,
    pub attns: Var,
}

impl AttentionParams {
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        query: usize,
        size: usize,
        window: usize,
        rng: &mut R,
    ) -> Self {
        let mut w = |name: &str, shape: &[usize]| {
            store.weight(format!("{prefix}/{name}"), fan_in_uniform(rng, shape, shape[shape.len() - 1]))
        };
        let m_in = w("m_in", &[input, input + hidden]);
        let w1 = w("w1", &[size, hidden]);
        let w2 = w("w2", &[size, query]);
        let v = w("v", &[1, size]);
        let m_out = w("m_out", &[hidden, 2 * hidden]);
        let b_in = store.weight(format!("{prefix}/b_in"), Tensor::zeros(&[input]));
        let b_out = store.weight(format!("{prefix}/b_out"), Tensor::zeros(&[hidden]));
        Self { input, hidden, query, size, window, m_in, b_in, w1, w2, v, m_out, b_out }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        vec![self.m_in, self.b_in, self.w1, self.w2, self.v, self.m_out, self.b_out]
    }

    pub fn zero_state<T: Scalar>(&self, s: &mut Session<'_, T>, batch: usize) -> AttentionState {
        AttentionState { history: VecDeque::new(), attns: s.tape.constant(Tensor::zeros(&[batch, self.hidden])) }
    }

    /// Input mixing: `M_in [x, attns] + b_in`.
    pub fn mix_input<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var, state: &AttentionState) -> Result<Var> {
        let cat = s.tape.concat(&[x, state.attns])?;
        let (m, b) = (s.p(self.m_in), s.p(self.b_in));
        s.tape.dense(cat, m, b)
    }

    /// Attention read over the current history plus the weights used, or
    /// `None` weights when the history is empty.
    pub fn read<T: Scalar>(&self, s: &mut Session<'_, T>, query: Var, state: &AttentionState) -> Result<(Var, Option<Var>)> {
        let q = s.tape.shape(query).to_vec();
        if q.len() != 2 || q[1] != self.query {
            return Err(Error::shape("attention", format!("query {q:?}, expected width {}", self.query)));
        }
        if state.history.is_empty() {
            let zero = s.tape.constant(Tensor::zeros(&[q[0], self.hidden]));
            return Ok((zero, None));
        }
        let (w2, v) = (s.p(self.w2), s.p(self.v));
        let wq = s.tape.matmul_nt(query, w2)?;
        let mut scores = Vec::with_capacity(state.history.len());
        for &(_, key) in &state.history {
            let pre = s.tape.add(key, wq)?;
            let act = s.tape.tanh(pre);
            scores.push(s.tape.matmul_nt(act, v)?);
        }
        let scores = s.tape.concat(&scores)?;
        let p = s.tape.softmax(scores);
        let mut atten: Option<Var> = None;
        for (i, &(out, _)) in state.history.iter().enumerate() {
            let pi = s.tape.slice_last(p, i, 1)?;
            let term = s.tape.mul_column(out, pi)?;
            atten = Some(match atten {
                None => term,
                Some(acc) => s.tape.add(acc, term)?,
            });
        }
        Ok((atten.expect("non-empty history"), Some(p)))
    }

    /// Output mixing and history update; returns the wrapper output.
    pub fn finish<T: Scalar>(
        &self,
        s: &mut Session<'_, T>,
        cell_out: Var,
        atten: Var,
        state: &mut AttentionState,
    ) -> Result<Var> {
        let cat = s.tape.concat(&[cell_out, atten])?;
        let (m, b) = (s.p(self.m_out), s.p(self.b_out));
        let out = s.tape.dense(cat, m, b)?;
        let w1 = s.p(self.w1);
        let key = s.tape.matmul_nt(out, w1)?;
        state.history.push_back((out, key));
        while state.history.len() > self.window {
            state.history.pop_front();
        }
        state.attns = atten;
        Ok(out)
    }
}
