use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::{AttentionParams, AttentionState};
use super::gru::GruParams;
use super::indrnn::{recurrent_max_for, IndRnnParams};
use super::lstm::LstmParams;
use crate::autodiff::{Scalar, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore, Session};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Gru,
    Lstm,
    IndRnn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnConfig {
    pub cell: CellKind,
    pub layers: usize,
    pub hidden: usize,
    #[serde(default = "default_true")]
    pub peepholes: bool,
    /// Attention window; `None` disables the wrapper.
    #[serde(default)]
    pub attention: Option<usize>,
    /// Sequence length used for the IndRNN recurrent bound.
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_true() -> bool {
    true
}

fn default_steps() -> usize {
    80
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self { cell: CellKind::Gru, layers: 2, hidden: 128, peepholes: true, attention: None, steps: 80 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Gru(GruParams),
    Lstm(LstmParams),
    IndRnn(IndRnnParams),
}

/// Per-layer recurrent state; `c` is present only for LSTM layers.
#[derive(Clone, Copy, Debug)]
pub struct LayerState {
    pub h: Var,
    pub c: Option<Var>,
}

impl Cell {
    pub fn hidden(&self) -> usize {
        match self {
            Cell::Gru(p) => p.hidden,
            Cell::Lstm(p) => p.hidden,
            Cell::IndRnn(p) => p.hidden,
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        match self {
            Cell::Gru(p) => p.ids(),
            Cell::Lstm(p) => p.ids(),
            Cell::IndRnn(p) => p.ids(),
        }
    }

    pub fn zero_state<T: Scalar>(&self, s: &mut Session<'_, T>, batch: usize) -> LayerState {
        let h = s.tape.constant(Tensor::zeros(&[batch, self.hidden()]));
        let c = matches!(self, Cell::Lstm(_)).then(|| s.tape.constant(Tensor::zeros(&[batch, self.hidden()])));
        LayerState { h, c }
    }

    pub fn step<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var, state: LayerState) -> Result<LayerState> {
        match self {
            Cell::Gru(p) => Ok(LayerState { h: p.step(s, x, state.h)?, c: None }),
            Cell::IndRnn(p) => Ok(LayerState { h: p.step(s, x, state.h)?, c: None }),
            Cell::Lstm(p) => {
                let c_prev = state.c.ok_or_else(|| Error::Contract("LSTM step without cell state".into()))?;
                let (h, c) = p.step(s, x, state.h, c_prev)?;
                Ok(LayerState { h, c: Some(c) })
            }
        }
    }

    /// Width of `[c, h]` (LSTM) or `h` (others).
    fn state_width(&self) -> usize {
        match self {
            Cell::Lstm(p) => 2 * p.hidden,
            _ => self.hidden(),
        }
    }
}

/// Stacked cells, optionally wrapped once in windowed attention.
#[derive(Clone, Debug, PartialEq)]
pub struct Rnn {
    pub layers: Vec<Cell>,
    pub attention: Option<AttentionParams>,
}

/// Carry for [`Rnn::step`].
#[derive(Clone, Debug)]
pub struct RnnState {
    pub layers: Vec<LayerState>,
    pub attention: Option<AttentionState>,
}

impl Rnn {
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        config: &RnnConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if config.layers == 0 || config.hidden == 0 {
            return Err(Error::Contract("RNN needs at least one layer of positive width".into()));
        }
        let h = config.hidden;
        let layers: Vec<Cell> = (0..config.layers)
            .map(|l| {
                let d = if l == 0 { input } else { h };
                let pre = format!("{prefix}/layer{l}");
                match config.cell {
                    CellKind::Gru => Cell::Gru(GruParams::register(store, &pre, d, h, rng)),
                    CellKind::Lstm => Cell::Lstm(LstmParams::register(store, &pre, d, h, config.peepholes, rng)),
                    CellKind::IndRnn => {
                        Cell::IndRnn(IndRnnParams::register(store, &pre, d, h, recurrent_max_for(config.steps), rng))
                    }
                }
            })
            .collect();
        let attention = match config.attention {
            Some(0) => return Err(Error::Contract("attention window must be positive".into())),
            Some(n) => {
                let query = layers.iter().map(Cell::state_width).sum();
                Some(AttentionParams::register(store, &format!("{prefix}/attention"), input, h, query, h, n, rng))
            }
            None => None,
        };
        Ok(Self { layers, attention })
    }

    pub fn hidden(&self) -> usize {
        self.layers.last().map_or(0, Cell::hidden)
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.layers.iter().flat_map(Cell::ids).collect();
        if let Some(a) = &self.attention {
            ids.extend(a.ids());
        }
        ids
    }

    pub fn zero_state<T: Scalar>(&self, s: &mut Session<'_, T>, batch: usize) -> RnnState {
        RnnState {
            layers: self.layers.iter().map(|c| c.zero_state(s, batch)).collect(),
            attention: self.attention.as_ref().map(|a| a.zero_state(s, batch)),
        }
    }

    /// One time step for a `B×d` input; returns the `B×h` output.
    pub fn step<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var, state: &mut RnnState) -> Result<Var> {
        let x = match (&self.attention, &state.attention) {
            (Some(a), Some(st)) => a.mix_input(s, x, st)?,
            _ => x,
        };
        let mut input = x;
        for (cell, st) in self.layers.iter().zip(state.layers.iter_mut()) {
            *st = cell.step(s, input, *st)?;
            input = st.h;
        }
        let (Some(a), Some(st)) = (&self.attention, state.attention.as_mut()) else {
            return Ok(input);
        };
        let mut parts = Vec::new();
        for l in &state.layers {
            parts.extend(l.c);
            parts.push(l.h);
        }
        let query = s.tape.concat(&parts)?;
        let (atten, _) = a.read(s, query, st)?;
        a.finish(s, input, atten, st)
    }

    /// Runs every step of a `B×L×d` sequence from zero state; returns `B×L×h`.
    pub fn unroll<T: Scalar>(&self, s: &mut Session<'_, T>, seq: Var) -> Result<Var> {
        let shape = s.tape.shape(seq).to_vec();
        let &[b, l, _] = &shape[..] else {
            return Err(Error::shape("unroll", format!("expected B×L×d, got {shape:?}")));
        };
        let steps = (0..l).map(|t| s.tape.select_step(seq, t)).collect::<Result<Vec<_>>>()?;
        let mut state = self.zero_state(s, b);
        let outs = self.unroll_steps(s, &steps, &mut state)?;
        s.tape.stack(&outs)
    }

    /// Runs a list of `B×d` step inputs from `state`; fails on an empty list.
    pub fn unroll_steps<T: Scalar>(&self, s: &mut Session<'_, T>, steps: &[Var], state: &mut RnnState) -> Result<Vec<Var>> {
        if steps.is_empty() {
            return Err(Error::Contract("cannot unroll an empty sequence".into()));
        }
        steps.iter().map(|&x| self.step(s, x, state)).collect()
    }
}
