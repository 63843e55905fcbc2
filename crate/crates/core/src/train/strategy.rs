use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cells::{Group, Model};
use crate::error::{Error, Result};
use crate::params::ParamId;

/// Which parts of the network are trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    /// Backbone frozen; RNN and head trained.
    FrozenBackbone,
    /// Last convolution, RNN and head trained.
    LastConv,
    /// Everything trained.
    Full,
    /// Everything trained, RNN initialized from a checkpoint.
    RnnTransfer,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::FrozenBackbone, Case::LastConv, Case::Full, Case::RnnTransfer];

    pub fn from_index(i: u8) -> Result<Self> {
        Self::ALL.get(i as usize).copied().ok_or_else(|| Error::Contract(format!("unknown case {i}, expected 0-3")))
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn groups(self) -> &'static [Group] {
        match self {
            Case::FrozenBackbone => &[Group::Recurrent, Group::Head],
            Case::LastConv => &[Group::LastConv, Group::Recurrent, Group::Head],
            Case::Full | Case::RnnTransfer => &[Group::Backbone, Group::Recurrent, Group::Head],
        }
    }

    pub fn needs_init_rnn(self) -> bool {
        self == Case::RnnTransfer
    }

    /// Every parameter id (weights and buffers) in the trained groups.
    pub fn trainable(self, model: &Model) -> BTreeSet<ParamId> {
        self.groups().iter().flat_map(|&g| model.group(g)).collect()
    }
}
