//! Recurrent cells, attention, convolutional feature extractors and the
//! regression head, composed into [`Model`].

mod attention;
mod backbone;
mod gru;
mod head;
mod indrnn;
pub mod init;
mod lstm;
mod model;
mod rnn;

pub use attention::{AttentionParams, AttentionState};
pub use backbone::{
    Backbone, BackboneConfig, BatchNormLayer, BottleneckStage, ConvLayer, Layer, VggBlock, BN_EPS, BN_MOMENTUM,
};
pub use gru::GruParams;
pub use head::FcHead;
pub use indrnn::{recurrent_max_for, IndRnnParams};
pub use lstm::LstmParams;
pub use model::{Group, Model, ModelConfig};
pub use rnn::{Cell, CellKind, LayerState, Rnn, RnnConfig, RnnState};
