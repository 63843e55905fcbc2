use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backbone::{Backbone, BackboneConfig};
use super::head::FcHead;
use super::rnn::{Rnn, RnnConfig};
use crate::autodiff::{Scalar, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore, Session};

/// Full CNN → RNN → FC regressor description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_image")]
    pub image: usize,
    pub backbone: BackboneConfig,
    pub rnn: RnnConfig,
}

fn default_image() -> usize {
    96
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { image: 96, backbone: BackboneConfig::vgg_small(), rnn: RnnConfig::default() }
    }
}

/// Parameter groups of a registered [`Model`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    Backbone,
    LastConv,
    Recurrent,
    Head,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub backbone: Backbone,
    pub rnn: Rnn,
    pub head: FcHead,
}

impl Model {
    /// Registers all parameters into a fresh store, initialized from `seed`.
    /// Names are stable across seeds: `backbone/…`, `rnn/…`, `head/…`.
    pub fn build<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<(Self, ParamStore<T>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let backbone = Backbone::register(&mut store, "backbone", &config.backbone, config.image, &mut rng)?;
        let rnn = Rnn::register(&mut store, "rnn", backbone.features, &config.rnn, &mut rng)?;
        let head = FcHead::register(&mut store, "head", rnn.hidden(), &mut rng);
        Ok((Self { config: config.clone(), backbone, rnn, head }, store))
    }

    pub fn group(&self, group: Group) -> Vec<ParamId> {
        match group {
            Group::Backbone => self.backbone.ids().to_vec(),
            Group::LastConv => self.backbone.last_conv_ids().to_vec(),
            Group::Recurrent => self.rnn.ids(),
            Group::Head => self.head.ids(),
        }
    }

    /// `B×L×S×S×3` images to `B×L×2` predictions.
    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, images: Var) -> Result<Var> {
        let shape = s.tape.shape(images).to_vec();
        let &[b, l, h, w, c] = &shape[..] else {
            return Err(Error::shape("model", format!("expected B×L×H×W×C images, got {shape:?}")));
        };
        let flat = s.tape.reshape(images, &[b * l, h, w, c])?;
        let feats = self.backbone.forward(s, flat)?;
        let seq = s.tape.reshape(feats, &[b, l, self.backbone.features])?;
        let out = self.rnn.unroll(s, seq)?;
        let out = s.tape.reshape(out, &[b * l, self.rnn.hidden()])?;
        self.head.forward(s, out, b, l)
    }
}
