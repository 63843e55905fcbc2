use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{Adam, AdamConfig};
use super::checkpoint::Checkpoint;
use crate::autodiff::{NormMode, Tensor};
use crate::cells::{init, Backbone, BackboneConfig, BN_MOMENTUM};
use crate::error::Result;
use crate::params::{apply_running_updates, ParamStore, Session};

/// Levels × contrasts.
pub const AUX_CLASSES: usize = 12;
const LEVELS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub backbone: BackboneConfig,
    pub image: usize,
    pub steps: u64,
    pub batch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

/// One auxiliary example: an oriented grating with random period and
/// phase. The class combines the mean-level bucket and the contrast bucket.
pub fn aux_example(side: usize, rng: &mut impl Rng) -> (Vec<f32>, usize) {
    let level = rng.random_range(0..LEVELS);
    let contrast = rng.random_range(0..AUX_CLASSES / LEVELS);
    let mean = 48.0 + 160.0 * (level as f64 + rng.random_range(0.1..0.9)) / LEVELS as f64;
    let amp = 40.0 * (contrast as f64 + rng.random_range(0.1..0.9)) / (AUX_CLASSES / LEVELS) as f64;
    let period = rng.random_range(6.0..24.0);
    let angle: f64 = rng.random_range(0.0..TAU);
    let phase = rng.random_range(0.0..TAU);
    let (ca, sa) = (angle.cos(), angle.sin());
    let mut pixels = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let u = x as f64 * ca + y as f64 * sa;
            let v = mean + amp * (TAU * u / period + phase).sin();
            for _ in 0..3 {
                let p = (v + rng.random_range(-3.0..=3.0)).round().clamp(0.0, 255.0);
                pixels.push(((p - 128.0) / 128.0) as f32);
            }
        }
    }
    (pixels, level * (AUX_CLASSES / LEVELS) + contrast)
}

/// Trains a backbone plus a linear classifier on [`aux_example`] data and
/// returns a checkpoint whose `backbone/…` tensors can seed any model with
/// the same backbone configuration.
pub fn pretrain_backbone(config: &PretrainConfig, mut on_step: impl FnMut(u64, f64)) -> Result<Checkpoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut store = ParamStore::<f32>::new();
    let backbone = Backbone::register(&mut store, "backbone", &config.backbone, config.image, &mut rng)?;
    let w = store.weight("aux/w", init::fan_in_uniform(&mut rng, &[AUX_CLASSES, backbone.features], backbone.features));
    let b = store.weight("aux/b", Tensor::zeros(&[AUX_CLASSES]));
    let mut adam = Adam::new(config.adam, &store, |_| true);
    for step in 1..=config.steps {
        let mut images = Vec::with_capacity(config.batch * config.image * config.image * 3);
        let mut labels = Vec::with_capacity(config.batch);
        for _ in 0..config.batch {
            let (px, label) = aux_example(config.image, &mut rng);
            images.extend(px);
            labels.push(label);
        }
        let (loss, grads, updates) = {
            let mut s = Session::new(&store, NormMode::Training);
            let x = s.tape.constant(Tensor::new(&[config.batch, config.image, config.image, 3], images)?);
            let feats = backbone.forward(&mut s, x)?;
            let (pw, pb) = (s.p(w), s.p(b));
            let logits = s.tape.dense(feats, pw, pb)?;
            let loss = s.tape.cross_entropy(logits, &labels)?;
            s.tape.backward(loss)?;
            (s.tape.value(loss).item() as f64, s.param_grads(), s.running_updates().to_vec())
        };
        adam.step(&mut store, &grads)?;
        apply_running_updates(&mut store, &updates, BN_MOMENTUM);
        on_step(step, loss);
    }
    Ok(Checkpoint::capture(config.steps, 0, &store, &adam))
}
