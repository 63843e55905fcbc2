use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::he_uniform;
use crate::autodiff::{window_extent, ConvSpec, Scalar, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamKind, ParamStore, RunningUpdate, Session};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VggBlock {
    pub convs: usize,
    pub channels: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BottleneckStage {
    pub blocks: usize,
    /// Width of the reduced 1×1 and 3×3 convolutions.
    pub width: usize,
    /// Width after the expanding 1×1 convolution.
    pub out: usize,
}

/// Convolutional feature extractor layouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum BackboneConfig {
    /// 3×3 stride-1 pad-1 conv + ReLU blocks, each closed by a 2×2/2 max-pool;
    /// the last pooled map is flattened.
    VggStyle { blocks: Vec<VggBlock> },
    /// Conv stem and max-pool, bottleneck stages separated by 2×2/2
    /// max-pools, global average pool.
    ResNetBottleneck { stem: usize, stages: Vec<BottleneckStage> },
    /// Conv stem and max-pool, dense blocks of BN-ReLU-Conv1×1(4k)-BN-ReLU-Conv3×3(k)
    /// joined by BN-ReLU-Conv1×1 + 2×2/2 average-pool transitions, global average pool.
    DenseBlockNet { stem: usize, growth: usize, blocks: Vec<usize>, compression: f64 },
}

impl BackboneConfig {
    /// The 13-conv VGG-Face layout.
    pub fn vgg_face() -> Self {
        let blocks = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];
        BackboneConfig::VggStyle { blocks: blocks.map(|(convs, channels)| VggBlock { convs, channels }).to_vec() }
    }

    /// Five single-conv blocks of 4–16 channels; 144 features at 96×96.
    pub fn vgg_small() -> Self {
        let blocks = [4, 8, 8, 16, 16];
        BackboneConfig::VggStyle { blocks: blocks.map(|channels| VggBlock { convs: 1, channels }).to_vec() }
    }

    pub fn resnet_small() -> Self {
        BackboneConfig::ResNetBottleneck {
            stem: 8,
            stages: vec![
                BottleneckStage { blocks: 1, width: 4, out: 16 },
                BottleneckStage { blocks: 1, width: 8, out: 32 },
                BottleneckStage { blocks: 1, width: 8, out: 32 },
            ],
        }
    }

    pub fn densenet_small() -> Self {
        BackboneConfig::DenseBlockNet { stem: 8, growth: 4, blocks: vec![2, 2, 2], compression: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub mean: ParamId,
    pub var: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    BatchNorm(BatchNormLayer),
    Relu,
    MaxPool { filter: usize, stride: usize },
    AvgPool { filter: usize, stride: usize },
    /// Residual block: `relu(main(x) + shortcut(x))`.
    Residual { main: Vec<Layer>, shortcut: Vec<Layer> },
    /// `concat(x, body(x))` along channels.
    DenseUnit { body: Vec<Layer> },
}

/// A registered feature extractor mapping `N×S×S×3` images to `N×f`.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    pub image: usize,
    pub layers: Vec<Layer>,
    pub features: usize,
    ids: Vec<ParamId>,
    last_conv: Vec<ParamId>,
}

struct Builder<'a, T, R> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut R,
    prefix: String,
    count: usize,
    ids: Vec<ParamId>,
    last_conv_start: usize,
}

impl<T: Scalar, R: Rng> Builder<'_, T, R> {
    fn name(&mut self, kind: &str) -> String {
        self.count += 1;
        format!("{}/{kind}{}", self.prefix, self.count)
    }

    fn conv(&mut self, filter: usize, pad: usize, in_depth: usize, out_depth: usize) -> Layer {
        let spec = ConvSpec { filter, stride: 1, pad_w: pad, pad_h: pad, in_depth, out_depth };
        let name = self.name("conv");
        let fan_in = filter * filter * in_depth;
        self.last_conv_start = self.ids.len();
        let w = self.store.weight(format!("{name}/w"), he_uniform(self.rng, &spec.weight_shape(), fan_in));
        let b = self.store.weight(format!("{name}/b"), Tensor::zeros(&[out_depth]));
        self.ids.extend([w, b]);
        Layer::Conv(ConvLayer { spec, w, b })
    }

    fn bn(&mut self, c: usize) -> Layer {
        let name = self.name("bn");
        let gamma = self.store.weight(format!("{name}/gamma"), Tensor::ones(&[c]));
        let beta = self.store.weight(format!("{name}/beta"), Tensor::zeros(&[c]));
        let mean = self.store.add(format!("{name}/mean"), Tensor::zeros(&[c]), ParamKind::Buffer);
        let var = self.store.add(format!("{name}/var"), Tensor::ones(&[c]), ParamKind::Buffer);
        self.ids.extend([gamma, beta, mean, var]);
        Layer::BatchNorm(BatchNormLayer { gamma, beta, mean, var })
    }
}

fn pooled(op: &'static str, size: usize, filter: usize, stride: usize) -> Result<usize> {
    window_extent(op, size, filter, stride, 0)
}

impl Backbone {
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        config: &BackboneConfig,
        image: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut b = Builder { store, rng, prefix: prefix.to_string(), count: 0, ids: Vec::new(), last_conv_start: 0 };
        let mut layers = Vec::new();
        let mut size = image;
        let mut depth = 3;
        let flatten;
        match config {
            BackboneConfig::VggStyle { blocks } => {
                if blocks.is_empty() {
                    return Err(Error::Contract("VGG backbone needs at least one block".into()));
                }
                for blk in blocks {
                    for _ in 0..blk.convs {
                        layers.push(b.conv(3, 1, depth, blk.channels));
                        layers.push(Layer::Relu);
                        depth = blk.channels;
                    }
                    size = pooled("maxpool2d", size, 2, 2)?;
                    layers.push(Layer::MaxPool { filter: 2, stride: 2 });
                }
                flatten = size * size * depth;
            }
            BackboneConfig::ResNetBottleneck { stem, stages } => {
                layers.push(b.conv(3, 1, depth, *stem));
                layers.push(b.bn(*stem));
                layers.push(Layer::Relu);
                depth = *stem;
                size = pooled("maxpool2d", size, 2, 2)?;
                layers.push(Layer::MaxPool { filter: 2, stride: 2 });
                for (i, st) in stages.iter().enumerate() {
                    if i > 0 {
                        size = pooled("maxpool2d", size, 2, 2)?;
                        layers.push(Layer::MaxPool { filter: 2, stride: 2 });
                    }
                    for _ in 0..st.blocks {
                        let main = vec![
                            b.conv(1, 0, depth, st.width),
                            b.bn(st.width),
                            Layer::Relu,
                            b.conv(3, 1, st.width, st.width),
                            b.bn(st.width),
                            Layer::Relu,
                            b.conv(1, 0, st.width, st.out),
                            b.bn(st.out),
                        ];
                        let shortcut =
                            if depth == st.out { Vec::new() } else { vec![b.conv(1, 0, depth, st.out), b.bn(st.out)] };
                        layers.push(Layer::Residual { main, shortcut });
                        depth = st.out;
                    }
                }
                layers.push(Layer::AvgPool { filter: size, stride: size });
                flatten = depth;
            }
            BackboneConfig::DenseBlockNet { stem, growth, blocks, compression } => {
                if !(*compression > 0.0 && *compression <= 1.0) {
                    return Err(Error::Contract(format!("compression {compression} outside (0, 1]")));
                }
                layers.push(b.conv(3, 1, depth, *stem));
                depth = *stem;
                size = pooled("maxpool2d", size, 2, 2)?;
                layers.push(Layer::MaxPool { filter: 2, stride: 2 });
                for (i, &n) in blocks.iter().enumerate() {
                    for _ in 0..n {
                        let body = vec![
                            b.bn(depth),
                            Layer::Relu,
                            b.conv(1, 0, depth, 4 * growth),
                            b.bn(4 * growth),
                            Layer::Relu,
                            b.conv(3, 1, 4 * growth, *growth),
                        ];
                        layers.push(Layer::DenseUnit { body });
                        depth += growth;
                    }
                    if i + 1 < blocks.len() {
                        let out = ((depth as f64 * compression).floor() as usize).max(1);
                        layers.push(b.bn(depth));
                        layers.push(Layer::Relu);
                        layers.push(b.conv(1, 0, depth, out));
                        depth = out;
                        size = pooled("avgpool2d", size, 2, 2)?;
                        layers.push(Layer::AvgPool { filter: 2, stride: 2 });
                    }
                }
                layers.push(b.bn(depth));
                layers.push(Layer::Relu);
                layers.push(Layer::AvgPool { filter: size, stride: size });
                flatten = depth;
            }
        }
        let last_conv = b.ids[b.last_conv_start..].to_vec();
        Ok(Self { image, layers, features: flatten, ids: b.ids, last_conv })
    }

    /// Every parameter and running-statistics buffer of the extractor.
    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    /// Parameters of the last convolution registered and any batch norm after it.
    pub fn last_conv_ids(&self) -> &[ParamId] {
        &self.last_conv
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, images: Var) -> Result<Var> {
        let shape = s.tape.shape(images).to_vec();
        if shape.len() != 4 || shape[1] != self.image || shape[2] != self.image || shape[3] != 3 {
            return Err(Error::shape(
                "backbone_forward",
                format!("expected N×{0}×{0}×3 images, got {shape:?}", self.image),
            ));
        }
        let y = run_layers(s, &self.layers, images)?;
        s.tape.reshape(y, &[shape[0], self.features])
    }
}

fn run_layers<T: Scalar>(s: &mut Session<'_, T>, layers: &[Layer], mut x: Var) -> Result<Var> {
    for layer in layers {
        x = match layer {
            Layer::Conv(c) => {
                let (w, b) = (s.p(c.w), s.p(c.b));
                s.tape.conv2d(x, c.spec, w, b)?
            }
            Layer::BatchNorm(bn) => batchnorm(s, bn, x)?,
            Layer::Relu => s.tape.relu(x),
            Layer::MaxPool { filter, stride } => s.tape.maxpool2d(x, *filter, *stride)?,
            Layer::AvgPool { filter, stride } => s.tape.avgpool2d(x, *filter, *stride)?,
            Layer::Residual { main, shortcut } => {
                let m = run_layers(s, main, x)?;
                let sc = run_layers(s, shortcut, x)?;
                let sum = s.tape.add(m, sc)?;
                s.tape.relu(sum)
            }
            Layer::DenseUnit { body } => {
                let y = run_layers(s, body, x)?;
                s.tape.concat(&[x, y])?
            }
        };
    }
    Ok(x)
}

fn batchnorm<T: Scalar>(s: &mut Session<'_, T>, bn: &BatchNormLayer, x: Var) -> Result<Var> {
    let store = s.store();
    let running = (store.get(bn.mean).data(), store.get(bn.var).data());
    let (g, b) = (s.p(bn.gamma), s.p(bn.beta));
    let mode = s.mode;
    let (y, batch) = s.tape.batchnorm(x, g, b, mode, BN_EPS, running)?;
    if let Some((batch_mean, batch_var)) = batch {
        s.record_running(RunningUpdate { mean_id: bn.mean, var_id: bn.var, batch_mean, batch_var });
    }
    Ok(y)
}
