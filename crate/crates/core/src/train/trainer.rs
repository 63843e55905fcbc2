use std::collections::BTreeSet;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::checkpoint::{fingerprint, Checkpoint, CheckpointWriter, ModelManifest};
use super::strategy::Case;
use crate::autodiff::NormMode;
use crate::cells::{Model, ModelConfig, BN_MOMENTUM};
use crate::datapipe::{Dataset, Loader, LoaderConfig};
use crate::error::{Error, Result};
use crate::metrics::ccc_loss;
use crate::params::{apply_running_updates, ParamId, ParamStore, Session};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub case: Case,
    pub seq_len: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Checkpoint cadence in steps; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    /// Loss logging cadence in steps; 0 disables logging.
    pub log_every: u64,
    /// Source of the RNN weights for [`Case::RnnTransfer`].
    pub init_rnn: Option<PathBuf>,
    /// Pretrained backbone weights.
    pub init_backbone: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(model: ModelConfig, case: Case) -> Self {
        Self {
            model,
            case,
            seq_len: 80,
            batch: 2,
            adam: AdamConfig::default(),
            seed: 0,
            checkpoint_every: 1000,
            log_every: 100,
            init_rnn: None,
            init_backbone: None,
        }
    }
}

/// Continuous optimization of `1 − CCC` over a training stream.
pub struct Trainer {
    pub model: Model,
    pub store: ParamStore<f32>,
    pub adam: Adam<f32>,
    config: TrainConfig,
    loader: Loader,
    trained: BTreeSet<ParamId>,
    fingerprint: u64,
    step: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig, data: Arc<Dataset>) -> Result<Self> {
        if config.case.needs_init_rnn() && config.init_rnn.is_none() {
            return Err(Error::Contract("case 3 requires an RNN checkpoint to start from".into()));
        }
        let (model, mut store) = Model::build::<f32>(&config.model, config.seed)?;
        if let Some(path) = &config.init_backbone {
            let n = Checkpoint::load(path)?.restore_prefix(&mut store, "backbone/")?;
            if n != model.backbone.ids().len() {
                return Err(Error::CheckpointMismatch(format!(
                    "{} holds {n} backbone tensors, model has {}",
                    path.display(),
                    model.backbone.ids().len()
                )));
            }
        }
        if let Some(path) = &config.init_rnn {
            let n = Checkpoint::load(path)?.restore_prefix(&mut store, "rnn/")?;
            if n != model.rnn.ids().len() {
                return Err(Error::CheckpointMismatch(format!(
                    "{} holds {n} RNN tensors, model has {}",
                    path.display(),
                    model.rnn.ids().len()
                )));
            }
        }
        let trained = config.case.trainable(&model);
        let adam = Adam::new(config.adam, &store, |id| trained.contains(&id));
        let loader = Loader::new(data, LoaderConfig::training(config.seq_len, config.batch, config.seed))?;
        Ok(Self { fingerprint: fingerprint(&config.model), model, store, adam, config, loader, trained, step: 0 })
    }

    /// Continues from a checkpoint of the same model: parameters, optimizer
    /// state and step counter.
    pub fn resume(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.fingerprint != self.fingerprint {
            return Err(Error::CheckpointMismatch("checkpoint belongs to a different model layout".into()));
        }
        ckpt.restore_params(&mut self.store)?;
        ckpt.restore_adam(&mut self.adam, &self.store)?;
        self.step = ckpt.step;
        Ok(())
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn global_step(&self) -> u64 {
        self.step
    }

    pub fn manifest(&self) -> ModelManifest {
        ModelManifest::new(self.config.model.clone())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(self.step, self.fingerprint, &self.store, &self.adam)
    }

    /// One optimizer step on the next training batch; returns the loss.
    pub fn step(&mut self) -> Result<f64> {
        let batch = self.loader.next().ok_or_else(|| Error::Contract("training stream ended".into()))??;
        let (loss, grads, updates) = {
            let mut s = Session::new(&self.store, NormMode::Training);
            let images = s.tape.constant(batch.images);
            let truth = s.tape.constant(batch.labels);
            let pred = self.model.forward(&mut s, images)?;
            let loss = ccc_loss(&mut s.tape, pred, truth)?;
            s.tape.backward(loss)?;
            let value = s.tape.value(loss).item() as f64;
            let updates: Vec<_> =
                s.running_updates().iter().filter(|u| self.trained.contains(&u.mean_id)).cloned().collect();
            (value, s.param_grads(), updates)
        };
        self.adam.step(&mut self.store, &grads)?;
        apply_running_updates(&mut self.store, &updates, BN_MOMENTUM);
        self.step += 1;
        Ok(loss)
    }

    /// Runs up to `steps` further steps. Checkpoints go through `writer`
    /// every `checkpoint_every` steps; `observer` sees the trainer after each
    /// step and may stop the run.
    pub fn run<F>(&mut self, steps: u64, writer: Option<&CheckpointWriter>, mut observer: F) -> Result<()>
    where
        F: FnMut(&Trainer, f64) -> Result<ControlFlow<()>>,
    {
        if let Some(w) = writer {
            self.manifest().write(&w.dir)?;
        }
        for _ in 0..steps {
            let loss = self.step()?;
            if self.config.log_every > 0 && self.step.is_multiple_of(self.config.log_every) {
                log::info!("step {} loss {loss:.6}", self.step);
            }
            if let Some(w) = writer {
                if self.config.checkpoint_every > 0 && self.step.is_multiple_of(self.config.checkpoint_every) {
                    w.write(&self.checkpoint())?;
                }
            }
            if observer(self, loss)?.is_break() {
                break;
            }
        }
        Ok(())
    }
}
