//! Trains a small CNN-GRU model with attention on a synthetic corpus and
//! scores the held-out video every 20 steps.

use std::ops::ControlFlow;
use std::sync::Arc;

use vaseq::cells::{BackboneConfig, CellKind, ModelConfig, RnnConfig, VggBlock};
use vaseq::corpus::{synthesize, SynthConfig};
use vaseq::datapipe::Dataset;
use vaseq::train::{evaluate, AdamConfig, Case, TrainConfig, Trainer};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let videos = synthesize(&SynthConfig { videos: 3, frames: 80, seed: 1 }, dir.path())?;
    let train = Arc::new(Dataset::open(&[&videos[0].record_path, &videos[1].record_path])?);
    let held = Arc::new(Dataset::open(&[&videos[2].record_path])?);

    let model = ModelConfig {
        image: 96,
        backbone: BackboneConfig::VggStyle { blocks: [4, 8, 8, 8, 8].map(|channels| VggBlock { convs: 1, channels }).to_vec() },
        rnn: RnnConfig { cell: CellKind::Gru, layers: 2, hidden: 16, attention: Some(4), steps: 8, ..RnnConfig::default() },
    };
    let mut config = TrainConfig::new(model, Case::Full);
    config.seq_len = 8;
    config.adam = AdamConfig::with_lr(1e-3);
    config.seed = 7;
    config.log_every = 0;
    let mut trainer = Trainer::new(config, train)?;
    trainer.run(100, None, |t, loss| {
        if t.global_step() % 20 == 0 {
            let row = evaluate(&t.model, &t.store, held.clone(), 8, 2, t.global_step(), "validation")?;
            println!("step {:>3} loss {loss:.3} held-out ccc {:.3}/{:.3}", row.step, row.ccc_valence, row.ccc_arousal);
        }
        Ok(ControlFlow::Continue(()))
    })?;
    Ok(())
}
