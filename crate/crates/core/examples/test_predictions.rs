//! Scores one checkpoint on a test video and prints a few per-frame predictions.

use std::ops::ControlFlow;
use std::sync::Arc;

use vaseq::cells::{BackboneConfig, CellKind, ModelConfig, RnnConfig, VggBlock};
use vaseq::corpus::{synthesize, SynthConfig};
use vaseq::datapipe::Dataset;
use vaseq::train::{run_test, AdamConfig, Case, CheckpointWriter, TrainConfig, Trainer};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let videos = synthesize(&SynthConfig { videos: 2, frames: 32, seed: 5 }, &dir.path().join("corpus"))?;
    let model = ModelConfig {
        image: 96,
        backbone: BackboneConfig::VggStyle { blocks: [2, 4, 4, 4, 4].map(|channels| VggBlock { convs: 1, channels }).to_vec() },
        rnn: RnnConfig { cell: CellKind::IndRnn, layers: 2, hidden: 8, steps: 4, ..RnnConfig::default() },
    };
    let mut config = TrainConfig::new(model, Case::Full);
    config.seq_len = 4;
    config.adam = AdamConfig::with_lr(1e-3);
    config.checkpoint_every = 0;
    config.log_every = 0;
    let mut trainer = Trainer::new(config, Arc::new(Dataset::open(&[&videos[0].record_path])?))?;
    trainer.run(10, None, |_, _| Ok(ControlFlow::Continue(())))?;
    let path = CheckpointWriter::new(dir.path().join("ckpt")).write(&trainer.checkpoint())?;
    trainer.manifest().write(&dir.path().join("ckpt"))?;

    let test = Arc::new(Dataset::open(&[&videos[1].record_path])?);
    let (row, preds) = run_test(&path, test, 4, 2)?;
    println!("{}", row.to_csv());
    for p in preds.iter().take(5) {
        println!("{}: predicted {:+.3} {:+.3}, truth {:+.3} {:+.3}", p.id, p.pred[0], p.pred[1], p.truth[0], p.truth[1]);
    }
    Ok(())
}
