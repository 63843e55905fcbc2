//! Evaluation running beside training: a watcher thread scores each
//! checkpoint as soon as the trainer writes it.

use std::ops::ControlFlow;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use vaseq::cells::{BackboneConfig, CellKind, ModelConfig, RnnConfig, VggBlock};
use vaseq::corpus::{synthesize, Dimension, SynthConfig};
use vaseq::datapipe::Dataset;
use vaseq::train::{eval_loop, select_best, AdamConfig, Case, CheckpointWriter, EvalLoopConfig, TrainConfig, Trainer};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let videos = synthesize(&SynthConfig { videos: 2, frames: 40, seed: 2 }, &dir.path().join("corpus"))?;
    let train = Arc::new(Dataset::open(&[&videos[0].record_path])?);
    let held = Arc::new(Dataset::open(&[&videos[1].record_path])?);
    let ckpt = dir.path().join("ckpt");

    let model = ModelConfig {
        image: 96,
        backbone: BackboneConfig::VggStyle { blocks: [2, 4, 4, 4, 4].map(|channels| VggBlock { convs: 1, channels }).to_vec() },
        rnn: RnnConfig { cell: CellKind::Lstm, layers: 1, hidden: 8, steps: 4, ..RnnConfig::default() },
    };
    let mut config = TrainConfig::new(model, Case::FrozenBackbone);
    config.seq_len = 4;
    config.adam = AdamConfig::with_lr(1e-3);
    config.checkpoint_every = 5;
    config.log_every = 0;

    let stop = AtomicBool::new(false);
    let rows = std::thread::scope(|scope| -> anyhow::Result<_> {
        let watcher = scope.spawn(|| {
            let mut cfg = EvalLoopConfig::new(4, 2);
            cfg.poll = Duration::from_millis(20);
            eval_loop(&ckpt, held.clone(), &cfg, &stop, |row| {
                println!("step {:>2}: ccc {:.3}/{:.3}", row.step, row.ccc_valence, row.ccc_arousal);
                Ok(())
            })
        });
        let trained = Trainer::new(config, train)
            .and_then(|mut t| t.run(20, Some(&CheckpointWriter::new(&ckpt)), |_, _| Ok(ControlFlow::Continue(()))));
        stop.store(true, Ordering::SeqCst);
        let rows = watcher.join().expect("watcher panicked")?;
        trained?;
        Ok(rows)
    })?;
    println!("best valence checkpoint: {:?}", select_best(&rows, Dimension::Valence));
    Ok(())
}
