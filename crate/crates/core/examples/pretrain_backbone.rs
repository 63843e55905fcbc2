//! Pretrains a backbone on the auxiliary grating task.

use vaseq::cells::BackboneConfig;
use vaseq::train::{pretrain_backbone, AdamConfig, PretrainConfig};

fn main() -> anyhow::Result<()> {
    let config = PretrainConfig {
        backbone: BackboneConfig::densenet_small(),
        image: 96,
        steps: 20,
        batch: 4,
        adam: AdamConfig::with_lr(1e-3),
        seed: 0,
    };
    let ckpt = pretrain_backbone(&config, |step, loss| {
        if step % 5 == 0 {
            println!("step {step:>2} loss {loss:.4}");
        }
    })?;
    println!("{} backbone tensors", ckpt.params.iter().filter(|(n, _)| n.starts_with("backbone/")).count());
    Ok(())
}
