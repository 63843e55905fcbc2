//! Synthetic corpus whose brightness tracks valence and grating speed tracks arousal.

use vaseq::corpus::{synthesize, SynthConfig};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let videos = synthesize(&SynthConfig { videos: 3, frames: 60, seed: 1 }, dir.path())?;
    for v in &videos {
        let mean = |f: fn(&vaseq::corpus::MergedRow) -> i32| v.merged.iter().map(f).sum::<i32>() / v.merged.len() as i32;
        println!(
            "{} {:?}: mean valence {}, mean arousal {}, records {}",
            v.meta.id,
            v.meta.category,
            mean(|r| r.valence),
            mean(|r| r.arousal),
            v.record_path.display()
        );
    }
    Ok(())
}
