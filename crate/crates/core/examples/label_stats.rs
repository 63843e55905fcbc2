//! Label histograms and a scatter sample of a set of records.

use vaseq::corpus::{histogram_csv, split_stats, synthesize, SynthConfig, STATS_BIN_WIDTH};
use vaseq::datapipe::Dataset;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let videos = synthesize(&SynthConfig { videos: 2, frames: 90, seed: 4 }, dir.path())?;
    let paths: Vec<_> = videos.iter().map(|v| v.record_path.clone()).collect();
    let data = Dataset::open(&paths)?;
    let labels: Vec<(i32, i32)> = data.records().iter().map(|r| (r.valence as i32, r.arousal as i32)).collect();
    let stats = split_stats(&labels, STATS_BIN_WIDTH, 10);
    println!("{} frames\nvalence:\n{}", stats.frames, histogram_csv(&stats.valence));
    println!("scatter sample: {:?}", stats.scatter);
    Ok(())
}
