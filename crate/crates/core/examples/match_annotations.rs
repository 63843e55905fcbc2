//! Nearest-sample matching of two annotation tracks onto frame times.

use vaseq::corpus::{match_track, merge, merged_to_text, AnnotationTrack, Dimension, FRAME_INTERVAL};

fn main() -> anyhow::Result<()> {
    let valence = AnnotationTrack::parse(
        Dimension::Valence,
        "0.010 121\n0.030 122\n0.041 123\n0.057 124\n0.089 125\n0.102 126\n0.119 127\n",
        "valence.ann",
    )?;
    let arousal = AnnotationTrack::new(Dimension::Arousal, vec![(0.0, -50), (0.06, 10), (0.1, 80)])?;
    let frames = 3;
    let v = match_track(&valence, frames, FRAME_INTERVAL)?;
    let a = match_track(&arousal, frames, FRAME_INTERVAL)?;
    print!("{}", merged_to_text(&merge(&v, &a)?));
    Ok(())
}
