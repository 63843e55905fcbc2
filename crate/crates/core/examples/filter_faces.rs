//! Histogram-correlation choice among detected crops of one frame.

use vaseq::corpus::{histogram, pick_face, similarity};

fn solid(rgb: [u8; 3], noise: u8) -> Vec<u8> {
    (0..32 * 32).flat_map(|i| rgb.map(|c| c.saturating_add((i % 7) as u8 * noise))).collect()
}

fn main() -> anyhow::Result<()> {
    let bins = 32;
    let reference = histogram(&solid([180, 120, 100], 3), bins)?;
    let candidates = [solid([20, 160, 40], 2), solid([175, 118, 104], 3), solid([90, 90, 200], 1)];
    let feats = candidates.iter().map(|c| histogram(c, bins)).collect::<Result<Vec<_>, _>>()?;
    for (i, f) in feats.iter().enumerate() {
        println!("candidate {i}: similarity {:.3}", similarity(f, &reference)?);
    }
    println!("picked {}", pick_face(&feats, &reference)?);
    Ok(())
}
