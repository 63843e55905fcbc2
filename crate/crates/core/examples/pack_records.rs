//! Packs PNG frames and merged labels into a record container and reads it back.

use vaseq::corpus::{merge, write_merged};
use vaseq::datapipe::{parse_and_scale, read_container, write_records, IMAGE_SIDE};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let frames = dir.path().join("frames");
    std::fs::create_dir(&frames)?;
    for k in 1..=4u32 {
        let side = IMAGE_SIDE as u32;
        let px: Vec<u8> = (0..side * side).flat_map(|i| [(k * 40) as u8, (i % 256) as u8, 90]).collect();
        image::save_buffer(frames.join(format!("{k}.png")), &px, side, side, image::ExtendedColorType::Rgb8)?;
    }
    let merged = dir.path().join("merged.txt");
    write_merged(&merged, &merge(&[-200, 0, 150, 400], &[30, 60, 90, 120])?)?;
    let out = dir.path().join("clip.vasq");
    let n = write_records(&merged, &frames, "clip", &out)?;
    println!("packed {n} frames, {} bytes", std::fs::metadata(&out)?.len());
    for r in read_container(&out)? {
        let s = parse_and_scale(&r);
        println!("{}: labels {:?}, first pixel {:.3}", r.id, s.label, s.image[0]);
    }
    Ok(())
}
