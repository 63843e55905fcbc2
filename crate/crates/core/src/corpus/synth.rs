use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::annotation::{match_track, merge, write_merged, AnnotationTrack, Dimension, MergedRow, FRAME_INTERVAL};
use super::category::categorize;
use super::partition::{write_meta, Gender, VideoMeta};
use crate::datapipe::{write_container, FrameRecord, IMAGE_SIDE};
use crate::error::{Error, Result};

/// Grating period in pixels.
pub const GRATING_PERIOD: f64 = 16.0;
const GRATING_AMPLITUDE: f64 = 45.0;
const BLUR_TAPS: usize = 8;
const NOISE: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthConfig {
    pub videos: usize,
    pub frames: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SynthVideo {
    pub meta: VideoMeta,
    pub merged: Vec<MergedRow>,
    pub record_path: PathBuf,
}

/// Smooth label trajectory `c + A·sin(2πt/T + φ)` clamped to `[-1, 1]`.
#[derive(Clone, Copy, Debug)]
struct Trajectory {
    offset: f64,
    amplitude: f64,
    period: f64,
    phase: f64,
}

impl Trajectory {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            offset: rng.random_range(-0.4..0.4),
            amplitude: rng.random_range(0.3..0.6),
            period: rng.random_range(4.0..10.0),
            phase: rng.random_range(0.0..TAU),
        }
    }

    fn at(&self, t: f64) -> f64 {
        (self.offset + self.amplitude * (TAU * t / self.period + self.phase).sin()).clamp(-1.0, 1.0)
    }
}

/// Annotator-style track: samples roughly every 40 ms with jitter.
fn sample_track(dim: Dimension, traj: &Trajectory, duration: f64, rng: &mut ChaCha8Rng) -> Result<AnnotationTrack> {
    let mut entries = Vec::new();
    let mut t = rng.random_range(0.0..0.02);
    while t <= duration + 0.04 {
        entries.push(((t * 1e4).round() / 1e4, (traj.at(t) * 1000.0).round() as i32));
        t += 0.04 + rng.random_range(0.0..0.01);
    }
    AnnotationTrack::new(dim, entries)
}

/// Renders one frame: mean brightness `128 + 80·valence`, a vertical
/// grating whose horizontal speed is `8·(arousal + 1)` px/frame, averaged
/// over the exposure so faster motion shows as lower contrast.
pub fn render_frame(valence: f64, arousal: f64, phase: f64, rng: &mut impl Rng) -> Vec<u8> {
    let base = 128.0 + 80.0 * valence;
    let speed = 8.0 * (arousal + 1.0);
    let row: Vec<f64> = (0..IMAGE_SIDE)
        .map(|x| {
            let blurred: f64 = (0..BLUR_TAPS)
                .map(|j| {
                    let shift = phase + speed * j as f64 / BLUR_TAPS as f64;
                    (TAU * (x as f64 - shift) / GRATING_PERIOD).sin()
                })
                .sum::<f64>()
                / BLUR_TAPS as f64;
            base + GRATING_AMPLITUDE * blurred
        })
        .collect();
    let mut out = Vec::with_capacity(IMAGE_SIDE * IMAGE_SIDE * 3);
    for _y in 0..IMAGE_SIDE {
        for &v in &row {
            for _c in 0..3 {
                let noisy = v.round() as i32 + rng.random_range(-NOISE..=NOISE);
                out.push(noisy.clamp(0, 255) as u8);
            }
        }
    }
    out
}

/// Writes a synthetic corpus under `out`:
/// `<vid>/frames/<k>.png`, `<vid>/valence.ann`, `<vid>/arousal.ann`,
/// `<vid>/merged.txt`, `records/<vid>.vasq` and `meta.csv`.
pub fn synthesize(config: &SynthConfig, out: &Path) -> Result<Vec<SynthVideo>> {
    if config.videos == 0 || config.frames == 0 {
        return Err(Error::Contract("synthetic corpus needs at least one video and one frame".into()));
    }
    let records_dir = out.join("records");
    fs::create_dir_all(&records_dir).map_err(|e| Error::io(&records_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let duration = config.frames as f64 * FRAME_INTERVAL;
    let mut videos = Vec::with_capacity(config.videos);
    for v in 0..config.videos {
        let id = format!("vid{v:03}");
        let dir = out.join(&id);
        let frames_dir = dir.join("frames");
        fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;

        let val_traj = Trajectory::random(&mut rng);
        let aro_traj = Trajectory::random(&mut rng);
        let val_track = sample_track(Dimension::Valence, &val_traj, duration, &mut rng)?;
        let aro_track = sample_track(Dimension::Arousal, &aro_traj, duration, &mut rng)?;
        for (track, name) in [(&val_track, "valence.ann"), (&aro_track, "arousal.ann")] {
            let path = dir.join(name);
            fs::write(&path, track.to_text()).map_err(|e| Error::io(&path, e))?;
        }
        let merged = merge(
            &match_track(&val_track, config.frames, FRAME_INTERVAL)?,
            &match_track(&aro_track, config.frames, FRAME_INTERVAL)?,
        )?;
        write_merged(&dir.join("merged.txt"), &merged)?;

        let mut phase = rng.random_range(0.0..GRATING_PERIOD);
        let mut records = Vec::with_capacity(merged.len());
        for row in &merged {
            let (val, aro) = (row.valence as f64 / 1000.0, row.arousal as f64 / 1000.0);
            let pixels = render_frame(val, aro, phase, &mut rng);
            phase = (phase + 8.0 * (aro + 1.0)) % GRATING_PERIOD;
            let path = frames_dir.join(format!("{}.png", row.frame));
            image::save_buffer(&path, &pixels, IMAGE_SIDE as u32, IMAGE_SIDE as u32, image::ExtendedColorType::Rgb8)
                .map_err(|e| Error::BadImage { frame_id: format!("{id}/{}", row.frame), detail: e.to_string() })?;
            records.push(FrameRecord::new(format!("{id}/{}", row.frame), pixels, row.valence as i64, row.arousal as i64)?);
        }
        let record_path = records_dir.join(format!("{id}.vasq"));
        write_container(&record_path, &records)?;

        let meta = VideoMeta {
            id: id.clone(),
            frames: config.frames,
            fps: 30.0,
            subject: format!("subject{v:03}"),
            gender: if v % 2 == 0 { Gender::Female } else { Gender::Male },
            category: categorize(&merged),
        };
        videos.push(SynthVideo { meta, merged, record_path });
    }
    let metas: Vec<VideoMeta> = videos.iter().map(|v| v.meta.clone()).collect();
    write_meta(&out.join("meta.csv"), &metas)?;
    Ok(videos)
}
