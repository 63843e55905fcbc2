use super::record::{parse_frame_id, FrameRecord};
use crate::error::Result;

pub fn scale_pixel(p: u8) -> f32 {
    (p as f32 - 128.0) / 128.0
}

/// Inverse of [`scale_pixel`] on its image.
pub fn unscale_pixel(x: f32) -> u8 {
    (x * 128.0 + 128.0).round().clamp(0.0, 255.0) as u8
}

pub fn scale_label(v: i16) -> f32 {
    v as f32 / 1000.0
}

/// A record mapped into model units.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledFrame {
    pub id: String,
    pub image: Vec<f32>,
    /// `[valence, arousal]`.
    pub label: [f32; 2],
}

pub fn parse_and_scale(record: &FrameRecord) -> ScaledFrame {
    ScaledFrame {
        id: record.id.clone(),
        image: record.image.iter().map(|&p| scale_pixel(p)).collect(),
        label: [scale_label(record.valence), scale_label(record.arousal)],
    }
}

/// Whether a window of frame ids plausibly forms one continuous clip:
/// first and last ids name the same video and their frame numbers lie at
/// most `15·L` apart (in either direction).
pub fn check_consecutive<S: AsRef<str>>(ids: &[S]) -> Result<bool> {
    let (Some(first), Some(last)) = (ids.first(), ids.last()) else {
        return Ok(false);
    };
    let (v1, f1) = parse_frame_id(first.as_ref())?;
    let (v2, f2) = parse_frame_id(last.as_ref())?;
    Ok(v1 == v2 && f1.abs_diff(f2) <= 15 * ids.len() as u64)
}
