use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame spacing used when mapping frame numbers to timestamps.
pub const FRAME_INTERVAL: f64 = 0.03333;

pub const LABEL_MIN: i32 = -1000;
pub const LABEL_MAX: i32 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Valence,
    Arousal,
}

impl Dimension {
    pub fn name(self) -> &'static str {
        match self {
            Dimension::Valence => "valence",
            Dimension::Arousal => "arousal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "valence" => Some(Dimension::Valence),
            "arousal" => Some(Dimension::Arousal),
            _ => None,
        }
    }
}

/// Timestamped annotator samples for one dimension of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationTrack {
    pub dimension: Dimension,
    entries: Vec<(f64, i32)>,
}

impl AnnotationTrack {
    /// Validates strictly increasing, finite timestamps and in-range values.
    pub fn new(dimension: Dimension, entries: Vec<(f64, i32)>) -> Result<Self> {
        for (i, &(t, v)) in entries.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::Contract(format!("sample {i}: timestamp {t} is not finite")));
            }
            if !(LABEL_MIN..=LABEL_MAX).contains(&v) {
                return Err(Error::Contract(format!("sample {i}: value {v} outside [-1000, 1000]")));
            }
            if i > 0 && t <= entries[i - 1].0 {
                return Err(Error::Contract(format!("sample {i}: timestamp {t} does not increase")));
            }
        }
        Ok(Self { dimension, entries })
    }

    /// Parses `timestamp value` lines; blank lines are ignored.
    pub fn parse(dimension: Dimension, text: &str, origin: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |detail: String| Error::Parse { path: origin.to_string(), line: n + 1, detail };
            let mut parts = line.split_whitespace();
            let (Some(ts), Some(vs), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(format!("expected \"timestamp value\", got {line:?}")));
            };
            let t: f64 = ts.parse().map_err(|_| err(format!("bad timestamp {ts:?}")))?;
            let v: i32 = vs.parse().map_err(|_| err(format!("bad value {vs:?}")))?;
            if !t.is_finite() || t <= last {
                return Err(err(format!("timestamp {ts} does not strictly increase")));
            }
            if !(LABEL_MIN..=LABEL_MAX).contains(&v) {
                return Err(err(format!("value {v} outside [-1000, 1000]")));
            }
            last = t;
            entries.push((t, v));
        }
        Ok(Self { dimension, entries })
    }

    pub fn read(dimension: Dimension, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(dimension, &text, &path.display().to_string())
    }

    pub fn entries(&self) -> &[(f64, i32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `timestamp value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for &(t, v) in &self.entries {
            writeln!(out, "{t} {v}").expect("string write");
        }
        out
    }
}

/// Assigns each frame `k = 1..=frame_count` (at time `k·interval`) the
/// value of the nearest track sample; equidistant samples resolve to the
/// earlier one.
pub fn match_track(track: &AnnotationTrack, frame_count: usize, interval: f64) -> Result<Vec<i32>> {
    let e = track.entries();
    if e.is_empty() {
        return Err(Error::Contract(format!("empty {} track", track.dimension.name())));
    }
    Ok((1..=frame_count)
        .map(|k| {
            let t = k as f64 * interval;
            let i = e.partition_point(|&(ts, _)| ts < t);
            if i == 0 {
                return e[0].1;
            }
            if i == e.len() {
                return e[i - 1].1;
            }
            let (before, after) = (t - e[i - 1].0, e[i].0 - t);
            if before <= after {
                e[i - 1].1
            } else {
                e[i].1
            }
        })
        .collect())
}

/// One line of a merged annotation file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedRow {
    pub frame: u32,
    pub valence: i32,
    pub arousal: i32,
}

/// Zips per-frame valence and arousal into rows numbered from 1.
pub fn merge(valence: &[i32], arousal: &[i32]) -> Result<Vec<MergedRow>> {
    if valence.len() != arousal.len() {
        return Err(Error::Contract(format!(
            "valence covers {} frames but arousal covers {}",
            valence.len(),
            arousal.len()
        )));
    }
    Ok(valence
        .iter()
        .zip(arousal)
        .enumerate()
        .map(|(i, (&v, &a))| MergedRow { frame: i as u32 + 1, valence: v, arousal: a })
        .collect())
}

/// `frame\tvalence\tarousal` lines.
pub fn merged_to_text(rows: &[MergedRow]) -> String {
    let mut out = String::new();
    for r in rows {
        writeln!(out, "{}\t{}\t{}", r.frame, r.valence, r.arousal).expect("string write");
    }
    out
}

pub fn parse_merged(text: &str, origin: &str) -> Result<Vec<MergedRow>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |detail: String| Error::Parse { path: origin.to_string(), line: n + 1, detail };
        let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        let [k, v, a] = fields[..] else {
            return Err(err(format!("expected 3 tab-separated fields, got {}", fields.len())));
        };
        let frame: u32 = k.trim().parse().map_err(|_| err(format!("bad frame number {k:?}")))?;
        if frame == 0 {
            return Err(err("frame numbers start at 1".into()));
        }
        let valence: i32 = v.trim().parse().map_err(|_| err(format!("bad valence {v:?}")))?;
        let arousal: i32 = a.trim().parse().map_err(|_| err(format!("bad arousal {a:?}")))?;
        rows.push(MergedRow { frame, valence, arousal });
    }
    Ok(rows)
}

pub fn read_merged(path: &Path) -> Result<Vec<MergedRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_merged(&text, &path.display().to_string())
}

pub fn write_merged(path: &Path, rows: &[MergedRow]) -> Result<()> {
    std::fs::write(path, merged_to_text(rows)).map_err(|e| Error::io(path, e))
}
