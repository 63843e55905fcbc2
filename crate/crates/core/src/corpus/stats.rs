use std::fmt::Write;

use super::annotation::{LABEL_MAX, LABEL_MIN};

/// Default histogram bin width in raw label units.
pub const STATS_BIN_WIDTH: i32 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HistogramRow {
    pub low: i32,
    pub high: i32,
    pub count: usize,
}

/// Counts labels in bins `[LABEL_MIN + k·width, LABEL_MIN + (k+1)·width)`,
/// the top bin being closed at `LABEL_MAX`. Only bins from the lowest to the
/// highest occupied one are returned.
pub fn label_histogram(values: &[i32], width: i32) -> Vec<HistogramRow> {
    assert!(width > 0, "bin width must be positive");
    if values.is_empty() {
        return Vec::new();
    }
    let nbins = ((LABEL_MAX - LABEL_MIN + width - 1) / width) as usize;
    let bin = |v: i32| (((v.clamp(LABEL_MIN, LABEL_MAX) - LABEL_MIN) / width) as usize).min(nbins - 1);
    let mut counts = vec![0usize; nbins];
    for &v in values {
        counts[bin(v)] += 1;
    }
    let lo = counts.iter().position(|&c| c > 0).unwrap_or(0);
    let hi = counts.iter().rposition(|&c| c > 0).unwrap_or(0);
    (lo..=hi)
        .map(|k| {
            let low = LABEL_MIN + k as i32 * width;
            HistogramRow { low, high: (low + width).min(LABEL_MAX), count: counts[k] }
        })
        .collect()
}

pub fn histogram_csv(rows: &[HistogramRow]) -> String {
    let mut out = String::from("bin_low,bin_high,count\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.low, r.high, r.count).expect("string write");
    }
    out
}

/// Every `ceil(n / max)`-th pair, at most `max` of them.
pub fn scatter_sample(pairs: &[(i32, i32)], max: usize) -> Vec<(i32, i32)> {
    if max == 0 || pairs.is_empty() {
        return Vec::new();
    }
    let stride = pairs.len().div_ceil(max);
    pairs.iter().step_by(stride).copied().collect()
}

pub fn scatter_csv(pairs: &[(i32, i32)]) -> String {
    let mut out = String::from("valence,arousal\n");
    for (v, a) in pairs {
        writeln!(out, "{v},{a}").expect("string write");
    }
    out
}

/// Label distribution of one split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitStats {
    pub frames: usize,
    pub valence: Vec<HistogramRow>,
    pub arousal: Vec<HistogramRow>,
    pub scatter: Vec<(i32, i32)>,
}

pub fn split_stats(labels: &[(i32, i32)], width: i32, scatter_max: usize) -> SplitStats {
    let valence: Vec<i32> = labels.iter().map(|l| l.0).collect();
    let arousal: Vec<i32> = labels.iter().map(|l| l.1).collect();
    SplitStats {
        frames: labels.len(),
        valence: label_histogram(&valence, width),
        arousal: label_histogram(&arousal, width),
        scatter: scatter_sample(labels, scatter_max),
    }
}
