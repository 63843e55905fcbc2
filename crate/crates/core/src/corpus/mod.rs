//! Corpus construction: annotation matching and merging, detection
//! filtering, categorization, partitioning, statistics and a synthetic
//! corpus generator.

mod annotation;
mod category;
mod histogram;
mod partition;
mod stats;
mod synth;

pub use annotation::{
    match_track, merge, merged_to_text, parse_merged, read_merged, write_merged, AnnotationTrack, Dimension,
    MergedRow, FRAME_INTERVAL, LABEL_MAX, LABEL_MIN,
};
pub use category::{categorize, Category};
pub use histogram::{histogram, pick_face, similarity, HistogramFeature};
pub use partition::{
    partition, read_meta, violations, write_meta, Gender, Split, Targets, VideoMeta, DEFAULT_RATIOS,
};
pub use stats::{
    histogram_csv, label_histogram, scatter_csv, scatter_sample, split_stats, HistogramRow, SplitStats,
    STATS_BIN_WIDTH,
};
pub use synth::{render_frame, synthesize, SynthConfig, SynthVideo, GRATING_PERIOD};
