use serde::{Deserialize, Serialize};

use super::annotation::MergedRow;

/// Valence profile of a video.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    MainlyPositive,
    MainlyNegative,
    BothValence,
    Neutral,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::MainlyPositive, Category::MainlyNegative, Category::BothValence, Category::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// With `p` the fraction of frames above +100 and `q` the fraction below
/// −100: mainly positive if `p ≥ 0.5, q < 0.2`; mainly negative if
/// `q ≥ 0.5, p < 0.2`; both if `p, q ≥ 0.2`; neutral otherwise.
pub fn categorize(rows: &[MergedRow]) -> Category {
    let n = rows.len().max(1) as f64;
    let p = rows.iter().filter(|r| r.valence > 100).count() as f64 / n;
    let q = rows.iter().filter(|r| r.valence < -100).count() as f64 / n;
    if p >= 0.5 && q < 0.2 {
        Category::MainlyPositive
    } else if q >= 0.5 && p < 0.2 {
        Category::MainlyNegative
    } else if p >= 0.2 && q >= 0.2 {
        Category::BothValence
    } else {
        Category::Neutral
    }
}
