#![allow(dead_code)]

pub mod ops;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vaseq::corpus::{Category, Gender, Split, Targets, VideoMeta};

/// Category census and per-split targets of the 159-video corpus.
pub const CENSUS: [usize; 4] = [43, 58, 46, 12];
pub const CORPUS_TARGETS: Targets = Targets { cells: [[27, 38, 29, 9], [7, 9, 8, 1], [9, 11, 9, 2]] };

/// 159 videos from 135 subjects (73 female, 62 male); 80 videos show a
/// female subject and 79 a male one. Repeat videos go to random subjects
/// of the matching gender.
pub fn census_fixture(seed: u64) -> Vec<VideoMeta> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subjects: Vec<(String, Gender)> = (0..135)
        .map(|i| (format!("s{i:03}"), if i < 73 { Gender::Female } else { Gender::Male }))
        .collect();
    let mut extra = Vec::new();
    for _ in 0..7 {
        let i = rng.random_range(0..73);
        extra.push(subjects[i].clone());
    }
    for _ in 0..17 {
        let i = rng.random_range(73..135);
        extra.push(subjects[i].clone());
    }
    subjects.extend(extra);
    let mut cats: Vec<Category> =
        Category::ALL.iter().zip(CENSUS).flat_map(|(&c, n)| std::iter::repeat_n(c, n)).collect();
    cats.shuffle(&mut rng);
    subjects
        .into_iter()
        .zip(cats)
        .enumerate()
        .map(|(i, ((subject, gender), category))| VideoMeta {
            id: format!("v{i:03}"),
            frames: rng.random_range(300..10_000),
            fps: 30.0,
            subject,
            gender,
            category,
        })
        .collect()
}

/// Independent check of every partition constraint; returns the first
/// violation found.
pub fn check_assignment(videos: &[VideoMeta], splits: &[Split], targets: &Targets) -> Result<(), String> {
    if splits.len() != videos.len() {
        return Err("assignment length".into());
    }
    for i in 0..videos.len() {
        for j in 0..videos.len() {
            if videos[i].subject == videos[j].subject && splits[i] != splits[j] {
                return Err(format!("subject {} split across sets", videos[i].subject));
            }
        }
    }
    let female_total = videos.iter().filter(|v| v.gender == Gender::Female).count() as f64;
    for (s, split) in [Split::Train, Split::Validation, Split::Test].into_iter().enumerate() {
        let size: usize = targets.cells[s].iter().sum();
        let members: Vec<usize> = (0..videos.len()).filter(|&i| splits[i] == split).collect();
        if members.len() != size {
            return Err(format!("{split:?} size {} != {size}", members.len()));
        }
        for (c, cat) in Category::ALL.into_iter().enumerate() {
            let n = members.iter().filter(|&&i| videos[i].category == cat).count() as i64;
            if (n - targets.cells[s][c] as i64).abs() > 1 {
                return Err(format!("{split:?}/{cat:?}: {n} vs {}", targets.cells[s][c]));
            }
        }
        let fem = members.iter().filter(|&&i| videos[i].gender == Gender::Female).count() as f64;
        let share = female_total * size as f64 / videos.len() as f64;
        if (fem - share).abs() > 2.0 {
            return Err(format!("{split:?}: {fem} female vs share {share}"));
        }
    }
    Ok(())
}
