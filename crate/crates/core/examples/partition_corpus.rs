//! Subject-disjoint, category-balanced split of a video list.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vaseq::corpus::{partition, violations, Category, Gender, Split, Targets, VideoMeta, DEFAULT_RATIOS};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let videos: Vec<VideoMeta> = (0..60)
        .map(|i| VideoMeta {
            id: format!("v{i:02}"),
            frames: rng.random_range(500..3000),
            fps: 30.0,
            subject: format!("s{}", i % 45),
            gender: if i % 45 < 22 { Gender::Female } else { Gender::Male },
            category: Category::ALL[rng.random_range(0..4)],
        })
        .collect();
    let mut census = [0; 4];
    for v in &videos {
        census[v.category.index()] += 1;
    }
    let targets = Targets::proportional(census, DEFAULT_RATIOS);
    let splits = partition(&videos, &targets, 11)?;
    for s in Split::ALL {
        let ids: Vec<&str> = videos.iter().zip(&splits).filter(|(_, x)| **x == s).map(|(v, _)| v.id.as_str()).collect();
        println!("{:<10} {:>2} videos, targets {:?}", s.name(), ids.len(), targets.cells[s.index()]);
    }
    println!("violations: {:?}", violations(&videos, &splits, &targets));
    Ok(())
}
