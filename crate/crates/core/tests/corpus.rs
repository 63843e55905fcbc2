mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vaseq::corpus::*;
use vaseq::datapipe::read_container;
use vaseq::Error;

fn table_track() -> AnnotationTrack {
    let stamps = [0.010, 0.030, 0.041, 0.057, 0.089, 0.102, 0.119];
    AnnotationTrack::new(Dimension::Valence, stamps.iter().zip(121..).map(|(&t, v)| (t, v)).collect()).unwrap()
}

fn brute_force_match(entries: &[(f64, i32)], frames: usize, interval: f64) -> Vec<i32> {
    (1..=frames)
        .map(|k| {
            let t = k as f64 * interval;
            let mut best = 0;
            for (i, e) in entries.iter().enumerate() {
                if (e.0 - t).abs() < (entries[best].0 - t).abs() {
                    best = i;
                }
            }
            entries[best].1
        })
        .collect()
}

#[test]
fn worked_example_frame_two_gets_124() {
    let values = match_track(&table_track(), 3, FRAME_INTERVAL).unwrap();
    assert_eq!(values[1], 124);
}

#[test]
fn single_entry_track_fills_every_frame() {
    let track = AnnotationTrack::new(Dimension::Arousal, vec![(1.5, -40)]).unwrap();
    assert_eq!(match_track(&track, 9, FRAME_INTERVAL).unwrap(), vec![-40; 9]);
}

#[test]
fn empty_track_is_rejected() {
    let track = AnnotationTrack::new(Dimension::Valence, vec![]).unwrap();
    assert!(matches!(match_track(&track, 3, FRAME_INTERVAL), Err(Error::Contract(_))));
}

#[test]
fn equidistant_samples_resolve_to_the_earlier() {
    let track = AnnotationTrack::new(Dimension::Valence, vec![(0.5, 1), (1.5, 2)]).unwrap();
    assert_eq!(match_track(&track, 1, 1.0).unwrap(), vec![1]);
}

#[test]
fn annotation_text_parses_and_rejects_disorder() {
    let track = AnnotationTrack::parse(Dimension::Valence, "0.010 121\n0.030 122\n\n", "t").unwrap();
    assert_eq!(track.entries(), &[(0.010, 121), (0.030, 122)]);
    assert!(AnnotationTrack::parse(Dimension::Valence, "0.03 1\n0.01 2\n", "t").is_err());
    assert!(AnnotationTrack::parse(Dimension::Valence, "0.01 1001\n", "t").is_err());
    assert!(AnnotationTrack::parse(Dimension::Valence, "0.01\n", "t").is_err());
}

#[test]
fn random_tracks_match_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let mut t = 0.0;
        let entries: Vec<(f64, i32)> = (0..n)
            .map(|_| {
                t += rng.random_range(0.001..0.2);
                (t, rng.random_range(-1000..=1000))
            })
            .collect();
        let frames = rng.random_range(1..200);
        let track = AnnotationTrack::new(Dimension::Valence, entries.clone()).unwrap();
        assert_eq!(match_track(&track, frames, FRAME_INTERVAL).unwrap(), brute_force_match(&entries, frames, FRAME_INTERVAL));
    }
}

#[test]
fn merge_counts() {
    assert_eq!(merge(&[1; 7], &[2; 7]).unwrap().len(), 7);
    assert!(matches!(merge(&[1; 7], &[2; 6]), Err(Error::Contract(_))));
}

#[test]
fn merged_file_matches_golden_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("merged.txt");
    write_merged(&path, &merge(&[121, -3, 1000], &[0, 45, -1000]).unwrap()).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), b"1\t121\t0\n2\t-3\t45\n3\t1000\t-1000\n");
    assert_eq!(read_merged(&path).unwrap()[2], MergedRow { frame: 3, valence: 1000, arousal: -1000 });
}

fn solid(value: u8, pixels: usize) -> Vec<u8> {
    vec![value; pixels * 3]
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn oracle_similarity(a: &[u8], b: &[u8], bins: usize) -> f64 {
    let norm = |img: &[u8]| {
        let mut h = vec![0.0; 3 * bins];
        for px in img.chunks(3) {
            for c in 0..3 {
                h[c * bins + (px[c] as usize * bins) / 256] += 1.0;
            }
        }
        let pixels = (img.len() / 3) as f64;
        h.iter().map(|v| v / pixels).collect::<Vec<_>>()
    };
    pearson(&norm(a), &norm(b))
}

#[test]
fn identical_images_score_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img: Vec<u8> = (0..300).map(|_| rng.random()).collect();
    let h = histogram(&img, 32).unwrap();
    assert!((similarity(&h, &h).unwrap() - 1.0).abs() < 1e-12);
    assert!(h.counts.iter().all(|c| c.iter().sum::<u32>() == 100));
}

#[test]
fn black_and_white_are_dissimilar() {
    let black = histogram(&solid(0, 64), 256).unwrap();
    let white = histogram(&solid(255, 64), 256).unwrap();
    assert!(similarity(&black, &white).unwrap() < 0.1);
}

#[test]
fn similarity_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for bins in [2, 7, 16, 256] {
        let a: Vec<u8> = (0..3 * 50).map(|_| rng.random()).collect();
        let b: Vec<u8> = (0..3 * 80).map(|_| rng.random()).collect();
        let got = similarity(&histogram(&a, bins).unwrap(), &histogram(&b, bins).unwrap()).unwrap();
        assert!((got - oracle_similarity(&a, &b, bins)).abs() < 1e-9, "bins {bins}");
    }
}

#[test]
fn histogram_contract() {
    assert!(histogram(&solid(3, 4), 1).is_err());
    let a = histogram(&solid(3, 4), 8).unwrap();
    let b = histogram(&solid(3, 4), 16).unwrap();
    assert!(matches!(similarity(&a, &b), Err(Error::Contract(_))));
    assert!(matches!(pick_face(&[], &a), Err(Error::Contract(_))));
    assert_eq!(pick_face(std::slice::from_ref(&b), &b).unwrap(), 0);
}

#[test]
fn pick_face_agrees_with_brute_force_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let reference: Vec<u8> = (0..3 * 200).map(|_| rng.random_range(60..200)).collect();
    for trial in 0..20 {
        // candidate i replaces a growing share of the reference's pixels
        let mut shares: Vec<usize> = vec![10, 40, 80, 120, 190];
        shares.shuffle(&mut rng);
        let images: Vec<Vec<u8>> = shares
            .iter()
            .map(|&k| {
                let mut img = reference.clone();
                for px in 0..k {
                    for c in 0..3 {
                        img[px * 3 + c] = rng.random();
                    }
                }
                img
            })
            .collect();
        let expected = (0..5)
            .max_by(|&i, &j| {
                let (si, sj) = (oracle_similarity(&images[i], &reference, 32), oracle_similarity(&images[j], &reference, 32));
                si.total_cmp(&sj).then(j.cmp(&i))
            })
            .unwrap();
        let feats: Vec<HistogramFeature> = images.iter().map(|i| histogram(i, 32).unwrap()).collect();
        assert_eq!(pick_face(&feats, &histogram(&reference, 32).unwrap()).unwrap(), expected, "trial {trial}");
    }
}

fn rows(values: &[i32]) -> Vec<MergedRow> {
    values.iter().enumerate().map(|(i, &v)| MergedRow { frame: i as u32 + 1, valence: v, arousal: 0 }).collect()
}

#[test]
fn categorize_examples() {
    assert_eq!(categorize(&rows(&[500; 10])), Category::MainlyPositive);
    assert_eq!(categorize(&rows(&[-500; 10])), Category::MainlyNegative);
    assert_eq!(categorize(&rows(&[0; 10])), Category::Neutral);
    let half: Vec<i32> = (0..10).map(|i| if i < 5 { 500 } else { -500 }).collect();
    assert_eq!(categorize(&rows(&half)), Category::BothValence);
    // exactly 100 is not above the threshold
    assert_eq!(categorize(&rows(&[100; 10])), Category::Neutral);
}

#[test]
fn census_fixture_reaches_target_split_sizes() {
    let videos = common::census_fixture(1);
    let splits = partition(&videos, &common::CORPUS_TARGETS, 7).unwrap();
    common::check_assignment(&videos, &splits, &common::CORPUS_TARGETS).unwrap();
    let sizes: Vec<usize> =
        [Split::Train, Split::Validation, Split::Test].iter().map(|s| splits.iter().filter(|x| *x == s).count()).collect();
    assert_eq!(sizes, vec![103, 25, 31]);
    assert!(violations(&videos, &splits, &common::CORPUS_TARGETS).is_empty());
}

#[test]
fn partition_is_deterministic_given_seed() {
    let videos = common::census_fixture(2);
    let a = partition(&videos, &common::CORPUS_TARGETS, 3).unwrap();
    let b = partition(&videos, &common::CORPUS_TARGETS, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_video_goes_to_train() {
    let video = VideoMeta {
        id: "only".into(),
        frames: 10,
        fps: 30.0,
        subject: "s".into(),
        gender: Gender::Male,
        category: Category::Neutral,
    };
    let targets = Targets::proportional([0, 0, 0, 1], DEFAULT_RATIOS);
    assert_eq!(partition(&[video], &targets, 0).unwrap(), vec![Split::Train]);
}

fn random_fixture(n: usize, seed: u64) -> Vec<VideoMeta> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subject = 0;
    let mut out = Vec::new();
    while out.len() < n {
        let count = rng.random_range(1..=3).min(n - out.len());
        let gender = if rng.random_bool(0.5) { Gender::Female } else { Gender::Male };
        for _ in 0..count {
            out.push(VideoMeta {
                id: format!("v{}", out.len()),
                frames: rng.random_range(100..5000),
                fps: 30.0,
                subject: format!("s{subject}"),
                gender,
                category: Category::ALL[rng.random_range(0..4)],
            });
        }
        subject += 1;
    }
    out
}

#[test]
fn random_fixtures_satisfy_every_constraint() {
    for seed in 0..10 {
        let videos = random_fixture(40, seed);
        let mut census = [0; 4];
        for v in &videos {
            census[v.category.index()] += 1;
        }
        let targets = Targets::proportional(census, DEFAULT_RATIOS);
        let splits = partition(&videos, &targets, seed).unwrap();
        common::check_assignment(&videos, &splits, &targets).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

#[test]
fn oversized_subject_is_reported() {
    let mut videos = random_fixture(20, 4);
    for v in videos.iter_mut().take(12) {
        v.subject = "giant".into();
        v.category = Category::Neutral;
    }
    let mut census = [0; 4];
    for v in &videos {
        census[v.category.index()] += 1;
    }
    let targets = Targets::proportional(census, DEFAULT_RATIOS);
    match partition(&videos, &targets, 0) {
        Err(Error::Infeasible { subject, .. }) => assert_eq!(subject, "giant"),
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn proportional_rounding_of_census() {
    let t = Targets::proportional(common::CENSUS, DEFAULT_RATIOS);
    assert_eq!(t.split_sizes(), [102, 25, 32]);
    assert_eq!(t.census(), common::CENSUS);
}

#[test]
fn meta_csv_reads_hand_written_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("meta.csv");
    std::fs::write(&path, "id,frames,fps,subject,gender,category\na,120,30,s1,female,mainly_positive\nb,90,30,s2,male,neutral\n")
        .unwrap();
    let metas = read_meta(&path).unwrap();
    assert_eq!(metas.len(), 2);
    assert_eq!(metas[0].gender, Gender::Female);
    assert_eq!(metas[1].category, Category::Neutral);
    std::fs::write(&path, "id,frames,fps,subject,gender,category\na,x,30,s1,female,neutral\n").unwrap();
    assert!(matches!(read_meta(&path), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn all_zero_labels_make_one_bin() {
    let stats = split_stats(&[(0, 0); 50], STATS_BIN_WIDTH, 10);
    assert_eq!(stats.valence, vec![HistogramRow { low: 0, high: 100, count: 50 }]);
    assert_eq!(stats.arousal.len(), 1);
    assert_eq!(stats.scatter.len(), 10);
}

#[test]
fn hand_counted_bins() {
    let rows = label_histogram(&[-1000, -950, -901, 0, 99, 100, 1000], 100);
    assert_eq!(rows.len(), 20);
    assert_eq!(rows[0], HistogramRow { low: -1000, high: -900, count: 3 });
    assert_eq!(rows[10], HistogramRow { low: 0, high: 100, count: 2 });
    assert_eq!(rows[11], HistogramRow { low: 100, high: 200, count: 1 });
    assert_eq!(rows[19], HistogramRow { low: 900, high: 1000, count: 1 });
    assert_eq!(rows.iter().map(|r| r.count).sum::<usize>(), 7);
    assert!(histogram_csv(&rows[..1]).starts_with("bin_low,bin_high,count\n-1000,-900,3\n"));
}

#[test]
fn synthetic_corpus_layout_and_signal() {
    let dir = tempfile::tempdir().unwrap();
    let videos = synthesize(&SynthConfig { videos: 2, frames: 20, seed: 9 }, dir.path()).unwrap();
    assert_eq!(videos.len(), 2);
    assert_eq!(read_meta(&dir.path().join("meta.csv")).unwrap().len(), 2);
    for v in &videos {
        let vdir = dir.path().join(&v.meta.id);
        for f in ["valence.ann", "arousal.ann", "merged.txt", "frames/1.png", "frames/20.png"] {
            assert!(vdir.join(f).exists(), "{f}");
        }
        assert_eq!(read_merged(&vdir.join("merged.txt")).unwrap(), v.merged);
        let records = read_container(&v.record_path).unwrap();
        assert_eq!(records.len(), 20);
        for (r, m) in records.iter().zip(&v.merged) {
            assert_eq!((r.valence as i32, r.arousal as i32), (m.valence, m.arousal));
            let mean = r.image.iter().map(|&p| p as f64).sum::<f64>() / r.image.len() as f64;
            assert!((mean - (128.0 + 0.08 * m.valence as f64)).abs() < 1.5, "mean {mean} valence {}", m.valence);
        }
    }
}

#[test]
fn synthetic_corpus_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = SynthConfig { videos: 1, frames: 8, seed: 2 };
    synthesize(&cfg, a.path()).unwrap();
    synthesize(&cfg, b.path()).unwrap();
    let rec = |d: &tempfile::TempDir| std::fs::read(d.path().join("records/vid000.vasq")).unwrap();
    assert_eq!(rec(&a), rec(&b));
}

#[test]
fn faster_motion_lowers_contrast() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spread = |img: &[u8]| {
        let row = &img[..96 * 3];
        let (lo, hi) = row.iter().fold((255u8, 0u8), |(l, h), &p| (l.min(p), h.max(p)));
        hi - lo
    };
    let calm = render_frame(0.0, -1.0, 0.0, &mut rng);
    let excited = render_frame(0.0, 0.9, 0.0, &mut rng);
    assert!(spread(&calm) > spread(&excited) + 40);
}

proptest! {
    #[test]
    fn categorize_ignores_frame_order(values in prop::collection::vec(-1000i32..=1000, 1..60), seed in any::<u64>()) {
        let mut shuffled = values.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(categorize(&rows(&values)), categorize(&rows(&shuffled)));
    }

    #[test]
    fn reference_is_always_picked(
        others in prop::collection::vec(prop::collection::vec(any::<u8>(), 30), 0..5),
        reference in prop::collection::vec(any::<u8>(), 30),
        at in 0usize..6,
    ) {
        let mut feats: Vec<HistogramFeature> = others.iter().map(|o| histogram(o, 16).unwrap()).collect();
        let r = histogram(&reference, 16).unwrap();
        let at = at.min(feats.len());
        feats.insert(at, r.clone());
        let picked = pick_face(&feats, &r).unwrap();
        // an earlier candidate with an identical histogram may tie
        prop_assert!(picked == at || feats[picked] == r);
    }

    #[test]
    fn proportional_targets_round_each_cell(census in prop::array::uniform4(0usize..60)) {
        prop_assume!(census.iter().sum::<usize>() > 0);
        let t = Targets::proportional(census, DEFAULT_RATIOS);
        prop_assert_eq!(t.census(), census);
        let n: usize = census.iter().sum();
        for s in 0..3 {
            for c in 0..4 {
                let exact = census[c] as f64 * DEFAULT_RATIOS[s];
                prop_assert!((t.cells[s][c] as f64 - exact).abs() < 1.0);
            }
            prop_assert!((t.split_sizes()[s] as f64 - n as f64 * DEFAULT_RATIOS[s]).abs() < 1.0);
        }
    }

    #[test]
    fn partition_is_a_true_partition(seed in 0u64..1000) {
        let videos = random_fixture(25, seed);
        let mut census = [0; 4];
        for v in &videos {
            census[v.category.index()] += 1;
        }
        if let Ok(splits) = partition(&videos, &Targets::proportional(census, DEFAULT_RATIOS), seed) {
            prop_assert_eq!(splits.len(), videos.len());
            for (i, a) in videos.iter().enumerate() {
                for (j, b) in videos.iter().enumerate() {
                    if a.subject == b.subject {
                        prop_assert_eq!(splits[i], splits[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn stats_counts_sum_to_frames(labels in prop::collection::vec((-1000i32..=1000, -1000i32..=1000), 1..200)) {
        let s = split_stats(&labels, STATS_BIN_WIDTH, 50);
        prop_assert_eq!(s.valence.iter().map(|r| r.count).sum::<usize>(), labels.len());
        prop_assert_eq!(s.arousal.iter().map(|r| r.count).sum::<usize>(), labels.len());
        prop_assert!(s.scatter.len() <= 50);
    }
}
