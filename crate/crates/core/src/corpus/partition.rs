use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::category::Category;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub id: String,
    pub frames: usize,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub subject: String,
    pub gender: Gender,
    pub category: Category,
}

fn default_fps() -> f64 {
    30.0
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.64, 0.16, 0.20];

/// Video counts per `[split][category]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Targets {
    pub cells: [[usize; 4]; 3],
}

/// Largest-remainder rounding of `values` to integers summing to `total`.
fn largest_remainder(values: &[f64], total: usize) -> Vec<usize> {
    let mut out: Vec<usize> = values.iter().map(|v| v.floor() as usize).collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| (values[b] - values[b].floor()).total_cmp(&(values[a] - values[a].floor())).then(a.cmp(&b)));
    let mut left = total.saturating_sub(out.iter().sum());
    for &i in order.iter().cycle().take(left.min(values.len() * 2)) {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

impl Targets {
    /// Rounds `census[c] · ratios[s]` so each category total is preserved,
    /// split sizes are the largest-remainder rounding of `N · ratios`, and
    /// every cell is the floor or ceiling of its exact share.
    pub fn proportional(census: [usize; 4], ratios: [f64; 3]) -> Self {
        let n: usize = census.iter().sum();
        let sum: f64 = ratios.iter().sum();
        let ratios = ratios.map(|r| r / sum);
        let sizes = largest_remainder(&ratios.map(|r| r * n as f64), n);
        let exact: Vec<Vec<f64>> =
            (0..3).map(|s| (0..4).map(|c| census[c] as f64 * ratios[s]).collect()).collect();
        let mut cells = [[0usize; 4]; 3];
        for s in 0..3 {
            for c in 0..4 {
                cells[s][c] = exact[s][c].floor() as usize;
            }
        }
        // remaining +1s form a 0/1 matrix with given row and column sums on
        // cells with a fractional share; pick the one with the largest total
        // fraction (12 cells, so exhaustive search)
        let row_need: Vec<usize> = (0..4).map(|c| census[c] - (0..3).map(|s| cells[s][c]).sum::<usize>()).collect();
        let col_need: Vec<usize> = (0..3).map(|s| sizes[s] - cells[s].iter().sum::<usize>()).collect();
        let frac = |s: usize, c: usize| exact[s][c] - exact[s][c].floor();
        let mut best: Option<(f64, u32)> = None;
        for mask in 0u32..(1 << 12) {
            let on = |s: usize, c: usize| mask >> (s * 4 + c) & 1 == 1;
            let valid = (0..3).all(|s| (0..4).all(|c| !on(s, c) || frac(s, c) > 0.0))
                && (0..4).all(|c| (0..3).filter(|&s| on(s, c)).count() == row_need[c])
                && (0..3).all(|s| (0..4).filter(|&c| on(s, c)).count() == col_need[s]);
            if !valid {
                continue;
            }
            let gain: f64 = (0..12).filter(|i| mask >> i & 1 == 1).map(|i| frac(i / 4, i % 4)).sum();
            if best.is_none_or(|(g, _)| gain > g + 1e-12) {
                best = Some((gain, mask));
            }
        }
        let mask = best.map_or(0, |(_, m)| m);
        let bump: [[bool; 4]; 3] = std::array::from_fn(|s| std::array::from_fn(|c| mask >> (s * 4 + c) & 1 == 1));
        for s in 0..3 {
            for c in 0..4 {
                cells[s][c] += bump[s][c] as usize;
            }
        }
        Self { cells }
    }

    pub fn split_sizes(&self) -> [usize; 3] {
        self.cells.map(|row| row.iter().sum())
    }

    pub fn total(&self) -> usize {
        self.split_sizes().iter().sum()
    }

    pub fn census(&self) -> [usize; 4] {
        std::array::from_fn(|c| (0..3).map(|s| self.cells[s][c]).sum())
    }
}

struct Group {
    subject: String,
    videos: Vec<usize>,
    cats: [usize; 4],
    female: usize,
    frames: usize,
}

impl Group {
    fn size(&self) -> usize {
        self.videos.len()
    }
}

struct State<'a> {
    groups: &'a [Group],
    targets: &'a Targets,
    assign: Vec<usize>,
    cells: [[i64; 4]; 3],
    female: [i64; 3],
    frames: [i64; 3],
    female_total: f64,
    frames_total: f64,
    n: f64,
}

impl<'a> State<'a> {
    fn new(groups: &'a [Group], targets: &'a Targets, assign: Vec<usize>) -> Self {
        let mut st = Self {
            groups,
            targets,
            assign: vec![0; groups.len()],
            cells: [[0; 4]; 3],
            female: [0; 3],
            frames: [0; 3],
            female_total: groups.iter().map(|g| g.female).sum::<usize>() as f64,
            frames_total: groups.iter().map(|g| g.frames).sum::<usize>().max(1) as f64,
            n: groups.iter().map(Group::size).sum::<usize>() as f64,
        };
        for (g, &s) in assign.iter().enumerate() {
            st.place(g, s, 1);
            st.assign[g] = s;
        }
        st
    }

    fn place(&mut self, g: usize, s: usize, sign: i64) {
        let grp = &self.groups[g];
        for c in 0..4 {
            self.cells[s][c] += sign * grp.cats[c] as i64;
        }
        self.female[s] += sign * grp.female as i64;
        self.frames[s] += sign * grp.frames as i64;
    }

    fn relocate(&mut self, g: usize, to: usize) {
        let from = self.assign[g];
        self.place(g, from, -1);
        self.place(g, to, 1);
        self.assign[g] = to;
    }

    /// `(hard violation, soft deviation)`.
    fn cost(&self) -> (f64, f64) {
        let sizes = self.targets.split_sizes();
        let (mut hard, mut soft) = (0.0, 0.0);
        for s in 0..3 {
            let mut size = 0;
            for c in 0..4 {
                let d = (self.cells[s][c] - self.targets.cells[s][c] as i64).abs();
                hard += (d - 1).max(0) as f64;
                soft += d as f64;
                size += self.cells[s][c];
            }
            hard += (size - sizes[s] as i64).abs() as f64;
            let fem_target = self.female_total * sizes[s] as f64 / self.n;
            hard += ((self.female[s] as f64 - fem_target).abs() - 2.0).max(0.0);
            soft += 5.0 * (self.frames[s] as f64 / self.frames_total - sizes[s] as f64 / self.n).abs();
        }
        (hard, soft)
    }

    fn score(&self) -> f64 {
        let (h, s) = self.cost();
        h * 1000.0 + s
    }
}

/// Assigns every video to a split, keeping each subject's videos together.
///
/// Hard constraints: split sizes equal the target sizes, every
/// split/category count is within ±1 of its target and every split's
/// female count is within ±2 of its proportional share. The frame-count
/// ratio of each split is matched as closely as possible. Search is a
/// seeded greedy largest-subject-first placement followed by move/swap
/// local search with random restarts.
pub fn partition(videos: &[VideoMeta], targets: &Targets, seed: u64) -> Result<Vec<Split>> {
    if videos.is_empty() {
        return Ok(Vec::new());
    }
    if targets.total() != videos.len() {
        return Err(Error::Contract(format!(
            "targets place {} videos but {} were supplied",
            targets.total(),
            videos.len()
        )));
    }
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, v) in videos.iter().enumerate() {
        by_subject.entry(v.subject.as_str()).or_default().push(i);
    }
    let groups: Vec<Group> = by_subject
        .into_iter()
        .map(|(subject, idx)| {
            let mut cats = [0; 4];
            for &i in &idx {
                cats[videos[i].category.index()] += 1;
            }
            Group {
                subject: subject.to_string(),
                female: idx.iter().filter(|&&i| videos[i].gender == Gender::Female).count(),
                frames: idx.iter().map(|&i| videos[i].frames).sum(),
                cats,
                videos: idx,
            }
        })
        .collect();
    for g in &groups {
        for c in 0..4 {
            if (0..3).all(|s| g.cats[c] > targets.cells[s][c] + 1) {
                return Err(Error::Infeasible {
                    subject: g.subject.clone(),
                    detail: format!("{} {:?} videos exceed every split's allowance", g.cats[c], Category::ALL[c]),
                });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&g| std::cmp::Reverse(groups[g].size()));
    let sizes = targets.split_sizes();
    let mut fill = [[0usize; 4]; 3];
    let mut assign = vec![0; groups.len()];
    for &g in &order {
        let grp = &groups[g];
        let best = (0..3)
            .min_by_key(|&s| {
                let overflow: usize = (0..4).map(|c| (fill[s][c] + grp.cats[c]).saturating_sub(targets.cells[s][c])).sum();
                let room = sizes[s] as i64 - fill[s].iter().sum::<usize>() as i64;
                (overflow, -room)
            })
            .unwrap();
        for c in 0..4 {
            fill[best][c] += grp.cats[c];
        }
        assign[g] = best;
    }

    let mut state = State::new(&groups, targets, assign);
    let mut best_assign = state.assign.clone();
    let mut best_score = state.score();
    for restart in 0..60 {
        local_search(&mut state, &mut rng);
        let score = state.score();
        if score < best_score {
            best_score = score;
            best_assign = state.assign.clone();
        }
        if state.cost().0 == 0.0 && restart >= 3 {
            break;
        }
        // perturb from the best solution found so far
        state = State::new(&groups, targets, best_assign.clone());
        for _ in 0..(groups.len() / 10).max(2) {
            let g = rng.random_range(0..groups.len());
            let to = rng.random_range(0..3);
            state.relocate(g, to);
        }
    }
    let state = State::new(&groups, targets, best_assign);
    let (hard, _) = state.cost();
    if hard > 0.0 {
        let worst = (0..3)
            .max_by_key(|&s| (0..4).map(|c| (state.cells[s][c] - targets.cells[s][c] as i64).abs()).sum::<i64>())
            .unwrap();
        let blocker = (0..groups.len())
            .filter(|&g| state.assign[g] == worst)
            .max_by_key(|&g| groups[g].size())
            .unwrap_or(0);
        return Err(Error::Infeasible {
            subject: groups[blocker].subject.clone(),
            detail: format!("best assignment still violates constraints in the {} split", Split::ALL[worst].name()),
        });
    }
    let mut out = vec![Split::Train; videos.len()];
    for (g, grp) in groups.iter().enumerate() {
        for &v in &grp.videos {
            out[v] = Split::ALL[state.assign[g]];
        }
    }
    Ok(out)
}

fn local_search(state: &mut State<'_>, rng: &mut ChaCha8Rng) {
    let n = state.groups.len();
    let mut current = state.score();
    for _ in 0..200 {
        let mut improved = false;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for &g in &order {
            let from = state.assign[g];
            for to in 0..3 {
                if to == from {
                    continue;
                }
                state.relocate(g, to);
                let s = state.score();
                if s + 1e-12 < current {
                    current = s;
                    improved = true;
                    break;
                }
                state.relocate(g, from);
            }
        }
        for &g in &order {
            for h in 0..n {
                let (sg, sh) = (state.assign[g], state.assign[h]);
                if sg == sh {
                    continue;
                }
                state.relocate(g, sh);
                state.relocate(h, sg);
                let s = state.score();
                if s + 1e-12 < current {
                    current = s;
                    improved = true;
                } else {
                    state.relocate(g, sg);
                    state.relocate(h, sh);
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Describes every hard-constraint violation of an assignment.
pub fn violations(videos: &[VideoMeta], assignment: &[Split], targets: &Targets) -> Vec<String> {
    let mut out = Vec::new();
    if assignment.len() != videos.len() {
        out.push(format!("{} assignments for {} videos", assignment.len(), videos.len()));
        return out;
    }
    let mut subject_split: BTreeMap<&str, Split> = BTreeMap::new();
    for (v, &s) in videos.iter().zip(assignment) {
        if let Some(&prev) = subject_split.get(v.subject.as_str()) {
            if prev != s {
                out.push(format!("subject {} appears in {} and {}", v.subject, prev.name(), s.name()));
            }
        } else {
            subject_split.insert(&v.subject, s);
        }
    }
    let sizes = targets.split_sizes();
    let female_total = videos.iter().filter(|v| v.gender == Gender::Female).count() as f64;
    for split in Split::ALL {
        let s = split.index();
        let members: Vec<&VideoMeta> = videos.iter().zip(assignment).filter(|(_, &a)| a == split).map(|(v, _)| v).collect();
        if members.len() != sizes[s] {
            out.push(format!("{} has {} videos, target {}", split.name(), members.len(), sizes[s]));
        }
        for cat in Category::ALL {
            let n = members.iter().filter(|v| v.category == cat).count();
            if n.abs_diff(targets.cells[s][cat.index()]) > 1 {
                out.push(format!("{} has {n} {cat:?}, target {}", split.name(), targets.cells[s][cat.index()]));
            }
        }
        let fem = members.iter().filter(|v| v.gender == Gender::Female).count() as f64;
        let want = female_total * sizes[s] as f64 / videos.len() as f64;
        if (fem - want).abs() > 2.0 {
            out.push(format!("{} has {fem} female videos, proportional share {want:.2}", split.name()));
        }
    }
    out
}

/// Reads `id,frames,fps,subject,gender,category` rows.
pub fn read_meta(path: &Path) -> Result<Vec<VideoMeta>> {
    let origin = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(&origin, e))?;
    reader.deserialize().map(|row| row.map_err(|e| csv_error(&origin, e))).collect()
}

pub fn write_meta(path: &Path, videos: &[VideoMeta]) -> Result<()> {
    let origin = path.display().to_string();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(&origin, e))?;
    for v in videos {
        writer.serialize(v).map_err(|e| csv_error(&origin, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(origin: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { path: origin.to_string(), line, detail: e.to_string() }
}
