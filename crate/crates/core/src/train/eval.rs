use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::checkpoint::{parse_checkpoint_name, Checkpoint, ModelManifest};
use crate::autodiff::NormMode;
use crate::cells::Model;
use crate::corpus::Dimension;
use crate::datapipe::{Dataset, Loader, LoaderConfig};
use crate::error::{Error, Result};
use crate::metrics::StreamingMoments;
use crate::params::{ParamStore, Session};

pub const REPORT_HEADER: &str = "step,ccc_valence,ccc_arousal,mse_valence,mse_arousal,split";

/// One evaluation of one checkpoint on one split.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub step: u64,
    pub ccc_valence: f64,
    pub ccc_arousal: f64,
    pub mse_valence: f64,
    pub mse_arousal: f64,
    pub split: String,
}

impl EvalRow {
    pub fn ccc(&self, dim: Dimension) -> f64 {
        match dim {
            Dimension::Valence => self.ccc_valence,
            Dimension::Arousal => self.ccc_arousal,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step, self.ccc_valence, self.ccc_arousal, self.mse_valence, self.mse_arousal, self.split
        )
    }

    pub fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        let [step, cv, ca, mv, ma, split] = f[..] else { return None };
        Some(Self {
            step: step.parse().ok()?,
            ccc_valence: cv.parse().ok()?,
            ccc_arousal: ca.parse().ok()?,
            mse_valence: mv.parse().ok()?,
            mse_arousal: ma.parse().ok()?,
            split: split.to_string(),
        })
    }
}

/// Appends rows to a report CSV, writing the header on creation.
pub fn append_report(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(REPORT_HEADER);
        text.push('\n');
    }
    for r in rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<Vec<EvalRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            EvalRow::parse(l).ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                detail: format!("expected {REPORT_HEADER}"),
            })
        })
        .collect()
}

/// Step of the highest CCC on `dim`; ties go to the earliest step.
pub fn select_best(rows: &[EvalRow], dim: Dimension) -> Option<u64> {
    rows.iter()
        .filter(|r| r.ccc(dim).is_finite())
        .min_by(|a, b| b.ccc(dim).total_cmp(&a.ccc(dim)).then(a.step.cmp(&b.step)))
        .map(|r| r.step)
}

/// Per-frame model output.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub pred: [f32; 2],
    pub truth: [f32; 2],
}

/// Runs the model over every valid window of `data` in order, without
/// shuffling, with batch norm in inference mode.
pub fn predict(model: &Model, store: &ParamStore<f32>, data: Arc<Dataset>, seq_len: usize, batch: usize) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for b in Loader::new(data, LoaderConfig::evaluation(seq_len, batch))? {
        let b = b?;
        let mut s = Session::new(store, NormMode::Inference);
        let images = s.tape.constant(b.images);
        let pred = model.forward(&mut s, images)?;
        let p = s.tape.value(pred).data();
        let t = b.labels.data();
        for (i, id) in b.ids.iter().flatten().enumerate() {
            out.push(Prediction { id: id.clone(), pred: [p[2 * i], p[2 * i + 1]], truth: [t[2 * i], t[2 * i + 1]] });
        }
    }
    Ok(out)
}

/// CCC and MSE per dimension over all predictions of a split.
pub fn score(predictions: &[Prediction], step: u64, split: &str) -> EvalRow {
    let mut dims = [StreamingMoments::new(), StreamingMoments::new()];
    for p in predictions {
        for (d, m) in dims.iter_mut().enumerate() {
            m.push(p.pred[d] as f64, p.truth[d] as f64);
        }
    }
    EvalRow {
        step,
        ccc_valence: dims[0].ccc(),
        ccc_arousal: dims[1].ccc(),
        mse_valence: dims[0].mse(),
        mse_arousal: dims[1].mse(),
        split: split.to_string(),
    }
}

pub fn evaluate(
    model: &Model,
    store: &ParamStore<f32>,
    data: Arc<Dataset>,
    seq_len: usize,
    batch: usize,
    step: u64,
    split: &str,
) -> Result<EvalRow> {
    Ok(score(&predict(model, store, data, seq_len, batch)?, step, split))
}

/// Model and parameters of one checkpoint, using the `model.json` beside it.
pub fn load_model(ckpt_path: &Path) -> Result<(Model, ParamStore<f32>, Checkpoint)> {
    let dir = ckpt_path.parent().unwrap_or(Path::new("."));
    let manifest = ModelManifest::read(dir)?;
    let ckpt = Checkpoint::load(ckpt_path)?;
    let (model, store) = restore(&manifest, &ckpt)?;
    Ok((model, store, ckpt))
}

fn restore(manifest: &ModelManifest, ckpt: &Checkpoint) -> Result<(Model, ParamStore<f32>)> {
    if ckpt.fingerprint != manifest.fingerprint {
        return Err(Error::CheckpointMismatch(format!("checkpoint {} does not match model.json", ckpt.step)));
    }
    let (model, mut store) = Model::build::<f32>(&manifest.model, 0)?;
    ckpt.restore_params(&mut store)?;
    Ok((model, store))
}

/// Final report of one checkpoint on the test split, tagged `test`.
pub fn run_test(ckpt_path: &Path, data: Arc<Dataset>, seq_len: usize, batch: usize) -> Result<(EvalRow, Vec<Prediction>)> {
    let (model, store, ckpt) = load_model(ckpt_path)?;
    let preds = predict(&model, &store, data, seq_len, batch)?;
    Ok((score(&preds, ckpt.step, "test"), preds))
}

/// Lists complete checkpoints of a directory that have not been reported.
#[derive(Debug)]
pub struct CheckpointWatcher {
    dir: PathBuf,
    seen: BTreeSet<u64>,
    last: Option<u64>,
}

impl CheckpointWatcher {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), seen: BTreeSet::new(), last: None }
    }

    /// New checkpoints in ascending step order. Temporary files are never
    /// listed. A checkpoint that shows up after a later step was already
    /// handed out is skipped with a warning so reports stay in step order.
    pub fn poll(&mut self) -> Result<Vec<(u64, PathBuf)>> {
        let entries = fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut fresh = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            let Some(step) = entry.file_name().to_str().and_then(parse_checkpoint_name) else { continue };
            if self.seen.insert(step) {
                fresh.push((step, entry.path()));
            }
        }
        fresh.sort();
        fresh.retain(|(step, path)| {
            let stale = self.last.is_some_and(|l| *step < l);
            if stale {
                log::warn!("skipping {}: appeared after a later checkpoint was evaluated", path.display());
            }
            !stale
        });
        if let Some((step, _)) = fresh.last() {
            self.last = Some(*step);
        }
        Ok(fresh)
    }
}

#[derive(Clone, Debug)]
pub struct EvalLoopConfig {
    pub seq_len: usize,
    pub batch: usize,
    pub split: String,
    pub poll: Duration,
    /// Give up after this long without a new checkpoint.
    pub idle_timeout: Option<Duration>,
}

impl EvalLoopConfig {
    pub fn new(seq_len: usize, batch: usize) -> Self {
        Self { seq_len, batch, split: "validation".into(), poll: Duration::from_millis(500), idle_timeout: None }
    }
}

/// Waits for checkpoints in `dir` and evaluates each new one on `data`,
/// passing every row to `emit` in step order. Returns once `stop` is set
/// (after a last poll) or the idle timeout expires. Corrupt checkpoints
/// are skipped with a warning. Nothing in `dir` is modified.
pub fn eval_loop<F>(dir: &Path, data: Arc<Dataset>, config: &EvalLoopConfig, stop: &AtomicBool, mut emit: F) -> Result<Vec<EvalRow>>
where
    F: FnMut(&EvalRow) -> Result<()>,
{
    let mut watcher = CheckpointWatcher::new(dir);
    let mut manifest: Option<ModelManifest> = None;
    let mut rows = Vec::new();
    let mut idle_since = Instant::now();
    loop {
        let stopping = stop.load(Ordering::SeqCst);
        if manifest.is_none() && dir.join(super::checkpoint::MODEL_FILE).exists() {
            manifest = Some(ModelManifest::read(dir)?);
        }
        if let Some(m) = &manifest {
            for (step, path) in watcher.poll()? {
                idle_since = Instant::now();
                let ckpt = match Checkpoint::load(&path) {
                    Ok(c) => c,
                    Err(e) => {
                        log::warn!("skipping checkpoint {step}: {e}");
                        continue;
                    }
                };
                let (model, store) = match restore(m, &ckpt) {
                    Ok(x) => x,
                    Err(e) => {
                        log::warn!("skipping checkpoint {step}: {e}");
                        continue;
                    }
                };
                let row = evaluate(&model, &store, data.clone(), config.seq_len, config.batch, step, &config.split)?;
                emit(&row)?;
                rows.push(row);
            }
        }
        if stopping || config.idle_timeout.is_some_and(|t| idle_since.elapsed() >= t) {
            return Ok(rows);
        }
        std::thread::sleep(config.poll);
    }
}
