//! Batch subcommands. Every input path is checked before any work starts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, ensure, Context as _, Result};
use serde::Serialize;
use vaseq::cells::{BackboneConfig, CellKind, ModelConfig, RnnConfig};
use vaseq::corpus::{
    histogram, histogram_csv, match_track, merge, pick_face, read_meta, scatter_csv, split_stats, synthesize,
    write_merged, AnnotationTrack, Dimension, Split, SynthConfig, Targets, FRAME_INTERVAL,
};
use vaseq::datapipe::{parse_frame_id, write_records, Dataset};
use vaseq::train::{
    append_report, eval_loop, pretrain_backbone, run_test, select_best, AdamConfig, Case, CheckpointWriter,
    EvalLoopConfig, EvalRow, PretrainConfig, TrainConfig, Trainer,
};

use crate::{
    BackboneKind, CellArg, EvalArgs, FilterArgs, MatchArgs, ModelArgs, PackArgs, PartitionArgs, PretrainArgs, StatsArgs,
    SynthArgs, Switch, TestArgs, TrainArgs,
};

/// Global options shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Context {
    fn output(&self, explicit: Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
        let path = explicit.unwrap_or_else(|| self.out_dir.join(default_name));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(path)
    }
}

fn require_file(path: &Path) -> Result<()> {
    ensure!(path.is_file(), "{} is not a readable file", path.display());
    Ok(())
}

fn require_dir(path: &Path) -> Result<()> {
    ensure!(path.is_dir(), "{} is not a directory", path.display());
    Ok(())
}

/// Expands directories to the `*.vasq` files they contain, sorted by name.
pub fn record_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .with_context(|| format!("listing {}", input.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "vasq"))
                .collect();
            found.sort();
            ensure!(!found.is_empty(), "{} holds no .vasq containers", input.display());
            files.extend(found);
        } else {
            require_file(input)?;
            files.push(input.clone());
        }
    }
    Ok(files)
}

fn open_records(inputs: &[PathBuf]) -> Result<Arc<Dataset>> {
    Ok(Arc::new(Dataset::open(&record_files(inputs)?)?))
}

pub fn match_cmd(ctx: &Context, args: MatchArgs) -> Result<()> {
    let tracks = [Dimension::Valence, Dimension::Arousal].map(|d| args.annotations.join(format!("{}.ann", d.name())));
    for t in &tracks {
        require_file(t)?;
    }
    let out = ctx.output(args.out, "merged.txt")?;
    let valence = match_track(&AnnotationTrack::read(Dimension::Valence, &tracks[0])?, args.frames_count, FRAME_INTERVAL)?;
    let arousal = match_track(&AnnotationTrack::read(Dimension::Arousal, &tracks[1])?, args.frames_count, FRAME_INTERVAL)?;
    let rows = merge(&valence, &arousal)?;
    write_merged(&out, &rows)?;
    println!("wrote {} frames to {}", rows.len(), out.display());
    Ok(())
}

fn load_rgb(path: &Path) -> Result<Vec<u8>> {
    Ok(image::open(path).with_context(|| format!("decoding {}", path.display()))?.to_rgb8().into_raw())
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| if want_dirs { p.is_dir() } else { p.extension().is_some_and(|x| x == "png") })
        .collect();
    let key = |p: &PathBuf| {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        (stem.parse::<u64>().unwrap_or(u64::MAX), stem)
    };
    out.sort_by_key(key);
    Ok(out)
}

#[derive(Debug, Serialize)]
struct FilterChoice {
    frame: String,
    index: Option<usize>,
    file: Option<String>,
}

pub fn filter(ctx: &Context, args: FilterArgs) -> Result<()> {
    require_dir(&args.candidates_dir)?;
    require_file(&args.reference)?;
    let out = ctx.output(args.out, "filter.json")?;
    let reference = histogram(&load_rgb(&args.reference)?, args.bins)?;
    let mut choices = Vec::new();
    for frame in sorted_entries(&args.candidates_dir, true)? {
        let name = frame.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let files = sorted_entries(&frame, false)?;
        if files.is_empty() {
            log::warn!("frame {name}: no candidates");
            choices.push(FilterChoice { frame: name, index: None, file: None });
            continue;
        }
        let feats = files.iter().map(|f| Ok(histogram(&load_rgb(f)?, args.bins)?)).collect::<Result<Vec<_>>>()?;
        let i = pick_face(&feats, &reference)?;
        let file = files[i].file_name().map(|s| s.to_string_lossy().into_owned());
        choices.push(FilterChoice { frame: name, index: Some(i), file });
    }
    let manifest = serde_json::json!({ "bins": args.bins, "frames": choices });
    fs::write(&out, serde_json::to_string_pretty(&manifest)?)?;
    println!("chose faces for {} frames; manifest {}", choices.len(), out.display());
    Ok(())
}

pub fn partition(ctx: &Context, args: PartitionArgs) -> Result<()> {
    require_file(&args.meta)?;
    if let Some(t) = &args.targets {
        require_file(t)?;
    }
    let out = ctx.output(args.out, "partition.json")?;
    let videos = read_meta(&args.meta)?;
    let targets = match &args.targets {
        Some(path) => {
            let cells: [[usize; 4]; 3] = serde_json::from_str(&fs::read_to_string(path)?)
                .with_context(|| format!("{}: expected a 3x4 matrix of counts", path.display()))?;
            Targets { cells }
        }
        None => {
            let mut census = [0usize; 4];
            for v in &videos {
                census[v.category.index()] += 1;
            }
            Targets::proportional(census, [args.ratios[0], args.ratios[1], args.ratios[2]])
        }
    };
    let assignment = vaseq::corpus::partition(&videos, &targets, ctx.seed)?;
    let mut splits: BTreeMap<&str, Vec<&str>> = Split::ALL.iter().map(|s| (s.name(), Vec::new())).collect();
    for (v, s) in videos.iter().zip(&assignment) {
        splits.get_mut(s.name()).expect("every split is listed").push(&v.id);
    }
    let manifest = serde_json::json!({ "seed": ctx.seed, "targets": targets.cells, "splits": splits });
    fs::write(&out, serde_json::to_string_pretty(&manifest)?)?;
    let sizes: Vec<String> = Split::ALL.iter().map(|s| format!("{} {}", s.name(), splits[s.name()].len())).collect();
    println!("{}; manifest {}", sizes.join(", "), out.display());
    Ok(())
}

pub fn pack(_ctx: &Context, args: PackArgs) -> Result<()> {
    require_file(&args.merged)?;
    require_dir(&args.frames_dir)?;
    let video = match args.video {
        Some(v) => v,
        None => args
            .out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .context("cannot derive a video name from --out; pass --video")?,
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let n = write_records(&args.merged, &args.frames_dir, &video, &args.out)?;
    println!("packed {n} frames of {video} into {}", args.out.display());
    Ok(())
}

pub fn synth(ctx: &Context, args: SynthArgs) -> Result<()> {
    let out = args.out.unwrap_or_else(|| ctx.out_dir.clone());
    let videos = synthesize(&SynthConfig { videos: args.videos, frames: args.frames, seed: ctx.seed }, &out)?;
    println!("synthesized {} videos of {} frames in {}", videos.len(), args.frames, out.display());
    Ok(())
}

fn backbone(kind: BackboneKind) -> BackboneConfig {
    match kind {
        BackboneKind::Vgg => BackboneConfig::vgg_small(),
        BackboneKind::Resnet => BackboneConfig::resnet_small(),
        BackboneKind::Dense => BackboneConfig::densenet_small(),
    }
}

pub fn model_config(args: &ModelArgs, seq_len: usize) -> ModelConfig {
    let cell = match args.cell {
        CellArg::Gru => CellKind::Gru,
        CellArg::Lstm => CellKind::Lstm,
        CellArg::Indrnn => CellKind::IndRnn,
    };
    ModelConfig {
        image: 96,
        backbone: backbone(args.backbone),
        rnn: RnnConfig {
            cell,
            layers: args.layers,
            hidden: args.hidden,
            peepholes: args.peepholes == Switch::On,
            attention: (args.attention == Switch::On).then_some(args.attention_window),
            steps: seq_len,
        },
    }
}

pub fn pretrain(ctx: &Context, args: PretrainArgs) -> Result<()> {
    let out = ctx.output(args.out, "backbone.vack")?;
    let cfg = PretrainConfig {
        backbone: backbone(args.backbone),
        image: 96,
        steps: args.steps,
        batch: args.batch,
        adam: AdamConfig::with_lr(args.lr),
        seed: ctx.seed,
    };
    let ckpt = pretrain_backbone(&cfg, |step, loss| {
        if step % 50 == 0 {
            log::info!("pretrain step {step} loss {loss:.4}");
        }
    })?;
    ckpt.save(&out)?;
    println!("pretrained backbone for {} steps; checkpoint {}", args.steps, out.display());
    Ok(())
}

pub fn train(ctx: &Context, args: TrainArgs) -> Result<()> {
    let files = record_files(&args.records)?;
    for p in args.init_rnn.iter().chain(&args.init_backbone) {
        require_file(p)?;
    }
    let dir = args.ckpt_dir.clone().unwrap_or_else(|| ctx.out_dir.clone());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let data = Arc::new(Dataset::open(&files)?);
    let mut cfg = TrainConfig::new(model_config(&args.model, args.seq_len), Case::from_index(args.case)?);
    cfg.seq_len = args.seq_len;
    cfg.batch = args.batch;
    cfg.adam = AdamConfig::with_lr(args.lr);
    cfg.seed = ctx.seed;
    cfg.checkpoint_every = args.checkpoint_every;
    cfg.log_every = args.log_every;
    cfg.init_rnn = args.init_rnn;
    cfg.init_backbone = args.init_backbone;
    let mut trainer = Trainer::new(cfg, data)?;
    let writer = CheckpointWriter::new(&dir);
    trainer.run(args.steps, Some(&writer), |_, _| Ok(std::ops::ControlFlow::Continue(())))?;
    let step = trainer.global_step();
    if args.checkpoint_every == 0 || step % args.checkpoint_every != 0 {
        writer.write(&trainer.checkpoint())?;
    }
    println!("trained {step} steps; checkpoints in {}", dir.display());
    Ok(())
}

pub fn eval(ctx: &Context, args: EvalArgs) -> Result<()> {
    require_dir(&args.ckpt_dir)?;
    let data = open_records(&args.records)?;
    let report = ctx.output(args.report, "eval.csv")?;
    if args.once {
        require_file(&args.ckpt_dir.join(vaseq::train::MODEL_FILE))?;
    }
    let mut cfg = EvalLoopConfig::new(args.seq_len, args.batch);
    cfg.split = args.split;
    cfg.idle_timeout = args.idle_timeout.map(Duration::from_secs_f64);
    let stop = AtomicBool::new(args.once);
    let rows = eval_loop(&args.ckpt_dir, data, &cfg, &stop, |row| {
        append_report(&report, std::slice::from_ref(row))?;
        println!("{}", row.to_csv());
        Ok(())
    })?;
    print_best(&rows);
    Ok(())
}

fn print_best(rows: &[EvalRow]) {
    for dim in [Dimension::Valence, Dimension::Arousal] {
        if let Some(step) = select_best(rows, dim) {
            let row = rows.iter().find(|r| r.step == step).expect("selected step is a row");
            println!("best {}: step {step} ccc {:.4}", dim.name(), row.ccc(dim));
        }
    }
}

pub fn test(ctx: &Context, args: TestArgs) -> Result<()> {
    require_file(&args.ckpt)?;
    let data = open_records(&args.records)?;
    let report = ctx.output(None, "test.csv")?;
    let pred_dir = ctx.out_dir.join("predictions");
    fs::create_dir_all(&pred_dir)?;
    let (row, preds) = run_test(&args.ckpt, data, args.seq_len, args.batch)?;
    append_report(&report, std::slice::from_ref(&row))?;
    let mut per_video: BTreeMap<String, String> = BTreeMap::new();
    for p in &preds {
        let (video, k) = parse_frame_id(&p.id)?;
        let text = per_video.entry(video.to_string()).or_insert_with(|| "k,valence,arousal\n".to_string());
        writeln!(text, "{k},{:.1},{:.1}", p.pred[0] * 1000.0, p.pred[1] * 1000.0)?;
    }
    for (video, text) in &per_video {
        fs::write(pred_dir.join(format!("{video}.csv")), text)?;
    }
    println!(
        "test step {}: ccc valence {:.4} arousal {:.4}, mse valence {:.4} arousal {:.4}; {} frames",
        row.step,
        row.ccc_valence,
        row.ccc_arousal,
        row.mse_valence,
        row.mse_arousal,
        preds.len()
    );
    Ok(())
}

pub fn stats(ctx: &Context, args: StatsArgs) -> Result<()> {
    ensure!(args.bin_width > 0, "--bin-width must be positive");
    let data = open_records(&args.records)?;
    if data.is_empty() {
        bail!("no frames in the given records");
    }
    let labels: Vec<(i32, i32)> = data.records().iter().map(|r| (r.valence as i32, r.arousal as i32)).collect();
    let stats = split_stats(&labels, args.bin_width, args.scatter_max);
    fs::create_dir_all(&ctx.out_dir)?;
    fs::write(ctx.out_dir.join("stats_valence.csv"), histogram_csv(&stats.valence))?;
    fs::write(ctx.out_dir.join("stats_arousal.csv"), histogram_csv(&stats.arousal))?;
    fs::write(ctx.out_dir.join("scatter.csv"), scatter_csv(&stats.scatter))?;
    println!("{} frames; histograms and scatter in {}", stats.frames, ctx.out_dir.display());
    Ok(())
}
