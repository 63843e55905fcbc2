//! Subcommands of the `vaseq` executable.

pub mod commands;
pub mod serve;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "vaseq", version, about = "Valence/arousal sequence regression toolkit")]
pub struct Cli {
    /// Seed for every random choice of the subcommand.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for outputs without an explicit path.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assign one annotation value per frame and write the merged file.
    Match(MatchArgs),
    /// Pick the detection most similar to a reference face in every frame.
    Filter(FilterArgs),
    /// Split videos into train/validation/test sets.
    Partition(PartitionArgs),
    /// Pack one video's frames and merged labels into a record container.
    Pack(PackArgs),
    /// Generate a synthetic corpus with learnable labels.
    Synth(SynthArgs),
    /// Pretrain a backbone on the auxiliary grating task.
    Pretrain(PretrainArgs),
    /// Train a model, writing checkpoints as it goes.
    Train(TrainArgs),
    /// Evaluate every checkpoint that appears in a directory.
    Eval(EvalArgs),
    /// Score one checkpoint and write per-frame predictions.
    Test(TestArgs),
    /// Label histograms and a scatter sample of record containers.
    Stats(StatsArgs),
    /// Serve corpus frames, annotations and predictions over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Directory holding `valence.ann` and `arousal.ann`.
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub frames_count: usize,
    /// Merged output file; defaults to `<out-dir>/merged.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// One sub-directory per frame, each holding candidate PNG crops.
    #[arg(long)]
    pub candidates_dir: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub bins: usize,
    /// Manifest path; defaults to `<out-dir>/filter.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    /// CSV with columns id,frames,fps,subject,gender,category.
    #[arg(long)]
    pub meta: PathBuf,
    /// JSON file with a 3×4 matrix of per-split category counts; when
    /// absent the census is split proportionally by `--ratios`.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.64, 0.16, 0.20])]
    pub ratios: Vec<f64>,
    /// Split manifest; defaults to `<out-dir>/partition.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PackArgs {
    #[arg(long)]
    pub merged: PathBuf,
    #[arg(long)]
    pub frames_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Video name used in frame ids; defaults to the output file stem.
    #[arg(long)]
    pub video: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub videos: usize,
    #[arg(long, default_value_t = 300)]
    pub frames: usize,
    /// Corpus directory; defaults to `--out-dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackboneKind {
    Vgg,
    Resnet,
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CellArg {
    Gru,
    Lstm,
    Indrnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long, value_enum, default_value_t = BackboneKind::Vgg)]
    pub backbone: BackboneKind,
    #[arg(long, default_value_t = 500)]
    pub steps: u64,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Checkpoint path; defaults to `<out-dir>/backbone.vack`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = BackboneKind::Vgg)]
    pub backbone: BackboneKind,
    #[arg(long, value_enum, default_value_t = CellArg::Gru)]
    pub cell: CellArg,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub attention: Switch,
    #[arg(long, default_value_t = 30)]
    pub attention_window: usize,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub peepholes: Switch,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Record containers, or directories searched for `*.vasq`.
    #[arg(long, required = true)]
    pub records: Vec<PathBuf>,
    /// 0 frozen backbone, 1 last conv + RNN + FC, 2 everything, 3 everything
    /// with the RNN copied from `--init-rnn`.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..=3))]
    pub case: u8,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 80)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Checkpoint whose RNN weights seed case 3.
    #[arg(long)]
    pub init_rnn: Option<PathBuf>,
    /// Checkpoint whose backbone weights seed the model.
    #[arg(long)]
    pub init_backbone: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    /// Steps between checkpoints; the last step is always written.
    #[arg(long, default_value_t = 1000)]
    pub checkpoint_every: u64,
    /// Steps between loss log lines; 0 disables them.
    #[arg(long, default_value_t = 100)]
    pub log_every: u64,
    /// Checkpoint directory; defaults to `--out-dir`.
    #[arg(long)]
    pub ckpt_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt_dir: PathBuf,
    #[arg(long, required = true)]
    pub records: Vec<PathBuf>,
    #[arg(long, default_value_t = 80)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    #[arg(long, default_value = "validation")]
    pub split: String,
    /// Evaluate what is present now and exit.
    #[arg(long)]
    pub once: bool,
    /// Exit after this many seconds without a new checkpoint.
    #[arg(long)]
    pub idle_timeout: Option<f64>,
    /// Report path; defaults to `<out-dir>/eval.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, required = true)]
    pub records: Vec<PathBuf>,
    #[arg(long, default_value_t = 80)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, required = true)]
    pub records: Vec<PathBuf>,
    #[arg(long, default_value_t = vaseq::corpus::STATS_BIN_WIDTH)]
    pub bin_width: i32,
    #[arg(long, default_value_t = 2000)]
    pub scatter_max: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub corpus_dir: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = commands::Context { seed: cli.seed, out_dir: cli.out_dir };
    match cli.command {
        Command::Match(a) => commands::match_cmd(&ctx, a),
        Command::Filter(a) => commands::filter(&ctx, a),
        Command::Partition(a) => commands::partition(&ctx, a),
        Command::Pack(a) => commands::pack(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Pretrain(a) => commands::pretrain(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Test(a) => commands::test(&ctx, a),
        Command::Stats(a) => commands::stats(&ctx, a),
        Command::Serve(a) => serve::run(a),
    }
}
