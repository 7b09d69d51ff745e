use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use fastdecor::Exponent;
use fastdecor_train::LossKind;

use crate::bench::{BlockArg, Kernel, Variant};

#[derive(Debug, Parser)]
#[command(name = "fastdecor", version, about = "Decorrelation regularizer benchmarks and synthetic training runs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time regularizer kernels over a grid and write one CSV row per point.
    Bench(BenchArgs),
    /// Summarize how timings in a benchmark CSV grow with `d`.
    Scaling(ScalingArgs),
    /// Train on the synthetic task and log per-epoch statistics.
    Train(TrainArgs),
}

fn parse_q(s: &str) -> Result<Exponent, String> {
    let q: u32 = s.parse().map_err(|e| format!("{e}"))?;
    Exponent::try_from(q).map_err(|e| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: fastdecor_train::TrainError| e.to_string())
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        _ => Err(format!("expected on or off, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "rsum-cross")]
    pub kernel: Vec<Kernel>,
    #[arg(long, value_delimiter = ',', default_value = "naive,fft")]
    pub variant: Vec<Variant>,
    #[arg(long, value_delimiter = ',', default_value = "256")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1024")]
    pub d: Vec<usize>,
    /// Block sizes; `d` means ungrouped.
    #[arg(long, value_delimiter = ',', default_value = "d")]
    pub b: Vec<BlockArg>,
    #[arg(long, value_delimiter = ',', default_value = "2", value_parser = parse_q)]
    pub q: Vec<Exponent>,
    /// Include the backward pass.
    #[arg(long)]
    pub grad: bool,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; rows go to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Add rows to an existing CSV written with the same schema.
    #[arg(long, requires = "out")]
    pub append: bool,
}

#[derive(Debug, Args)]
pub struct ScalingArgs {
    /// Benchmark CSV to read.
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "bt-proposed", value_parser = parse_loss)]
    pub loss: LossKind,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    /// Group size; ungrouped when omitted.
    #[arg(long)]
    pub b: Option<usize>,
    #[arg(long, default_value = "2", value_parser = parse_q)]
    pub q: Exponent,
    #[arg(long, default_value = "on", value_parser = parse_switch, action = ArgAction::Set)]
    pub permute: bool,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.002)]
    pub lr: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    /// Seed of the first run; run `r` uses `seed + r`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Runs trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub input_dim: usize,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}
