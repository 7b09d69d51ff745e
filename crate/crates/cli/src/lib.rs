//! Command-line front end: kernel benchmarks, scaling summaries and seeded
//! training runs.

pub mod alloc;
pub mod args;
pub mod bench;
pub mod error;
pub mod train_cmd;

use std::io::Write;

use args::{BenchArgs, Cli, Command, ScalingArgs, TrainArgs};
use bench::{bench_sweep, read_records, scaling_report, write_csv, write_records, GridSpec, Repeats};
pub use error::{CliError, Result};
use train_cmd::{run_request, summary_line, TrainRequest};

/// `git describe` of the source tree at build time.
pub const GIT_DESCRIBE: &str = env!("FASTDECOR_GIT_DESCRIBE");

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bench(a) => bench_cmd(a),
        Command::Scaling(a) => scaling_cmd(a),
        Command::Train(a) => train_cmd(a),
    }
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let grid = GridSpec { kernels: a.kernel, variants: a.variant, n: a.n, d: a.d, b: a.b, q: a.q, grad: a.grad };
    let reps = Repeats { repeats: a.repeats, warmup: a.warmup };
    let records = bench_sweep(&grid, reps, a.seed, |r| {
        eprintln!(
            "{} {} n={} d={} b={} q={} {:?} min {} ns",
            r.kernel, r.variant, r.n, r.d, r.b, r.q, r.status, r.min_ns
        );
    })?;
    match a.out {
        Some(path) => write_records(&records, &path, a.append)?,
        None => write_csv(&records, std::io::stdout().lock(), true)?,
    }
    Ok(())
}

fn scaling_cmd(a: ScalingArgs) -> Result<()> {
    let records = read_records(std::fs::File::open(&a.input)?)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "kernel,variant,n,q,b,d_from,d_to,time_ratio")?;
    for r in scaling_report(&records) {
        let b = r.b.map_or_else(|| "d".to_string(), |b| b.to_string());
        writeln!(out, "{},{},{},{},{},{},{},{:.3}", r.kernel, r.variant, r.n, r.q, b, r.d_from, r.d_to, r.time_ratio)?;
    }
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let req = TrainRequest {
        loss: a.loss,
        d: a.d,
        block: a.b,
        q: a.q,
        permute: a.permute,
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch_size,
        seed: a.seed,
        runs: a.runs,
        jobs: a.jobs,
        classes: a.classes,
        latent_dim: a.latent_dim,
        input_dim: a.input_dim,
        lambda: a.lambda,
        alpha: a.alpha,
        mu: a.mu,
        nu: a.nu,
        out: a.out.clone(),
    };
    for r in run_request(&req)? {
        println!("{}", summary_line(&r, &a.out));
    }
    Ok(())
}
