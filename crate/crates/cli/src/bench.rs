//! Kernel micro-benchmarks.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use fastdecor::regularizers::{roff_cov_eval, roff_cross_eval, rsum_cov_eval, rsum_cross_eval, rvar_eval, Route};
use fastdecor::{EmbeddingBatch, Exponent, Matrix, RegConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alloc::peak_bytes;
use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    RsumCross,
    RsumCov,
    RoffCross,
    RoffCov,
    Rvar,
}

impl Kernel {
    pub const ALL: [Kernel; 5] = [Kernel::RsumCross, Kernel::RsumCov, Kernel::RoffCross, Kernel::RoffCov, Kernel::Rvar];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::RsumCross => "rsum-cross",
            Kernel::RsumCov => "rsum-cov",
            Kernel::RoffCross => "roff-cross",
            Kernel::RoffCov => "roff-cov",
            Kernel::Rvar => "rvar",
        }
    }

    /// Whether the block size and exponent change what is computed.
    pub fn is_grouped(self) -> bool {
        matches!(self, Kernel::RsumCross | Kernel::RsumCov)
    }

    fn two_views(self) -> bool {
        matches!(self, Kernel::RsumCross | Kernel::RoffCross)
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Kernel::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| CliError::Usage(format!("unknown kernel {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Through the explicit `d x d` matrix.
    Naive,
    /// Spectral summaries (batch-direct variances for `rvar`).
    Fft,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Naive => "naive",
            Variant::Fft => "fft",
        }
    }

    fn route(self) -> Route {
        match self {
            Variant::Naive => Route::Explicit,
            Variant::Fft => Route::Fast,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Variant::Naive),
            "fft" => Ok(Variant::Fft),
            _ => Err(CliError::Usage(format!("unknown variant {s:?}"))),
        }
    }
}

/// Block size as given on the command line: a number or the full dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockArg {
    Size(usize),
    Full,
}

impl FromStr for BlockArg {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "d" {
            return Ok(BlockArg::Full);
        }
        match s.parse::<usize>() {
            Ok(b) if b > 0 => Ok(BlockArg::Size(b)),
            _ => Err(CliError::Usage(format!("block size must be a positive integer or \"d\", got {s:?}"))),
        }
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchPoint {
    pub kernel: Kernel,
    pub variant: Variant,
    pub n: usize,
    pub d: usize,
    pub b: usize,
    pub q: Exponent,
    pub grad: bool,
}

impl BenchPoint {
    pub fn validate(&self) -> Result<()> {
        if matches!(self.kernel, Kernel::RoffCross | Kernel::RoffCov) && self.variant == Variant::Fft {
            return Err(CliError::Usage(format!("{} has no fft variant", self.kernel)));
        }
        if self.n < 2 || self.d < 1 {
            return Err(CliError::Usage(format!("need n >= 2 and d >= 1, got n={} d={}", self.n, self.d)));
        }
        if self.b < 1 || self.b > self.d {
            return Err(CliError::Usage(format!("block size {} outside 1..={}", self.b, self.d)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Repeats {
    pub repeats: usize,
    pub warmup: usize,
}

impl Repeats {
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 3 || self.warmup < 1 {
            return Err(CliError::Usage(format!(
                "need at least 3 repeats and 1 warmup, got {} and {}",
                self.repeats, self.warmup
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    /// The working set could not be reserved.
    Oom,
}

/// Timing of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRecord {
    pub kernel: Kernel,
    pub variant: Variant,
    pub n: usize,
    pub d: usize,
    pub b: usize,
    pub q: u32,
    pub grad: bool,
    pub repeats: usize,
    pub warmup: usize,
    pub status: Status,
    pub mean_ns: f64,
    pub std_ns: f64,
    pub min_ns: u64,
    pub peak_bytes: u128,
    /// Wall times of the timed repeats, warmup excluded.
    pub times_ns: Vec<u64>,
}

/// Flat CSV row; the column order here is the file's column order.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    schema_version: u32,
    kernel: Kernel,
    variant: Variant,
    n: usize,
    d: usize,
    b: usize,
    q: u32,
    grad: bool,
    repeats: usize,
    warmup: usize,
    status: Status,
    mean_ns: f64,
    std_ns: f64,
    min_ns: u64,
    peak_bytes: u128,
    times_ns: String,
}

pub const CSV_COLUMNS: [&str; 16] = [
    "schema_version",
    "kernel",
    "variant",
    "n",
    "d",
    "b",
    "q",
    "grad",
    "repeats",
    "warmup",
    "status",
    "mean_ns",
    "std_ns",
    "min_ns",
    "peak_bytes",
    "times_ns",
];

impl From<&TimingRecord> for CsvRow {
    fn from(r: &TimingRecord) -> Self {
        let times: Vec<String> = r.times_ns.iter().map(u64::to_string).collect();
        CsvRow {
            schema_version: SCHEMA_VERSION,
            kernel: r.kernel,
            variant: r.variant,
            n: r.n,
            d: r.d,
            b: r.b,
            q: r.q,
            grad: r.grad,
            repeats: r.repeats,
            warmup: r.warmup,
            status: r.status,
            mean_ns: r.mean_ns,
            std_ns: r.std_ns,
            min_ns: r.min_ns,
            peak_bytes: r.peak_bytes,
            times_ns: times.join(";"),
        }
    }
}

impl TryFrom<CsvRow> for TimingRecord {
    type Error = CliError;

    fn try_from(r: CsvRow) -> Result<Self> {
        if r.schema_version != SCHEMA_VERSION {
            return Err(CliError::Data(format!("schema version {} is not {SCHEMA_VERSION}", r.schema_version)));
        }
        let times_ns = if r.times_ns.is_empty() {
            Vec::new()
        } else {
            r.times_ns
                .split(';')
                .map(|t| t.parse::<u64>().map_err(|e| CliError::Data(format!("bad time {t:?}: {e}"))))
                .collect::<Result<_>>()?
        };
        Ok(TimingRecord {
            kernel: r.kernel,
            variant: r.variant,
            n: r.n,
            d: r.d,
            b: r.b,
            q: r.q,
            grad: r.grad,
            repeats: r.repeats,
            warmup: r.warmup,
            status: r.status,
            mean_ns: r.mean_ns,
            std_ns: r.std_ns,
            min_ns: r.min_ns,
            peak_bytes: r.peak_bytes,
            times_ns,
        })
    }
}

/// Standard-normal inputs that depend only on `(seed, n, d)`, so every
/// variant at a grid point sees bitwise identical data.
pub fn bench_inputs(seed: u64, n: usize, d: usize) -> (EmbeddingBatch, EmbeddingBatch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((n as u64) << 32) ^ d as u64);
    let mut draw = || {
        let m = Matrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        EmbeddingBatch::new(m).expect("finite normal draws")
    };
    let a = draw();
    let b = draw();
    (a, b)
}

fn run_kernel(point: &BenchPoint, cfg: &RegConfig, a: &EmbeddingBatch, b: &EmbeddingBatch) -> fastdecor::Result<f64> {
    let route = point.variant.route();
    let grad = point.grad;
    Ok(match point.kernel {
        Kernel::RsumCross => rsum_cross_eval(a, b, cfg, None, route, grad)?.0,
        Kernel::RsumCov => rsum_cov_eval(a, cfg, None, route, grad)?.0,
        Kernel::RoffCross => roff_cross_eval(a, b, cfg, grad)?.0,
        Kernel::RoffCov => roff_cov_eval(a, cfg, grad)?.0,
        Kernel::Rvar => rvar_eval(a, cfg, route, grad)?.0,
    })
}

fn can_reserve(bytes: u128) -> bool {
    let Ok(bytes) = usize::try_from(bytes) else {
        return false;
    };
    let mut probe: Vec<u8> = Vec::new();
    probe.try_reserve_exact(bytes).is_ok()
}

/// Times one grid point: `warmup` untimed calls, then `repeats` timed ones
/// on a monotonic clock.
pub fn run_bench(point: &BenchPoint, reps: Repeats, seed: u64) -> Result<TimingRecord> {
    point.validate()?;
    reps.validate()?;
    let peak = peak_bytes(point.kernel, point.variant, point.n, point.d, point.b, point.grad);
    let mut record = TimingRecord {
        kernel: point.kernel,
        variant: point.variant,
        n: point.n,
        d: point.d,
        b: point.b,
        q: point.q.value(),
        grad: point.grad,
        repeats: reps.repeats,
        warmup: reps.warmup,
        status: Status::Oom,
        mean_ns: 0.0,
        std_ns: 0.0,
        min_ns: 0,
        peak_bytes: peak,
        times_ns: Vec::new(),
    };
    if !can_reserve(peak) {
        return Ok(record);
    }
    let (a, b) = bench_inputs(seed, point.n, point.d);
    let b = if point.kernel.two_views() { b } else { a.clone() };
    let cfg = RegConfig { q: point.q, block: Some(point.b), ..RegConfig::default() };
    for _ in 0..reps.warmup {
        std::hint::black_box(run_kernel(point, &cfg, &a, &b)?);
    }
    let mut times = Vec::with_capacity(reps.repeats);
    for _ in 0..reps.repeats {
        let start = Instant::now();
        std::hint::black_box(run_kernel(point, &cfg, &a, &b)?);
        times.push((start.elapsed().as_nanos() as u64).max(1));
    }
    let count = times.len() as f64;
    let mean = times.iter().map(|&t| t as f64).sum::<f64>() / count;
    let var = times.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / (count - 1.0);
    record.status = Status::Ok;
    record.mean_ns = mean;
    record.std_ns = var.sqrt();
    record.min_ns = times.iter().copied().min().unwrap_or(0);
    record.times_ns = times;
    Ok(record)
}

/// Cartesian benchmark grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub kernels: Vec<Kernel>,
    pub variants: Vec<Variant>,
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub b: Vec<BlockArg>,
    pub q: Vec<Exponent>,
    pub grad: bool,
}

impl GridSpec {
    /// Grid points in a stable order. Block sizes larger than `d` are
    /// skipped, kernels that ignore `b` and `q` get a single point with
    /// `b = d`, and `roff` kernels only run naive.
    pub fn points(&self) -> Result<Vec<BenchPoint>> {
        if [self.kernels.len(), self.variants.len(), self.n.len(), self.d.len(), self.b.len(), self.q.len()].contains(&0) {
            return Err(CliError::Usage("empty benchmark grid".into()));
        }
        let mut out = Vec::new();
        for &kernel in &self.kernels {
            for &variant in &self.variants {
                if matches!(kernel, Kernel::RoffCross | Kernel::RoffCov) && variant == Variant::Fft {
                    if self.variants.len() == 1 {
                        return Err(CliError::Usage(format!("{kernel} has no fft variant")));
                    }
                    continue;
                }
                for &n in &self.n {
                    for &d in &self.d {
                        let blocks: Vec<usize> = if kernel.is_grouped() {
                            let mut v: Vec<usize> = Vec::new();
                            for b in &self.b {
                                let b = match b {
                                    BlockArg::Size(s) => *s,
                                    BlockArg::Full => d,
                                };
                                if b <= d && !v.contains(&b) {
                                    v.push(b);
                                }
                            }
                            v
                        } else {
                            vec![d]
                        };
                        let qs: &[Exponent] = if kernel.is_grouped() { &self.q } else { &[Exponent::Two] };
                        for &b in &blocks {
                            for &q in qs {
                                let p = BenchPoint { kernel, variant, n, d, b, q, grad: self.grad };
                                p.validate()?;
                                out.push(p);
                            }
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(CliError::Usage("benchmark grid has no valid points".into()));
        }
        Ok(out)
    }
}

fn header_line() -> String {
    CSV_COLUMNS.join(",")
}

/// Hex SHA-256 of the CSV header, stored next to the output so that
/// `--append` can refuse files written with a different schema.
pub fn schema_hash() -> String {
    let digest = Sha256::digest(format!("{SCHEMA_VERSION}\n{}\n", header_line()).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[derive(Debug, Serialize, Deserialize)]
struct BenchManifest {
    schema_version: u32,
    header_sha256: String,
    git_describe: String,
}

fn check_append_target(out: &Path) -> Result<bool> {
    if !out.exists() {
        return Ok(false);
    }
    let manifest = manifest_path(out);
    let text = fs::read_to_string(&manifest)
        .map_err(|e| CliError::Data(format!("cannot append: {} is unreadable ({e})", manifest.display())))?;
    let m: BenchManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("cannot append: bad manifest ({e})")))?;
    if m.header_sha256 != schema_hash() {
        return Err(CliError::Data(format!("cannot append: {} was written with a different schema", out.display())));
    }
    let first = fs::read_to_string(out)?.lines().next().map(str::to_string).unwrap_or_default();
    if first != header_line() {
        return Err(CliError::Data(format!("cannot append: {} has an unexpected header", out.display())));
    }
    Ok(true)
}

/// Serializes records as CSV with LF line endings.
pub fn write_csv(records: &[TimingRecord], out: impl std::io::Write, header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(header).terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    if header && records.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for r in records {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes timing records to `out`, creating the file (with header and
/// manifest) or appending to an existing one.
pub fn write_records(records: &[TimingRecord], out: &Path, append: bool) -> Result<()> {
    let existing = append && check_append_target(out)?;
    let file = fs::OpenOptions::new().create(true).append(existing).write(true).truncate(!existing).open(out)?;
    write_csv(records, file, !existing)?;
    if !existing {
        let manifest = BenchManifest {
            schema_version: SCHEMA_VERSION,
            header_sha256: schema_hash(),
            git_describe: crate::GIT_DESCRIBE.to_string(),
        };
        fs::write(manifest_path(out), serde_json::to_string_pretty(&manifest)? + "\n")?;
    }
    Ok(())
}

pub fn read_records(input: impl std::io::Read) -> Result<Vec<TimingRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<CsvRow>().map(|row| TimingRecord::try_from(row?)).collect()
}

/// Runs every grid point in order, one at a time.
pub fn bench_sweep(
    grid: &GridSpec,
    reps: Repeats,
    seed: u64,
    mut progress: impl FnMut(&TimingRecord),
) -> Result<Vec<TimingRecord>> {
    reps.validate()?;
    let points = grid.points()?;
    let mut out = Vec::with_capacity(points.len());
    for p in &points {
        let r = run_bench(p, reps, seed)?;
        progress(&r);
        out.push(r);
    }
    Ok(out)
}

/// Growth of the fastest time between consecutive `d` values of the same
/// kernel, variant, `n`, `q` and block setting.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub kernel: Kernel,
    pub variant: Variant,
    pub n: usize,
    pub q: u32,
    /// `None` for ungrouped runs (`b = d`).
    pub b: Option<usize>,
    pub d_from: usize,
    pub d_to: usize,
    pub time_ratio: f64,
}

pub fn scaling_report(records: &[TimingRecord]) -> Vec<ScalingRow> {
    let key = |r: &TimingRecord| (r.kernel, r.variant, r.n, r.q, (r.b != r.d).then_some(r.b), r.grad);
    let mut ok: Vec<&TimingRecord> = records.iter().filter(|r| r.status == Status::Ok).collect();
    ok.sort_by_key(|r| (key(r), r.d));
    ok.windows(2)
        .filter(|w| key(w[0]) == key(w[1]) && w[0].d < w[1].d)
        .map(|w| ScalingRow {
            kernel: w[0].kernel,
            variant: w[0].variant,
            n: w[0].n,
            q: w[0].q,
            b: key(w[0]).4,
            d_from: w[0].d,
            d_to: w[1].d,
            time_ratio: w[1].min_ns as f64 / w[0].min_ns as f64,
        })
        .collect()
}
