//! Seeded training runs written to disk.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use fastdecor::{Exponent, RegConfig};
use fastdecor_train::ablation::{desk_bt_reg, desk_net, desk_vic_reg};
use fastdecor_train::{train, LossKind, MlpSpec, SyntheticTaskSpec, TrainConfig, TrainLog};
use serde::Serialize;

use crate::error::{CliError, Result};

/// Everything needed to reproduce a batch of runs, before seeds are assigned.
#[derive(Debug, Clone)]
pub struct TrainRequest {
    pub loss: LossKind,
    pub d: usize,
    pub block: Option<usize>,
    pub q: Exponent,
    pub permute: bool,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub runs: usize,
    pub jobs: usize,
    pub classes: usize,
    pub latent_dim: usize,
    pub input_dim: usize,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub out: PathBuf,
}

/// Plain copy of [`RegConfig`] for the manifest.
#[derive(Debug, Serialize)]
struct RegRecord {
    q: u32,
    lambda: f64,
    alpha: f64,
    mu: f64,
    nu: f64,
    gamma: f64,
    block: Option<usize>,
    eps_std: f64,
    eps_var: f64,
    permute: bool,
    seed: u64,
}

impl From<&RegConfig> for RegRecord {
    fn from(r: &RegConfig) -> Self {
        Self {
            q: r.q.value(),
            lambda: r.lambda,
            alpha: r.alpha,
            mu: r.mu,
            nu: r.nu,
            gamma: r.gamma,
            block: r.block,
            eps_std: r.eps_std,
            eps_var: r.eps_var,
            permute: r.permute,
            seed: r.seed,
        }
    }
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    git_describe: &'a str,
    seed: u64,
    task: &'a SyntheticTaskSpec,
    net: &'a MlpSpec,
    reg: RegRecord,
    train: &'a TrainConfig,
    final_probe_accuracy: Option<f64>,
}

/// Fully specified single run.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub seed: u64,
    pub task: SyntheticTaskSpec,
    pub net: MlpSpec,
    pub reg: RegConfig,
    pub train: TrainConfig,
    pub dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub seed: u64,
    pub dir: PathBuf,
    pub final_loss: f64,
    pub probe_accuracy: Option<f64>,
}

impl TrainRequest {
    pub fn plans(&self) -> Result<Vec<RunPlan>> {
        if self.runs == 0 {
            return Err(CliError::Usage("--runs must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        (0..self.runs as u64)
            .map(|r| {
                let seed = self.seed.wrapping_add(r);
                let task = SyntheticTaskSpec {
                    classes: self.classes,
                    latent_dim: self.latent_dim,
                    input_dim: self.input_dim,
                    seed,
                    ..SyntheticTaskSpec::default()
                };
                task.validate()?;
                let net = desk_net(&task, self.d, seed);
                let mut reg = match self.loss {
                    LossKind::BtProposed | LossKind::BtOriginal => desk_bt_reg(seed, self.permute),
                    LossKind::VicProposed | LossKind::VicOriginal => desk_vic_reg(seed, self.d, self.permute),
                };
                reg.q = self.q;
                reg.block = self.block;
                if let Some(v) = self.lambda {
                    reg.lambda = v;
                }
                if let Some(v) = self.alpha {
                    reg.alpha = v;
                }
                if let Some(v) = self.mu {
                    reg.mu = v;
                }
                if let Some(v) = self.nu {
                    reg.nu = v;
                }
                reg.validate(self.d)?;
                let train = TrainConfig {
                    loss: self.loss,
                    epochs: self.epochs,
                    lr: self.lr,
                    batch_size: self.batch_size,
                    ..TrainConfig::default()
                };
                train.validate()?;
                Ok(RunPlan { seed, task, net, reg, train, dir: self.out.join(format!("seed-{seed}")) })
            })
            .collect()
    }
}

fn execute(plan: &RunPlan) -> Result<RunSummary> {
    let outcome = train(&plan.task, &plan.net, &plan.reg, &plan.train)?;
    write_run(plan, &outcome.log)?;
    Ok(RunSummary {
        seed: plan.seed,
        dir: plan.dir.clone(),
        final_loss: outcome.log.last().map_or(f64::NAN, |r| r.loss),
        probe_accuracy: outcome.log.final_probe_accuracy(),
    })
}

fn write_run(plan: &RunPlan, log: &TrainLog) -> Result<()> {
    fs::create_dir_all(&plan.dir)?;
    log.save_csv(&plan.dir.join("log.csv"))?;
    let manifest = RunManifest {
        git_describe: crate::GIT_DESCRIBE,
        seed: plan.seed,
        task: &plan.task,
        net: &plan.net,
        reg: RegRecord::from(&plan.reg),
        train: &plan.train,
        final_probe_accuracy: log.final_probe_accuracy(),
    };
    fs::write(plan.dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

/// Runs every plan, at most `jobs` at a time. Results come back in plan
/// order whatever order the workers finish in.
pub fn run_all(plans: &[RunPlan], jobs: usize) -> Result<Vec<RunSummary>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunSummary>>>> = plans.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, plans.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(plan) = plans.get(i) else { break };
                let r = execute(plan);
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every plan ran"))
        .collect()
}

pub fn run_request(req: &TrainRequest) -> Result<Vec<RunSummary>> {
    let plans = req.plans()?;
    fs::create_dir_all(&req.out)?;
    run_all(&plans, req.jobs)
}

pub fn summary_line(r: &RunSummary, root: &Path) -> String {
    let dir = r.dir.strip_prefix(root).unwrap_or(&r.dir);
    let probe = r.probe_accuracy.map_or_else(|| "n/a".to_string(), |p| format!("{p:.4}"));
    format!("seed {}: loss {:.6} probe {} -> {}", r.seed, r.final_loss, probe, dir.display())
}
