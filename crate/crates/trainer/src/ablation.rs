//! Desk-scale studies: permutation on/off and collapse with and without the
//! variance/decorrelation terms.

use fastdecor::RegConfig;

use crate::data::SyntheticTaskSpec;
use crate::error::Result;
use crate::mlp::MlpSpec;
use crate::train::{train, LossKind, TrainConfig, TrainOutcome};

/// Width of the backbone output used by the studies.
pub const BACKBONE_DIM: usize = 128;

pub fn desk_task(seed: u64) -> SyntheticTaskSpec {
    SyntheticTaskSpec { seed, ..SyntheticTaskSpec::default() }
}

pub fn desk_net(task: &SyntheticTaskSpec, d: usize, seed: u64) -> MlpSpec {
    MlpSpec::new(task.input_dim, BACKBONE_DIM, d, seed.wrapping_add(100))
}

/// Barlow Twins style settings: `lambda = 0.02`, ungrouped.
pub fn desk_bt_reg(seed: u64, permute: bool) -> RegConfig {
    RegConfig { lambda: 0.02, permute, seed: seed.wrapping_add(200), ..RegConfig::default() }
}

/// VICReg style settings with the invariance weight divided by `d`, which
/// puts the summed squared distance on the same per-feature footing as the
/// variance and covariance terms.
pub fn desk_vic_reg(seed: u64, d: usize, permute: bool) -> RegConfig {
    RegConfig { alpha: 25.0 / d as f64, permute, seed: seed.wrapping_add(200), ..RegConfig::default() }
}

fn run(seed: u64, d: usize, reg: &RegConfig, loss: LossKind, epochs: usize) -> Result<TrainOutcome> {
    let task = desk_task(seed);
    let net = desk_net(&task, d, seed);
    let cfg = TrainConfig { loss, epochs, ..TrainConfig::default() };
    train(&task, &net, reg, &cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub seed: u64,
    pub metric_off: f64,
    pub metric_on: f64,
    pub probe_off: f64,
    pub probe_on: f64,
    /// Mean embedding std of the permuted run.
    pub std_on: f64,
}

/// Proposed Barlow Twins style loss trained with and without per-batch
/// feature permutation; final normalized cross-correlation metric and probe
/// accuracy of each run.
pub fn permutation_ablation(seeds: &[u64], d: usize, epochs: usize) -> Result<Vec<AblationRow>> {
    seeds
        .iter()
        .map(|&seed| {
            let off = run(seed, d, &desk_bt_reg(seed, false), LossKind::BtProposed, epochs)?.log;
            let on = run(seed, d, &desk_bt_reg(seed, true), LossKind::BtProposed, epochs)?.log;
            let (off_last, on_last) = (off.last().expect("epochs > 0"), on.last().expect("epochs > 0"));
            Ok(AblationRow {
                seed,
                metric_off: off_last.bt_metric,
                metric_on: on_last.bt_metric,
                probe_off: off.final_probe_accuracy().unwrap_or(f64::NAN),
                probe_on: on.final_probe_accuracy().unwrap_or(f64::NAN),
                std_on: on_last.embedding_std,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseRow {
    pub seed: u64,
    /// VICReg style loss with `mu = nu = 0`.
    pub invariance_only_std: f64,
    pub vic_proposed_std: f64,
}

/// Final mean embedding std with the invariance term alone and with the full
/// proposed VICReg style loss.
pub fn collapse_study(seeds: &[u64], d: usize, invariance_epochs: usize, full_epochs: usize) -> Result<Vec<CollapseRow>> {
    seeds
        .iter()
        .map(|&seed| {
            let only = RegConfig { mu: 0.0, nu: 0.0, ..desk_vic_reg(seed, d, true) };
            let collapsed = run(seed, d, &only, LossKind::VicProposed, invariance_epochs)?.log;
            let full = run(seed, d, &desk_vic_reg(seed, d, true), LossKind::VicProposed, full_epochs)?.log;
            Ok(CollapseRow {
                seed,
                invariance_only_std: collapsed.last().expect("epochs > 0").embedding_std,
                vic_proposed_std: full.last().expect("epochs > 0").embedding_std,
            })
        })
        .collect()
}
