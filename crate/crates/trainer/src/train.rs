//! Mini-batch training of the encoder on twin views.

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use fastdecor::losses::{normalized_bt_metric, normalized_vic_metric};
use fastdecor::{bt_style_loss, vic_style_loss, EmbeddingBatch, LossBreakdown, Matrix, PermutationStream, RegConfig, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{SyntheticTask, SyntheticTaskSpec, TwinBatch};
use crate::error::{Result, TrainError};
use crate::mlp::{Mlp, MlpSpec, Sgd};
use crate::probe::linear_probe;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    BtProposed,
    BtOriginal,
    VicProposed,
    VicOriginal,
}

impl LossKind {
    pub fn variant(self) -> Variant {
        match self {
            LossKind::BtProposed | LossKind::VicProposed => Variant::Proposed,
            LossKind::BtOriginal | LossKind::VicOriginal => Variant::Original,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::BtProposed => "bt-proposed",
            LossKind::BtOriginal => "bt-original",
            LossKind::VicProposed => "vic-proposed",
            LossKind::VicOriginal => "vic-original",
        }
    }

    fn evaluate(
        self,
        a: &EmbeddingBatch,
        b: &EmbeddingBatch,
        cfg: &RegConfig,
        perm: Option<&fastdecor::PermutationSpec>,
    ) -> fastdecor::Result<LossBreakdown> {
        match self {
            LossKind::BtProposed | LossKind::BtOriginal => bt_style_loss(a, b, cfg, self.variant(), perm),
            LossKind::VicProposed | LossKind::VicOriginal => vic_style_loss(a, b, cfg, self.variant(), perm),
        }
    }
}

impl FromStr for LossKind {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self> {
        [LossKind::BtProposed, LossKind::BtOriginal, LossKind::VicProposed, LossKind::VicOriginal]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TrainError::Config(format!("unknown loss {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Fresh samples used for the per-epoch metrics.
    pub eval_size: usize,
    /// Fresh samples used for the linear probe.
    pub probe_size: usize,
    pub heldout_fraction: f64,
    /// Run the probe every this many epochs; the last epoch is always probed.
    /// Zero probes only the last epoch.
    pub probe_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::BtProposed,
            epochs: 30,
            lr: 0.002,
            momentum: 0.9,
            batch_size: 128,
            eval_size: 512,
            probe_size: 2000,
            heldout_fraction: 0.3,
            probe_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be positive".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(TrainError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size < 2 || self.eval_size < 2 {
            return Err(TrainError::Config("batch and evaluation sizes must be at least 2".into()));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's mini-batches.
    pub loss: f64,
    pub invariance: f64,
    pub variance: f64,
    pub regularizer: f64,
    /// Mean squared off-diagonal cross-correlation on the evaluation views.
    pub bt_metric: f64,
    /// Mean squared off-diagonal covariance on the evaluation views.
    pub vic_metric: f64,
    /// Mean per-feature standard deviation of the evaluation embeddings.
    pub embedding_std: f64,
    pub probe_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn final_probe_accuracy(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.probe_accuracy)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record(EPOCH_COLUMNS)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let records = r.deserialize().collect::<std::result::Result<Vec<EpochRecord>, _>>()?;
        Ok(Self { records })
    }
}

pub const EPOCH_COLUMNS: [&str; 10] = [
    "epoch",
    "loss",
    "invariance",
    "variance",
    "regularizer",
    "bt_metric",
    "vic_metric",
    "embedding_std",
    "probe_accuracy",
    "seconds",
];

/// A trained network with its log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Mlp,
    pub log: TrainLog,
}

/// Mean of the unbiased per-column standard deviations.
pub fn mean_feature_std(x: &Matrix) -> f64 {
    let n = x.rows() as f64;
    let d = x.cols();
    let mut total = 0.0;
    for j in 0..d {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n;
        total += (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    }
    total / d as f64
}

fn embed_pair(model: &Mlp, views: &TwinBatch) -> Result<(EmbeddingBatch, EmbeddingBatch)> {
    Ok((EmbeddingBatch::new(model.forward(&views.a).output)?, EmbeddingBatch::new(model.forward(&views.b).output)?))
}

fn diverged(epoch: usize, reason: impl std::fmt::Display) -> TrainError {
    TrainError::Diverged { epoch, reason: reason.to_string() }
}

/// Trains a fresh network on a fresh task.
///
/// Everything is driven by `ChaCha8Rng` streams derived from the task, net
/// and regularizer seeds, so a run is reproducible bit for bit. When
/// `reg.permute` is set, every mini-batch gets a new feature permutation
/// from a [`PermutationStream`] seeded with `reg.seed`.
pub fn train(task_spec: &SyntheticTaskSpec, net: &MlpSpec, reg: &RegConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let task = SyntheticTask::new(task_spec.clone())?;
    if net.input_dim != task_spec.input_dim {
        return Err(TrainError::Config(format!(
            "network input {} does not match task input {}",
            net.input_dim, task_spec.input_dim
        )));
    }
    reg.validate(net.output_dim())?;
    let mut model = Mlp::new(net)?;
    let mut opt = Sgd::new(cfg.lr, cfg.momentum);
    let mut perms = PermutationStream::new(reg.seed);
    let mut order_rng = ChaCha8Rng::seed_from_u64(task_spec.seed.wrapping_add(net.seed).wrapping_mul(0x2545_f491_4f6c_dd1d) ^ 1);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(net.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 2);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(task_spec.seed ^ 0x5851_f42d_4c95_7f2d);
    let eval_views = task.twin_batch(cfg.eval_size, &mut eval_rng)?;
    let (probe_x, probe_y) = task.sample(cfg.probe_size, &mut eval_rng);
    let d = net.output_dim();

    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut sums = [0.0; 4];
        let batches = task.epoch_batches(cfg.batch_size, &mut order_rng);
        for idx in &batches {
            let (x, labels) = task.gather(idx);
            let views = task.twin_views(&x, labels, &mut aug_rng);
            let ta = model.forward(&views.a);
            let tb = model.forward(&views.b);
            let za = EmbeddingBatch::new(ta.output.clone()).map_err(|e| diverged(epoch, e))?;
            let zb = EmbeddingBatch::new(tb.output.clone()).map_err(|e| diverged(epoch, e))?;
            let perm = perms.draw(reg, d);
            let loss = cfg.loss.evaluate(&za, &zb, reg, perm.as_ref()).map_err(|e| match e {
                fastdecor::Error::Numeric(msg) => diverged(epoch, msg),
                other => other.into(),
            })?;
            for (s, v) in sums.iter_mut().zip([loss.total, loss.invariance, loss.variance, loss.regularizer]) {
                *s += v;
            }
            let mut grad = model.backward(&ta, &loss.grads.a);
            grad.add(&model.backward(&tb, &loss.grads.b));
            opt.step(&mut model, &grad);
        }
        let count = batches.len().max(1) as f64;
        let [loss, invariance, variance, regularizer] = sums.map(|s| s / count);
        if !loss.is_finite() {
            return Err(diverged(epoch, "non-finite loss"));
        }

        let (ea, eb) = embed_pair(&model, &eval_views).map_err(|e| diverged(epoch, e))?;
        let last = epoch + 1 == cfg.epochs;
        let probe_due = last || (cfg.probe_every > 0 && (epoch + 1) % cfg.probe_every == 0);
        let probe_accuracy = if probe_due {
            Some(linear_probe(&model.represent(&probe_x), &probe_y, cfg.heldout_fraction, task_spec.seed)?)
        } else {
            None
        };
        log.records.push(EpochRecord {
            epoch,
            loss,
            invariance,
            variance,
            regularizer,
            bt_metric: normalized_bt_metric(&ea, &eb)?,
            vic_metric: normalized_vic_metric(&ea, &eb)?,
            embedding_std: mean_feature_std(ea.matrix()),
            probe_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome { model, log })
}
