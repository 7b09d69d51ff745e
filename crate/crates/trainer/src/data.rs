//! Gaussian-cluster task with twin-view augmentation.

use fastdecor::Matrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, TrainError};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticTaskSpec {
    pub classes: usize,
    pub latent_dim: usize,
    pub input_dim: usize,
    /// Within-class spread of the latent code around its class center.
    pub noise_sigma: f64,
    pub samples_per_class: usize,
    /// Standard deviation of the per-view additive noise.
    pub aug_noise_sigma: f64,
    /// Probability that an input coordinate is zeroed in a view.
    pub aug_mask_prob: f64,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            classes: 20,
            latent_dim: 64,
            input_dim: 128,
            noise_sigma: 2.0,
            samples_per_class: 100,
            aug_noise_sigma: 1.0,
            aug_mask_prob: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(TrainError::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.latent_dim == 0 || self.input_dim == 0 || self.samples_per_class == 0 {
            return Err(TrainError::Config("latent_dim, input_dim and samples_per_class must be positive".into()));
        }
        for (name, s) in [("noise_sigma", self.noise_sigma), ("aug_noise_sigma", self.aug_noise_sigma)] {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(TrainError::Config(format!("{name} must be finite and non-negative, got {s}")));
            }
        }
        if !(0.0..1.0).contains(&self.aug_mask_prob) {
            return Err(TrainError::Config(format!("aug_mask_prob must be in [0, 1), got {}", self.aug_mask_prob)));
        }
        Ok(())
    }
}

/// Two augmented views of the same inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinBatch {
    pub a: Matrix,
    pub b: Matrix,
    pub labels: Vec<usize>,
}

/// A drawn instance of a [`SyntheticTaskSpec`]: class centers, the fixed
/// latent-to-input map, and a base training set.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    spec: SyntheticTaskSpec,
    centers: Matrix,
    mixing: Matrix,
    inputs: Matrix,
    labels: Vec<usize>,
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

impl SyntheticTask {
    pub fn new(spec: SyntheticTaskSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (m, p) = (spec.latent_dim, spec.input_dim);
        let centers = Matrix::from_fn(spec.classes, m, |_, _| gaussian(&mut rng));
        let scale = 1.0 / (m as f64).sqrt();
        let mixing = Matrix::from_fn(m, p, |_, _| gaussian(&mut rng) * scale);
        let mut task = Self { spec, centers, mixing, inputs: Matrix::zeros(0, 0), labels: Vec::new() };
        let labels: Vec<usize> = (0..task.spec.classes).flat_map(|c| std::iter::repeat_n(c, task.spec.samples_per_class)).collect();
        task.inputs = task.render(&labels, &mut rng);
        task.labels = labels;
        Ok(task)
    }

    pub fn spec(&self) -> &SyntheticTaskSpec {
        &self.spec
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Inputs for the given labels with fresh latent noise.
    fn render(&self, labels: &[usize], rng: &mut impl Rng) -> Matrix {
        let m = self.spec.latent_dim;
        let latent = Matrix::from_fn(labels.len(), m, |k, j| {
            self.centers[(labels[k], j)] + self.spec.noise_sigma * gaussian(rng)
        });
        latent.matmul(&self.mixing)
    }

    /// Fresh samples from the generative model, classes drawn uniformly.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> (Matrix, Vec<usize>) {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.spec.classes)).collect();
        (self.render(&labels, rng), labels)
    }

    /// One augmented view: random coordinate masking followed by additive noise.
    pub fn augment(&self, x: &Matrix, rng: &mut impl Rng) -> Matrix {
        let (prob, sigma) = (self.spec.aug_mask_prob, self.spec.aug_noise_sigma);
        let mut out = x.clone();
        for v in out.as_mut_slice() {
            if prob > 0.0 && rng.random::<f64>() < prob {
                *v = 0.0;
            }
            if sigma > 0.0 {
                *v += sigma * gaussian(rng);
            }
        }
        out
    }

    /// Two independent augmentations of the given inputs.
    pub fn twin_views(&self, x: &Matrix, labels: Vec<usize>, rng: &mut impl Rng) -> TwinBatch {
        let a = self.augment(x, rng);
        let b = self.augment(x, rng);
        TwinBatch { a, b, labels }
    }

    /// Twin views of `n` fresh samples.
    pub fn twin_batch(&self, n: usize, rng: &mut impl Rng) -> Result<TwinBatch> {
        if n < 2 {
            return Err(TrainError::Config(format!("batch size must be at least 2, got {n}")));
        }
        let (x, labels) = self.sample(n, rng);
        Ok(self.twin_views(&x, labels, rng))
    }

    /// Shuffled mini-batches of base-set indices; a trailing batch smaller
    /// than 2 is dropped.
    pub fn epoch_batches(&self, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(rng);
        order.chunks(batch_size.max(1)).filter(|c| c.len() >= 2).map(<[usize]>::to_vec).collect()
    }

    /// Base-set rows selected by `indices`.
    pub fn gather(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        let p = self.spec.input_dim;
        let x = Matrix::from_fn(indices.len(), p, |k, j| self.inputs[(indices[k], j)]);
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }
}

/// Builds the task from `spec` and draws one twin batch of `n` fresh
/// samples, all from `spec.seed`.
pub fn generate_twin_batch(spec: &SyntheticTaskSpec, n: usize) -> Result<TwinBatch> {
    let task = SyntheticTask::new(spec.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    task.twin_batch(n, &mut rng)
}
