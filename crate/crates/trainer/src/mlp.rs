//! Fully connected ReLU network split into a backbone and a projector.

use fastdecor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, TrainError};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    /// Backbone layer widths; the last one is the representation size.
    pub backbone: Vec<usize>,
    /// Projector layer widths; the last one is the embedding size `d`.
    pub projector: Vec<usize>,
    pub seed: u64,
}

impl MlpSpec {
    /// `input_dim -> 256 -> 256 -> backbone_dim -> d`.
    pub fn new(input_dim: usize, backbone_dim: usize, d: usize, seed: u64) -> Self {
        Self { input_dim, backbone: vec![256, 256, backbone_dim], projector: vec![d], seed }
    }

    pub fn output_dim(&self) -> usize {
        self.projector.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.backbone.is_empty() || self.projector.is_empty() {
            return Err(TrainError::Config("network needs an input, a backbone and a projector".into()));
        }
        if self.backbone.iter().chain(&self.projector).any(|&w| w == 0) {
            return Err(TrainError::Config("layer widths must be positive".into()));
        }
        if self.output_dim() < 2 {
            return Err(TrainError::Config(format!("embedding size must be at least 2, got {}", self.output_dim())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in x out`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul(&self.weight);
        for k in 0..y.rows() {
            for (v, b) in y.row_mut(k).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        y
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Linear>,
    backbone_len: usize,
}

/// Inputs to every layer and the final output of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Matrix>,
    pub output: Matrix,
}

impl Trace {
    /// Output of the backbone (input of the first projector layer).
    pub fn representation(&self, mlp: &Mlp) -> &Matrix {
        &self.inputs[mlp.backbone_len]
    }
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone)]
pub struct MlpGrad(pub Vec<Linear>);

impl MlpGrad {
    pub fn add(&mut self, other: &MlpGrad) {
        for (g, o) in self.0.iter_mut().zip(&other.0) {
            g.weight.add_scaled(&o.weight, 1.0);
            g.bias.iter_mut().zip(&o.bias).for_each(|(x, y)| *x += y);
        }
    }
}

fn relu_in_place(m: &mut Matrix) {
    m.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
}

impl Mlp {
    /// He-initialized weights (`N(0, 2/in)`) before a ReLU, `N(0, 1/in)` for
    /// the final layer; zero biases.
    pub fn new(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let widths: Vec<usize> =
            std::iter::once(spec.input_dim).chain(spec.backbone.iter().copied()).chain(spec.projector.iter().copied()).collect();
        let count = widths.len() - 1;
        let layers = (0..count)
            .map(|l| {
                let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                let gain = if l + 1 == count { 1.0 } else { 2.0 };
                let std = (gain / fan_in as f64).sqrt();
                let weight = Matrix::from_fn(fan_in, fan_out, |_, _| std * rng.sample::<f64, _>(StandardNormal));
                Linear { weight, bias: vec![0.0; fan_out] }
            })
            .collect();
        Ok(Self { layers, backbone_len: spec.backbone.len() })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    fn activated(&self, l: usize) -> bool {
        l + 1 < self.layers.len()
    }

    pub fn forward(&self, x: &Matrix) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = layer.forward(&h);
            if self.activated(l) {
                relu_in_place(&mut next);
            }
            inputs.push(h);
            h = next;
        }
        Trace { inputs, output: h }
    }

    /// Backbone output only.
    pub fn represent(&self, x: &Matrix) -> Matrix {
        let mut h = x.clone();
        for layer in &self.layers[..self.backbone_len] {
            h = layer.forward(&h);
            relu_in_place(&mut h);
        }
        h
    }

    pub fn backward(&self, trace: &Trace, grad_output: &Matrix) -> MlpGrad {
        let mut grads: Vec<Linear> = Vec::with_capacity(self.layers.len());
        let mut g = grad_output.clone();
        for l in (0..self.layers.len()).rev() {
            let input = &trace.inputs[l];
            let weight = input.matmul_tn(&g);
            let mut bias = vec![0.0; g.cols()];
            for k in 0..g.rows() {
                bias.iter_mut().zip(g.row(k)).for_each(|(b, v)| *b += v);
            }
            grads.push(Linear { weight, bias });
            if l > 0 {
                g = g.matmul_nt(&self.layers[l].weight);
                // the input of layer l is the ReLU output of layer l - 1
                for (v, &x) in g.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    if x <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        grads.reverse();
        MlpGrad(grads)
    }
}

/// SGD with heavy-ball momentum: `v = m v + g; w -= lr v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Option<MlpGrad>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self { lr, momentum, velocity: None }
    }

    pub fn step(&mut self, mlp: &mut Mlp, grad: &MlpGrad) {
        let velocity = self.velocity.get_or_insert_with(|| {
            MlpGrad(
                grad.0
                    .iter()
                    .map(|g| Linear { weight: Matrix::zeros(g.weight.rows(), g.weight.cols()), bias: vec![0.0; g.bias.len()] })
                    .collect(),
            )
        });
        for ((layer, v), g) in mlp.layers.iter_mut().zip(&mut velocity.0).zip(&grad.0) {
            v.weight.scale(self.momentum);
            v.weight.add_scaled(&g.weight, 1.0);
            layer.weight.add_scaled(&v.weight, -self.lr);
            for ((w, vb), gb) in layer.bias.iter_mut().zip(&mut v.bias).zip(&g.bias) {
                *vb = self.momentum * *vb + gb;
                *w -= self.lr * *vb;
            }
        }
    }
}
