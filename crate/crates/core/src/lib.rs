//! Relaxed feature-decorrelation regularizers for self-supervised learning.
//!
//! The decorrelation terms of Barlow Twins and VICReg penalize every
//! off-diagonal entry of a `d x d` cross-correlation (or covariance) matrix,
//! which costs `O(n d^2)` for a batch of `n` embeddings. This crate implements
//! the relaxed alternative that only constrains the sums along the wrapped
//! diagonals of that matrix. Those sums form a `d`-vector (the *summary
//! vector*) that can be computed straight from the embeddings with FFTs in
//! `O(n d log d)` time and `O(n d)` space.
//!
//! Layout:
//! - [`tensor`]: dense matrices, standardization, explicit correlation
//!   matrices and feature permutations.
//! - [`oracle`]: direct, materialized reference implementations.
//! - [`fft`]: transforms, circular convolution and the spectral summary path.
//! - [`regularizers`]: regularizer values with analytic gradients.
//! - [`losses`]: composite Barlow Twins / VICReg style losses and metrics.
//! - [`gradcheck`]: central finite differences for verifying gradients.

pub mod error;
pub mod fft;
pub mod gradcheck;
pub mod losses;
pub mod oracle;
pub mod regularizers;
pub mod tensor;

pub use error::{Error, Result};
pub use fft::{summary_fft, summary_fft_grouped, GroupedSummary, SpectrumVector};
pub use losses::{bt_style_loss, vic_style_loss, LossBreakdown, Variant};
pub use oracle::{Exponent, SummaryVector};
pub use regularizers::{GradBatch, PermutationStream, RegConfig};
pub use tensor::{
    CorrKind, CorrMatrix, EmbeddingBatch, Matrix, Mode, PermutationSpec, StandardizedBatch,
};
