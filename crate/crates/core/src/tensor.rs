//! Dense containers, batch standardization, explicit correlation matrices and
//! feature permutations.
//!
//! Matrices are dense, row-major and double precision. A batch of embeddings
//! is an `n x d` matrix whose rows are samples and whose columns are features.

use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_err(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(dim_err(format!("row {i} has length {}, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &Matrix, s: f64) {
        assert_eq!(self.shape(), other.shape(), "add_scaled shape mismatch");
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += s * y;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// `self * other`
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul inner dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(self.rows, self.cols, other.cols, 1.0, self.view(), other.view(), 0.0, &mut out);
        out
    }

    /// `self^T * other`
    pub fn matmul_tn(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "matmul_tn inner dimension mismatch");
        let mut out = Matrix::zeros(self.cols, other.cols);
        gemm(self.cols, self.rows, other.cols, 1.0, self.view_t(), other.view(), 0.0, &mut out);
        out
    }

    /// `self * other^T`
    pub fn matmul_nt(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_nt inner dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(self.rows, self.cols, other.rows, 1.0, self.view(), other.view_t(), 0.0, &mut out);
        out
    }

    fn view(&self) -> StridedView<'_> {
        StridedView { data: &self.data, rs: self.cols as isize, cs: 1 }
    }

    fn view_t(&self) -> StridedView<'_> {
        StridedView { data: &self.data, rs: 1, cs: self.cols as isize }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

struct StridedView<'a> {
    data: &'a [f64],
    rs: isize,
    cs: isize,
}

/// `out = alpha * a * b + beta * out` with `a: m x k`, `b: k x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: StridedView<'_>,
    b: StridedView<'_>,
    beta: f64,
    out: &mut Matrix,
) {
    assert_eq!(out.shape(), (m, n));
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: every index reached through the strides lies inside the slices;
    // the shapes were checked by the callers and `out` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// An `n x d` batch of embeddings for one view. Every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch(Matrix);

impl EmbeddingBatch {
    pub fn new(data: Matrix) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::InvalidBatch(format!(
                "batch must be at least 1x1, got {}x{}",
                data.rows(),
                data.cols()
            )));
        }
        if !data.is_finite() {
            return Err(Error::InvalidBatch("batch contains non-finite entries".into()));
        }
        Ok(Self(data))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Sample count.
    pub fn n(&self) -> usize {
        self.0.rows()
    }

    /// Feature dimension.
    pub fn d(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn row(&self, k: usize) -> &[f64] {
        self.0.row(k)
    }
}

/// How a [`StandardizedBatch`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Zero mean and unit unbiased standard deviation per column.
    Standardized,
    /// Zero mean per column.
    Centered,
}

/// A batch whose columns have been centered, and possibly scaled to unit
/// unbiased standard deviation.
///
/// Keeps the per-column scales so that gradients can be pulled back to the
/// raw batch with [`StandardizedBatch::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedBatch {
    data: Matrix,
    mode: Mode,
    /// Divisor applied to each centered column (1 for centered batches).
    scales: Vec<f64>,
    /// Whether the eps floor replaced the column's standard deviation.
    floored: Vec<bool>,
}

const MEAN_TOL: f64 = 1e-6;
const STD_TOL: f64 = 1e-4;

fn column_means(m: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; m.cols()];
    for k in 0..m.rows() {
        for (s, x) in mean.iter_mut().zip(m.row(k)) {
            *s += x;
        }
    }
    let n = m.rows() as f64;
    mean.iter_mut().for_each(|s| *s /= n);
    mean
}

/// Unbiased per-column variance of `m` around `mean`.
fn column_variances(m: &Matrix, mean: &[f64]) -> Vec<f64> {
    let mut var = vec![0.0; m.cols()];
    for k in 0..m.rows() {
        for ((s, x), mu) in var.iter_mut().zip(m.row(k)).zip(mean) {
            *s += (x - mu) * (x - mu);
        }
    }
    let denom = (m.rows() - 1) as f64;
    var.iter_mut().for_each(|s| *s /= denom);
    var
}

fn constant_columns(m: &Matrix) -> Vec<bool> {
    let first = m.row(0);
    let mut constant = vec![true; m.cols()];
    for k in 1..m.rows() {
        for ((c, x), x0) in constant.iter_mut().zip(m.row(k)).zip(first) {
            *c &= x == x0;
        }
    }
    constant
}

fn require_two_rows(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidBatch(format!(
            "need at least 2 samples for unbiased statistics, got {n}"
        )));
    }
    Ok(())
}

/// Standardizes each column to zero mean and unit unbiased standard deviation.
///
/// Columns are divided by `max(std, eps)`; constant columns become all zeros.
pub fn standardize(batch: &EmbeddingBatch, eps: f64) -> Result<StandardizedBatch> {
    standardize_matrix(batch.matrix(), eps)
}

pub(crate) fn standardize_matrix(x: &Matrix, eps: f64) -> Result<StandardizedBatch> {
    require_two_rows(x.rows())?;
    if !(eps > 0.0) {
        return Err(Error::Config(format!("standardization eps must be positive, got {eps}")));
    }
    let mean = column_means(x);
    let var = column_variances(x, &mean);
    let constant = constant_columns(x);
    let mut scales = Vec::with_capacity(x.cols());
    let mut floored = Vec::with_capacity(x.cols());
    for (v, &c) in var.iter().zip(&constant) {
        let s = v.sqrt();
        let f = c || s <= eps;
        floored.push(f);
        scales.push(if f { eps } else { s });
    }
    let mut data = x.clone();
    for k in 0..data.rows() {
        let row = data.row_mut(k);
        for j in 0..row.len() {
            row[j] = if constant[j] { 0.0 } else { (row[j] - mean[j]) / scales[j] };
        }
    }
    Ok(StandardizedBatch { data, mode: Mode::Standardized, scales, floored })
}

/// Subtracts the column means.
pub fn center(batch: &EmbeddingBatch) -> Result<StandardizedBatch> {
    center_matrix(batch.matrix())
}

pub(crate) fn center_matrix(x: &Matrix) -> Result<StandardizedBatch> {
    require_two_rows(x.rows())?;
    let mean = column_means(x);
    let constant = constant_columns(x);
    let mut data = x.clone();
    for k in 0..data.rows() {
        let row = data.row_mut(k);
        for j in 0..row.len() {
            row[j] = if constant[j] { 0.0 } else { row[j] - mean[j] };
        }
    }
    let d = x.cols();
    Ok(StandardizedBatch { data, mode: Mode::Centered, scales: vec![1.0; d], floored: vec![false; d] })
}

impl StandardizedBatch {
    /// Wraps a matrix that is claimed to already be centered or standardized,
    /// checking the claim (means within 1e-6, unit std within 1e-4 or an
    /// all-zero column).
    pub fn from_matrix(data: Matrix, mode: Mode) -> Result<Self> {
        require_two_rows(data.rows())?;
        if !data.is_finite() {
            return Err(Error::InvalidBatch("batch contains non-finite entries".into()));
        }
        let mean = column_means(&data);
        if let Some((j, m)) = mean.iter().enumerate().find(|(_, m)| m.abs() > MEAN_TOL) {
            return Err(Error::Contract(format!("column {j} has mean {m}, batch is not centered")));
        }
        if mode == Mode::Standardized {
            let var = column_variances(&data, &mean);
            for (j, v) in var.iter().enumerate() {
                let zero = data.column(j).iter().all(|&x| x == 0.0);
                if !zero && (v.sqrt() - 1.0).abs() > STD_TOL {
                    return Err(Error::Contract(format!(
                        "column {j} has standard deviation {}, batch is not standardized",
                        v.sqrt()
                    )));
                }
            }
        }
        let d = data.cols();
        Ok(Self { data, mode, scales: vec![1.0; d], floored: vec![false; d] })
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn d(&self) -> usize {
        self.data.cols()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        self.data.row(k)
    }

    /// Pulls a gradient with respect to this batch back to the raw batch it
    /// was computed from.
    pub fn backward(&self, grad: &Matrix) -> Matrix {
        assert_eq!(grad.shape(), self.data.shape(), "gradient shape mismatch");
        let n = self.n();
        let grad_mean = column_means(grad);
        let mut out = grad.clone();
        match self.mode {
            Mode::Centered => {
                for k in 0..n {
                    for (g, m) in out.row_mut(k).iter_mut().zip(&grad_mean) {
                        *g -= m;
                    }
                }
            }
            Mode::Standardized => {
                // <G_j, z_j> / (n - 1) per column
                let mut proj = vec![0.0; self.d()];
                for k in 0..n {
                    for ((p, g), z) in proj.iter_mut().zip(grad.row(k)).zip(self.data.row(k)) {
                        *p += g * z;
                    }
                }
                let denom = (n - 1) as f64;
                proj.iter_mut().for_each(|p| *p /= denom);
                for k in 0..n {
                    let z = self.data.row(k);
                    let row = out.row_mut(k);
                    for j in 0..row.len() {
                        let centered = row[j] - grad_mean[j];
                        row[j] = if self.floored[j] {
                            centered / self.scales[j]
                        } else {
                            (centered - z[j] * proj[j]) / self.scales[j]
                        };
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrKind {
    CrossCorrelation,
    Covariance,
}

/// A `d x d` cross-correlation or covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    data: Matrix,
    kind: CorrKind,
}

impl CorrMatrix {
    /// Wraps an explicit matrix. Covariances must be symmetric (1e-10) with a
    /// non-negative diagonal.
    pub fn new(data: Matrix, kind: CorrKind) -> Result<Self> {
        if !data.is_square() {
            return Err(dim_err(format!("{}x{} matrix is not square", data.rows(), data.cols())));
        }
        if kind == CorrKind::Covariance {
            let d = data.rows();
            for i in 0..d {
                if data[(i, i)] < 0.0 {
                    return Err(Error::Contract(format!("negative variance at {i}")));
                }
                for j in 0..i {
                    if (data[(i, j)] - data[(j, i)]).abs() > 1e-10 {
                        return Err(Error::Contract(format!("covariance not symmetric at ({i},{j})")));
                    }
                }
            }
        }
        Ok(Self { data, kind })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn kind(&self) -> CorrKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.data.rows()
    }
}

fn check_same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err(format!(
            "batches have shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub(crate) fn check_pair(a: &Matrix, b: &Matrix) -> Result<()> {
    check_same_shape(a, b)
}

/// `C = (1/(n-1)) sum_k a_k b_k^T` for two standardized views.
pub fn cross_correlation(a: &StandardizedBatch, b: &StandardizedBatch) -> Result<CorrMatrix> {
    check_same_shape(a.data(), b.data())?;
    if a.mode() != Mode::Standardized || b.mode() != Mode::Standardized {
        return Err(Error::Contract("cross-correlation needs standardized inputs".into()));
    }
    let c = explicit_cross(a.data(), b.data());
    Ok(CorrMatrix { data: c, kind: CorrKind::CrossCorrelation })
}

/// `K = (1/(n-1)) sum_k c_k c_k^T` for a centered (or standardized) batch.
pub fn covariance(x: &StandardizedBatch) -> Result<CorrMatrix> {
    Ok(CorrMatrix { data: explicit_cov(x.data()), kind: CorrKind::Covariance })
}

pub(crate) fn explicit_cross(a: &Matrix, b: &Matrix) -> Matrix {
    let mut c = a.matmul_tn(b);
    c.scale(1.0 / (a.rows() - 1) as f64);
    c
}

pub(crate) fn explicit_cov(x: &Matrix) -> Matrix {
    let mut k = x.matmul_tn(x);
    k.scale(1.0 / (x.rows() - 1) as f64);
    let d = k.rows();
    for i in 0..d {
        for j in 0..i {
            let s = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = s;
            k[(j, i)] = s;
        }
    }
    k
}

/// A bijection on feature indices: feature `j` moves to position `pi[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationSpec {
    pi: Vec<usize>,
    seed: Option<u64>,
}

impl PermutationSpec {
    pub fn identity(d: usize) -> Self {
        Self { pi: (0..d).collect(), seed: None }
    }

    pub fn from_indices(pi: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; pi.len()];
        for &p in &pi {
            if p >= pi.len() || seen[p] {
                return Err(Error::Config(format!("{pi:?} is not a permutation")));
            }
            seen[p] = true;
        }
        Ok(Self { pi, seed: None })
    }

    pub fn indices(&self) -> &[usize] {
        &self.pi
    }

    /// Seed the permutation was drawn from, if it was sampled.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.pi.iter().enumerate().all(|(j, &p)| j == p)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.pi.len()];
        for (j, &p) in self.pi.iter().enumerate() {
            inv[p] = j;
        }
        Self { pi: inv, seed: None }
    }

    /// Moves column `j` of `m` to column `pi[j]`.
    pub fn apply_columns(&self, m: &Matrix) -> Result<Matrix> {
        self.check_len(m.cols())?;
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for k in 0..m.rows() {
            let src = m.row(k);
            let dst = out.row_mut(k);
            for (j, &p) in self.pi.iter().enumerate() {
                dst[p] = src[j];
            }
        }
        Ok(out)
    }

    /// Inverse of [`apply_columns`](Self::apply_columns).
    pub fn unapply_columns(&self, m: &Matrix) -> Result<Matrix> {
        self.check_len(m.cols())?;
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for k in 0..m.rows() {
            let src = m.row(k);
            let dst = out.row_mut(k);
            for (j, &p) in self.pi.iter().enumerate() {
                dst[j] = src[p];
            }
        }
        Ok(out)
    }

    /// `P M P^T`: entry `(i, j)` moves to `(pi[i], pi[j])`.
    pub fn conjugate(&self, m: &Matrix) -> Result<Matrix> {
        if !m.is_square() {
            return Err(dim_err("conjugation needs a square matrix"));
        }
        self.check_len(m.rows())?;
        let d = m.rows();
        let mut out = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                out[(self.pi[i], self.pi[j])] = m[(i, j)];
            }
        }
        Ok(out)
    }

    fn check_len(&self, d: usize) -> Result<()> {
        if self.pi.len() != d {
            return Err(dim_err(format!("permutation of length {} applied to d={d}", self.pi.len())));
        }
        Ok(())
    }
}

/// Draws a uniformly random permutation of `0..d` from `seed`.
///
/// Fisher-Yates (Durstenfeld) over a `ChaCha8Rng` seeded with
/// `seed_from_u64(seed)`: for `i = d-1` down to `1`, swap `pi[i]` with
/// `pi[j]`, `j` uniform in `0..=i`.
pub fn sample_permutation(d: usize, seed: u64) -> PermutationSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pi: Vec<usize> = (0..d).collect();
    for i in (1..d).rev() {
        let j = rng.random_range(0..=i);
        pi.swap(i, j);
    }
    PermutationSpec { pi, seed: Some(seed) }
}

pub fn permute_features(batch: &EmbeddingBatch, p: &PermutationSpec) -> Result<EmbeddingBatch> {
    Ok(EmbeddingBatch(p.apply_columns(batch.matrix())?))
}
