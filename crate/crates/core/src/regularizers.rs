//! Decorrelation regularizers with analytic gradients.
//!
//! Every regularizer takes raw embedding batches, standardizes (or centers)
//! them internally and returns its value together with the gradient with
//! respect to the raw batches. The relaxed regularizer
//!
//! ```text
//! Rsum(C) = sum_{i=1}^{d-1} |v(C)_i|^q,    v(C)_i = sum_j C[j, (i+j) mod d]
//! ```
//!
//! and its grouped form are evaluated spectrally ([`Route::Fast`]) or through
//! the explicit `d x d` matrix ([`Route::Explicit`]). The baseline `Roff`
//! (sum of squared off-diagonal entries) only has the explicit route.
//!
//! All gradients are hand-derived adjoints. For `Rsum`, the derivative with
//! respect to the matrix is circulant within each block,
//! `dR/dC[j, l] = g[(l - j) mod b]` with `g = q |v|^(q-1) sign(v)`, so pulling
//! it back to the embeddings is another pair of circular correlations and
//! reuses the spectra from the forward pass.

use crate::error::{dim_err, Error, Result};
use crate::fft::{check_block, GroupedSummary, Spectra};
use crate::oracle::Exponent;
use crate::tensor::{
    center_matrix, check_pair, explicit_cov, explicit_cross, sample_permutation, standardize_matrix,
    EmbeddingBatch, Matrix, PermutationSpec,
};

/// Loss and regularizer hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RegConfig {
    pub q: Exponent,
    /// Weight of the decorrelation term in the Barlow Twins style loss.
    pub lambda: f64,
    /// VICReg invariance weight.
    pub alpha: f64,
    /// VICReg variance weight.
    pub mu: f64,
    /// VICReg covariance weight.
    pub nu: f64,
    /// Target standard deviation of the variance hinge.
    pub gamma: f64,
    /// Feature group size; `None` summarizes the whole matrix at once.
    pub block: Option<usize>,
    /// Floor on the standard deviation used by standardization.
    pub eps_std: f64,
    /// Added to each variance before the square root in the variance hinge.
    pub eps_var: f64,
    /// Draw a fresh feature permutation for every evaluation.
    pub permute: bool,
    pub seed: u64,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self {
            q: Exponent::Two,
            lambda: 5e-3,
            alpha: 25.0,
            mu: 25.0,
            nu: 1.0,
            gamma: 1.0,
            block: None,
            eps_std: 1e-8,
            eps_var: 1e-4,
            permute: true,
            seed: 0,
        }
    }
}

impl RegConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        for (name, w) in [("lambda", self.lambda), ("alpha", self.alpha), ("mu", self.mu), ("nu", self.nu)] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {w}")));
            }
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.eps_std > 0.0) {
            return Err(Error::Config(format!("eps_std must be positive, got {}", self.eps_std)));
        }
        if !(self.eps_var >= 0.0) {
            return Err(Error::Config(format!("eps_var must be non-negative, got {}", self.eps_var)));
        }
        if let Some(b) = self.block {
            check_block(b, d)?;
        }
        Ok(())
    }

    /// Group size actually used for a `d`-dimensional embedding.
    pub fn block_for(&self, d: usize) -> usize {
        self.block.unwrap_or(d)
    }
}

/// Gradients with respect to the two views.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBatch {
    pub a: Matrix,
    pub b: Matrix,
}

/// Source of per-call feature permutations.
///
/// Call `t` draws [`sample_permutation`] with seed `seed + t`, so a run is
/// reproducible from its seed alone.
#[derive(Debug, Clone)]
pub struct PermutationStream {
    seed: u64,
    counter: u64,
}

impl PermutationStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn calls(&self) -> u64 {
        self.counter
    }

    pub fn next_permutation(&mut self, d: usize) -> PermutationSpec {
        let p = sample_permutation(d, self.seed.wrapping_add(self.counter));
        self.counter += 1;
        p
    }

    /// Next permutation if `cfg.permute` is set, otherwise `None`.
    pub fn draw(&mut self, cfg: &RegConfig, d: usize) -> Option<PermutationSpec> {
        cfg.permute.then(|| self.next_permutation(d))
    }
}

/// How a regularizer is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Spectral summaries in `O(n d log d)` (`O(n d)` for the variance hinge).
    Fast,
    /// Through the explicit `d x d` matrix, `O(n d^2)`.
    Explicit,
}

// ---------------------------------------------------------------------------
// summary-level helpers

fn rsum_of(v: &GroupedSummary, q: Exponent) -> f64 {
    let g = v.groups();
    let mut total = 0.0;
    for i in 0..g {
        for j in 0..g {
            let skip = usize::from(i == j);
            total += v.block(i, j).iter().skip(skip).map(|&x| q.apply(x)).sum::<f64>();
        }
    }
    total
}

/// `dRsum/dv` per block; trace components of diagonal blocks get zero.
fn rsum_summary_grad(v: &GroupedSummary, q: Exponent) -> GroupedSummary {
    let g = v.groups();
    let mut out = GroupedSummary::zeros(g, v.block_size());
    for i in 0..g {
        for j in 0..g {
            let dst = out.block_mut(i, j);
            for (o, &x) in dst.iter_mut().zip(v.block(i, j)) {
                *o = q.derivative(x);
            }
            if i == j {
                dst[0] = 0.0;
            }
        }
    }
    out
}

/// Wrapped-diagonal sums of every `b x b` block of an explicit matrix.
fn explicit_summaries(m: &Matrix, b: usize) -> GroupedSummary {
    let d = m.rows();
    let groups = d.div_ceil(b);
    let mut out = GroupedSummary::zeros(groups, b);
    for r in 0..d {
        let (gi, lr) = (r / b, r % b);
        let row = m.row(r);
        for (c, &x) in row.iter().enumerate() {
            let (gj, lc) = (c / b, c % b);
            out.block_mut(gi, gj)[(lc + b - lr) % b] += x;
        }
    }
    out
}

/// Materializes `dR/dC[r, c] = g_{block(r), block(c)}[(c - r) mod b]`.
fn expand_summary_grad(g: &GroupedSummary, d: usize) -> Matrix {
    let b = g.block_size();
    Matrix::from_fn(d, d, |r, c| g.block(r / b, c / b)[(c % b + b - r % b) % b])
}

// ---------------------------------------------------------------------------
// kernels on standardized / centered data; gradients are with respect to
// that data

type PairGrad = Option<(Matrix, Matrix)>;

pub(crate) fn rsum_cross_std(
    za: &Matrix,
    zb: &Matrix,
    q: Exponent,
    block: usize,
    route: Route,
    with_grad: bool,
) -> Result<(f64, PairGrad)> {
    let scale = 1.0 / (za.rows() - 1) as f64;
    match route {
        Route::Fast => {
            let (fa, fb) = Spectra::of_pair(za, zb, block);
            let v = fa.cross_accumulate(&fb).summaries(scale)?;
            let value = rsum_of(&v, q);
            let grad = with_grad.then(|| {
                let g = rsum_summary_grad(&v, q);
                Spectra::cross_backward(&fa, &fb, &g, scale)
            });
            Ok((value, grad))
        }
        Route::Explicit => {
            let c = explicit_cross(za, zb);
            let v = explicit_summaries(&c, block);
            drop(c);
            let value = rsum_of(&v, q);
            let grad = with_grad.then(|| {
                let g = expand_summary_grad(&rsum_summary_grad(&v, q), za.cols());
                cross_grad_from_matrix(za, zb, &g, scale)
            });
            Ok((value, grad))
        }
    }
}

pub(crate) fn rsum_cov_centered(
    c: &Matrix,
    q: Exponent,
    block: usize,
    route: Route,
    with_grad: bool,
) -> Result<(f64, Option<Matrix>)> {
    let scale = 1.0 / (c.rows() - 1) as f64;
    match route {
        Route::Fast => {
            let spectra = Spectra::of(c, block);
            let acc = if spectra.groups() == 1 {
                spectra.power_accumulate()
            } else {
                spectra.cross_accumulate(&spectra)
            };
            let v = acc.summaries(scale)?;
            let value = rsum_of(&v, q);
            let grad = with_grad.then(|| {
                let g = rsum_summary_grad(&v, q);
                Spectra::power_backward(&spectra, &g, scale)
            });
            Ok((value, grad))
        }
        Route::Explicit => {
            let k = explicit_cov(c);
            let v = explicit_summaries(&k, block);
            drop(k);
            let value = rsum_of(&v, q);
            let grad = with_grad.then(|| {
                let g = expand_summary_grad(&rsum_summary_grad(&v, q), c.cols());
                cov_grad_from_matrix(c, &g, scale)
            });
            Ok((value, grad))
        }
    }
}

pub(crate) fn roff_cross_std(za: &Matrix, zb: &Matrix, with_grad: bool) -> (f64, PairGrad) {
    let scale = 1.0 / (za.rows() - 1) as f64;
    let c = explicit_cross(za, zb);
    let value = off_diagonal_energy(&c);
    let grad = with_grad.then(|| {
        let g = off_diagonal_grad(c);
        cross_grad_from_matrix(za, zb, &g, scale)
    });
    (value, grad)
}

pub(crate) fn roff_cov_centered(c: &Matrix, with_grad: bool) -> (f64, Option<Matrix>) {
    let scale = 1.0 / (c.rows() - 1) as f64;
    let k = explicit_cov(c);
    let value = off_diagonal_energy(&k);
    let grad = with_grad.then(|| {
        let g = off_diagonal_grad(k);
        cov_grad_from_matrix(c, &g, scale)
    });
    (value, grad)
}

fn off_diagonal_energy(m: &Matrix) -> f64 {
    let d = m.rows();
    let total: f64 = m.as_slice().iter().map(|x| x * x).sum();
    total - (0..d).map(|i| m[(i, i)] * m[(i, i)]).sum::<f64>()
}

fn off_diagonal_grad(mut m: Matrix) -> Matrix {
    m.scale(2.0);
    for i in 0..m.rows() {
        m[(i, i)] = 0.0;
    }
    m
}

/// Pulls `G = dR/dC` back through `C = scale * A^T B`.
fn cross_grad_from_matrix(za: &Matrix, zb: &Matrix, g: &Matrix, scale: f64) -> (Matrix, Matrix) {
    let mut ga = zb.matmul_nt(g);
    ga.scale(scale);
    let mut gb = za.matmul(g);
    gb.scale(scale);
    (ga, gb)
}

/// Pulls `G = dR/dK` back through `K = scale * X^T X`.
fn cov_grad_from_matrix(c: &Matrix, g: &Matrix, scale: f64) -> Matrix {
    let mut sym = g.clone();
    sym.add_scaled(&g.transpose(), 1.0);
    let mut out = c.matmul(&sym);
    out.scale(scale);
    out
}

/// `sum_i max(0, gamma - sqrt(var_i + eps))` from per-feature unbiased
/// variances, with its gradient with respect to the raw batch.
pub(crate) fn rvar_raw(x: &Matrix, gamma: f64, eps: f64, route: Route, with_grad: bool) -> Result<(f64, Option<Matrix>)> {
    let centered = center_matrix(x)?;
    let c = centered.data();
    let n = c.rows();
    let variances: Vec<f64> = match route {
        Route::Fast => {
            let mut var = vec![0.0; c.cols()];
            for k in 0..n {
                for (v, x) in var.iter_mut().zip(c.row(k)) {
                    *v += x * x;
                }
            }
            var.iter().map(|v| v / (n - 1) as f64).collect()
        }
        Route::Explicit => {
            let k = explicit_cov(c);
            (0..k.rows()).map(|i| k[(i, i)]).collect()
        }
    };
    let mut value = 0.0;
    // dR/dvar_i
    let mut slope = vec![0.0; variances.len()];
    for (i, &var) in variances.iter().enumerate() {
        let std = (var + eps).max(0.0).sqrt();
        let gap = gamma - std;
        if gap > 0.0 {
            value += gap;
            if std > 0.0 {
                slope[i] = -0.5 / std;
            }
        }
    }
    let grad = with_grad.then(|| {
        // dvar_i/dx_ki = 2 c_ki / (n - 1); centering adds nothing since sum_k c_ki = 0
        let mut g = c.clone();
        let f = 2.0 / (n - 1) as f64;
        for k in 0..n {
            for (v, s) in g.row_mut(k).iter_mut().zip(&slope) {
                *v *= f * s;
            }
        }
        g
    });
    Ok((value, grad))
}

// ---------------------------------------------------------------------------
// public entry points on raw batches

fn check_views(a: &EmbeddingBatch, b: &EmbeddingBatch) -> Result<()> {
    check_pair(a.matrix(), b.matrix())?;
    if a.n() < 2 {
        return Err(Error::InvalidBatch(format!("need at least 2 samples, got {}", a.n())));
    }
    Ok(())
}

pub(crate) fn permuted(m: &Matrix, perm: Option<&PermutationSpec>) -> Result<Matrix> {
    match perm {
        Some(p) => p.apply_columns(m),
        None => Ok(m.clone()),
    }
}

pub(crate) fn unpermuted(m: Matrix, perm: Option<&PermutationSpec>) -> Result<Matrix> {
    match perm {
        Some(p) => p.unapply_columns(&m),
        None => Ok(m),
    }
}

fn check_perm(perm: Option<&PermutationSpec>, d: usize) -> Result<()> {
    match perm {
        Some(p) if p.len() != d => Err(dim_err(format!("permutation of length {} for d={d}", p.len()))),
        _ => Ok(()),
    }
}

/// `Rsum` of the cross-correlation of two views, with optional grouping
/// (`cfg.block`) and an optional feature permutation applied to both views.
pub fn rsum_cross_eval(
    a: &EmbeddingBatch,
    b: &EmbeddingBatch,
    cfg: &RegConfig,
    perm: Option<&PermutationSpec>,
    route: Route,
    with_grad: bool,
) -> Result<(f64, Option<GradBatch>)> {
    check_views(a, b)?;
    cfg.validate(a.d())?;
    check_perm(perm, a.d())?;
    let sa = standardize_matrix(&permuted(a.matrix(), perm)?, cfg.eps_std)?;
    let sb = standardize_matrix(&permuted(b.matrix(), perm)?, cfg.eps_std)?;
    let (value, grad) = rsum_cross_std(sa.data(), sb.data(), cfg.q, cfg.block_for(a.d()), route, with_grad)?;
    let grad = match grad {
        Some((ga, gb)) => Some(GradBatch {
            a: unpermuted(sa.backward(&ga), perm)?,
            b: unpermuted(sb.backward(&gb), perm)?,
        }),
        None => None,
    };
    Ok((value, grad))
}

/// Spectral `Rsum` of the cross-correlation with its gradient.
pub fn rsum_cross(
    a: &EmbeddingBatch,
    b: &EmbeddingBatch,
    cfg: &RegConfig,
    perm: Option<&PermutationSpec>,
) -> Result<(f64, GradBatch)> {
    let (v, g) = rsum_cross_eval(a, b, cfg, perm, Route::Fast, true)?;
    Ok((v, g.expect("gradient requested")))
}

/// `Rsum` of the covariance of one batch.
pub fn rsum_cov_eval(
    x: &EmbeddingBatch,
    cfg: &RegConfig,
    perm: Option<&PermutationSpec>,
    route: Route,
    with_grad: bool,
) -> Result<(f64, Option<Matrix>)> {
    if x.n() < 2 {
        return Err(Error::InvalidBatch(format!("need at least 2 samples, got {}", x.n())));
    }
    cfg.validate(x.d())?;
    check_perm(perm, x.d())?;
    let c = center_matrix(&permuted(x.matrix(), perm)?)?;
    let (value, grad) = rsum_cov_centered(c.data(), cfg.q, cfg.block_for(x.d()), route, with_grad)?;
    let grad = match grad {
        Some(g) => Some(unpermuted(c.backward(&g), perm)?),
        None => None,
    };
    Ok((value, grad))
}

/// Spectral `Rsum` of the covariance with its gradient.
pub fn rsum_cov(x: &EmbeddingBatch, cfg: &RegConfig, perm: Option<&PermutationSpec>) -> Result<(f64, Matrix)> {
    let (v, g) = rsum_cov_eval(x, cfg, perm, Route::Fast, true)?;
    Ok((v, g.expect("gradient requested")))
}

/// Baseline `Roff` of the cross-correlation (`b = Some`) or of the
/// covariance of `a` (`b = None`), through the explicit matrix.
///
/// For the covariance form the returned [`GradBatch::b`] is an empty `0 x 0`
/// matrix.
pub fn roff_baseline(a: &EmbeddingBatch, b: Option<&EmbeddingBatch>, cfg: &RegConfig) -> Result<(f64, GradBatch)> {
    match b {
        Some(b) => {
            let (v, g) = roff_cross_eval(a, b, cfg, true)?;
            Ok((v, g.expect("gradient requested")))
        }
        None => {
            let (v, g) = roff_cov_eval(a, cfg, true)?;
            Ok((v, GradBatch { a: g.expect("gradient requested"), b: Matrix::zeros(0, 0) }))
        }
    }
}

pub fn roff_cross_eval(
    a: &EmbeddingBatch,
    b: &EmbeddingBatch,
    cfg: &RegConfig,
    with_grad: bool,
) -> Result<(f64, Option<GradBatch>)> {
    check_views(a, b)?;
    cfg.validate(a.d())?;
    let sa = standardize_matrix(a.matrix(), cfg.eps_std)?;
    let sb = standardize_matrix(b.matrix(), cfg.eps_std)?;
    let (value, grad) = roff_cross_std(sa.data(), sb.data(), with_grad);
    Ok((value, grad.map(|(ga, gb)| GradBatch { a: sa.backward(&ga), b: sb.backward(&gb) })))
}

pub fn roff_cov_eval(x: &EmbeddingBatch, cfg: &RegConfig, with_grad: bool) -> Result<(f64, Option<Matrix>)> {
    if x.n() < 2 {
        return Err(Error::InvalidBatch(format!("need at least 2 samples, got {}", x.n())));
    }
    cfg.validate(x.d())?;
    let c = center_matrix(x.matrix())?;
    let (value, grad) = roff_cov_centered(c.data(), with_grad);
    Ok((value, grad.map(|g| c.backward(&g))))
}

/// Variance hinge computed from per-feature variances in `O(n d)`.
pub fn rvar_batch(x: &EmbeddingBatch, cfg: &RegConfig) -> Result<(f64, Matrix)> {
    let (v, g) = rvar_eval(x, cfg, Route::Fast, true)?;
    Ok((v, g.expect("gradient requested")))
}

pub fn rvar_eval(x: &EmbeddingBatch, cfg: &RegConfig, route: Route, with_grad: bool) -> Result<(f64, Option<Matrix>)> {
    if x.n() < 2 {
        return Err(Error::InvalidBatch(format!("need at least 2 samples, got {}", x.n())));
    }
    cfg.validate(x.d())?;
    rvar_raw(x.matrix(), cfg.gamma, cfg.eps_var, route, with_grad)
}
