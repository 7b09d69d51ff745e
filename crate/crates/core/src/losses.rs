//! Composite Barlow Twins / VICReg style losses and the normalized
//! decorrelation metrics used to audit trained embeddings.
//!
//! Barlow Twins style:
//!
//! ```text
//! L = sum_i (1 - C_ii)^2 + lambda * R(C)
//! ```
//!
//! VICReg style:
//!
//! ```text
//! L = alpha/n sum_k |a_k - b_k|^2 + mu/d (Rvar(K_A) + Rvar(K_B)) + nu/d (R(K_A) + R(K_B))
//! ```
//!
//! With [`Variant::Proposed`], `R` is the (grouped) summary regularizer; with
//! [`Variant::Original`] it is `Roff` and, for `q = 2`, the losses are the
//! original ones.

use crate::error::{Error, Result};
use crate::oracle::roff_naive;
use crate::regularizers::{
    permuted, roff_cov_centered, roff_cross_std, rsum_cov_centered, rsum_cross_std, rvar_raw, unpermuted, GradBatch,
    RegConfig, Route,
};
use crate::tensor::{
    center, center_matrix, check_pair, covariance, cross_correlation, standardize, standardize_matrix, EmbeddingBatch,
    Matrix, PermutationSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Summary-vector regularizer, `O(n d log d)`.
    Proposed,
    /// Sum of squared off-diagonal entries, `O(n d^2)`.
    Original,
}

/// Per-term decomposition of a loss. Each term is already weighted, so
/// `total = invariance + variance + regularizer`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub invariance: f64,
    /// Always zero for the Barlow Twins style loss.
    pub variance: f64,
    pub regularizer: f64,
    pub grads: GradBatch,
}

fn check_inputs(a: &EmbeddingBatch, b: &EmbeddingBatch, cfg: &RegConfig, perm: Option<&PermutationSpec>) -> Result<()> {
    check_pair(a.matrix(), b.matrix())?;
    if a.n() < 2 {
        return Err(Error::InvalidBatch(format!("need at least 2 samples, got {}", a.n())));
    }
    cfg.validate(a.d())?;
    if let Some(p) = perm {
        if p.len() != a.d() {
            return Err(Error::Dimension(format!("permutation of length {} for d={}", p.len(), a.d())));
        }
    }
    Ok(())
}

/// `sum_i (1 - C_ii)^2` in `O(n d)` from standardized views, with gradients.
fn bt_invariance(za: &Matrix, zb: &Matrix) -> (f64, Matrix, Matrix) {
    let n = za.rows();
    let scale = 1.0 / (n - 1) as f64;
    let mut diag = vec![0.0; za.cols()];
    for k in 0..n {
        for ((c, x), y) in diag.iter_mut().zip(za.row(k)).zip(zb.row(k)) {
            *c += x * y;
        }
    }
    diag.iter_mut().for_each(|c| *c *= scale);
    let value = diag.iter().map(|c| (1.0 - c) * (1.0 - c)).sum();
    // d/dz (1 - C_ii)^2 = -2 (1 - C_ii) dC_ii/dz
    let weights: Vec<f64> = diag.iter().map(|c| -2.0 * (1.0 - c) * scale).collect();
    let mut ga = zb.clone();
    let mut gb = za.clone();
    for k in 0..n {
        for (g, w) in ga.row_mut(k).iter_mut().zip(&weights) {
            *g *= w;
        }
        for (g, w) in gb.row_mut(k).iter_mut().zip(&weights) {
            *g *= w;
        }
    }
    (value, ga, gb)
}

/// Barlow Twins style loss on two views.
///
/// `perm`, when given, is applied to the features of both views before
/// anything else; the returned gradients are with respect to the unpermuted
/// inputs.
pub fn bt_style_loss(
    a: &EmbeddingBatch,
    b: &EmbeddingBatch,
    cfg: &RegConfig,
    variant: Variant,
    perm: Option<&PermutationSpec>,
) -> Result<LossBreakdown> {
    check_inputs(a, b, cfg, perm)?;
    let sa = standardize_matrix(&permuted(a.matrix(), perm)?, cfg.eps_std)?;
    let sb = standardize_matrix(&permuted(b.matrix(), perm)?, cfg.eps_std)?;
    let (invariance, mut ga, mut gb) = bt_invariance(sa.data(), sb.data());
    let (reg, reg_grad) = match variant {
        Variant::Proposed => {
            rsum_cross_std(sa.data(), sb.data(), cfg.q, cfg.block_for(a.d()), Route::Fast, true)?
        }
        Variant::Original => roff_cross_std(sa.data(), sb.data(), true),
    };
    let (ra, rb) = reg_grad.expect("gradient requested");
    ga.add_scaled(&ra, cfg.lambda);
    gb.add_scaled(&rb, cfg.lambda);
    let regularizer = cfg.lambda * reg;
    let grads = GradBatch {
        a: unpermuted(sa.backward(&ga), perm)?,
        b: unpermuted(sb.backward(&gb), perm)?,
    };
    finish(invariance, 0.0, regularizer, grads)
}

/// VICReg style loss on two views.
///
/// The invariance term uses the raw embeddings; the variance and covariance
/// terms use each view's centered embeddings.
pub fn vic_style_loss(
    a: &EmbeddingBatch,
    b: &EmbeddingBatch,
    cfg: &RegConfig,
    variant: Variant,
    perm: Option<&PermutationSpec>,
) -> Result<LossBreakdown> {
    check_inputs(a, b, cfg, perm)?;
    let (n, d) = (a.n(), a.d());
    let xa = permuted(a.matrix(), perm)?;
    let xb = permuted(b.matrix(), perm)?;

    let mut diff = xa.clone();
    diff.add_scaled(&xb, -1.0);
    let invariance = cfg.alpha / n as f64 * diff.as_slice().iter().map(|x| x * x).sum::<f64>();
    let inv_scale = 2.0 * cfg.alpha / n as f64;
    let mut ga = diff.clone();
    ga.scale(inv_scale);
    let mut gb = diff;
    gb.scale(-inv_scale);

    let var_w = cfg.mu / d as f64;
    let (var_a, gva) = rvar_raw(&xa, cfg.gamma, cfg.eps_var, Route::Fast, true)?;
    let (var_b, gvb) = rvar_raw(&xb, cfg.gamma, cfg.eps_var, Route::Fast, true)?;
    ga.add_scaled(&gva.expect("gradient requested"), var_w);
    gb.add_scaled(&gvb.expect("gradient requested"), var_w);

    let reg_w = cfg.nu / d as f64;
    let block = cfg.block_for(d);
    let mut reg_total = 0.0;
    for (x, g) in [(&xa, &mut ga), (&xb, &mut gb)] {
        let c = center_matrix(x)?;
        let (value, grad) = match variant {
            Variant::Proposed => rsum_cov_centered(c.data(), cfg.q, block, Route::Fast, true)?,
            Variant::Original => roff_cov_centered(c.data(), true),
        };
        reg_total += value;
        g.add_scaled(&c.backward(&grad.expect("gradient requested")), reg_w);
    }

    let grads = GradBatch { a: unpermuted(ga, perm)?, b: unpermuted(gb, perm)? };
    finish(invariance, var_w * (var_a + var_b), reg_w * reg_total, grads)
}

fn finish(invariance: f64, variance: f64, regularizer: f64, grads: GradBatch) -> Result<LossBreakdown> {
    let total = invariance + variance + regularizer;
    if !total.is_finite() || !grads.a.is_finite() || !grads.b.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite ({total})")));
    }
    Ok(LossBreakdown { total, invariance, variance, regularizer, grads })
}

const METRIC_EPS: f64 = 1e-8;

fn check_metric_inputs(a: &EmbeddingBatch, b: &EmbeddingBatch) -> Result<()> {
    check_pair(a.matrix(), b.matrix())?;
    if a.d() < 2 {
        return Err(Error::UndefinedMetric("off-diagonal mean needs d >= 2".into()));
    }
    Ok(())
}

/// Mean squared off-diagonal entry of the cross-correlation matrix,
/// `Roff(C) / (d (d - 1))`, from the explicit matrix.
pub fn normalized_bt_metric(a: &EmbeddingBatch, b: &EmbeddingBatch) -> Result<f64> {
    check_metric_inputs(a, b)?;
    let c = cross_correlation(&standardize(a, METRIC_EPS)?, &standardize(b, METRIC_EPS)?)?;
    let d = a.d() as f64;
    Ok(roff_naive(c.matrix())? / (d * (d - 1.0)))
}

/// `(Roff(K_A) + Roff(K_B)) / (2 d (d - 1))`, from the explicit covariances.
pub fn normalized_vic_metric(a: &EmbeddingBatch, b: &EmbeddingBatch) -> Result<f64> {
    check_metric_inputs(a, b)?;
    let ka = covariance(&center(a)?)?;
    let kb = covariance(&center(b)?)?;
    let d = a.d() as f64;
    Ok((roff_naive(ka.matrix())? + roff_naive(kb.matrix())?) / (2.0 * d * (d - 1.0)))
}
