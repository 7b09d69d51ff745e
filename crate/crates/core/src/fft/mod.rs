//! Spectral fast path.
//!
//! With `F` the DFT, `F(inv(x)) = conj(F(x))` and the convolution theorem
//! give
//!
//! ```text
//! v(C) = 1/(n-1) * F^-1( sum_k conj(F(a_k)) . F(b_k) )
//! ```
//!
//! so the summary vector of the cross-correlation matrix comes out of `n`
//! forward transforms, `n d` complex products and one inverse transform,
//! without ever forming the `d x d` matrix. The grouped variant runs the
//! same pipeline on length-`b` sub-vectors, one summary per block pair.
//!
//! Real inputs are transformed two at a time by packing them into the real
//! and imaginary parts of a single complex transform.

mod plan;

pub use plan::FftPlan;

use num_complex::Complex64;

use crate::error::{dim_err, Error, Result};
use crate::oracle::SummaryVector;
use crate::tensor::{Matrix, Mode, StandardizedBatch};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Imaginary residue (relative to the output scale) above which an inverse
/// transform is rejected.
const RESIDUE_LIMIT: f64 = 1e-6;

/// Full (length `d`) spectrum of a vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumVector(Vec<Complex64>);

impl SpectrumVector {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest deviation from `F[k] = conj(F[(d-k) mod d])`.
    pub fn conjugate_symmetry_error(&self) -> f64 {
        let d = self.0.len();
        (0..d)
            .map(|k| (self.0[k] - self.0[(d - k) % d].conj()).norm())
            .fold(0.0, f64::max)
    }
}

pub fn dft(x: &[f64]) -> SpectrumVector {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlan::new(x.len()).forward(&mut buf);
    SpectrumVector(buf)
}

/// Inverse transform of a spectrum whose inverse is real. The imaginary
/// residue is checked and dropped.
pub fn idft(s: &SpectrumVector) -> Result<Vec<f64>> {
    let mut buf = s.0.clone();
    FftPlan::new(buf.len()).inverse(&mut buf);
    real_part_checked(&buf)
}

fn real_part_checked(buf: &[Complex64]) -> Result<Vec<f64>> {
    let scale = buf.iter().map(|c| c.re.abs()).fold(1.0, f64::max);
    let residue = buf.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if residue > RESIDUE_LIMIT * scale {
        return Err(Error::Numeric(format!(
            "inverse transform left imaginary residue {residue:e} (scale {scale:e})"
        )));
    }
    Ok(buf.iter().map(|c| c.re).collect())
}

/// Circular convolution through the convolution theorem.
pub fn circ_conv_fft(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(dim_err(format!("lengths {} and {} differ", x.len(), y.len())));
    }
    let plan = FftPlan::new(x.len());
    let mut fx = vec![ZERO; x.len()];
    let mut fy = vec![ZERO; x.len()];
    let mut scratch = vec![ZERO; x.len()];
    forward_real_pair(&plan, x, y, &mut scratch, &mut fx, &mut fy);
    for (a, b) in fx.iter_mut().zip(&fy) {
        *a *= b;
    }
    plan.inverse(&mut fx);
    real_part_checked(&fx)
}

/// Summary vector of the cross-correlation of two standardized views,
/// computed spectrally in `O(n d log d)`.
pub fn summary_fft(a: &StandardizedBatch, b: &StandardizedBatch) -> Result<SummaryVector> {
    check_views(a, b)?;
    let d = a.d();
    let (fa, fb) = Spectra::of_pair(a.data(), b.data(), d);
    let acc = fa.cross_accumulate(&fb);
    let summary = acc.summaries(scale_for(a.n()))?;
    Ok(SummaryVector::new(summary.data))
}

/// Summary vector of the covariance of a centered batch, from the
/// accumulated power spectrum `sum_k |F(c_k)|^2`.
pub fn summary_fft_power(x: &StandardizedBatch) -> Result<SummaryVector> {
    if x.n() < 2 {
        return Err(Error::InvalidBatch("need at least 2 samples".into()));
    }
    let spectra = Spectra::of(x.data(), x.d());
    let acc = spectra.power_accumulate();
    let summary = acc.summaries(scale_for(x.n()))?;
    Ok(SummaryVector::new(summary.data))
}

/// Summaries of every `blk x blk` block of the cross-correlation matrix, the
/// feature axis zero-padded to a multiple of `blk`.
///
/// Each sub-vector spectrum is computed once and reused for every block pair
/// it takes part in.
pub fn summary_fft_grouped(
    a: &StandardizedBatch,
    b: &StandardizedBatch,
    blk: usize,
) -> Result<GroupedSummary> {
    check_views(a, b)?;
    check_block(blk, a.d())?;
    let (fa, fb) = Spectra::of_pair(a.data(), b.data(), blk);
    fa.cross_accumulate(&fb).summaries(scale_for(a.n()))
}

/// Grouped summaries of the covariance of one centered batch.
pub fn summary_fft_grouped_power(x: &StandardizedBatch, blk: usize) -> Result<GroupedSummary> {
    if x.n() < 2 {
        return Err(Error::InvalidBatch("need at least 2 samples".into()));
    }
    check_block(blk, x.d())?;
    let spectra = Spectra::of(x.data(), blk);
    spectra.cross_accumulate(&spectra).summaries(scale_for(x.n()))
}

fn check_views(a: &StandardizedBatch, b: &StandardizedBatch) -> Result<()> {
    if a.data().shape() != b.data().shape() {
        return Err(dim_err(format!(
            "batches have shapes {:?} and {:?}",
            a.data().shape(),
            b.data().shape()
        )));
    }
    if a.mode() != Mode::Standardized || b.mode() != Mode::Standardized {
        return Err(Error::Contract("cross-correlation summary needs standardized views".into()));
    }
    Ok(())
}

pub(crate) fn check_block(blk: usize, d: usize) -> Result<()> {
    if blk < 1 || blk > d {
        return Err(Error::Config(format!("block size {blk} outside 1..={d}")));
    }
    Ok(())
}

fn scale_for(n: usize) -> f64 {
    1.0 / (n - 1) as f64
}

/// Summary vectors of all `groups x groups` blocks, each of length `block`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSummary {
    groups: usize,
    block: usize,
    /// Row-major over block pairs `(i, j)`, then component.
    data: Vec<f64>,
}

impl GroupedSummary {
    pub(crate) fn zeros(groups: usize, block: usize) -> Self {
        Self { groups, block, data: vec![0.0; groups * groups * block] }
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn block_size(&self) -> usize {
        self.block
    }

    /// Summary of block `C_ij`.
    pub fn block(&self, i: usize, j: usize) -> &[f64] {
        let off = (i * self.groups + j) * self.block;
        &self.data[off..off + self.block]
    }

    pub(crate) fn block_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let off = (i * self.groups + j) * self.block;
        &mut self.data[off..off + self.block]
    }

    pub fn to_summaries(&self) -> Vec<SummaryVector> {
        self.data.chunks_exact(self.block).map(|c| SummaryVector::new(c.to_vec())).collect()
    }
}

/// Forward transforms of two real vectors with one complex transform.
fn forward_real_pair(
    plan: &FftPlan,
    x: &[f64],
    y: &[f64],
    scratch: &mut [Complex64],
    out_x: &mut [Complex64],
    out_y: &mut [Complex64],
) {
    let len = plan.len();
    for ((s, &re), &im) in scratch.iter_mut().zip(x).zip(y) {
        *s = Complex64::new(re, im);
    }
    plan.forward(scratch);
    for m in 0..len {
        let z = scratch[m];
        let zr = scratch[(len - m) % len].conj();
        out_x[m] = (z + zr) * 0.5;
        // (z - zr) / 2i
        let diff = z - zr;
        out_y[m] = Complex64::new(diff.im * 0.5, -diff.re * 0.5);
    }
}

/// Transforms consecutive length-`plan.len()` chunks of `input`, two per
/// complex transform.
fn forward_real_chunks(plan: &FftPlan, input: &[f64], output: &mut [Complex64]) {
    let b = plan.len();
    let mut scratch = vec![ZERO; b];
    let mut pieces = input.chunks_exact(b);
    let mut outs = output.chunks_exact_mut(b);
    while let (Some(px), Some(ox)) = (pieces.next(), outs.next()) {
        match (pieces.next(), outs.next()) {
            (Some(py), Some(oy)) => forward_real_pair(plan, px, py, &mut scratch, ox, oy),
            _ => {
                let zeros = vec![0.0; b];
                let mut sink = vec![ZERO; b];
                forward_real_pair(plan, px, &zeros, &mut scratch, ox, &mut sink);
            }
        }
    }
}

/// Inverse transforms of two spectra with real inverses, with one complex
/// transform.
fn inverse_real_pair(
    plan: &FftPlan,
    u: &[Complex64],
    v: &[Complex64],
    scratch: &mut [Complex64],
    out_x: &mut [f64],
    out_y: &mut [f64],
) {
    for ((s, a), b) in scratch.iter_mut().zip(u).zip(v) {
        // u + i v
        *s = Complex64::new(a.re - b.im, a.im + b.re);
    }
    plan.inverse(scratch);
    for ((s, x), y) in scratch.iter().zip(out_x.iter_mut()).zip(out_y.iter_mut()) {
        *x = s.re;
        *y = s.im;
    }
}

/// Spectra of every length-`block` sub-vector of every row of a batch, the
/// feature axis zero-padded to `groups * block`.
pub(crate) struct Spectra {
    n: usize,
    d: usize,
    groups: usize,
    block: usize,
    /// Row-major over (sample, group), then frequency.
    data: Vec<Complex64>,
}

impl Spectra {
    fn empty(n: usize, d: usize, block: usize) -> Self {
        let groups = d.div_ceil(block);
        Self { n, d, groups, block, data: vec![ZERO; n * groups * block] }
    }

    fn slot(&self, k: usize, i: usize) -> &[Complex64] {
        let off = (k * self.groups + i) * self.block;
        &self.data[off..off + self.block]
    }

    fn padded_rows(x: &Matrix, groups: usize, block: usize) -> Vec<f64> {
        let d = x.cols();
        let width = groups * block;
        let mut out = vec![0.0; x.rows() * width];
        for k in 0..x.rows() {
            out[k * width..k * width + d].copy_from_slice(x.row(k));
        }
        out
    }

    /// Transforms the sub-vectors of one batch two at a time.
    pub(crate) fn of(x: &Matrix, block: usize) -> Self {
        let mut s = Self::empty(x.rows(), x.cols(), block);
        let padded = Self::padded_rows(x, s.groups, block);
        forward_real_chunks(&FftPlan::new(block), &padded, &mut s.data);
        s
    }

    /// Transforms the matching sub-vectors of two batches together.
    pub(crate) fn of_pair(a: &Matrix, b: &Matrix, block: usize) -> (Self, Self) {
        let mut sa = Self::empty(a.rows(), a.cols(), block);
        let mut sb = Self::empty(b.rows(), b.cols(), block);
        let pa = Self::padded_rows(a, sa.groups, block);
        let pb = Self::padded_rows(b, sb.groups, block);
        let plan = FftPlan::new(block);
        let mut scratch = vec![ZERO; block];
        for (((xa, xb), oa), ob) in pa
            .chunks_exact(block)
            .zip(pb.chunks_exact(block))
            .zip(sa.data.chunks_exact_mut(block))
            .zip(sb.data.chunks_exact_mut(block))
        {
            forward_real_pair(&plan, xa, xb, &mut scratch, oa, ob);
        }
        (sa, sb)
    }

    /// `S_ij = sum_k conj(F(a_k^i)) . F(b_k^j)` for all block pairs.
    pub(crate) fn cross_accumulate(&self, other: &Spectra) -> Accumulated {
        let (g, b) = (self.groups, self.block);
        let mut acc = vec![ZERO; g * g * b];
        for k in 0..self.n {
            for i in 0..g {
                let fa = self.slot(k, i);
                for j in 0..g {
                    let fb = other.slot(k, j);
                    let dst = &mut acc[(i * g + j) * b..(i * g + j + 1) * b];
                    for ((s, x), y) in dst.iter_mut().zip(fa).zip(fb) {
                        *s += x.conj() * y;
                    }
                }
            }
        }
        Accumulated { groups: g, block: b, data: acc }
    }

    /// `sum_k |F(c_k)|^2` for a single ungrouped batch.
    pub(crate) fn power_accumulate(&self) -> Accumulated {
        debug_assert_eq!(self.groups, 1);
        let b = self.block;
        let mut acc = vec![ZERO; b];
        for k in 0..self.n {
            for (s, x) in acc.iter_mut().zip(self.slot(k, 0)) {
                *s += x.norm_sqr();
            }
        }
        Accumulated { groups: 1, block: b, data: acc }
    }

    fn plan_and_gradient_spectra(&self, g: &GroupedSummary) -> (FftPlan, Vec<Complex64>) {
        let plan = FftPlan::new(self.block);
        let mut spectra = vec![ZERO; g.data.len()];
        forward_real_chunks(&plan, &g.data, &mut spectra);
        (plan, spectra)
    }

    /// Gradients of `sum_ij <g_ij, v(C_ij)>` with respect to both views,
    /// where `v(C_ij) = scale * sum_k inv(a_k^i) * b_k^j`.
    pub(crate) fn cross_backward(
        fa: &Spectra,
        fb: &Spectra,
        g: &GroupedSummary,
        scale: f64,
    ) -> (Matrix, Matrix) {
        let (groups, b) = (fa.groups, fa.block);
        let (plan, gs) = fa.plan_and_gradient_spectra(g);
        let gspec = |i: usize, j: usize| &gs[(i * groups + j) * b..(i * groups + j + 1) * b];
        let mut grad_a = Matrix::zeros(fa.n, fa.d);
        let mut grad_b = Matrix::zeros(fa.n, fa.d);
        let mut ua = vec![ZERO; b];
        let mut ub = vec![ZERO; b];
        let mut scratch = vec![ZERO; b];
        let mut out_a = vec![0.0; b];
        let mut out_b = vec![0.0; b];
        for k in 0..fa.n {
            // block i of a_k pairs with every block of b_k, and vice versa;
            // the same index doubles as "i" for a and "j" for b
            for t in 0..groups {
                ua.fill(ZERO);
                ub.fill(ZERO);
                for u in 0..groups {
                    let g_tu = gspec(t, u);
                    for ((s, gv), y) in ua.iter_mut().zip(g_tu).zip(fb.slot(k, u)) {
                        *s += gv.conj() * y;
                    }
                    let g_ut = gspec(u, t);
                    for ((s, gv), x) in ub.iter_mut().zip(g_ut).zip(fa.slot(k, u)) {
                        *s += gv * x;
                    }
                }
                inverse_real_pair(&plan, &ua, &ub, &mut scratch, &mut out_a, &mut out_b);
                scatter_block(&mut grad_a, k, t, b, &out_a, scale);
                scatter_block(&mut grad_b, k, t, b, &out_b, scale);
            }
        }
        (grad_a, grad_b)
    }

    /// Gradient of `sum_ij <g_ij, v(K_ij)>` with respect to the centered batch,
    /// where `v(K_ij) = scale * sum_k inv(c_k^i) * c_k^j`.
    pub(crate) fn power_backward(fc: &Spectra, g: &GroupedSummary, scale: f64) -> Matrix {
        let (groups, b) = (fc.groups, fc.block);
        let (plan, gs) = fc.plan_and_gradient_spectra(g);
        let gspec = |i: usize, j: usize| &gs[(i * groups + j) * b..(i * groups + j + 1) * b];
        // c^i appears on the left of K_ij and on the right of K_ji
        let mut h = vec![ZERO; gs.len()];
        for i in 0..groups {
            for j in 0..groups {
                let dst = &mut h[(i * groups + j) * b..(i * groups + j + 1) * b];
                for ((s, x), y) in dst.iter_mut().zip(gspec(i, j)).zip(gspec(j, i)) {
                    *s = x.conj() + y;
                }
            }
        }
        let hspec = |i: usize, j: usize| &h[(i * groups + j) * b..(i * groups + j + 1) * b];
        let mut grad = Matrix::zeros(fc.n, fc.d);
        let jobs: Vec<(usize, usize)> =
            (0..fc.n).flat_map(|k| (0..groups).map(move |t| (k, t))).collect();
        let mut u1 = vec![ZERO; b];
        let mut u2 = vec![ZERO; b];
        let mut scratch = vec![ZERO; b];
        let mut out1 = vec![0.0; b];
        let mut out2 = vec![0.0; b];
        let accumulate = |dst: &mut [Complex64], k: usize, t: usize| {
            dst.fill(ZERO);
            for u in 0..groups {
                for ((s, hv), y) in dst.iter_mut().zip(hspec(t, u)).zip(fc.slot(k, u)) {
                    *s += hv * y;
                }
            }
        };
        for pair in jobs.chunks(2) {
            let (k1, t1) = pair[0];
            accumulate(&mut u1, k1, t1);
            if let Some(&(k2, t2)) = pair.get(1) {
                accumulate(&mut u2, k2, t2);
                inverse_real_pair(&plan, &u1, &u2, &mut scratch, &mut out1, &mut out2);
                scatter_block(&mut grad, k1, t1, b, &out1, scale);
                scatter_block(&mut grad, k2, t2, b, &out2, scale);
            } else {
                u2.fill(ZERO);
                inverse_real_pair(&plan, &u1, &u2, &mut scratch, &mut out1, &mut out2);
                scatter_block(&mut grad, k1, t1, b, &out1, scale);
            }
        }
        grad
    }

    pub(crate) fn groups(&self) -> usize {
        self.groups
    }
}

/// Writes `scale * values` into row `k`, features `t*b .. t*b+b`, dropping
/// padded features.
fn scatter_block(m: &mut Matrix, k: usize, t: usize, b: usize, values: &[f64], scale: f64) {
    let d = m.cols();
    let start = t * b;
    let end = (start + b).min(d);
    let row = m.row_mut(k);
    for (dst, v) in row[start..end].iter_mut().zip(values) {
        *dst = v * scale;
    }
}

/// Accumulated spectral products, one length-`block` spectrum per block pair.
pub(crate) struct Accumulated {
    groups: usize,
    block: usize,
    data: Vec<Complex64>,
}

impl Accumulated {
    /// Inverse-transforms every block pair and applies the `1/(n-1)` scale.
    pub(crate) fn summaries(&self, scale: f64) -> Result<GroupedSummary> {
        let b = self.block;
        let plan = FftPlan::new(b);
        let mut out = GroupedSummary::zeros(self.groups, b);
        let mut scratch = vec![ZERO; b];
        let count = self.groups * self.groups;
        let mut idx = 0;
        while idx < count {
            let u = &self.data[idx * b..(idx + 1) * b];
            if idx + 1 < count {
                let v = &self.data[(idx + 1) * b..(idx + 2) * b];
                for ((s, x), y) in scratch.iter_mut().zip(u).zip(v) {
                    *s = Complex64::new(x.re - y.im, x.im + y.re);
                }
                plan.inverse(&mut scratch);
                let (lo, hi) = out.data.split_at_mut((idx + 1) * b);
                let lo = &mut lo[idx * b..];
                let hi = &mut hi[..b];
                for ((s, x), y) in scratch.iter().zip(lo.iter_mut()).zip(hi.iter_mut()) {
                    *x = s.re * scale;
                    *y = s.im * scale;
                }
                idx += 2;
            } else {
                scratch.copy_from_slice(u);
                plan.inverse(&mut scratch);
                let real = real_part_checked(&scratch)?;
                for (x, r) in out.data[idx * b..(idx + 1) * b].iter_mut().zip(real) {
                    *x = r * scale;
                }
                idx += 1;
            }
        }
        Ok(out)
    }
}
