//! Direct reference implementations.
//!
//! Everything here materializes the full matrix (or sums the defining
//! formula term by term) and is written for clarity, not speed. These are the
//! ground truth for the spectral fast path and the "existing method" side of
//! the benchmarks.

use std::ops::Index;

use crate::error::{dim_err, Error, Result};
use crate::tensor::{Matrix, Mode, StandardizedBatch};

/// The wrapped-diagonal sums of a square matrix:
/// `v[i] = sum_j M[j, (i + j) mod d]`.
///
/// `v[0]` is the trace, and every entry of the matrix appears in exactly one
/// component.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryVector(Vec<f64>);

impl SummaryVector {
    pub fn new(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Index<usize> for SummaryVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Exponent `q` applied to the summary components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exponent {
    /// `|v_i|`
    One,
    /// `v_i^2`
    #[default]
    Two,
}

impl Exponent {
    pub fn value(self) -> u32 {
        match self {
            Exponent::One => 1,
            Exponent::Two => 2,
        }
    }

    /// `|x|^q`
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Exponent::One => x.abs(),
            Exponent::Two => x * x,
        }
    }

    /// Derivative of `|x|^q`, with `sign(0) = 0` for `q = 1`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Exponent::One => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Exponent::Two => 2.0 * x,
        }
    }
}

impl TryFrom<u32> for Exponent {
    type Error = Error;

    fn try_from(q: u32) -> Result<Self> {
        match q {
            1 => Ok(Exponent::One),
            2 => Ok(Exponent::Two),
            _ => Err(Error::Config(format!("q must be 1 or 2, got {q}"))),
        }
    }
}

fn require_square(m: &Matrix) -> Result<usize> {
    if !m.is_square() {
        return Err(dim_err(format!("{}x{} matrix is not square", m.rows(), m.cols())));
    }
    Ok(m.rows())
}

/// Sum of squared off-diagonal entries.
pub fn roff_naive(m: &Matrix) -> Result<f64> {
    let d = require_square(m)?;
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                total += m[(i, j)] * m[(i, j)];
            }
        }
    }
    Ok(total)
}

/// Hinge on the per-feature standard deviation,
/// `sum_i max(0, gamma - sqrt(K_ii + eps))`.
pub fn rvar(k: &Matrix, gamma: f64, eps: f64) -> Result<f64> {
    let d = require_square(k)?;
    let mut total = 0.0;
    for i in 0..d {
        let var = k[(i, i)];
        if var < -eps {
            return Err(Error::Numeric(format!("negative variance {var} at feature {i}")));
        }
        total += (gamma - (var + eps).max(0.0).sqrt()).max(0.0);
    }
    Ok(total)
}

pub fn summary_naive(m: &Matrix) -> Result<SummaryVector> {
    let d = require_square(m)?;
    let mut v = vec![0.0; d];
    for (i, vi) in v.iter_mut().enumerate() {
        for j in 0..d {
            *vi += m[(j, (i + j) % d)];
        }
    }
    Ok(SummaryVector(v))
}

/// `sum_{i=1}^{d-1} |v_i|^q`; the trace component is excluded.
pub fn rsum_from_summary(v: &SummaryVector, q: Exponent) -> f64 {
    v.as_slice().iter().skip(1).map(|&x| q.apply(x)).sum()
}

/// Grouped regularizer over `b x b` blocks of `m`, zero-padded to a multiple
/// of `b`.
///
/// Diagonal blocks contribute their summary components `1..b`, off-diagonal
/// blocks all `b` components.
pub fn rsum_grouped_naive(m: &Matrix, b: usize, q: Exponent) -> Result<f64> {
    let d = require_square(m)?;
    if b < 1 || b > d {
        return Err(Error::Config(format!("block size {b} outside 1..={d}")));
    }
    let groups = d.div_ceil(b);
    let entry = |r: usize, c: usize| if r < d && c < d { m[(r, c)] } else { 0.0 };
    let mut total = 0.0;
    for gi in 0..groups {
        for gj in 0..groups {
            let block = Matrix::from_fn(b, b, |r, c| entry(gi * b + r, gj * b + c));
            let v = summary_naive(&block)?;
            let skip = usize::from(gi == gj);
            total += v.as_slice().iter().skip(skip).map(|&x| q.apply(x)).sum::<f64>();
        }
    }
    Ok(total)
}

/// `[x * y]_i = sum_j x_j y_{(i - j) mod d}`.
pub fn circ_conv_naive(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(dim_err(format!("lengths {} and {} differ", x.len(), y.len())));
    }
    let d = x.len();
    Ok((0..d)
        .map(|i| (0..d).map(|j| x[j] * y[(i + d - j) % d]).sum())
        .collect())
}

/// `out[i] = x[(d - i) mod d]`: reverses components `1..d`, keeps component 0.
pub fn involution_naive(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    (0..d).map(|i| x[(d - i) % d]).collect()
}

/// `v(C) = (1/(n-1)) sum_k inv(a_k) * b_k`, evaluated with direct circular
/// convolutions and without forming `C`.
pub fn summary_via_circcorr_naive(a: &StandardizedBatch, b: &StandardizedBatch) -> Result<SummaryVector> {
    if a.data().shape() != b.data().shape() {
        return Err(dim_err(format!(
            "batches have shapes {:?} and {:?}",
            a.data().shape(),
            b.data().shape()
        )));
    }
    if a.mode() != b.mode() && (a.mode() == Mode::Centered || b.mode() == Mode::Centered) {
        return Err(Error::Contract("views must both be standardized or both centered".into()));
    }
    let n = a.n();
    if n < 2 {
        return Err(Error::InvalidBatch("need at least 2 samples".into()));
    }
    let mut v = vec![0.0; a.d()];
    for k in 0..n {
        let term = circ_conv_naive(&involution_naive(a.row(k)), b.row(k))?;
        for (s, t) in v.iter_mut().zip(term) {
            *s += t;
        }
    }
    let scale = 1.0 / (n - 1) as f64;
    v.iter_mut().for_each(|s| *s *= scale);
    Ok(SummaryVector(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn roff_examples() {
        assert_eq!(roff_naive(&Matrix::identity(5)).unwrap(), 0.0);
        let m = Matrix::from_rows(&[[1.0, 0.5], [-0.5, 1.0]]).unwrap();
        assert!(close(roff_naive(&m).unwrap(), 0.5, 1e-15));
        assert_eq!(roff_naive(&Matrix::from_rows(&[[3.0]]).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn rvar_examples() {
        assert_eq!(rvar(&Matrix::identity(4), 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(rvar(&Matrix::zeros(4, 4), 1.0, 0.0).unwrap(), 4.0);
        let k = Matrix::from_rows(&[[0.25, 0.0], [0.0, 4.0]]).unwrap();
        assert!(close(rvar(&k, 1.0, 0.0).unwrap(), 0.5, 1e-15));
        let bad = Matrix::from_rows(&[[-0.1]]).unwrap();
        assert!(matches!(rvar(&bad, 1.0, 1e-4), Err(Error::Numeric(_))));
    }

    #[test]
    fn summary_examples() {
        let v = summary_naive(&Matrix::identity(4)).unwrap();
        assert_eq!(v.as_slice(), &[4.0, 0.0, 0.0, 0.0]);
        let m = Matrix::from_rows(&[[1.0, 0.2, -0.1], [0.3, 1.0, 0.4], [-0.2, 0.5, 1.0]]).unwrap();
        let v = summary_naive(&m).unwrap();
        for (x, e) in v.as_slice().iter().zip([3.0, 0.4, 0.7]) {
            assert!(close(*x, e, 1e-15));
        }
        let one = summary_naive(&Matrix::from_rows(&[[2.5]]).unwrap()).unwrap();
        assert_eq!(one.as_slice(), &[2.5]);
    }

    #[test]
    fn rsum_examples() {
        let v = SummaryVector::new(vec![3.0, 0.4, 0.7]);
        assert!(close(rsum_from_summary(&v, Exponent::Two), 0.65, 1e-15));
        assert!(close(rsum_from_summary(&v, Exponent::One), 1.1, 1e-15));
        let trace_only = SummaryVector::new(vec![5.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(rsum_from_summary(&trace_only, Exponent::Two), 0.0);
        assert!(matches!(Exponent::try_from(3), Err(Error::Config(_))));
        assert!(Exponent::try_from(0).is_err());
    }

    #[test]
    fn grouped_limits_and_identity() {
        let m = Matrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0 - 0.4);
        let roff = roff_naive(&m).unwrap();
        assert!(close(rsum_grouped_naive(&m, 1, Exponent::Two).unwrap(), roff, 1e-12));
        let full = rsum_from_summary(&summary_naive(&m).unwrap(), Exponent::One);
        assert!(close(rsum_grouped_naive(&m, 5, Exponent::One).unwrap(), full, 1e-12));
        for b in 1..=5 {
            assert_eq!(rsum_grouped_naive(&Matrix::identity(5), b, Exponent::Two).unwrap(), 0.0);
        }
        assert!(matches!(rsum_grouped_naive(&m, 0, Exponent::Two), Err(Error::Config(_))));
        assert!(matches!(rsum_grouped_naive(&m, 6, Exponent::Two), Err(Error::Config(_))));
    }

    #[test]
    fn circ_conv_examples() {
        let y = [3.0, -1.0, 4.0, 1.5];
        assert_eq!(circ_conv_naive(&[1.0, 0.0, 0.0, 0.0], &y).unwrap(), y.to_vec());
        assert_eq!(circ_conv_naive(&[0.0, 1.0, 0.0, 0.0], &y).unwrap(), vec![1.5, 3.0, -1.0, 4.0]);
        assert_eq!(circ_conv_naive(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), vec![11.0, 10.0]);
        assert!(circ_conv_naive(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn involution_examples() {
        assert_eq!(involution_naive(&[1.0, 2.0, 3.0, 4.0]), vec![1.0, 4.0, 3.0, 2.0]);
        assert_eq!(involution_naive(&[7.0]), vec![7.0]);
        let x = [0.3, -1.0, 2.0, 5.0, 8.0];
        assert_eq!(involution_naive(&involution_naive(&x)), x.to_vec());
    }
}
