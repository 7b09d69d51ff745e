//! Central finite differences for checking analytic gradients.

use crate::tensor::Matrix;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every entry of `x`.
pub fn central_difference(f: impl Fn(&Matrix) -> f64, x: &Matrix, h: f64) -> Matrix {
    let mut probe = x.clone();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for idx in 0..x.as_slice().len() {
        let orig = x.as_slice()[idx];
        probe.as_mut_slice()[idx] = orig + h;
        let plus = f(&probe);
        probe.as_mut_slice()[idx] = orig - h;
        let minus = f(&probe);
        probe.as_mut_slice()[idx] = orig;
        out.as_mut_slice()[idx] = (plus - minus) / (2.0 * h);
    }
    out
}

/// Worst per-coordinate disagreement between two gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradComparison {
    /// `max |a - n| / max(|a|, |n|, floor)`
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Flat index of the coordinate with the largest relative error.
    pub worst: usize,
}

impl GradComparison {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Compares an analytic gradient with a numeric one coordinate by
/// coordinate. `floor` bounds the denominator from below so that coordinates
/// whose true derivative is zero are judged on an absolute scale.
pub fn compare(analytic: &Matrix, numeric: &Matrix, floor: f64) -> GradComparison {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    let mut report = GradComparison { max_rel_err: 0.0, max_abs_err: 0.0, worst: 0 };
    for (i, (a, n)) in analytic.as_slice().iter().zip(numeric.as_slice()).enumerate() {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(floor);
        report.max_abs_err = report.max_abs_err.max(abs);
        if rel > report.max_rel_err || !rel.is_finite() {
            report.max_rel_err = rel;
            report.worst = i;
        }
    }
    report
}
