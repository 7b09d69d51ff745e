//! A matrix whose off-diagonal entries cancel inside the summary vector,
//! and the feature permutations that expose it.

use fastdecor::oracle::{roff_naive, rsum_from_summary, summary_naive};
use fastdecor::{Exponent, Matrix, PermutationSpec};

const T: f64 = 0.5;

fn cancelling(d: usize) -> Matrix {
    let mut m = Matrix::identity(d);
    m[(0, 1)] = T;
    m[(1, 2)] = -T;
    m
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    if d == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(d - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, d - 1);
            out.push(q);
        }
    }
    out
}

fn rsum(m: &Matrix, q: Exponent) -> f64 {
    rsum_from_summary(&summary_naive(m).unwrap(), q)
}

#[test]
fn cancellation_hides_off_diagonal_mass() {
    for d in [3, 4] {
        let m = cancelling(d);
        assert_eq!(roff_naive(&m).unwrap(), 2.0 * T * T);
        assert_eq!(rsum(&m, Exponent::Two), 0.0);
        assert_eq!(rsum(&m, Exponent::One), 0.0);
    }
}

#[test]
fn three_features_cannot_be_separated() {
    // in Z_3 two nonzero steps with nonzero sum are equal, so both entries
    // always land in the same component
    let m = cancelling(3);
    for pi in permutations(3) {
        let p = PermutationSpec::from_indices(pi).unwrap();
        assert_eq!(rsum(&p.conjugate(&m).unwrap(), Exponent::Two), 0.0);
    }
}

#[test]
fn permutation_exposes_the_cancellation() {
    let m = cancelling(4);
    let p = PermutationSpec::from_indices(vec![0, 1, 3, 2]).unwrap();
    let pm = p.conjugate(&m).unwrap();
    assert_eq!(rsum(&pm, Exponent::Two), 0.5);
    assert_eq!(rsum(&pm, Exponent::One), 1.0);
    assert_eq!(roff_naive(&pm).unwrap(), 0.5);

    let exposing = permutations(4)
        .into_iter()
        .filter(|pi| rsum(&PermutationSpec::from_indices(pi.clone()).unwrap().conjugate(&m).unwrap(), Exponent::Two) > 0.0)
        .count();
    assert_eq!(exposing, 16);
}
