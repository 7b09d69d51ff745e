mod common;

use common::random_matrix;
use fastdecor::gradcheck::{central_difference, compare, GradComparison};
use fastdecor::regularizers::{roff_cov_eval, roff_cross_eval, rsum_cov_eval, rsum_cross_eval, rvar_eval, Route};
use fastdecor::tensor::sample_permutation;
use fastdecor::{bt_style_loss, vic_style_loss, EmbeddingBatch, Exponent, Matrix, PermutationSpec, RegConfig, Variant};

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;
// coordinates below this magnitude are judged on an absolute scale; finite
// differences at h = 1e-5 carry about 1e-10 of rounding noise
const FLOOR: f64 = 1e-4;
const N: usize = 8;
const D: usize = 16;

fn batch(m: &Matrix) -> EmbeddingBatch {
    EmbeddingBatch::new(m.clone()).unwrap()
}

/// Checks both views of a two-argument objective.
fn check_pair(
    name: &str,
    f: impl Fn(&Matrix, &Matrix) -> f64,
    a: &Matrix,
    b: &Matrix,
    ga: &Matrix,
    gb: &Matrix,
) -> (GradComparison, GradComparison) {
    let na = central_difference(|x| f(x, b), a, H);
    let nb = central_difference(|y| f(a, y), b, H);
    let (ca, cb) = (compare(ga, &na, FLOOR), compare(gb, &nb, FLOOR));

    assert!(ca.passes(TOL) && cb.passes(TOL), "{name}: {ca:?} {cb:?}");
    (ca, cb)
}

fn check_single(name: &str, f: impl Fn(&Matrix) -> f64, x: &Matrix, g: &Matrix) {
    let c = compare(g, &central_difference(f, x, H), FLOOR);

    assert!(c.passes(TOL), "{name}: {c:?}");
}

fn configs() -> Vec<RegConfig> {
    let mut out = Vec::new();
    for q in [Exponent::One, Exponent::Two] {
        for block in [None, Some(1), Some(5), Some(16)] {
            out.push(RegConfig { q, block, ..RegConfig::default() });
        }
    }
    out
}

#[test]
fn rsum_cross_gradients() {
    let (a, b) = (random_matrix(N, D, 1), random_matrix(N, D, 2));
    let perm = sample_permutation(D, 9);
    for cfg in configs() {
        for p in [None, Some(&perm)] {
            for route in [Route::Fast, Route::Explicit] {
                let f = |x: &Matrix, y: &Matrix| rsum_cross_eval(&batch(x), &batch(y), &cfg, p, route, false).unwrap().0;
                let g = rsum_cross_eval(&batch(&a), &batch(&b), &cfg, p, route, true).unwrap().1.unwrap();
                check_pair(&format!("rsum_cross {:?} {:?} {route:?} perm={}", cfg.q, cfg.block, p.is_some()), f, &a, &b, &g.a, &g.b);
            }
        }
    }
}

#[test]
fn rsum_cov_gradients() {
    let x = random_matrix(N, D, 3);
    let perm = sample_permutation(D, 10);
    for cfg in configs() {
        for p in [None, Some(&perm)] {
            for route in [Route::Fast, Route::Explicit] {
                let f = |m: &Matrix| rsum_cov_eval(&batch(m), &cfg, p, route, false).unwrap().0;
                let g = rsum_cov_eval(&batch(&x), &cfg, p, route, true).unwrap().1.unwrap();
                check_single(&format!("rsum_cov {:?} {:?} {route:?} perm={}", cfg.q, cfg.block, p.is_some()), f, &x, &g);
            }
        }
    }
}

#[test]
fn roff_gradients() {
    let (a, b) = (random_matrix(N, D, 4), random_matrix(N, D, 5));
    let cfg = RegConfig::default();
    let f = |x: &Matrix, y: &Matrix| roff_cross_eval(&batch(x), &batch(y), &cfg, false).unwrap().0;
    let g = roff_cross_eval(&batch(&a), &batch(&b), &cfg, true).unwrap().1.unwrap();
    check_pair("roff_cross", f, &a, &b, &g.a, &g.b);
    let f = |m: &Matrix| roff_cov_eval(&batch(m), &cfg, false).unwrap().0;
    let g = roff_cov_eval(&batch(&a), &cfg, true).unwrap().1.unwrap();
    check_single("roff_cov", f, &a, &g);
}

#[test]
fn rvar_gradients() {
    let x = random_matrix(N, D, 6);
    for gamma in [0.5, 1.0] {
        let cfg = RegConfig { gamma, ..RegConfig::default() };
        for route in [Route::Fast, Route::Explicit] {
            let f = |m: &Matrix| rvar_eval(&batch(m), &cfg, route, false).unwrap().0;
            let g = rvar_eval(&batch(&x), &cfg, route, true).unwrap().1.unwrap();
            check_single(&format!("rvar gamma={gamma} {route:?}"), f, &x, &g);
        }
    }
}

#[test]
fn loss_gradients() {
    let (a, b) = (random_matrix(N, D, 7), random_matrix(N, D, 8));
    let perm = sample_permutation(D, 11);
    let perms: [Option<&PermutationSpec>; 2] = [None, Some(&perm)];
    for variant in [Variant::Proposed, Variant::Original] {
        for cfg in configs() {
            for p in perms {
                let tag = format!("{variant:?} {:?} {:?} perm={}", cfg.q, cfg.block, p.is_some());
                let f = |x: &Matrix, y: &Matrix| bt_style_loss(&batch(x), &batch(y), &cfg, variant, p).unwrap().total;
                let l = bt_style_loss(&batch(&a), &batch(&b), &cfg, variant, p).unwrap();
                check_pair(&format!("bt {tag}"), f, &a, &b, &l.grads.a, &l.grads.b);
                let f = |x: &Matrix, y: &Matrix| vic_style_loss(&batch(x), &batch(y), &cfg, variant, p).unwrap().total;
                let l = vic_style_loss(&batch(&a), &batch(&b), &cfg, variant, p).unwrap();
                check_pair(&format!("vic {tag}"), f, &a, &b, &l.grads.a, &l.grads.b);
            }
        }
    }
}
