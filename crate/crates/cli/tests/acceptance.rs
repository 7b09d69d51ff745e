//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion.
//!
//! `cargo test -p fastdecor-cli --test acceptance` runs everything; pass
//! criterion numbers after `--` to run a subset.

use std::process::ExitCode;
use std::time::Instant;

use fastdecor::gradcheck::{central_difference, compare};
use fastdecor::oracle::{roff_naive, rsum_from_summary, rsum_grouped_naive, rvar, summary_naive};
use fastdecor::regularizers::{roff_cov_eval, roff_cross_eval, rsum_cov_eval, rsum_cross_eval, rvar_eval, Route};
use fastdecor::tensor::{center, covariance, cross_correlation, sample_permutation, standardize};
use fastdecor::{
    bt_style_loss, vic_style_loss, EmbeddingBatch, Exponent, Matrix, PermutationSpec, RegConfig, Variant,
};
use fastdecor_cli::alloc::{declared_buffers, peak_bytes};
use fastdecor_cli::bench::{self, run_bench, BenchPoint, Kernel, Repeats};
use fastdecor_train::ablation::{collapse_study, permutation_ablation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS_STD: f64 = 1e-8;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
}

fn batch(m: &Matrix) -> EmbeddingBatch {
    EmbeddingBatch::new(m.clone()).expect("finite batch")
}

fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        (got - want).abs() / want.abs()
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Worst value of `f` over `items`, with the item that produced it.
fn worst<T: Clone>(items: impl IntoIterator<Item = (T, f64)>) -> Option<(T, f64)> {
    items.into_iter().fold(None, |acc, (t, e)| match acc {
        Some((_, best)) if best >= e => acc,
        _ => Some((t, e)),
    })
}

fn oracle_equivalence() -> Outcome {
    const TOL: f64 = 1e-9;
    let mut errs = Vec::new();
    for n in [2, 4, 8, 32] {
        for d in [3, 5, 8, 17, 64, 257, 1024] {
            let seed = (n * 10_000 + d) as u64;
            let (a, b) = (batch(&random_matrix(n, d, seed)), batch(&random_matrix(n, d, seed + 1)));
            let c = cross_correlation(&standardize(&a, EPS_STD).unwrap(), &standardize(&b, EPS_STD).unwrap()).unwrap();
            let k = covariance(&center(&a).unwrap()).unwrap();
            for q in [Exponent::One, Exponent::Two] {
                for blk in [1, 4, d] {
                    if blk > d {
                        continue;
                    }
                    let cfg = RegConfig { q, block: Some(blk), ..RegConfig::default() };
                    let fast = rsum_cross_eval(&a, &b, &cfg, None, Route::Fast, false).map_err(|e| e.to_string())?.0;
                    let want = rsum_grouped_naive(c.matrix(), blk, q).unwrap();
                    errs.push((format!("cross n={n} d={d} q={} b={blk}", q.value()), rel_err(fast, want)));
                    let fast = rsum_cov_eval(&a, &cfg, None, Route::Fast, false).map_err(|e| e.to_string())?.0;
                    let want = rsum_grouped_naive(k.matrix(), blk, q).unwrap();
                    errs.push((format!("cov n={n} d={d} q={} b={blk}", q.value()), rel_err(fast, want)));
                }
            }
        }
    }
    let cases = errs.len();
    let (at, e) = worst(errs).expect("non-empty grid");
    check(e <= TOL, format!("{cases} cases, worst relative error {e:.2e} ({at}), tolerance {TOL:.0e}"))
}

fn grouped_limits() -> Outcome {
    const TOL_ROFF: f64 = 1e-10;
    const TOL_RSUM: f64 = 1e-12;
    let d = 16;
    let mut roff_errs = Vec::new();
    let mut rsum_errs = Vec::new();
    for i in 0..50u64 {
        // arbitrary square instances through the oracle
        let m = random_matrix(d, d, 7000 + i);
        roff_errs.push((format!("matrix {i}"), rel_err(rsum_grouped_naive(&m, 1, Exponent::Two).unwrap(), roff_naive(&m).unwrap())));
        for q in [Exponent::One, Exponent::Two] {
            let full = rsum_from_summary(&summary_naive(&m).unwrap(), q);
            rsum_errs.push((format!("matrix {i} q={}", q.value()), rel_err(rsum_grouped_naive(&m, d, q).unwrap(), full)));
        }
        // and the spectral path on 16 x 16 embedding batches
        let (a, b) = (batch(&random_matrix(d, d, 8000 + i)), batch(&random_matrix(d, d, 9000 + i)));
        let one = RegConfig { q: Exponent::Two, block: Some(1), ..RegConfig::default() };
        let grouped = rsum_cross_eval(&a, &b, &one, None, Route::Fast, false).unwrap().0;
        let roff = roff_cross_eval(&a, &b, &one, false).unwrap().0;
        roff_errs.push((format!("batch {i}"), rel_err(grouped, roff)));
        let grouped = rsum_cov_eval(&a, &one, None, Route::Fast, false).unwrap().0;
        let roff = roff_cov_eval(&a, &one, false).unwrap().0;
        roff_errs.push((format!("batch {i} cov"), rel_err(grouped, roff)));
        let c = cross_correlation(&standardize(&a, EPS_STD).unwrap(), &standardize(&b, EPS_STD).unwrap()).unwrap();
        for q in [Exponent::One, Exponent::Two] {
            let full = RegConfig { q, block: Some(d), ..RegConfig::default() };
            let grouped = rsum_cross_eval(&a, &b, &full, None, Route::Fast, false).unwrap().0;
            let want = rsum_from_summary(&summary_naive(c.matrix()).unwrap(), q);
            rsum_errs.push((format!("batch {i} q={}", q.value()), rel_err(grouped, want)));
        }
    }
    let (roff_at, roff_e) = worst(roff_errs).unwrap();
    let (rsum_at, rsum_e) = worst(rsum_errs).unwrap();
    check(
        roff_e <= TOL_ROFF && rsum_e <= TOL_RSUM,
        format!("b=1 vs Roff worst {roff_e:.2e} ({roff_at}); b=d vs Rsum worst {rsum_e:.2e} ({rsum_at})"),
    )
}

fn gradients() -> Outcome {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-5;
    // denominator floor for coordinates whose derivative is near zero
    const FLOOR: f64 = 1e-4;
    let (n, d) = (8, 16);
    let (a, b) = (random_matrix(n, d, 31), random_matrix(n, d, 32));
    let perm = sample_permutation(d, 33);
    let perms: [Option<&PermutationSpec>; 2] = [None, Some(&perm)];
    let mut errs: Vec<(String, f64)> = Vec::new();

    let mut pair = |name: String, f: &dyn Fn(&Matrix, &Matrix) -> f64, ga: &Matrix, gb: &Matrix| {
        let na = central_difference(|x| f(x, &b), &a, H);
        let nb = central_difference(|y| f(&a, y), &b, H);
        let e = compare(ga, &na, FLOOR).max_rel_err.max(compare(gb, &nb, FLOOR).max_rel_err);
        errs.push((name, e));
    };
    for q in [Exponent::One, Exponent::Two] {
        for block in [None, Some(1), Some(5)] {
            let cfg = RegConfig { q, block, ..RegConfig::default() };
            for p in perms {
                let tag = format!("q={} b={block:?} perm={}", q.value(), p.is_some());
                let f = |x: &Matrix, y: &Matrix| rsum_cross_eval(&batch(x), &batch(y), &cfg, p, Route::Fast, false).unwrap().0;
                let g = rsum_cross_eval(&batch(&a), &batch(&b), &cfg, p, Route::Fast, true).unwrap().1.unwrap();
                pair(format!("rsum cross {tag}"), &f, &g.a, &g.b);
                // covariance form: the second view is unused
                let f = |x: &Matrix, _: &Matrix| rsum_cov_eval(&batch(x), &cfg, p, Route::Fast, false).unwrap().0;
                let g = rsum_cov_eval(&batch(&a), &cfg, p, Route::Fast, true).unwrap().1.unwrap();
                pair(format!("rsum cov {tag}"), &f, &g, &Matrix::zeros(n, d));
                for variant in [Variant::Proposed, Variant::Original] {
                    let f = |x: &Matrix, y: &Matrix| bt_style_loss(&batch(x), &batch(y), &cfg, variant, p).unwrap().total;
                    let l = bt_style_loss(&batch(&a), &batch(&b), &cfg, variant, p).unwrap();
                    pair(format!("bt {variant:?} {tag}"), &f, &l.grads.a, &l.grads.b);
                    let f = |x: &Matrix, y: &Matrix| vic_style_loss(&batch(x), &batch(y), &cfg, variant, p).unwrap().total;
                    let l = vic_style_loss(&batch(&a), &batch(&b), &cfg, variant, p).unwrap();
                    pair(format!("vic {variant:?} {tag}"), &f, &l.grads.a, &l.grads.b);
                }
            }
        }
    }
    let cfg = RegConfig::default();
    let f = |x: &Matrix, y: &Matrix| roff_cross_eval(&batch(x), &batch(y), &cfg, false).unwrap().0;
    let g = roff_cross_eval(&batch(&a), &batch(&b), &cfg, true).unwrap().1.unwrap();
    pair("roff cross".into(), &f, &g.a, &g.b);
    let f = |x: &Matrix, _: &Matrix| roff_cov_eval(&batch(x), &cfg, false).unwrap().0;
    let g = roff_cov_eval(&batch(&a), &cfg, true).unwrap().1.unwrap();
    pair("roff cov".into(), &f, &g, &Matrix::zeros(n, d));
    for gamma in [0.5, 1.0] {
        let cfg = RegConfig { gamma, ..RegConfig::default() };
        let f = |x: &Matrix, _: &Matrix| rvar_eval(&batch(x), &cfg, Route::Fast, false).unwrap().0;
        let g = rvar_eval(&batch(&a), &cfg, Route::Fast, true).unwrap().1.unwrap();
        pair(format!("rvar gamma={gamma}"), &f, &g, &Matrix::zeros(n, d));
    }
    let checks = errs.len();
    let (at, e) = worst(errs).unwrap();
    check(e <= TOL, format!("{checks} gradient checks, worst relative error {e:.2e} ({at}), tolerance {TOL:.0e}"))
}

fn relaxation() -> Outcome {
    // identity with C01 = 0.5 and C12 = -0.5: both land in summary component 1
    let mut m = Matrix::identity(4);
    m[(0, 1)] = 0.5;
    m[(1, 2)] = -0.5;
    let rsum2 = |m: &Matrix| rsum_from_summary(&summary_naive(m).unwrap(), Exponent::Two);
    let before = (rsum2(&m), roff_naive(&m).unwrap());
    let p = PermutationSpec::from_indices(vec![0, 1, 3, 2]).unwrap();
    let pm = p.conjugate(&m).unwrap();
    let after = (rsum2(&pm), rsum_from_summary(&summary_naive(&pm).unwrap(), Exponent::One), roff_naive(&pm).unwrap());
    let ok = before == (0.0, 0.5) && after == (0.5, 1.0, 0.5);
    check(
        ok,
        format!(
            "unpermuted rsum {} roff {}; permuted [0,1,3,2] rsum(q=2) {} rsum(q=1) {} roff {}",
            before.0, before.1, after.0, after.1, after.2
        ),
    )
}

fn scaling() -> Outcome {
    const N: usize = 256;
    let reps = Repeats { repeats: 3, warmup: 1 };
    let min_ns = |variant, d| -> Result<f64, String> {
        let p = BenchPoint { kernel: Kernel::RsumCross, variant, n: N, d, b: d, q: Exponent::Two, grad: false };
        let r = run_bench(&p, reps, 0).map_err(|e| e.to_string())?;
        if r.status != bench::Status::Ok {
            return Err(format!("{variant} d={d}: working set of {} bytes unavailable", r.peak_bytes));
        }
        Ok(r.min_ns as f64)
    };
    let naive = (min_ns(bench::Variant::Naive, 4096)?, min_ns(bench::Variant::Naive, 8192)?);
    let fft = (min_ns(bench::Variant::Fft, 4096)?, min_ns(bench::Variant::Fft, 8192)?);
    let naive_growth = naive.1 / naive.0;
    let fft_growth = fft.1 / fft.0;
    let speedup = naive.1 / fft.1;
    check(
        naive_growth >= 3.0 && fft_growth <= 2.8 && speedup >= 2.0,
        format!(
            "naive x{naive_growth:.2} (>= 3.0), fft x{fft_growth:.2} (<= 2.8), speedup at 8192 x{speedup:.1} (>= 2); \
             min times naive {:.3}s/{:.3}s fft {:.1}ms/{:.1}ms",
            naive.0 / 1e9,
            naive.1 / 1e9,
            fft.0 / 1e6,
            fft.1 / 1e6
        ),
    )
}

fn working_set() -> Outcome {
    let mut problems = Vec::new();
    for kernel in [Kernel::RsumCross, Kernel::RsumCov] {
        let fft = declared_buffers(kernel, bench::Variant::Fft);
        if let Some(b) = fft.iter().find(|b| b.is_quadratic_in_d()) {
            problems.push(format!("{kernel} fft declares {b}"));
        }
        if !declared_buffers(kernel, bench::Variant::Naive).iter().any(|b| b.is_quadratic_in_d()) {
            problems.push(format!("{kernel} naive declares no d x d buffer"));
        }
    }
    // byte counts at fixed n: doubling d at most doubles the spectral working set
    let n = 256;
    let bytes = |variant, d| peak_bytes(Kernel::RsumCross, variant, n, d, d, true) as f64;
    let (fft, naive) = (bytes(bench::Variant::Fft, 8192), bytes(bench::Variant::Naive, 8192));
    let fft_growth = fft / bytes(bench::Variant::Fft, 4096);
    let naive_growth = naive / bytes(bench::Variant::Naive, 4096);
    if fft_growth > 2.0 {
        problems.push(format!("fft working set grows x{fft_growth:.2} when d doubles"));
    }
    let detail = format!(
        "at n={n} d=8192: fft {:.1} MiB (x{fft_growth:.2} from 4096), naive {:.1} MiB (x{naive_growth:.2})",
        fft / 1048576.0,
        naive / 1048576.0
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", problems.join("; ")))
    }
}

fn permutation_and_collapse() -> (Outcome, Outcome) {
    const SEEDS: [u64; 3] = [0, 1, 2];
    let ablation = match permutation_ablation(&SEEDS, 64, 20) {
        Ok(rows) => rows,
        Err(e) => return (Err(e.to_string()), Err(format!("permuted runs failed: {e}"))),
    };
    let mut c7 = Vec::new();
    let mut ok7 = true;
    for r in &ablation {
        let ratio = r.metric_off / r.metric_on;
        let gap = r.probe_on - r.probe_off;
        ok7 &= ratio >= 5.0 && gap >= 0.05;
        c7.push(format!("seed {}: metric {:.3}/{:.3} = x{ratio:.1}, probe {:.3} vs {:.3} (+{:.1} pts)", r.seed, r.metric_off, r.metric_on, r.probe_on, r.probe_off, 100.0 * gap));
    }
    let c7 = check(ok7, c7.join("; "));

    let c8 = match collapse_study(&SEEDS, 64, 10, 15) {
        Ok(rows) => {
            let mut ok = true;
            let mut parts = Vec::new();
            for (r, a) in rows.iter().zip(&ablation) {
                ok &= r.invariance_only_std < 0.05 && r.vic_proposed_std > 0.1 && a.std_on > 0.1;
                parts.push(format!(
                    "seed {}: invariance-only {:.4}, vic {:.3}, bt {:.3}",
                    r.seed, r.invariance_only_std, r.vic_proposed_std, a.std_on
                ));
            }
            check(ok, parts.join("; "))
        }
        Err(e) => Err(e.to_string()),
    };
    (c7, c8)
}

fn baseline_fidelity() -> Outcome {
    const TOL: f64 = 1e-10;
    let mut errs = Vec::new();
    for (i, (n, d)) in [(8, 16), (5, 3), (32, 64), (12, 7), (64, 128)].into_iter().enumerate() {
        for trial in 0..4u64 {
            let seed = 500 + 10 * i as u64 + 2 * trial;
            let (a, b) = (batch(&random_matrix(n, d, seed)), batch(&random_matrix(n, d, seed + 1)));
            let cfg = RegConfig { q: Exponent::Two, ..RegConfig::default() };
            let c = cross_correlation(&standardize(&a, EPS_STD).unwrap(), &standardize(&b, EPS_STD).unwrap()).unwrap();
            let c = c.matrix();
            let want = (0..d).map(|i| (1.0 - c[(i, i)]).powi(2)).sum::<f64>() + cfg.lambda * roff_naive(c).unwrap();
            let got = bt_style_loss(&a, &b, &cfg, Variant::Original, None).unwrap().total;
            errs.push((format!("bt n={n} d={d}"), rel_err(got, want)));

            let dist: f64 = (0..n).map(|k| a.row(k).iter().zip(b.row(k)).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).sum();
            let ka = covariance(&center(&a).unwrap()).unwrap();
            let kb = covariance(&center(&b).unwrap()).unwrap();
            let var = rvar(ka.matrix(), cfg.gamma, cfg.eps_var).unwrap() + rvar(kb.matrix(), cfg.gamma, cfg.eps_var).unwrap();
            let cov = roff_naive(ka.matrix()).unwrap() + roff_naive(kb.matrix()).unwrap();
            let want = cfg.alpha / n as f64 * dist + cfg.mu / d as f64 * var + cfg.nu / d as f64 * cov;
            let got = vic_style_loss(&a, &b, &cfg, Variant::Original, None).unwrap().total;
            errs.push((format!("vic n={n} d={d}"), rel_err(got, want)));
        }
    }
    let cases = errs.len();
    let (at, e) = worst(errs).unwrap();
    check(e <= TOL, format!("{cases} cases, worst relative error {e:.2e} ({at}), tolerance {TOL:.0e}"))
}

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: u32| selected.is_empty() || selected.contains(&id);
    let mut failures = 0;
    let mut report = |id: u32, name: &str, started: Instant, outcome: Outcome| {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {id} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] {id} {name} ({secs:.1}s): {detail}");
            }
        }
    };

    let quick: [(u32, &str, Check); 6] = [
        (1, "spectral path matches oracle", oracle_equivalence),
        (2, "grouped limits", grouped_limits),
        (3, "gradients match finite differences", gradients),
        (4, "cancellation exposed by permutation", relaxation),
        (5, "cost scaling in d", scaling),
        (6, "no d x d buffer on the spectral path", working_set),
    ];
    for (id, name, f) in quick {
        if wanted(id) {
            let t = Instant::now();
            report(id, name, t, f());
        }
    }
    // both training criteria share the permuted runs
    if wanted(7) || wanted(8) {
        let t = Instant::now();
        let (c7, c8) = permutation_and_collapse();
        if wanted(7) {
            report(7, "permutation improves decorrelation and probe", t, c7);
        }
        if wanted(8) {
            report(8, "variance terms prevent collapse", t, c8);
        }
    }
    if wanted(9) {
        let t = Instant::now();
        report(9, "original variant matches baselines", t, baseline_fidelity());
    }

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
