//! Acceptance suite: twelve numbered checks covering kernel identities,
//! closed-form limit oracles, exact-vs-Monte-Carlo agreement, CLT shape and
//! scale at desk-size dimensions, process covariance, four-moment
//! universality, variance bounds for narrow ramps, spectral rigidity, and
//! eigensolver cross-validation.
//!
//! Every check prints one `[criterion NN] PASS/FAIL` line with its measured
//! values before asserting, so failures document themselves. Seeds are
//! frozen: statistical thresholds mean nothing if seeds are shopped after
//! the fact. Check 6's variance-band clause is a known, documented failure
//! at this dimension (see its diagnostic output and plans/README.md); the
//! KS clause of the same check passes.

use num_complex::Complex64;
use ples_core::determinantal::{
    self, counting_mean_variance, exact_mean, exact_threshold_mean, exact_threshold_variance,
    exact_variance, KernelEvaluator,
};
use ples_core::eigensolver::{
    eigenvalues_bisection, eigenvalues_dense, eigenvalues_tridiagonal,
};
use ples_core::ensemble::{
    sample_gue_tridiagonal, HermitianMatrix, SampleSeed, TridiagonalMatrix,
};
use ples_core::harness::{ExperimentPlan, ExperimentReport, StatisticReport};
use ples_core::limits::{brute_force_limit_variance, limit_variance};
use ples_core::ples::rigidity_diagnostic;
use ples_core::testfn::{Observable, TestFunction};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Frozen master seed shared by every stochastic check; small offsets keep
/// the sampling streams of different checks disjoint.
const MASTER: u64 = 20260819;

fn plan_path(name: &str) -> std::path::PathBuf {
    let mut p = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.pop();
    p.pop();
    p.push("plans");
    p.push(name);
    p
}

fn run_plan(name: &str) -> ExperimentReport {
    let plan = ExperimentPlan::from_path(&plan_path(name)).expect("shipped plan parses");
    ples_core::harness::run(&plan).expect("plan runs")
}

fn single_row(report: &ExperimentReport) -> &StatisticReport {
    assert_eq!(report.rows.len(), 1, "plan produces one row");
    &report.rows[0]
}

fn sample_moments(values: &[f64]) -> (f64, f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / m;
    (mean, var, m4)
}

fn verdict_line(criterion: u32, passed: bool, detail: &str) {
    println!(
        "[criterion {criterion:02}] {}: {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
}

#[test]
fn c01_kernel_trace_equals_dimension() {
    let mut worst = 0.0f64;
    for n in [1usize, 8, 32, 128] {
        let ev = KernelEvaluator::new(n).expect("evaluator builds");
        let rel = (ev.trace() - n as f64).abs() / n as f64;
        worst = worst.max(rel);
    }
    let passed = worst <= 1e-6;
    verdict_line(
        1,
        passed,
        &format!("kernel trace within {worst:.3e} relative of n over n in {{1, 8, 32, 128}} (tolerance 1e-6)"),
    );
    assert!(passed, "trace defect {worst:.3e} exceeds 1e-6");
}

#[test]
fn c02_kernel_projection_is_idempotent() {
    // reproducing property: integrating the kernel against itself returns
    // the kernel; checked at 25 seeded points in rescaled coordinates
    let n = 50usize;
    let ev = KernelEvaluator::new(n).expect("evaluator builds");
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER);
    let mut worst = 0.0f64;
    for _ in 0..25 {
        let x = (rand::Rng::random::<f64>(&mut rng) - 0.5) * 1.6 * ev.half_width();
        let z = (rand::Rng::random::<f64>(&mut rng) - 0.5) * 1.6 * ev.half_width();
        let mut acc = 0.0;
        for (i, &y) in ev.nodes().iter().enumerate() {
            acc += ev.weights()[i]
                * determinantal::rescaled_kernel(n, x, y)
                * determinantal::rescaled_kernel(n, y, z);
        }
        worst = worst.max((acc - determinantal::rescaled_kernel(n, x, z)).abs());
    }
    let passed = worst <= 1e-6;
    verdict_line(
        2,
        passed,
        &format!("projection residual {worst:.3e} over 25 seeded pairs at n = 50 (tolerance 1e-6)"),
    );
    assert!(passed, "projection residual {worst:.3e} exceeds 1e-6");
}

#[test]
fn c03_limit_variances_match_oracles() {
    // closed forms at the spectral edge: V[x] = 1, V[x^2] = 2
    let v1 = limit_variance(&TestFunction::Identity, 2.0).unwrap().value;
    let v2 = limit_variance(&TestFunction::Square, 2.0).unwrap().value;
    let edge_err = (v1 - 1.0).abs().max((v2 - 2.0).abs());

    // quadrature vs a midpoint-cell Riemann oracle at interior thresholds
    let mut worst_rel = 0.0f64;
    for f in [TestFunction::Identity, TestFunction::Square, TestFunction::Cube] {
        for u in [0.0, 1.0] {
            let fast = limit_variance(&f, u).unwrap().value;
            let brute = brute_force_limit_variance(&f, u, 2000).unwrap();
            worst_rel = worst_rel.max((fast - brute).abs() / brute.abs());
        }
    }
    let passed = edge_err <= 1e-6 && worst_rel <= 1e-4;
    verdict_line(
        3,
        passed,
        &format!(
            "edge closed forms within {edge_err:.3e} (tolerance 1e-6); quadrature vs Riemann oracle within {worst_rel:.3e} relative over {{x, x2, x3}} x {{0, 1}} (tolerance 1e-4)"
        ),
    );
    assert!(passed, "edge error {edge_err:.3e}, oracle deviation {worst_rel:.3e}");
}

#[test]
fn c04_exact_moments_match_monte_carlo() {
    // exact kernel mean/variance vs 10^4 samples, fast tridiagonal path
    let samples = 10_000u64;
    let mut worst_z = 0.0f64;
    let mut report = String::new();
    for n in [16usize, 64] {
        let mut sums = vec![Vec::with_capacity(samples as usize); 3];
        for s in 0..samples {
            let m = sample_gue_tridiagonal(
                n,
                SampleSeed {
                    master: MASTER + 2,
                    stream: s,
                },
            )
            .unwrap();
            let sp = eigenvalues_tridiagonal(&m).unwrap();
            sums[0].push(sp.sum());
            sums[1].push(sp.sum_sq());
            sums[2].push(
                sp.eigenvalues
                    .iter()
                    .filter(|&&x| x <= 0.0)
                    .map(|&x| x * x)
                    .sum::<f64>(),
            );
        }
        let exact: [(&str, f64, f64); 3] = [
            (
                "x",
                exact_mean(n, &Observable::Plain(TestFunction::Identity)).unwrap(),
                exact_variance(n, &Observable::Plain(TestFunction::Identity)).unwrap(),
            ),
            (
                "x2",
                exact_mean(n, &Observable::Plain(TestFunction::Square)).unwrap(),
                exact_variance(n, &Observable::Plain(TestFunction::Square)).unwrap(),
            ),
            (
                "x2 below 0",
                exact_threshold_mean(n, &TestFunction::Square, 0.0).unwrap(),
                exact_threshold_variance(n, &TestFunction::Square, 0.0).unwrap(),
            ),
        ];
        for (k, (name, em, ev)) in exact.iter().enumerate() {
            let (mean, var, m4) = sample_moments(&sums[k]);
            let mf = samples as f64;
            let z_mean = (mean - em) / (var / mf).sqrt();
            let z_var = (var - ev) / ((m4 - var * var).max(f64::MIN_POSITIVE) / mf).sqrt();
            worst_z = worst_z.max(z_mean.abs()).max(z_var.abs());
            report.push_str(&format!(
                " [n={n} {name}: z_mean {z_mean:+.2}, z_var {z_var:+.2}]"
            ));
        }
    }
    let passed = worst_z <= 3.0;
    verdict_line(
        4,
        passed,
        &format!("exact vs Monte Carlo within 3 standard errors; worst |z| = {worst_z:.2};{report}"),
    );
    assert!(passed, "worst |z| = {worst_z:.2} exceeds 3;{report}");
}

#[test]
fn c05_counting_variance_grows_with_the_expected_log_slope() {
    let ns = [64usize, 128, 256, 512];
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &n in &ns {
        let (_, var) = counting_mean_variance(n, 0.0).unwrap();
        xs.push((n as f64).ln());
        ys.push(var);
    }
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let target = 1.0 / (2.0 * PI * PI);
    let rel = (slope - target).abs() / target;
    let passed = rel <= 0.2;
    verdict_line(
        5,
        passed,
        &format!(
            "exact counting variance slope {slope:.6} vs 1/(2 pi^2) = {target:.6} in log n over n in {{64..512}}; relative deviation {rel:.3} (tolerance 0.2)"
        ),
    );
    assert!(passed, "slope {slope:.6} deviates {rel:.3} from {target:.6}");
}

#[test]
fn c06_normalized_threshold_statistic_in_the_growing_scale_regime() {
    // KS normality of the normalized statistic, and its centered variance
    // against the counting growth scale f(u)^2 log n / (2 pi^2), at n = 1024
    let report = run_plan("normalized-threshold-clt.toml");
    let row = single_row(&report);
    let scalar = row.scalar.as_ref().expect("scalar row");
    let ks = scalar.ks.as_ref().expect("KS computed");
    let scale = scalar
        .comparators
        .counting_scale
        .expect("growth-scale comparator");
    let ratio = scalar.variance_centered / scale;
    let ks_ok = ks.p_value > 0.01;
    let band_ok = (0.8..=1.2).contains(&ratio);

    // diagnostics pinning where the gap comes from: the statistic tracks the
    // exact finite-n kernel variance, and the variance increment across a
    // doubling of n realizes the predicted logarithmic growth coefficient;
    // only the order-one offset (outside the growth term) breaks the band
    let f = TestFunction::Square;
    let exact_1024 = exact_threshold_variance(1024, &f, 0.5).unwrap();
    let exact_512 = exact_threshold_variance(512, &f, 0.5).unwrap();
    let growth = |n: f64| 0.0625 / (2.0 * PI * PI) * n.ln();
    let against_exact = scalar.variance_centered / exact_1024;
    let log_slope_ratio = (exact_1024 - exact_512) / (growth(1024.0) - growth(512.0));

    let passed = ks_ok && band_ok;
    verdict_line(
        6,
        passed,
        &format!(
            "KS p = {:.4} (need > 0.01, {}); centered variance / growth scale = {ratio:.2} (need within [0.8, 1.2], {}); diagnostics: empirical / exact kernel variance = {against_exact:.3}, exact variance increment over n = 512 -> 1024 realizes {log_slope_ratio:.3} of the predicted log-growth coefficient; the order-one background ({exact_1024:.3}) dwarfs the growth term ({:.4}) at this dimension",
            ks.p_value,
            if ks_ok { "holds" } else { "fails" },
            if band_ok { "holds" } else { "fails" },
            growth(1024.0),
        ),
    );
    assert!(
        passed,
        "growth-scale band unattainable at n = 1024: ratio {ratio:.2} vs [0.8, 1.2] while the empirical variance matches the exact kernel value to {against_exact:.3} and the exact log-growth coefficient is realized at {log_slope_ratio:.3}; the normality clause {} (p = {:.4})",
        if ks_ok { "passes" } else { "fails" },
        ks.p_value,
    );
}

#[test]
fn c07_centered_statistics_meet_their_order_one_limits() {
    let report = run_plan("centered-clt.toml");
    assert_eq!(report.rows.len(), 2, "two statistics in the plan");
    let mut passed = true;
    let mut details = Vec::new();
    for row in &report.rows {
        let scalar = row.scalar.as_ref().expect("scalar row");
        let ks = scalar.ks.as_ref().expect("KS computed");
        let limit = scalar.comparators.limit_variance.expect("limit comparator");
        let ratio = scalar.variance_centered / limit;
        let ok = ks.p_value > 0.01 && (0.85..=1.15).contains(&ratio);
        passed &= ok;
        details.push(format!(
            "{}: KS p = {:.4}, variance ratio = {:.4}",
            row.label, ks.p_value, ratio
        ));
    }
    verdict_line(
        7,
        passed,
        &format!(
            "normality and variance ratio within [0.85, 1.15] at n = 512; {}",
            details.join("; ")
        ),
    );
    assert!(passed, "{}", details.join("; "));
}

#[test]
fn c08_process_covariance_matches_the_limit_on_a_grid() {
    let report = run_plan("process-covariance.toml");
    let row = single_row(&report);
    let cov = row.covariance.as_ref().expect("covariance report");
    let passed = cov.max_abs_z < 4.0;
    verdict_line(
        8,
        passed,
        &format!(
            "max |empirical - theoretical| z-score {:.3} on grid {{0.3, 0.5, 0.7}} at n = 256 (tolerance 4)",
            cov.max_abs_z
        ),
    );
    assert!(passed, "max z {:.3} reaches 4", cov.max_abs_z);
}

#[test]
fn c09_gue_and_matched_wigner_share_the_fixed_rank_limit() {
    let report = run_plan("universality-two-sample.toml");
    let row = single_row(&report);
    let two = row.two_sample.as_ref().expect("two-sample comparison");
    let passed = two.p_value > 0.01;
    verdict_line(
        9,
        passed,
        &format!(
            "two-sample KS between GUE and matched-atom Wigner: D = {:.4}, p = {:.4} at n = 256, 2000 samples each (need p > 0.01)",
            two.ks_statistic, two.p_value
        ),
    );
    assert!(passed, "universality p = {:.4} at the frozen seed", two.p_value);
}

#[test]
fn c10_narrow_ramp_variance_obeys_the_gap_squared_log_bound() {
    // Lipschitz functions constant outside [a, b] have variance bounded by
    // C (b-a)^2 (|log(b-a)| + 1) with C depending only on the Lipschitz
    // constant. The shipped unit ramp has slope 1/(b-a), so scaling it by
    // (b-a) gives a slope-1 family; one C fitted on the two coarsest gaps
    // must then cover the finer ones.
    let gaps = [0.4f64, 0.2, 0.1, 0.05];
    let mut ratios = Vec::new();
    for &w in &gaps {
        let ramp = TestFunction::plateau(-w / 2.0, w / 2.0).unwrap();
        let unit_var = exact_variance(64, &Observable::Plain(ramp)).unwrap();
        // slope-1 variance is w^2 * unit_var; dividing by the bound
        // w^2 (|log w| + 1) leaves unit_var / (|log w| + 1)
        ratios.push(unit_var / (w.ln().abs() + 1.0));
    }
    let fitted_c = 1.05 * ratios[0].max(ratios[1]);
    let passed = ratios[2] <= fitted_c && ratios[3] <= fitted_c && ratios.iter().all(|r| *r > 0.0);
    verdict_line(
        10,
        passed,
        &format!(
            "bound ratios {:.4}, {:.4}, {:.4}, {:.4} across gaps {{0.4, 0.2, 0.1, 0.05}} at n = 64; one constant fitted on the coarse gaps ({fitted_c:.4}) covers the fine ones",
            ratios[0], ratios[1], ratios[2], ratios[3]
        ),
    );
    assert!(
        passed,
        "ratios {ratios:?} not covered by fitted constant {fitted_c:.4}"
    );
}

#[test]
fn c11_spectral_rigidity_and_median_eigenvalue_scale() {
    // rigidity score over the middle 80% of ranks, 500 samples at n = 1024
    let mut below = 0usize;
    let mut max_score = 0.0f64;
    let threshold = 0.4;
    for s in 0..500u64 {
        let m = sample_gue_tridiagonal(
            1024,
            SampleSeed {
                master: MASTER,
                stream: s,
            },
        )
        .unwrap();
        let sp = eigenvalues_tridiagonal(&m).unwrap();
        let score = rigidity_diagnostic(&sp).unwrap();
        max_score = max_score.max(score);
        if score <= threshold {
            below += 1;
        }
    }
    let rigidity_ok = below >= 495;

    // Var(median eigenvalue) * n^2 / log n stable within a factor 2
    let mut scaled = Vec::new();
    for n in [128usize, 256, 512] {
        let mut medians = Vec::with_capacity(2000);
        for s in 0..2000u64 {
            let m = sample_gue_tridiagonal(
                n,
                SampleSeed {
                    master: MASTER + 1,
                    stream: s,
                },
            )
            .unwrap();
            let sp = eigenvalues_tridiagonal(&m).unwrap();
            medians.push(sp.eigenvalues[n / 2 - 1]);
        }
        let (_, var, _) = sample_moments(&medians);
        scaled.push(var * (n * n) as f64 / (n as f64).ln());
    }
    let spread = scaled.iter().cloned().fold(f64::MIN, f64::max)
        / scaled.iter().cloned().fold(f64::MAX, f64::min);
    let ladder_ok = spread <= 2.0;

    let passed = rigidity_ok && ladder_ok;
    verdict_line(
        11,
        passed,
        &format!(
            "rigidity score <= {threshold} in {below}/500 samples at n = 1024 (need >= 495; max observed {max_score:.3}); median-eigenvalue variance times n^2 / log n = {:.3}, {:.3}, {:.3} over n in {{128, 256, 512}}, spread factor {spread:.3} (tolerance 2)",
            scaled[0], scaled[1], scaled[2]
        ),
    );
    assert!(
        passed,
        "rigidity {below}/500 (max {max_score:.3}), ladder spread {spread:.3}"
    );
}

#[test]
fn c12_eigensolvers_cross_validate() {
    // implicit-shift QL vs Sturm bisection on 100 seeded matrices
    let tol = 1e-11;
    let mut worst = 0.0f64;
    for s in 0..100u64 {
        let m = sample_gue_tridiagonal(
            32,
            SampleSeed {
                master: MASTER + 4,
                stream: s,
            },
        )
        .unwrap();
        let a = eigenvalues_tridiagonal(&m).unwrap();
        a.check_identities(m.trace(), m.frobenius_sq(), m.max_abs_entry())
            .expect("spectral identities hold");
        let b = eigenvalues_bisection(&m, tol).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            worst = worst.max((x - y).abs());
        }
    }
    let agree_ok = worst <= 10.0 * tol;

    // dense path on closed-form cases
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let two = HermitianMatrix::from_entries(
        2,
        vec![c(1.0, 0.0), c(1.0, -1.0), c(1.0, 1.0), c(2.0, 0.0)],
    )
    .unwrap();
    // eigenvalues of [[1, 1-i], [1+i, 2]]: (3 +- sqrt(1 + 8)) / 2 = {0, 3}
    let s2 = eigenvalues_dense(&two).unwrap();
    let dev2 = (s2.eigenvalues[0] - 0.0)
        .abs()
        .max((s2.eigenvalues[1] - 3.0).abs());

    let three = HermitianMatrix::from_entries(
        3,
        vec![
            c(2.0, 0.0), c(1.0, 0.0), c(0.0, 0.0),
            c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0),
            c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0),
        ],
    )
    .unwrap();
    // second-difference stencil: eigenvalues {2 - sqrt 2, 2, 2 + sqrt 2}
    let s3 = eigenvalues_dense(&three).unwrap();
    let expect3 = [2.0 - 2f64.sqrt(), 2.0, 2.0 + 2f64.sqrt()];
    let dev3 = s3
        .eigenvalues
        .iter()
        .zip(&expect3)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let closed_ok = dev2 <= 1e-12 && dev3 <= 1e-12;

    let passed = agree_ok && closed_ok;
    verdict_line(
        12,
        passed,
        &format!(
            "QL vs bisection within {worst:.3e} on 100 matrices (tolerance {:.1e}); dense closed-form deviations {dev2:.2e} and {dev3:.2e} (tolerance 1e-12)",
            10.0 * tol
        ),
    );
    assert!(
        passed,
        "QL-vs-bisection worst {worst:.3e}, closed-form devs {dev2:.2e} / {dev3:.2e}"
    );
    // a non-Hermitian table must be rejected by construction
    assert!(
        HermitianMatrix::from_entries(2, vec![c(1.0, 0.0), c(1.0, 1.0), c(1.0, 1.0), c(2.0, 0.0)])
            .is_err(),
        "non-Hermitian entries accepted"
    );
    let _ = TridiagonalMatrix::new(vec![0.0, 0.0], vec![1.0]).unwrap();
}
