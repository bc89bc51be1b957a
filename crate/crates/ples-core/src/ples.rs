//! Partial linear eigenvalue statistics evaluated on a solved spectrum:
//! threshold sums, rank sums, the interpolated partial-sum process, the
//! counting function, and spectral diagnostics.

use crate::determinantal;
use crate::eigensolver::Spectrum;
use crate::ensemble::EnsembleKind;
use crate::limits::counting_variance_normalizer;
use crate::semicircle;
use crate::testfn::{TestFunction, TruncatedFunction};
use crate::{Error, Result, DEFAULT_DELTA, TIME_DELTA};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Which statistic a result row carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatisticKind {
    #[serde(rename = "typeA")]
    TypeA,
    #[serde(rename = "typeB")]
    TypeB,
    #[serde(rename = "process_point")]
    ProcessPoint,
    #[serde(rename = "counting")]
    Counting,
}

impl std::fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StatisticKind::TypeA => "typeA",
            StatisticKind::TypeB => "typeB",
            StatisticKind::ProcessPoint => "process_point",
            StatisticKind::Counting => "counting",
        };
        f.write_str(s)
    }
}

/// One evaluated statistic. centered = raw - centering; normalized is
/// present only when a positive normalizer applies to the statistic.
#[derive(Clone, Debug, Serialize)]
pub struct PlesResult {
    pub statistic_kind: StatisticKind,
    pub raw: f64,
    pub centered: f64,
    pub normalized: Option<f64>,
}

/// How threshold statistics are centered: the deterministic semicircle
/// integral (default, ensemble-agnostic) or the exact finite-n mean from
/// the kernel (GUE spectra only).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenteringMode {
    #[default]
    SemicircleIntegral,
    ExactGue,
}

fn require_sorted(spec: &Spectrum) {
    debug_assert!(
        spec.eigenvalues.windows(2).all(|w| w[0] <= w[1]),
        "spectrum must be sorted ascending"
    );
}

/// Number of eigenvalues at or below u (inclusive threshold).
pub fn counting(spec: &Spectrum, u: f64) -> usize {
    require_sorted(spec);
    spec.eigenvalues.partition_point(|&x| x <= u)
}

fn sum_prefix(spec: &Spectrum, f: &TestFunction, k: usize) -> f64 {
    spec.eigenvalues[..k].iter().map(|&x| f.eval(x)).sum()
}

fn validate_bulk_threshold(u: f64, delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 2.0) {
        return Err(Error::invalid(format!(
            "bulk margin delta = {delta} outside (0, 2)"
        )));
    }
    let (lo, hi) = (-2.0 + delta, 2.0 - delta);
    if !(lo..=hi).contains(&u) {
        return Err(Error::invalid(format!(
            "threshold u = {u} outside bulk window [{lo}, {hi}]"
        )));
    }
    Ok(())
}

fn exact_gue_mean(spec: &Spectrum, f: &TestFunction, u: f64) -> Result<f64> {
    match spec.provenance.ensemble {
        EnsembleKind::GueDense | EnsembleKind::GueTridiagonal => {}
        other => {
            return Err(Error::invalid(format!(
                "exact centering requires a GUE spectrum, got ensemble {other}"
            )))
        }
    }
    determinantal::exact_threshold_mean(spec.n, f, u)
}

/// Threshold statistic with explicit bulk margin and centering mode.
///
/// raw sums f over eigenvalues at or below u; centering is the chosen mean
/// proxy; when f(u) != 0 and n >= 2 the result also carries
/// centered / sqrt(f(u)^2 log n / (2 pi^2)), the scale on which the
/// statistic is asymptotically standard normal.
pub fn type_a_with(
    spec: &Spectrum,
    f: &TestFunction,
    u: f64,
    delta: f64,
    mode: CenteringMode,
) -> Result<PlesResult> {
    validate_bulk_threshold(u, delta)?;
    require_sorted(spec);
    let raw = sum_prefix(spec, f, counting(spec, u));
    let centering = match mode {
        CenteringMode::SemicircleIntegral => semicircle::centering(f, u, spec.n)?,
        CenteringMode::ExactGue => exact_gue_mean(spec, f, u)?,
    };
    let centered = raw - centering;
    let fu = f.eval(u);
    let normalized = if fu != 0.0 && spec.n >= 2 {
        Some(centered / counting_variance_normalizer(fu, spec.n)?)
    } else {
        None
    };
    Ok(PlesResult {
        statistic_kind: StatisticKind::TypeA,
        raw,
        centered,
        normalized,
    })
}

/// Threshold statistic: sum of f over eigenvalues at or below u, centered
/// by the semicircle integral, with u restricted to the default bulk window.
pub fn type_a(spec: &Spectrum, f: &TestFunction, u: f64) -> Result<PlesResult> {
    type_a_with(spec, f, u, DEFAULT_DELTA, CenteringMode::SemicircleIntegral)
}

/// Rank statistic: sum of f over the k smallest eigenvalues, centered by
/// the semicircle integral up to the k/n quantile. No normalizer applies.
pub fn type_b(spec: &Spectrum, f: &TestFunction, k: usize) -> Result<PlesResult> {
    if k == 0 || k > spec.n {
        return Err(Error::invalid(format!(
            "rank k = {k} outside [1, {}]",
            spec.n
        )));
    }
    require_sorted(spec);
    let raw = sum_prefix(spec, f, k);
    let gamma = semicircle::quantile(k as f64 / spec.n as f64)?;
    let centered = raw - semicircle::centering(f, gamma, spec.n)?;
    Ok(PlesResult {
        statistic_kind: StatisticKind::TypeB,
        raw,
        centered,
        normalized: None,
    })
}

/// |A_n[f;u] - (sum of f_u over all eigenvalues + f(u) * count)|.
///
/// The threshold sum splits algebraically into a truncated linear statistic
/// plus f(u) times the counting function; the return value is zero up to
/// floating-point roundoff on every spectrum.
pub fn decomposition_check(spec: &Spectrum, f: &TestFunction, u: f64) -> Result<f64> {
    let fu = TruncatedFunction::new(f.clone(), u)?;
    require_sorted(spec);
    let a = sum_prefix(spec, f, counting(spec, u));
    let tail: f64 = spec.eigenvalues.iter().map(|&x| fu.eval(x)).sum();
    let count = counting(spec, u) as f64;
    Ok((a - (tail + f.eval(u) * count)).abs())
}

/// Partial-sum process point with explicit band margin.
///
/// raw = B_n[f; floor(nt)] + (nt - floor(nt)) f(lambda_{floor(nt)+1}),
/// piecewise linear and continuous in t. The interpolation term is centered
/// by the deterministic proxy f(gamma_{(floor(nt)+1)/n}); its fluctuation is
/// negligible at the process scale and the proxy avoids a nested mean
/// estimate.
pub fn process_point_with(
    spec: &Spectrum,
    f: &TestFunction,
    t: f64,
    margin: f64,
) -> Result<PlesResult> {
    if !(margin > 0.0 && margin <= 0.5) {
        return Err(Error::invalid(format!(
            "band margin = {margin} outside (0, 0.5]"
        )));
    }
    let (lo, hi) = (margin, 1.0 - margin);
    if !(lo..=hi).contains(&t) {
        return Err(Error::invalid(format!(
            "time t = {t} outside [{lo}, {hi}]"
        )));
    }
    require_sorted(spec);
    let n = spec.n;
    let nt = n as f64 * t;
    let k = (nt.floor() as usize).min(n - 1);
    let frac = nt - k as f64;
    let raw = sum_prefix(spec, f, k) + frac * f.eval(spec.eigenvalues[k]);
    let gamma_k = semicircle::quantile(k as f64 / n as f64)?;
    let gamma_next = semicircle::quantile((k + 1) as f64 / n as f64)?;
    let centering = semicircle::centering(f, gamma_k, n)? + frac * f.eval(gamma_next);
    Ok(PlesResult {
        statistic_kind: StatisticKind::ProcessPoint,
        raw,
        centered: raw - centering,
        normalized: None,
    })
}

/// Partial-sum process point on the default time band.
pub fn process_point(spec: &Spectrum, f: &TestFunction, t: f64) -> Result<PlesResult> {
    process_point_with(spec, f, t, TIME_DELTA)
}

/// Counting function as a statistic row: raw = #{lambda <= u}, centered by
/// n F_sc(u), normalized by sqrt(log n / (2 pi^2)) when n >= 2.
pub fn counting_statistic(spec: &Spectrum, u: f64) -> Result<PlesResult> {
    let raw = counting(spec, u) as f64;
    let centered = raw - spec.n as f64 * semicircle::cdf(u);
    let normalized = if spec.n >= 2 {
        Some(centered / counting_variance_normalizer(1.0, spec.n)?)
    } else {
        None
    };
    Ok(PlesResult {
        statistic_kind: StatisticKind::Counting,
        raw,
        centered,
        normalized,
    })
}

/// Resolvent trace s_n(z) = (1/n) sum 1/(lambda_l - z), defined off the
/// real axis. Diagnostic only.
pub fn stieltjes(spec: &Spectrum, z_re: f64, z_im: f64) -> Result<Complex64> {
    if z_im == 0.0 || !z_im.is_finite() || !z_re.is_finite() {
        return Err(Error::invalid(format!(
            "stieltjes point must have finite coordinates and Im z != 0, got {z_re} + {z_im}i"
        )));
    }
    let z = Complex64::new(z_re, z_im);
    let sum: Complex64 = spec
        .eigenvalues
        .iter()
        .map(|&x| (Complex64::new(x, 0.0) - z).inv())
        .sum();
    Ok(sum / spec.n as f64)
}

/// Normalized bulk rigidity score: max over j in [n/10, 9n/10] of
/// |lambda_j - gamma_{j/n}| n / log^2 n. The log^2 n scale is an empirical
/// stand-in for the theoretical deviation rate, calibrated rather than
/// derived, so treat the score as a diagnostic.
pub fn rigidity_diagnostic(spec: &Spectrum) -> Result<f64> {
    let n = spec.n;
    if n < 16 {
        return Err(Error::invalid(format!(
            "rigidity diagnostic needs n >= 16, got {n}"
        )));
    }
    require_sorted(spec);
    let j_lo = ((n as f64 / 10.0).ceil() as usize).max(1);
    let j_hi = ((9.0 * n as f64 / 10.0).floor() as usize).min(n);
    let log2 = (n as f64).ln().powi(2);
    let mut score = 0.0f64;
    for j in j_lo..=j_hi {
        let gamma = semicircle::quantile(j as f64 / n as f64)?;
        let dev = (spec.eigenvalues[j - 1] - gamma).abs() * n as f64 / log2;
        score = score.max(dev);
    }
    Ok(score)
}
