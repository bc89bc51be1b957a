//! Limiting (n -> infinity) variance and covariance formulas for partial
//! linear eigenvalue statistics, computed by singularity-removing quadrature.
//!
//! The bilinear form is
//!   (1/4 pi^2) int int q_s(l, m) q_t(l, m) (4 - l m) / (sqrt(4-l^2) sqrt(4-m^2)) dl dm
//! over [-2, 2]^2, with q_r the difference quotient of the truncated test
//! function. The substitution l = 2 cos(theta), m = 2 cos(phi) absorbs the
//! edge square-root singularities exactly, leaving the smooth factor
//! (4 - 4 cos(theta) cos(phi)) d theta d phi with kinks only along
//! theta = arccos(u/2).

use crate::error::{Error, Result};
use crate::quad;
use crate::semicircle;
use crate::testfn::{difference_quotient, TestFunction, TruncatedFunction};
use crate::TIME_DELTA;
use serde::Serialize;
use std::f64::consts::PI;

/// A computed limiting variance with its inputs and quadrature diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct LimitVariance {
    pub value: f64,
    pub f: TestFunction,
    /// One threshold for a plain limit variance, two for a covariance.
    pub thresholds: Vec<f64>,
    /// |value at 2P panels - value at P panels|, a practical error bound.
    pub quadrature_error_estimate: f64,
    /// Panels per axis in the fine pass.
    pub panels: usize,
}

/// Map lambda-space kinks to theta = arccos(u/2) break points in (0, pi).
fn theta_breaks(kinks_lambda: &[f64], panels: usize) -> Vec<f64> {
    let kt: Vec<f64> = kinks_lambda
        .iter()
        .filter(|k| k.abs() < 2.0 - 1e-12)
        .map(|&k| (k / 2.0).acos())
        .collect();
    let mut breaks = quad::breaks_with_kinks(0.0, PI, &kt, panels);
    for &t in &kt {
        quad::insert_graded(&mut breaks, t, 0.5, 12);
    }
    breaks
}

/// Tensor quadrature of the bilinear form at a fixed panel budget.
/// Returns (integral, panels per axis actually used).
fn bilinear_pass(
    fs: &TruncatedFunction,
    ft: &TruncatedFunction,
    panels: usize,
) -> (f64, usize) {
    let mut kinks = fs.kinks();
    kinks.extend(ft.kinks());
    let breaks = theta_breaks(&kinks, panels);
    let (th, w) = quad::grid(&breaks);
    let count = th.len();
    let lam: Vec<f64> = th.iter().map(|t| 2.0 * t.cos()).collect();
    let cs: Vec<f64> = th.iter().map(|t| t.cos()).collect();
    let same = std::ptr::eq(fs, ft) || fs == ft;
    // integrand is symmetric under (i,j) swap, so sum i <= j and double
    let mut acc = 0.0;
    for i in 0..count {
        for j in i..count {
            let qs = difference_quotient(fs, lam[i], lam[j]);
            let qt = if same {
                qs
            } else {
                difference_quotient(ft, lam[i], lam[j])
            };
            let term = w[i] * w[j] * qs * qt * (4.0 - 4.0 * cs[i] * cs[j]);
            acc += if i == j { term } else { 2.0 * term };
        }
    }
    (acc / (4.0 * PI * PI), breaks.len() - 1)
}

/// Two-resolution evaluation: value from the fine pass, error estimate from
/// the coarse/fine difference.
fn bilinear_form(fs: &TruncatedFunction, ft: &TruncatedFunction) -> (f64, f64, usize) {
    let (coarse, _) = bilinear_pass(fs, ft, 24);
    let (fine, panels) = bilinear_pass(fs, ft, 48);
    (fine, (fine - coarse).abs(), panels)
}

/// V_GUE[f_u]: the limiting variance of the partial linear statistic of f
/// truncated at u. u = 2 gives the untruncated statistic.
pub fn limit_variance(f: &TestFunction, u: f64) -> Result<LimitVariance> {
    let fu = TruncatedFunction::new(f.clone(), u)?;
    let (value, err, panels) = bilinear_form(&fu, &fu);
    Ok(LimitVariance {
        // clamp quadrature noise for a.e.-constant integrands
        value: value.max(0.0),
        f: f.clone(),
        thresholds: vec![u],
        quadrature_error_estimate: err,
        panels,
    })
}

/// Covariance of the limiting Gaussian process at times s, t in the band
/// [TIME_DELTA, 1 - TIME_DELTA]: the bilinear form between f truncated at the
/// quantiles gamma_s and gamma_t.
pub fn process_covariance_full(f: &TestFunction, s: f64, t: f64) -> Result<LimitVariance> {
    let lo = TIME_DELTA;
    let hi = 1.0 - TIME_DELTA;
    for (name, v) in [("s", s), ("t", t)] {
        if !(lo..=hi).contains(&v) {
            return Err(Error::invalid(format!(
                "time {name} = {v} outside [{lo}, {hi}]"
            )));
        }
    }
    let gs = semicircle::quantile(s)?;
    let gt = semicircle::quantile(t)?;
    let fs = TruncatedFunction::new(f.clone(), gs)?;
    let ft = TruncatedFunction::new(f.clone(), gt)?;
    let (value, err, panels) = bilinear_form(&fs, &ft);
    Ok(LimitVariance {
        value,
        f: f.clone(),
        thresholds: vec![gs, gt],
        quadrature_error_estimate: err,
        panels,
    })
}

/// Covariance value only.
pub fn process_covariance(f: &TestFunction, s: f64, t: f64) -> Result<f64> {
    Ok(process_covariance_full(f, s, t)?.value)
}

/// Normalizer for the counting-regime CLT: sqrt(f(u)^2 log(n) / (2 pi^2)).
/// Rejects f(u) = 0, where the smooth regime applies instead.
pub fn counting_variance_normalizer(f_at_u: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("normalizer needs n >= 2"));
    }
    if f_at_u == 0.0 {
        return Err(Error::invalid(
            "f(u) = 0 puts the statistic in the smooth-variance regime; no log-n normalizer",
        ));
    }
    Ok((f_at_u * f_at_u * (n as f64).ln() / (2.0 * PI * PI)).sqrt())
}

/// Independent brute-force oracle for V_GUE[f_u]: a midpoint Riemann sum on
/// the raw (lambda, mu) square with `cells` cells per axis, where the smooth
/// factor q^2 (4 - lambda mu) is evaluated at cell midpoints and the edge
/// weight 1/sqrt(4-x^2) is integrated exactly per cell as a difference of
/// arcsines. Slowly convergent but structurally unrelated to the
/// theta-substitution path.
pub fn brute_force_limit_variance(f: &TestFunction, u: f64, cells: usize) -> Result<f64> {
    if cells < 2 {
        return Err(Error::invalid("need at least 2 cells per axis"));
    }
    let fu = TruncatedFunction::new(f.clone(), u)?;
    let h = 4.0 / cells as f64;
    let mut mid = Vec::with_capacity(cells);
    let mut mass = Vec::with_capacity(cells);
    for i in 0..cells {
        let a = -2.0 + h * i as f64;
        let b = (a + h).min(2.0);
        mid.push(0.5 * (a + b));
        mass.push((b / 2.0).asin() - (a / 2.0).asin());
    }
    let mut acc = 0.0;
    for i in 0..cells {
        for j in i..cells {
            let q = difference_quotient(&fu, mid[i], mid[j]);
            let term = q * q * (4.0 - mid[i] * mid[j]) * mass[i] * mass[j];
            acc += if i == j { term } else { 2.0 * term };
        }
    }
    Ok(acc / (4.0 * PI * PI))
}
