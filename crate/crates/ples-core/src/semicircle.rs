//! The Wigner semicircle law on [-2, 2]: density, CDF, quantiles gamma_t and
//! the centering constants m[f;u] = n * int_{-2}^u f d F_sc.

use crate::error::{Error, Result};
use crate::quad;
use crate::testfn::TestFunction;
use std::f64::consts::PI;

/// Density (1/2pi) sqrt(4 - x^2) on [-2, 2], zero outside.
pub fn density(x: f64) -> f64 {
    if x.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - x * x).sqrt() / (2.0 * PI)
    }
}

/// CDF F_sc(x) = 1/2 + x sqrt(4 - x^2) / (4 pi) + asin(x/2) / pi, clamped to
/// [0, 1] outside the support.
pub fn cdf(x: f64) -> f64 {
    if x <= -2.0 {
        return 0.0;
    }
    if x >= 2.0 {
        return 1.0;
    }
    let v = 0.5 + x * (4.0 - x * x).sqrt() / (4.0 * PI) + (x / 2.0).asin() / PI;
    v.clamp(0.0, 1.0)
}

/// Quantile gamma_t: the solution of F_sc(gamma_t) = t, to |F - t| < 1e-13.
///
/// Newton from x0 = 2(2t - 1) with a bisection fallback whenever the Newton
/// step leaves the current bracket (the density vanishes at the edges, so
/// pure Newton stalls near t = 0 or 1).
pub fn quantile(t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!(
            "quantile probability t = {t} outside [0, 1]"
        )));
    }
    if t == 0.0 {
        return Ok(-2.0);
    }
    if t == 1.0 {
        return Ok(2.0);
    }

    let (mut lo, mut hi) = (-2.0f64, 2.0f64);
    let mut x = 2.0 * (2.0 * t - 1.0);
    for _ in 0..200 {
        let fx = cdf(x) - t;
        if fx.abs() < 1e-14 {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = density(x);
        let newton = if d > 1e-12 { x - fx / d } else { f64::NAN };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-16 {
            break;
        }
    }
    // Bisection has collapsed the bracket to a few ulps; the residual in F is
    // then far below the 1e-13 contract.
    Ok(0.5 * (lo + hi))
}

/// Centering constant m[f;u] = n * int_{-2}^{u} f(x) rho_sc(x) dx.
///
/// Computed under x = 2 cos(theta), which turns the square-root density into
/// the smooth factor (2/pi) sin^2(theta); adaptive refinement to an absolute
/// tolerance of 1e-10 * n.
pub fn centering(f: &TestFunction, u: f64, n: usize) -> Result<f64> {
    if !(-2.0..=2.0).contains(&u) {
        return Err(Error::invalid(format!(
            "centering threshold u = {u} outside [-2, 2]"
        )));
    }
    if n == 0 {
        return Err(Error::invalid("centering dimension n must be >= 1"));
    }
    Ok(n as f64 * mean_under_semicircle(f, u, 1e-10))
}

/// int_{-2}^{u} f rho_sc dx with the theta substitution, to absolute
/// tolerance tol (independent of n; callers scale).
pub(crate) fn mean_under_semicircle(f: &TestFunction, u: f64, tol: f64) -> f64 {
    let theta_u = (u / 2.0).clamp(-1.0, 1.0).acos();
    if theta_u >= PI {
        return 0.0;
    }
    // Kinks of f map to theta = acos(kink / 2) when inside the support.
    let kinks: Vec<f64> = f
        .kinks()
        .into_iter()
        .filter(|k| k.abs() < 2.0)
        .map(|k| (k / 2.0).acos())
        .collect();
    let (val, _err) = quad::adaptive(theta_u, PI, &kinks, tol, |theta| {
        let s = theta.sin();
        f.eval(2.0 * theta.cos()) * (2.0 / PI) * s * s
    });
    val
}
