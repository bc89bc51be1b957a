//! Exact finite-n GUE computations through the determinantal structure:
//! oscillator wave functions, the Christoffel-Darboux kernel K_n and its
//! rescaled form, and quadrature formulas for the exact mean and variance
//! of linear eigenvalue statistics.
//!
//! Scale conventions: upper-case X = sqrt(n) x is the unscaled (wave
//! function) coordinate; lower-case x is the rescaled spectral coordinate
//! where the equilibrium density is supported on [-2, 2].

use crate::error::{Error, Result};
use crate::quad;
use crate::testfn::{Observable, TestFunction};
use crate::DEFAULT_DELTA;

/// Distance below which the Christoffel-Darboux quotient is blended with the
/// diagonal (l'Hopital) form; cancellation dominates the quotient there.
const BLEND_THRESHOLD: f64 = 1e-7;

/// Fold a scaled mantissa/exponent pair into a plain f64, flushing to zero
/// or infinity only when the true value itself leaves the f64 range.
fn fold(m: f64, mut e: i64) -> f64 {
    if m == 0.0 {
        return 0.0;
    }
    let mut x = m;
    while e > 900 {
        x *= 2f64.powi(900);
        e -= 900;
        if !x.is_finite() {
            return x;
        }
    }
    while e < -900 {
        x *= 2f64.powi(-900);
        e += 900;
        if x == 0.0 {
            return 0.0;
        }
    }
    x * 2f64.powi(e as i32)
}

/// Upward recurrence for the oscillator wave functions
/// psi_{l+1} = (x psi_l - sqrt(l) psi_{l-1}) / sqrt(l+1), with
/// psi_0 = (2 pi)^{-1/4} exp(-x^2/4), carried in mantissa/exponent form so
/// deep Gaussian tails (where psi_0 underflows but psi_n does not) survive.
/// Calls `capture(l, value)` with the folded psi_l(x) for every l <= l_max.
fn wavefunction_recurrence(l_max: usize, x: f64, mut capture: impl FnMut(usize, f64)) {
    // psi_0 in base-2 scaled form
    let t = -x * x * 0.25 * std::f64::consts::LOG2_E - 0.25 * (2.0 * std::f64::consts::PI).log2();
    let mut exp = t.floor() as i64;
    let mut b = (t - exp as f64).exp2(); // psi_0 mantissa
    let mut a = 0.0f64; // psi_{-1}
    capture(0, fold(b, exp));
    for l in 0..l_max {
        let c = (x * b - (l as f64).sqrt() * a) / ((l + 1) as f64).sqrt();
        a = b;
        b = c;
        let mag = a.abs().max(b.abs());
        if mag > 2f64.powi(500) {
            a *= 2f64.powi(-1000);
            b *= 2f64.powi(-1000);
            exp += 1000;
        } else if mag > 0.0 && mag < 2f64.powi(-500) {
            a *= 2f64.powi(1000);
            b *= 2f64.powi(1000);
            exp -= 1000;
        }
        capture(l + 1, fold(b, exp));
    }
}

/// psi_l(x) = H_l(x) e^{-x^2/4} with H_l orthonormal for the weight
/// e^{-x^2/2}; computed by the stable upward recurrence.
pub fn oscillator_wavefunction(l: usize, x: f64) -> f64 {
    let mut out = 0.0;
    wavefunction_recurrence(l, x, |j, v| {
        if j == l {
            out = v;
        }
    });
    out
}

/// psi_0 .. psi_{l_max} at one point, folded to f64.
#[cfg(test)]
fn wavefunction_sequence(l_max: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; l_max + 1];
    wavefunction_recurrence(l_max, x, |j, v| out[j] = v);
    out
}

/// (psi_{n-2}, psi_{n-1}, psi_n) at one point; psi_{-1} = 0 for n = 1.
fn psi_triple(n: usize, x: f64) -> (f64, f64, f64) {
    let (mut p2, mut p1, mut p0) = (0.0, 0.0, 0.0);
    wavefunction_recurrence(n, x, |j, v| {
        if j + 2 == n {
            p2 = v;
        }
        if j + 1 == n {
            p1 = v;
        }
        if j == n {
            p0 = v;
        }
    });
    (p2, p1, p0)
}

#[inline]
fn kernel_diagonal(n: usize, psi_nm2: f64, psi_nm1: f64, psi_n: f64) -> f64 {
    let nf = n as f64;
    nf * psi_nm1 * psi_nm1 - (nf * (nf - 1.0)).sqrt() * psi_nm2 * psi_n
}

/// K_n(x, y): Christoffel-Darboux quotient away from the diagonal, the
/// l'Hopital form on it, linearly blended across |x - y| = 1e-7.
/// Precondition (asserted): n >= 1.
pub fn kernel(n: usize, x: f64, y: f64) -> f64 {
    assert!(n >= 1, "kernel order must be >= 1");
    let d = x - y;
    let nf = n as f64;
    if d.abs() >= BLEND_THRESHOLD {
        let (_, xm1, xn) = psi_triple(n, x);
        let (_, ym1, yn) = psi_triple(n, y);
        nf.sqrt() * (xn * ym1 - xm1 * yn) / d
    } else {
        let mid = 0.5 * (x + y);
        let (m2, m1, m0) = psi_triple(n, mid);
        let diag = kernel_diagonal(n, m2, m1, m0);
        if d == 0.0 {
            return diag;
        }
        let w = d.abs() / BLEND_THRESHOLD;
        let (_, xm1, xn) = psi_triple(n, x);
        let (_, ym1, yn) = psi_triple(n, y);
        let cd = nf.sqrt() * (xn * ym1 - xm1 * yn) / d;
        w * cd + (1.0 - w) * diag
    }
}

/// Rescaled kernel on spectral coordinates: sqrt(n) K_n(sqrt(n) x, sqrt(n) y).
/// Its diagonal divided by n is the eigenvalue density of the n-point GUE.
pub fn rescaled_kernel(n: usize, x: f64, y: f64) -> f64 {
    let s = (n as f64).sqrt();
    s * kernel(n, s * x, s * y)
}

/// Integration half-width: the spectral support [-2, 2] plus whichever is
/// larger of the default margin delta and the tail width needed to push the
/// truncated kernel mass below ~e^{-30} relative (large-deviation rate
/// (4/3) n m^{3/2} beyond the edge). Small n therefore get a wider window;
/// n = 1 is just a standard Gaussian needing |X| <~ 10.
pub(crate) fn domain_half_width(n: usize) -> f64 {
    let nf = n as f64;
    let m = (3.0 * (30.0 + nf.ln()) / (4.0 * nf)).powf(2.0 / 3.0);
    2.0 + m.max(DEFAULT_DELTA)
}

/// Cached kernel evaluations on a composite Gauss-Legendre grid over
/// [-L, L] in rescaled coordinates, with >= 20n nodes (resolving the
/// 1/n-wavelength kernel oscillation) and panel boundaries at the kinks of
/// the observable under integration.
pub struct KernelEvaluator {
    n: usize,
    half_width: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    psi_nm1: Vec<f64>,
    psi_n: Vec<f64>,
    diag: Vec<f64>,
}

impl KernelEvaluator {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_kinks(n, &[])
    }

    /// Grid with panel boundaries at each kink, plus a geometric cascade of
    /// refinement panels around it (corner regions of the variance integrand
    /// carry kinked but bounded integrands).
    pub fn with_kinks(n: usize, kinks: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("kernel order must be >= 1"));
        }
        let half_width = domain_half_width(n);
        let inside: Vec<f64> = kinks
            .iter()
            .copied()
            .filter(|k| k.abs() < half_width)
            .collect();
        let min_panels = ((20 * n + 15) / 16).max(32);
        let mut breaks = quad::breaks_with_kinks(-half_width, half_width, &inside, min_panels);
        for &k in &inside {
            quad::insert_graded(&mut breaks, k, 0.5, 12);
        }
        let (nodes, weights) = quad::grid(&breaks);
        let s = (n as f64).sqrt();
        let count = nodes.len();
        let mut psi_nm1 = Vec::with_capacity(count);
        let mut psi_n = Vec::with_capacity(count);
        let mut diag = Vec::with_capacity(count);
        for &x in &nodes {
            let (p2, p1, p0) = psi_triple(n, s * x);
            psi_nm1.push(p1);
            psi_n.push(p0);
            diag.push(s * kernel_diagonal(n, p2, p1, p0));
        }
        Ok(KernelEvaluator {
            n,
            half_width,
            nodes,
            weights,
            psi_nm1,
            psi_n,
            diag,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Rescaled kernel diagonal at node i (the mean-density integrand).
    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// Rescaled kernel between nodes i and j from the cached wave functions.
    #[inline]
    pub fn kernel_pair(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        let nf = self.n as f64;
        let s = nf.sqrt();
        let dx = s * (self.nodes[i] - self.nodes[j]);
        if dx.abs() >= BLEND_THRESHOLD {
            nf * (self.psi_n[i] * self.psi_nm1[j] - self.psi_nm1[i] * self.psi_n[j]) / dx
        } else {
            // distinct quadrature nodes never get this close in practice
            0.5 * (self.diag[i] + self.diag[j])
        }
    }

    /// Integral of the kernel diagonal: n up to quadrature error.
    pub fn trace(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.diag)
            .map(|(w, d)| w * d)
            .sum()
    }

    /// E L_n[phi] = int phi(x) kernel_diag(x) dx.
    pub fn mean_of(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(self.weights.iter().zip(&self.diag))
            .map(|(&x, (w, d))| w * d * phi(x))
            .sum()
    }

    /// Var L_n[phi] = 1/2 int int (phi(x) - phi(y))^2 K^2 dx dy, summed over
    /// unordered node pairs (the diagonal contributes zero).
    pub fn variance_of(&self, phi: impl Fn(f64) -> f64) -> f64 {
        let vals: Vec<f64> = self.nodes.iter().map(|&x| phi(x)).collect();
        let count = self.nodes.len();
        let mut acc = 0.0;
        for i in 0..count {
            let (vi, wi) = (vals[i], self.weights[i]);
            for j in (i + 1)..count {
                let d = vi - vals[j];
                if d != 0.0 {
                    let k = self.kernel_pair(i, j);
                    acc += wi * self.weights[j] * d * d * k * k;
                }
            }
        }
        acc
    }

    /// Orthonormality defect |int psi_l^2 dX - 1| on this grid (unscaled
    /// coordinate, so the weights pick up a factor sqrt(n)).
    pub fn orthonormality_defect(&self, l: usize) -> f64 {
        let s = (self.n as f64).sqrt();
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let v = oscillator_wavefunction(l, s * x);
            acc += s * w * v * v;
        }
        (acc - 1.0).abs()
    }
}

fn require_not_indicator(phi: &Observable) -> Result<()> {
    if phi.is_indicator() {
        return Err(Error::invalid(
            "indicator observables are admitted only through counting_mean_variance",
        ));
    }
    Ok(())
}

/// Exact E L_n[phi] by kernel quadrature.
pub fn exact_mean(n: usize, phi: &Observable) -> Result<f64> {
    require_not_indicator(phi)?;
    let ev = KernelEvaluator::with_kinks(n, &phi.kinks())?;
    Ok(ev.mean_of(|x| phi.eval(x)))
}

/// Exact Var L_n[phi] by tensor-product kernel quadrature, with the grid
/// split along the kink lines of truncated observables.
pub fn exact_variance(n: usize, phi: &Observable) -> Result<f64> {
    require_not_indicator(phi)?;
    let ev = KernelEvaluator::with_kinks(n, &phi.kinks())?;
    Ok(ev.variance_of(|x| phi.eval(x)))
}

/// Mean and variance of the counting function N_n(-inf, u]. The indicator
/// is admitted here only; panels split at u so no node straddles the jump.
/// The variance reduces to the positive cross integral
/// int_{x <= u} int_{y > u} K^2 dy dx.
pub fn counting_mean_variance(n: usize, u: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::invalid("kernel order must be >= 1"));
    }
    if !u.is_finite() {
        return Err(Error::invalid("counting threshold must be finite"));
    }
    let half_width = domain_half_width(n);
    if u <= -half_width {
        return Ok((0.0, 0.0));
    }
    if u >= half_width {
        return Ok((n as f64, 0.0));
    }
    let ev = KernelEvaluator::with_kinks(n, &[u])?;
    let count = ev.nodes.len();
    let mut mean = 0.0;
    for i in 0..count {
        if ev.nodes[i] <= u {
            mean += ev.weights[i] * ev.diag[i];
        }
    }
    let left: Vec<usize> = (0..count).filter(|&i| ev.nodes[i] <= u).collect();
    let right: Vec<usize> = (0..count).filter(|&i| ev.nodes[i] > u).collect();
    let mut var = 0.0;
    for &i in &left {
        let wi = ev.weights[i];
        for &j in &right {
            let k = ev.kernel_pair(i, j);
            var += wi * ev.weights[j] * k * k;
        }
    }
    Ok((mean, var))
}

fn threshold_evaluator(n: usize, f: &TestFunction, u: f64) -> Result<KernelEvaluator> {
    if matches!(f, TestFunction::Indicator(_)) {
        return Err(Error::invalid(
            "indicator observables are admitted only through counting_mean_variance",
        ));
    }
    if !u.is_finite() {
        return Err(Error::invalid("threshold must be finite"));
    }
    let mut kinks = f.kinks();
    kinks.push(u);
    KernelEvaluator::with_kinks(n, &kinks)
}

/// Exact mean of the threshold statistic sum of f(lambda) over lambda <= u:
/// the kernel integral of the jump observable f(x) 1_{x <= u}, with grid
/// panels split at u so no node straddles the jump.
pub fn exact_threshold_mean(n: usize, f: &TestFunction, u: f64) -> Result<f64> {
    let ev = threshold_evaluator(n, f, u)?;
    if u <= -ev.half_width {
        return Ok(0.0);
    }
    Ok(ev.mean_of(|x| if x <= u { f.eval(x) } else { 0.0 }))
}

/// Exact variance of the threshold statistic. When f(u) != 0 the jump at u
/// contributes a counting-function part that grows like log n; when
/// f(u) = 0 this coincides with the variance of the truncated observable.
pub fn exact_threshold_variance(n: usize, f: &TestFunction, u: f64) -> Result<f64> {
    let ev = threshold_evaluator(n, f, u)?;
    if u <= -ev.half_width {
        return Ok(0.0);
    }
    Ok(ev.variance_of(|x| if x <= u { f.eval(x) } else { 0.0 }))
}

/// Two-term bulk asymptotic for the rescaled kernel diagonal:
/// (n/2pi) sqrt(4-x^2) + (1/4pi)(1/(x-2) - 1/(x+2)) cos(n Phi(x)) with
/// Phi(x) = int_x^2 sqrt(4-y^2) dy; remainder O(1/n) in the bulk.
pub fn bulk_kernel_asymptotic(n: usize, x: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("kernel order must be >= 1"));
    }
    let lim = 2.0 - DEFAULT_DELTA;
    if !(-lim..=lim).contains(&x) {
        return Err(Error::invalid(format!(
            "bulk asymptotic needs x in [-{lim}, {lim}], got {x}"
        )));
    }
    let nf = n as f64;
    let root = (4.0 - x * x).sqrt();
    let phase = std::f64::consts::PI - 0.5 * x * root - 2.0 * (0.5 * x).asin();
    let leading = nf * root / (2.0 * std::f64::consts::PI);
    let amplitude = (1.0 / (x - 2.0) - 1.0 / (x + 2.0)) / (4.0 * std::f64::consts::PI);
    Ok(leading + amplitude * (nf * phase).cos())
}

/// Gauss-Legendre check grid for the projection property tests: the
/// unscaled-coordinate nodes and weights of an evaluator grid.
#[cfg(test)]
fn unscaled_grid(n: usize) -> (Vec<f64>, Vec<f64>) {
    let ev = KernelEvaluator::new(n).expect("evaluator");
    let s = (n as f64).sqrt();
    let xs = ev.nodes.iter().map(|&x| s * x).collect();
    let ws = ev.weights.iter().map(|&w| s * w).collect();
    (xs, ws)
}
