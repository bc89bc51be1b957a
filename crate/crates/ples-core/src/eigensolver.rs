//! From-scratch Hermitian eigenvalue computation.
//!
//! Dense path: complex Householder reduction to real symmetric tridiagonal
//! form (eigenvalues only, so no transform accumulation), then implicit-shift
//! QL with the Wilkinson shift. Independent cross-check path: Sturm-sequence
//! sign-count bisection from Gershgorin bounds.

use crate::ensemble::{EnsembleKind, HermitianMatrix, SampleSeed, TridiagonalMatrix};
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Which solve path produced a Spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverPath {
    DenseQl,
    TridiagonalQl,
    Bisection,
}

impl fmt::Display for SolverPath {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolverPath::DenseQl => "dense-ql",
            SolverPath::TridiagonalQl => "tridiagonal-ql",
            SolverPath::Bisection => "bisection",
        };
        write!(out, "{s}")
    }
}

/// Where a Spectrum came from: sampler, seed pair, solve path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub ensemble: EnsembleKind,
    pub seed: SampleSeed,
    pub solver: SolverPath,
}

/// Ordered eigenvalue list lambda_1 <= ... <= lambda_n with provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Spectrum {
    pub n: usize,
    pub eigenvalues: Vec<f64>,
    pub provenance: Provenance,
}

impl Spectrum {
    /// Build a spectrum from raw eigenvalues (sorted internally). Intended
    /// for externally supplied or synthetic spectra; the solver paths attach
    /// provenance automatically.
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("spectrum must contain at least one eigenvalue"));
        }
        if eigenvalues.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("spectrum contains a non-finite eigenvalue"));
        }
        eigenvalues.sort_by(f64::total_cmp);
        Ok(Spectrum {
            n: eigenvalues.len(),
            eigenvalues,
            provenance,
        })
    }

    /// Sum of eigenvalues; equals the input trace up to roundoff.
    pub fn sum(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Sum of squared eigenvalues; equals the squared Frobenius norm.
    pub fn sum_sq(&self) -> f64 {
        self.eigenvalues.iter().map(|x| x * x).sum()
    }

    /// Conservation checks against the input matrix: trace to within
    /// 1e-10 n max|entry| and squared Frobenius norm to within
    /// 1e-10 n max|entry|^2. Cheap enough to run on every sample.
    pub fn check_identities(&self, trace: f64, frobenius_sq: f64, max_abs: f64) -> Result<()> {
        let n = self.n as f64;
        let dt = (self.sum() - trace).abs();
        if dt > 1e-10 * n * max_abs {
            return Err(Error::invalid(format!(
                "trace identity violated: |sum - trace| = {dt:.3e} exceeds {:.3e}",
                1e-10 * n * max_abs
            )));
        }
        let df = (self.sum_sq() - frobenius_sq).abs();
        if df > 1e-10 * n * max_abs * max_abs {
            return Err(Error::invalid(format!(
                "Frobenius identity violated: |sum of squares - norm| = {df:.3e} exceeds {:.3e}",
                1e-10 * n * max_abs * max_abs
            )));
        }
        Ok(())
    }
}

fn finish_spectrum(
    mut eigenvalues: Vec<f64>,
    trace: f64,
    frobenius_sq: f64,
    max_abs: f64,
    provenance: Provenance,
) -> Spectrum {
    eigenvalues.sort_by(f64::total_cmp);
    let spec = Spectrum {
        n: eigenvalues.len(),
        eigenvalues,
        provenance,
    };
    debug_assert!(
        spec.check_identities(trace, frobenius_sq, max_abs).is_ok(),
        "spectrum conservation identities failed: {:?}",
        spec.check_identities(trace, frobenius_sq, max_abs)
    );
    spec
}

/// Reduce a Hermitian matrix to real symmetric tridiagonal form with the
/// same spectrum. Off-diagonal entries are real and nonnegative: each
/// Householder step targets -phase(x_0) |x|, and the resulting complex
/// subdiagonal phases are absorbed by a diagonal unitary similarity.
pub fn householder_tridiagonalize(m: &HermitianMatrix) -> TridiagonalMatrix {
    let n = m.n;
    let mut a: Vec<Complex64> = m.entries().to_vec();
    let idx = |r: usize, c: usize| r * n + c;
    let mut e = vec![0.0f64; n.saturating_sub(1)];

    for step in 0..n.saturating_sub(2) {
        let base = step + 1;
        let mut norm2 = 0.0;
        for r in base..n {
            norm2 += a[idx(r, step)].norm_sqr();
        }
        if norm2 == 0.0 {
            e[step] = 0.0;
            continue;
        }
        let norm = norm2.sqrt();
        let x0 = a[idx(base, step)];
        let x0n = x0.norm();
        let phase = if x0n > 0.0 {
            x0 / x0n
        } else {
            Complex64::new(1.0, 0.0)
        };
        let alpha = -phase * norm;
        e[step] = norm;

        // Householder vector v = (x - alpha e1) / |x - alpha e1|; the sign
        // choice above makes the first component |x0| + |x| (no cancellation).
        let k = n - base;
        let mut v = vec![Complex64::new(0.0, 0.0); k];
        v[0] = x0 - alpha;
        for r in 1..k {
            v[r] = a[idx(base + r, step)];
        }
        let vnorm = (2.0 * norm * (norm + x0n)).sqrt();
        for entry in v.iter_mut() {
            *entry /= vnorm;
        }

        // w = A_block v, c = Re(v^H w), q = w - c v,
        // A_block <- A_block - 2 v q^H - 2 q v^H (Hermitian rank-2 update)
        let mut w = vec![Complex64::new(0.0, 0.0); k];
        for r in 0..k {
            let mut acc = Complex64::new(0.0, 0.0);
            let row = idx(base + r, base);
            for c in 0..k {
                acc += a[row + c] * v[c];
            }
            w[r] = acc;
        }
        let mut c_shift = 0.0;
        for r in 0..k {
            c_shift += (v[r].conj() * w[r]).re;
        }
        let q: Vec<Complex64> = (0..k).map(|r| w[r] - c_shift * v[r]).collect();
        for r in 0..k {
            let row = idx(base + r, base);
            let vr = v[r];
            let qr = q[r];
            for c in 0..k {
                a[row + c] -= 2.0 * (vr * q[c].conj() + qr * v[c].conj());
            }
        }
    }

    if n >= 2 {
        e[n - 2] = a[idx(n - 1, n - 2)].norm();
    }
    let diagonal: Vec<f64> = (0..n).map(|i| a[idx(i, i)].re).collect();
    let mut t = TridiagonalMatrix::new(diagonal, e).expect("sizes are consistent");
    t.kind = m.kind;
    t.seed = m.seed;
    t
}

/// Implicit-shift QL on a symmetric tridiagonal matrix, eigenvalues only.
/// `d` holds the diagonal; `e[i]` couples entries i and i+1 (the last slot
/// is a sentinel). Deflation sets e_k to zero when
/// |e_k| <= eps (|d_k| + |d_k+1|). Returns the total sweep count, or the
/// context string of a block that failed to converge within the budget.
fn ql_implicit(d: &mut [f64], e: &mut [f64], sweep_budget: usize) -> std::result::Result<usize, usize> {
    let n = d.len();
    if n <= 1 {
        return Ok(0);
    }
    e[n - 1] = 0.0;
    let mut total_sweeps = 0usize;
    for l in 0..n {
        loop {
            // locate the end of the unreduced block starting at l
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            total_sweeps += 1;
            if total_sweeps > sweep_budget {
                return Err(total_sweeps);
            }

            // Wilkinson shift from the 2x2 block at l
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            let mut split = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    // rotation underflow: split the block and retry
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    split = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if split {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(total_sweeps)
}

fn ql_eigenvalues(
    diagonal: &[f64],
    off_diagonal: &[f64],
    context: &str,
) -> Result<Vec<f64>> {
    let n = diagonal.len();
    let mut d = diagonal.to_vec();
    let mut e = Vec::with_capacity(n);
    e.extend_from_slice(off_diagonal);
    e.push(0.0);
    let budget = 50 * n;
    match ql_implicit(&mut d, &mut e, budget) {
        Ok(_) => Ok(d),
        Err(sweeps) => Err(Error::NonConvergence {
            context: context.to_string(),
            n,
            sweeps,
        }),
    }
}

/// All eigenvalues of a Hermitian matrix, ascending.
pub fn eigenvalues_dense(m: &HermitianMatrix) -> Result<Spectrum> {
    let trace = m.trace();
    let frob = m.frobenius_sq();
    let max_abs = m.max_abs_entry();
    let t = householder_tridiagonalize(m);
    let evs = ql_eigenvalues(&t.diagonal, &t.off_diagonal, "dense QL")?;
    Ok(finish_spectrum(
        evs,
        trace,
        frob,
        max_abs,
        Provenance {
            ensemble: m.kind,
            seed: m.seed,
            solver: SolverPath::DenseQl,
        },
    ))
}

/// All eigenvalues of a real symmetric tridiagonal matrix, ascending.
pub fn eigenvalues_tridiagonal(m: &TridiagonalMatrix) -> Result<Spectrum> {
    let evs = ql_eigenvalues(&m.diagonal, &m.off_diagonal, "tridiagonal QL")?;
    Ok(finish_spectrum(
        evs,
        m.trace(),
        m.frobenius_sq(),
        m.max_abs_entry(),
        Provenance {
            ensemble: m.kind,
            seed: m.seed,
            solver: SolverPath::TridiagonalQl,
        },
    ))
}

/// Number of eigenvalues strictly below `x`, by the Sturm sign count of the
/// LDL^T pivot sequence. Zero pivots are nudged to a tiny positive value so
/// an eigenvalue exactly at `x` is not counted.
pub fn sturm_count(m: &TridiagonalMatrix, x: f64) -> usize {
    const PIVMIN: f64 = 1e-300;
    let n = m.n();
    let mut count = 0;
    let mut q = 1.0f64;
    for i in 0..n {
        let e2 = if i == 0 {
            0.0
        } else {
            let e = m.off_diagonal[i - 1];
            e * e
        };
        q = (m.diagonal[i] - x) - e2 / q;
        if q.abs() < PIVMIN {
            q = PIVMIN;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Gershgorin interval [lo, hi] containing every eigenvalue.
pub fn gershgorin_bounds(m: &TridiagonalMatrix) -> (f64, f64) {
    let n = m.n();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut r = 0.0;
        if i > 0 {
            r += m.off_diagonal[i - 1].abs();
        }
        if i + 1 < n {
            r += m.off_diagonal[i].abs();
        }
        lo = lo.min(m.diagonal[i] - r);
        hi = hi.max(m.diagonal[i] + r);
    }
    (lo, hi)
}

/// All eigenvalues by Sturm-count bisection, each bracketed to width <= tol.
/// Independent of the QL path; used as a cross-check oracle.
pub fn eigenvalues_bisection(m: &TridiagonalMatrix, tol: f64) -> Result<Spectrum> {
    if !(tol > 0.0) {
        return Err(Error::invalid("bisection tolerance must be positive"));
    }
    let n = m.n();
    let (glo, ghi) = gershgorin_bounds(m);
    let pad = 1e-12 * (1.0 + ghi - glo) + tol;
    let (glo, ghi) = (glo - pad, ghi + pad);
    let mut evs = Vec::with_capacity(n);
    for l in 0..n {
        let (mut lo, mut hi) = (glo, ghi);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if sturm_count(m, mid) > l {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        evs.push(0.5 * (lo + hi));
    }
    Ok(finish_spectrum(
        evs,
        m.trace(),
        m.frobenius_sq(),
        m.max_abs_entry(),
        Provenance {
            ensemble: m.kind,
            seed: m.seed,
            solver: SolverPath::Bisection,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_gue_dense, sample_gue_tridiagonal, SampleSeed};
    use proptest::prelude::*;

    fn dense(n: usize, entries: Vec<Complex64>) -> HermitianMatrix {
        HermitianMatrix::from_entries(n, entries).expect("test matrix is Hermitian")
    }

    fn re(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn pauli_x_spectrum() {
        let m = dense(2, vec![re(0.0), re(1.0), re(1.0), re(0.0)]);
        let s = eigenvalues_dense(&m).unwrap();
        assert!((s.eigenvalues[0] + 1.0).abs() < 1e-14, "got {:?}", s.eigenvalues);
        assert!((s.eigenvalues[1] - 1.0).abs() < 1e-14, "got {:?}", s.eigenvalues);
    }

    #[test]
    fn complex_two_by_two() {
        // [[1, i], [-i, 1]] has eigenvalues (a+d)/2 +- sqrt(((a-d)/2)^2 + |b|^2) = {0, 2}
        let m = dense(
            2,
            vec![
                re(1.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, -1.0),
                re(1.0),
            ],
        );
        let s = eigenvalues_dense(&m).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-14, "got {:?}", s.eigenvalues);
        assert!((s.eigenvalues[1] - 2.0).abs() < 1e-14, "got {:?}", s.eigenvalues);
    }

    #[test]
    fn diagonal_matrix_sorted() {
        let mut entries = vec![re(0.0); 9];
        entries[0] = re(3.0);
        entries[4] = re(1.0);
        entries[8] = re(2.0);
        let s = eigenvalues_dense(&dense(3, entries)).unwrap();
        for (got, want) in s.eigenvalues.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-14, "got {:?}", s.eigenvalues);
        }
    }

    #[test]
    fn single_entry_tridiagonal() {
        let t = TridiagonalMatrix::new(vec![4.5], vec![]).unwrap();
        let s = eigenvalues_tridiagonal(&t).unwrap();
        assert_eq!(s.eigenvalues, vec![4.5]);
        let b = eigenvalues_bisection(&t, 1e-12).unwrap();
        assert!((b.eigenvalues[0] - 4.5).abs() < 1e-12);
    }

    #[test]
    fn three_chain_closed_form() {
        // diag (0,0,0), off (1,1): characteristic polynomial lambda^3 - 2 lambda
        let t = TridiagonalMatrix::new(vec![0.0; 3], vec![1.0, 1.0]).unwrap();
        let s = eigenvalues_tridiagonal(&t).unwrap();
        let want = [-(2.0f64).sqrt(), 0.0, 2.0f64.sqrt()];
        for (got, want) in s.eigenvalues.iter().zip(want) {
            assert!((got - want).abs() < 1e-14, "got {:?}", s.eigenvalues);
        }
        let b = eigenvalues_bisection(&t, 1e-12).unwrap();
        for (got, want) in b.eigenvalues.iter().zip(want) {
            assert!((got - want).abs() < 1e-11, "bisection {:?}", b.eigenvalues);
        }
    }

    #[test]
    fn chain_spectrum_matches_cosine_formula() {
        // 0-diagonal chain with unit couplings: lambda_k = 2 cos(k pi / (n+1))
        let n = 50;
        let t = TridiagonalMatrix::new(vec![0.0; n], vec![1.0; n - 1]).unwrap();
        let s = eigenvalues_tridiagonal(&t).unwrap();
        for k in 1..=n {
            let want = 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            let got = s.eigenvalues[n - k];
            assert!(
                (got - want).abs() < 1e-12,
                "k = {k}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn sturm_count_examples() {
        let t = TridiagonalMatrix::new(vec![0.0; 3], vec![1.0, 1.0]).unwrap();
        let (_, hi) = gershgorin_bounds(&t);
        assert_eq!(sturm_count(&t, hi), 3, "all eigenvalues below the upper Gershgorin bound");
        assert_eq!(sturm_count(&t, 0.0), 1, "one eigenvalue strictly below zero");
        assert_eq!(sturm_count(&t, -2.0), 0);
        assert_eq!(sturm_count(&t, 1.0), 2, "-sqrt(2) and 0 lie below 1");
    }

    #[test]
    fn dense_matches_tridiagonal_embedding() {
        let t = sample_gue_tridiagonal(48, SampleSeed::new(7)).unwrap();
        let s1 = eigenvalues_tridiagonal(&t).unwrap();
        let s2 = eigenvalues_dense(&t.to_dense()).unwrap();
        let max_diff = s1
            .eigenvalues
            .iter()
            .zip(&s2.eigenvalues)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-10, "max diff {max_diff}");
    }

    #[test]
    fn ql_vs_bisection_random() {
        let tol = 1e-10;
        for (i, n) in [(0u64, 8usize), (1, 8), (2, 64), (3, 64)] {
            let t = sample_gue_tridiagonal(n, SampleSeed::with_stream(100, i)).unwrap();
            let ql = eigenvalues_tridiagonal(&t).unwrap();
            let bi = eigenvalues_bisection(&t, tol).unwrap();
            let max_diff = ql
                .eigenvalues
                .iter()
                .zip(&bi.eigenvalues)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_diff <= 10.0 * tol, "n = {n}: max diff {max_diff}");
        }
    }

    #[test]
    fn householder_preserves_spectrum() {
        for i in 0..20 {
            let m = sample_gue_dense(16, SampleSeed::with_stream(200, i)).unwrap();
            let t = householder_tridiagonalize(&m);
            assert!(
                t.off_diagonal.iter().all(|&x| x >= 0.0),
                "off-diagonal must be nonnegative"
            );
            let via_dense = eigenvalues_dense(&m).unwrap();
            let via_bisect = eigenvalues_bisection(&t, 1e-12).unwrap();
            let max_diff = via_dense
                .eigenvalues
                .iter()
                .zip(&via_bisect.eigenvalues)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_diff < 1e-10, "sample {i}: max diff {max_diff}");
        }
    }

    #[test]
    fn identities_hold_on_samples() {
        let m = sample_gue_dense(64, SampleSeed::new(31)).unwrap();
        let s = eigenvalues_dense(&m).unwrap();
        s.check_identities(m.trace(), m.frobenius_sq(), m.max_abs_entry())
            .expect("dense identities");
        let t = sample_gue_tridiagonal(64, SampleSeed::new(32)).unwrap();
        let s = eigenvalues_tridiagonal(&t).unwrap();
        s.check_identities(t.trace(), t.frobenius_sq(), t.max_abs_entry())
            .expect("tridiagonal identities");
    }

    #[test]
    fn zero_matrix_and_empty_offdiag() {
        let t = TridiagonalMatrix::new(vec![0.0; 5], vec![0.0; 4]).unwrap();
        let s = eigenvalues_tridiagonal(&t).unwrap();
        assert!(s.eigenvalues.iter().all(|&x| x == 0.0));
    }

    proptest! {
        #[test]
        fn random_symmetric_ql_agrees_with_bisection(
            diag in proptest::collection::vec(-3.0f64..3.0, 2..7),
            off in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let n = diag.len();
            let t = TridiagonalMatrix::new(diag, off[..n - 1].to_vec()).unwrap();
            let ql = eigenvalues_tridiagonal(&t).unwrap();
            let bi = eigenvalues_bisection(&t, 1e-11).unwrap();
            for l in 1..n {
                prop_assert!(ql.eigenvalues[l] >= ql.eigenvalues[l - 1]);
            }
            for (a, b) in ql.eigenvalues.iter().zip(&bi.eigenvalues) {
                prop_assert!((a - b).abs() <= 1e-10, "ql {a} vs bisection {b}");
            }
            let trace_diff = (ql.sum() - t.trace()).abs();
            prop_assert!(trace_diff <= 1e-10 * n as f64 * t.max_abs_entry().max(1e-30));
        }
    }
}
