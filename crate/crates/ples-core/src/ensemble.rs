//! Seeded samplers for GUE matrices (dense and the spectrally equivalent
//! tridiagonal form) and for complex Wigner matrices with finite-support
//! atom distributions whose moments match GUE.
//!
//! Determinism contract: every sample is drawn from its own counter-mode
//! ChaCha8 stream selected by (master seed, stream index), so parallel and
//! serial runs see identical matrices regardless of scheduling.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Which sampler produced a matrix; carried through to Spectrum provenance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsembleKind {
    #[serde(rename = "gue")]
    GueDense,
    #[serde(rename = "gue-tridiag")]
    GueTridiagonal,
    #[serde(rename = "wigner-matched")]
    WignerMatched,
    #[serde(rename = "wigner-custom")]
    WignerCustom,
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EnsembleKind::GueDense => "gue",
            EnsembleKind::GueTridiagonal => "gue-tridiag",
            EnsembleKind::WignerMatched => "wigner-matched",
            EnsembleKind::WignerCustom => "wigner-custom",
        };
        write!(out, "{s}")
    }
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gue" => Ok(EnsembleKind::GueDense),
            "gue-tridiag" => Ok(EnsembleKind::GueTridiagonal),
            "wigner-matched" => Ok(EnsembleKind::WignerMatched),
            "wigner-custom" => Ok(EnsembleKind::WignerCustom),
            other => Err(Error::invalid(format!(
                "unknown ensemble {other:?}; expected gue, gue-tridiag, wigner-matched or wigner-custom"
            ))),
        }
    }
}

/// (master seed, stream index) pair selecting one ChaCha8 counter stream.
/// Stream 0 is the plain single-sample case; Monte Carlo runs use the sample
/// index, and resampling after a solver failure sets high bits (see harness).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSeed {
    pub master: u64,
    pub stream: u64,
}

impl SampleSeed {
    pub fn new(master: u64) -> Self {
        SampleSeed { master, stream: 0 }
    }

    pub fn with_stream(master: u64, stream: u64) -> Self {
        SampleSeed { master, stream }
    }

    pub(crate) fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}

impl fmt::Display for SampleSeed {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "{}/{}", self.master, self.stream)
    }
}

/// Finite-support distribution for one real matrix-entry component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomDistribution {
    /// (value, probability) pairs; probabilities sum to 1, mean is 0, and at
    /// least three support points are required.
    support: Vec<(f64, f64)>,
    /// Cumulative probabilities for inverse-CDF sampling.
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl AtomDistribution {
    pub fn new(support: Vec<(f64, f64)>) -> Result<Self> {
        if support.len() < 3 {
            return Err(Error::invalid(
                "atom distribution needs at least three support points",
            ));
        }
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "atom probabilities sum to {total}, expected 1"
            )));
        }
        if support.iter().any(|&(v, p)| !v.is_finite() || p < 0.0) {
            return Err(Error::invalid("atom values must be finite, probabilities nonnegative"));
        }
        let mean: f64 = support.iter().map(|(v, p)| v * p).sum();
        if mean.abs() > 1e-12 {
            return Err(Error::invalid(format!("atom mean is {mean}, expected 0")));
        }
        let mut cumulative = Vec::with_capacity(support.len());
        let mut acc = 0.0;
        for &(_, p) in &support {
            acc += p;
            cumulative.push(acc);
        }
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(AtomDistribution { support, cumulative })
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    pub fn moment(&self, k: u32) -> f64 {
        self.support
            .iter()
            .map(|(v, p)| v.powi(k as i32) * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        self.moment(2)
    }

    fn rebuild_cumulative(&mut self) {
        let mut acc = 0.0;
        self.cumulative = self
            .support
            .iter()
            .map(|&(_, p)| {
                acc += p;
                acc
            })
            .collect();
        *self.cumulative.last_mut().unwrap() = 1.0;
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let r: f64 = rng.random();
        for (i, &c) in self.cumulative.iter().enumerate() {
            if r < c {
                return self.support[i].0;
            }
        }
        self.support.last().unwrap().0
    }
}

/// Dense complex Hermitian matrix, scaled by 1/sqrt(n) at construction.
/// Stored as a full row-major array; Hermitian by construction.
#[derive(Clone, Debug)]
pub struct HermitianMatrix {
    pub n: usize,
    entries: Vec<Complex64>,
    pub kind: EnsembleKind,
    pub seed: SampleSeed,
}

impl HermitianMatrix {
    /// Build from a generator of unscaled entries: diag(l) real, upper(j,k)
    /// complex for j < k. Applies the 1/sqrt(n) scale and mirrors the lower
    /// triangle with conjugates.
    fn from_parts(
        n: usize,
        kind: EnsembleKind,
        seed: SampleSeed,
        diag: Vec<f64>,
        upper: Vec<Complex64>,
    ) -> Self {
        let scale = 1.0 / (n as f64).sqrt();
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        let mut iter = upper.into_iter();
        for j in 0..n {
            entries[j * n + j] = Complex64::new(diag[j] * scale, 0.0);
            for k in (j + 1)..n {
                let w = iter.next().expect("upper triangle size") * scale;
                entries[j * n + k] = w;
                entries[k * n + j] = w.conj();
            }
        }
        HermitianMatrix { n, entries, kind, seed }
    }

    /// Build directly from an entry table (used by tests and the dense
    /// embedding of tridiagonal matrices). Rejects non-Hermitian input.
    pub fn from_entries(n: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::invalid("entry table has wrong size"));
        }
        for j in 0..n {
            for k in j..n {
                let a = entries[j * n + k];
                let b = entries[k * n + j];
                if (a - b.conj()).norm() > 1e-14 * (1.0 + a.norm()) {
                    return Err(Error::invalid(format!(
                        "entries ({j},{k}) and ({k},{j}) are not conjugate"
                    )));
                }
            }
        }
        Ok(HermitianMatrix {
            n,
            entries,
            kind: EnsembleKind::WignerCustom,
            seed: SampleSeed::new(0),
        })
    }

    #[inline]
    pub fn entry(&self, j: usize, k: usize) -> Complex64 {
        self.entries[j * self.n + k]
    }

    pub(crate) fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|j| self.entry(j, j).re).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Real symmetric tridiagonal matrix (the GUE-equivalent sampler output).
#[derive(Clone, Debug)]
pub struct TridiagonalMatrix {
    pub diagonal: Vec<f64>,
    /// n-1 entries; strictly positive almost surely for sampled matrices.
    pub off_diagonal: Vec<f64>,
    pub kind: EnsembleKind,
    pub seed: SampleSeed,
}

impl TridiagonalMatrix {
    pub fn new(diagonal: Vec<f64>, off_diagonal: Vec<f64>) -> Result<Self> {
        if diagonal.is_empty() || off_diagonal.len() + 1 != diagonal.len() {
            return Err(Error::invalid(
                "tridiagonal needs n >= 1 diagonal and n-1 off-diagonal entries",
            ));
        }
        Ok(TridiagonalMatrix {
            diagonal,
            off_diagonal,
            kind: EnsembleKind::GueTridiagonal,
            seed: SampleSeed::new(0),
        })
    }

    pub fn n(&self) -> usize {
        self.diagonal.len()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal.iter().sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        let d: f64 = self.diagonal.iter().map(|x| x * x).sum();
        let e: f64 = self.off_diagonal.iter().map(|x| x * x).sum();
        d + 2.0 * e
    }

    pub fn max_abs_entry(&self) -> f64 {
        let d = self.diagonal.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let e = self.off_diagonal.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        d.max(e)
    }

    /// Dense Hermitian embedding (tests and cross-checks).
    pub fn to_dense(&self) -> HermitianMatrix {
        let n = self.n();
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            entries[j * n + j] = Complex64::new(self.diagonal[j], 0.0);
            if j + 1 < n {
                entries[j * n + j + 1] = Complex64::new(self.off_diagonal[j], 0.0);
                entries[(j + 1) * n + j] = Complex64::new(self.off_diagonal[j], 0.0);
            }
        }
        let mut m = HermitianMatrix::from_entries(n, entries).expect("symmetric by construction");
        m.kind = self.kind;
        m.seed = self.seed;
        m
    }
}

/// GUE sample M_n = W_n / sqrt(n): diagonal entries N(0,1) real, off-diagonal
/// entries with independent N(0, 1/2) real and imaginary parts.
///
/// Draw order (fixed for reproducibility): the n diagonal entries first, then
/// the upper triangle row-major, real part before imaginary part.
pub fn sample_gue_dense(n: usize, seed: SampleSeed) -> Result<HermitianMatrix> {
    if n == 0 {
        return Err(Error::invalid("matrix dimension must be >= 1"));
    }
    let mut rng = seed.rng();
    let mut diag = Vec::with_capacity(n);
    for _ in 0..n {
        diag.push(rng.sample::<f64, _>(StandardNormal));
    }
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for _ in 0..n * (n - 1) / 2 {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        upper.push(Complex64::new(re * half, im * half));
    }
    Ok(HermitianMatrix::from_parts(
        n,
        EnsembleKind::GueDense,
        seed,
        diag,
        upper,
    ))
}

/// Spectrally equivalent GUE sampler: real symmetric tridiagonal with
/// (before the global 1/sqrt(n) scale) i.i.d. N(0,1) diagonal and k-th
/// off-diagonal entry chi_{2(n-k)} / sqrt(2). Its eigenvalue law equals the
/// dense GUE path; the dense path is the oracle for that claim.
pub fn sample_gue_tridiagonal(n: usize, seed: SampleSeed) -> Result<TridiagonalMatrix> {
    if n == 0 {
        return Err(Error::invalid("matrix dimension must be >= 1"));
    }
    let mut rng = seed.rng();
    let scale = 1.0 / (n as f64).sqrt();
    let mut diagonal = Vec::with_capacity(n);
    for _ in 0..n {
        let g: f64 = rng.sample(StandardNormal);
        diagonal.push(g * scale);
    }
    let mut off_diagonal = Vec::with_capacity(n - 1);
    for k in 1..n {
        // chi^2 with 2(n-k) degrees of freedom is Gamma(shape n-k, scale 2)
        let gamma = Gamma::new((n - k) as f64, 2.0)
            .map_err(|e| Error::invalid(format!("chi-square setup failed: {e}")))?;
        let chi_sq: f64 = gamma.sample(&mut rng);
        off_diagonal.push((chi_sq.max(0.0)).sqrt() * std::f64::consts::FRAC_1_SQRT_2 * scale);
    }
    Ok(TridiagonalMatrix {
        diagonal,
        off_diagonal,
        kind: EnsembleKind::GueTridiagonal,
        seed,
    })
}

/// Three-point law on {-a, 0, +a} for the real and imaginary parts of
/// off-diagonal entries, matching N(0, 1/2) to fourth order:
/// 2 p a^2 = 1/2 and 2 p a^4 = 3/4 give a = sqrt(3/2), p = 1/6.
pub fn matched_atom_offdiagonal() -> AtomDistribution {
    let a = (1.5f64).sqrt();
    let p = 1.0 / 6.0;
    AtomDistribution::new(vec![(-a, p), (0.0, 1.0 - 2.0 * p), (a, p)])
        .expect("matched off-diagonal atoms are valid")
}

/// Three-point law on {-sqrt(3), 0, sqrt(3)} with P = 1/6 at the ends:
/// mean 0, variance 1, matching the GUE diagonal to second order.
pub fn matched_atom_diagonal() -> AtomDistribution {
    let a = 3.0f64.sqrt();
    let p = 1.0 / 6.0;
    AtomDistribution::new(vec![(-a, p), (0.0, 1.0 - 2.0 * p), (a, p)])
        .expect("matched diagonal atoms are valid")
}

/// Complex Wigner matrix with entries drawn from atom distributions:
/// diagonal real from `diag`, off-diagonal real and imaginary parts
/// independently from `offdiag`. Scaled by 1/sqrt(n).
///
/// Preconditions: both atom laws have mean 0 (enforced by the type) and the
/// off-diagonal per-component variance is 1/2 (checked here).
pub fn sample_wigner(
    n: usize,
    diag: &AtomDistribution,
    offdiag: &AtomDistribution,
    seed: SampleSeed,
) -> Result<HermitianMatrix> {
    if n == 0 {
        return Err(Error::invalid("matrix dimension must be >= 1"));
    }
    let v = offdiag.variance();
    if (v - 0.5).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "off-diagonal component variance is {v}, expected 1/2"
        )));
    }
    let dv = diag.variance();
    if dv <= 0.0 {
        return Err(Error::invalid("diagonal atom variance must be positive"));
    }
    let mut rng = seed.rng();
    let mut d = Vec::with_capacity(n);
    for _ in 0..n {
        d.push(diag.sample(&mut rng));
    }
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for _ in 0..n * (n - 1) / 2 {
        let re = offdiag.sample(&mut rng);
        let im = offdiag.sample(&mut rng);
        upper.push(Complex64::new(re, im));
    }
    let kind = if *offdiag == matched_atom_offdiagonal() && *diag == matched_atom_diagonal() {
        EnsembleKind::WignerMatched
    } else {
        EnsembleKind::WignerCustom
    };
    Ok(HermitianMatrix::from_parts(n, kind, seed, d, upper))
}

/// Deserialization helper: atom tables in config files skip the cumulative
/// cache, so rebuild it after parsing.
pub fn finish_parsed_atoms(atoms: &mut AtomDistribution) {
    atoms.rebuild_cumulative();
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng_for(master: u64, stream: u64) -> ChaCha8Rng {
        SampleSeed::with_stream(master, stream).rng()
    }

    #[test]
    fn atom_validation() {
        assert!(AtomDistribution::new(vec![(-1.0, 0.5), (1.0, 0.5)]).is_err()); // 2 points
        assert!(AtomDistribution::new(vec![(-1.0, 0.3), (0.0, 0.3), (1.0, 0.3)]).is_err()); // sum
        assert!(AtomDistribution::new(vec![(-1.0, 0.2), (0.0, 0.5), (1.0, 0.3)]).is_err()); // mean
        assert!(AtomDistribution::new(vec![(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]).is_ok());
    }

    #[test]
    fn matched_offdiagonal_moments() {
        let atoms = matched_atom_offdiagonal();
        let (a, p) = (1.5f64.sqrt(), 1.0 / 6.0);
        assert!((atoms.support()[2].0 - a).abs() < 1e-15);
        assert!((atoms.support()[2].1 - p).abs() < 1e-15);
        assert!((atoms.moment(1)).abs() < 1e-15);
        assert!((atoms.moment(2) - 0.5).abs() < 1e-15);
        assert!((atoms.moment(3)).abs() < 1e-15);
        assert!((atoms.moment(4) - 0.75).abs() < 1e-15);
        assert_eq!(atoms.support().len(), 3);
    }

    #[test]
    fn matched_diagonal_moments() {
        let atoms = matched_atom_diagonal();
        assert!((atoms.moment(1)).abs() < 1e-15);
        assert!((atoms.variance() - 1.0).abs() < 1e-15);
        assert_eq!(atoms.support().len(), 3);
    }

    #[test]
    fn gue_dense_determinism_and_scale() {
        let seed = SampleSeed::with_stream(42, 7);
        let a = sample_gue_dense(16, seed).unwrap();
        let b = sample_gue_dense(16, seed).unwrap();
        for j in 0..16 {
            for k in 0..16 {
                assert_eq!(a.entry(j, k), b.entry(j, k));
            }
        }
        let c = sample_gue_dense(16, SampleSeed::with_stream(42, 8)).unwrap();
        assert!((0..16).any(|j| a.entry(j, j) != c.entry(j, j)));
        // hermitian by construction
        for j in 0..16 {
            assert_eq!(a.entry(j, j).im, 0.0);
            for k in 0..16 {
                assert_eq!(a.entry(j, k), a.entry(k, j).conj());
            }
        }
    }

    #[test]
    fn gue_dense_entry_moments() {
        // n = 1: single N(0,1) draw; mean -> 0 +- 0.01, variance -> 1 +- 0.02
        let m = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for i in 0..m {
            let w = sample_gue_dense(1, SampleSeed::with_stream(3, i)).unwrap();
            let x = w.entry(0, 0).re;
            sum += x;
            sum2 += x * x;
        }
        let mean = sum / m as f64;
        let var = sum2 / m as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean = {mean}");
        assert!((var - 1.0).abs() < 0.02, "var = {var}");
    }

    #[test]
    fn gue_offdiagonal_second_moment() {
        // E |w_jk|^2 = 1 before the 1/sqrt(n) scale; read it off n = 2
        let m = 100_000;
        let mut sum = 0.0;
        for i in 0..m {
            let w = sample_gue_dense(2, SampleSeed::with_stream(5, i)).unwrap();
            // matrix entries carry 1/sqrt(2); undo it
            sum += w.entry(0, 1).norm_sqr() * 2.0;
        }
        let mean = sum / m as f64;
        assert!((mean - 1.0).abs() < 0.01, "E|w|^2 = {mean}");
    }

    #[test]
    fn tridiagonal_determinism_and_positivity() {
        let seed = SampleSeed::with_stream(11, 0);
        let a = sample_gue_tridiagonal(64, seed).unwrap();
        let b = sample_gue_tridiagonal(64, seed).unwrap();
        assert_eq!(a.diagonal, b.diagonal);
        assert_eq!(a.off_diagonal, b.off_diagonal);
        assert!(a.off_diagonal.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn tridiagonal_frobenius_matches_dense_embedding() {
        let t = sample_gue_tridiagonal(32, SampleSeed::new(9)).unwrap();
        let d = t.to_dense();
        assert!((t.frobenius_sq() - d.frobenius_sq()).abs() < 1e-12);
        assert!((t.trace() - d.trace()).abs() < 1e-12);
    }

    #[test]
    fn tridiagonal_mean_square_trace() {
        // E tr (W/sqrt(n))^2 = n; check the tridiagonal parameterization via
        // Frobenius norm (= sum of squared eigenvalues)
        let n = 32;
        let m = 4000;
        let mut sum = 0.0;
        for i in 0..m {
            let t = sample_gue_tridiagonal(n, SampleSeed::with_stream(13, i)).unwrap();
            sum += t.frobenius_sq();
        }
        let mean = sum / m as f64;
        // Var tr M^2 = 2 for GUE, so SE ~ sqrt(2/m) ~ 0.022
        assert!(
            (mean - n as f64).abs() < 4.0 * (2.0f64 / m as f64).sqrt(),
            "E tr M^2 = {mean}, expected {n}"
        );
    }

    #[test]
    fn wigner_matched_entries_and_bound() {
        let diag = matched_atom_diagonal();
        let off = matched_atom_offdiagonal();
        let n = 8;
        let w = sample_wigner(n, &diag, &off, SampleSeed::new(21)).unwrap();
        assert_eq!(w.kind, EnsembleKind::WignerMatched);
        let bound = 3.0f64.sqrt() * (2.0f64).sqrt() / (n as f64).sqrt() + 1e-12;
        for j in 0..n {
            for k in 0..n {
                assert!(w.entry(j, k).norm() <= bound);
                assert_eq!(w.entry(j, k), w.entry(k, j).conj());
            }
        }
    }

    #[test]
    fn wigner_fourth_moment_matches_complex_gaussian() {
        // E |w_jk|^4 = 2 for the matched atoms (same as N(0,1)_C)
        let diag = matched_atom_diagonal();
        let off = matched_atom_offdiagonal();
        let m = 100_000;
        let mut sum = 0.0;
        for i in 0..m {
            let w = sample_wigner(2, &diag, &off, SampleSeed::with_stream(31, i)).unwrap();
            let z = w.entry(0, 1) * (2.0f64).sqrt(); // undo 1/sqrt(2)
            sum += z.norm_sqr() * z.norm_sqr();
        }
        let mean = sum / m as f64;
        assert!((mean - 2.0).abs() < 0.05, "E|w|^4 = {mean}");
    }

    #[test]
    fn wigner_rejects_wrong_variance() {
        let diag = matched_atom_diagonal();
        // variance 1 per component instead of 1/2
        let bad = AtomDistribution::new(vec![
            (-(3.0f64).sqrt(), 1.0 / 6.0),
            (0.0, 2.0 / 3.0),
            (3.0f64.sqrt(), 1.0 / 6.0),
        ])
        .unwrap();
        assert!(sample_wigner(4, &diag, &bad, SampleSeed::new(1)).is_err());
    }

    #[test]
    fn streams_are_independent_draws() {
        let mut r0 = rng_for(99, 0);
        let mut r1 = rng_for(99, 1);
        let a: f64 = r0.sample(StandardNormal);
        let b: f64 = r1.sample(StandardNormal);
        assert_ne!(a, b);
    }
}
