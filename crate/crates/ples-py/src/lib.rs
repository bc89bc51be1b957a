//! Python bindings for the spectral statistics library.
//!
//! Compiled as a cdylib against the stable CPython ABI (3.10+), so one build
//! serves every newer interpreter. Functions that take a test function accept
//! the registry string syntax ("x", "x2", "x3", "bump", "poly:c0,c1,...",
//! "mono:p", "exp:s", "plateau:a,b"). Core errors surface as `ValueError`.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ples_core::eigensolver::{Provenance, SolverPath, Spectrum as CoreSpectrum};
use ples_core::ensemble::{AtomDistribution, EnsembleKind, SampleSeed};
use ples_core::harness::{self, EnsembleSpec};
use ples_core::ples::{self, CenteringMode};
use ples_core::testfn::{Observable, TestFunction};
use ples_core::{determinantal, limits, semicircle};

fn value_err(e: ples_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_fn(f: &str) -> PyResult<TestFunction> {
    f.parse::<TestFunction>().map_err(value_err)
}

fn triple(r: ples::PlesResult) -> (f64, f64, Option<f64>) {
    (r.raw, r.centered, r.normalized)
}

fn atoms_from_pairs(field: &str, pairs: Option<Vec<(f64, f64)>>) -> PyResult<AtomDistribution> {
    let pairs = pairs.ok_or_else(|| {
        PyValueError::new_err(format!(
            "{field} (value, probability) atom pairs are required for wigner-custom"
        ))
    })?;
    AtomDistribution::new(pairs).map_err(value_err)
}

/// Semicircle density at x (zero outside [-2, 2]).
#[pyfunction]
fn density(x: f64) -> f64 {
    semicircle::density(x)
}

/// Semicircle distribution function F(x).
#[pyfunction]
fn cdf(x: f64) -> f64 {
    semicircle::cdf(x)
}

/// Semicircle quantile gamma_t with F(gamma_t) = t, for t in (0, 1).
#[pyfunction]
fn quantile(t: f64) -> PyResult<f64> {
    semicircle::quantile(t).map_err(value_err)
}

/// Deterministic centering n * integral of f against the semicircle
/// density up to u.
#[pyfunction]
fn centering(f: &str, u: f64, n: usize) -> PyResult<f64> {
    semicircle::centering(&parse_fn(f)?, u, n).map_err(value_err)
}

/// Limiting variance of the centered threshold statistic at threshold u.
#[pyfunction]
fn limit_variance(f: &str, u: f64) -> PyResult<f64> {
    limits::limit_variance(&parse_fn(f)?, u)
        .map(|v| v.value)
        .map_err(value_err)
}

/// Limiting covariance of the partial-sum process between times s and t.
#[pyfunction]
fn process_covariance(f: &str, s: f64, t: f64) -> PyResult<f64> {
    limits::process_covariance(&parse_fn(f)?, s, t).map_err(value_err)
}

/// Exact finite-n mean of the full linear statistic sum f(lambda_i) under
/// the unitary-invariant Gaussian ensemble.
#[pyfunction]
fn exact_mean(n: usize, f: &str) -> PyResult<f64> {
    determinantal::exact_mean(n, &Observable::Plain(parse_fn(f)?)).map_err(value_err)
}

/// Exact finite-n variance of the full linear statistic.
#[pyfunction]
fn exact_variance(n: usize, f: &str) -> PyResult<f64> {
    determinantal::exact_variance(n, &Observable::Plain(parse_fn(f)?)).map_err(value_err)
}

/// Exact finite-n mean of the threshold statistic sum over eigenvalues at
/// or below u.
#[pyfunction]
fn exact_threshold_mean(n: usize, f: &str, u: f64) -> PyResult<f64> {
    determinantal::exact_threshold_mean(n, &parse_fn(f)?, u).map_err(value_err)
}

/// Exact finite-n variance of the threshold statistic.
#[pyfunction]
fn exact_threshold_variance(n: usize, f: &str, u: f64) -> PyResult<f64> {
    determinantal::exact_threshold_variance(n, &parse_fn(f)?, u).map_err(value_err)
}

/// Exact finite-n (mean, variance) of the eigenvalue count at or below u.
#[pyfunction]
fn counting_mean_variance(n: usize, u: f64) -> PyResult<(f64, f64)> {
    determinantal::counting_mean_variance(n, u).map_err(value_err)
}

/// One-sample Kolmogorov-Smirnov test of studentized values against the
/// standard normal; returns (statistic, p_value). Needs 100+ values.
#[pyfunction]
fn ks_normal(values: Vec<f64>) -> PyResult<(f64, f64)> {
    harness::ks_normal(&values).map_err(value_err)
}

/// Two-sample Kolmogorov-Smirnov test; returns (statistic, p_value).
#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    harness::ks_two_sample(&a, &b).map_err(value_err)
}

/// Run an experiment plan from a TOML file and return the full report as a
/// JSON string (parse it with json.loads).
#[pyfunction]
fn run_experiment(path: &str) -> PyResult<String> {
    let plan = harness::ExperimentPlan::from_path(path.as_ref()).map_err(value_err)?;
    let report = harness::run(&plan).map_err(value_err)?;
    serde_json::to_string_pretty(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Ordered eigenvalue list with sampling provenance.
///
/// Statistics methods return (raw, centered, normalized) tuples; normalized
/// is None when no positive scale applies to the statistic.
#[pyclass]
struct Spectrum {
    inner: CoreSpectrum,
}

#[pymethods]
impl Spectrum {
    /// Sample one matrix from a named ensemble and solve its spectrum.
    ///
    /// Ensembles: "gue" (dense), "gue-tridiag" (fast tridiagonal model of
    /// the same spectral law), "wigner-matched" (atom entries matching
    /// Gaussian moments to fourth order), "wigner-custom" (atom tables
    /// supplied as (value, probability) pairs via diag_atoms/offdiag_atoms).
    /// The (master, stream) pair fully determines the draw.
    #[staticmethod]
    #[pyo3(signature = (ensemble, n, master, stream = 0, diag_atoms = None, offdiag_atoms = None))]
    fn sample(
        ensemble: &str,
        n: usize,
        master: u64,
        stream: u64,
        diag_atoms: Option<Vec<(f64, f64)>>,
        offdiag_atoms: Option<Vec<(f64, f64)>>,
    ) -> PyResult<Self> {
        let kind = ensemble.parse::<EnsembleKind>().map_err(value_err)?;
        let spec = if kind == EnsembleKind::WignerCustom {
            EnsembleSpec {
                kind,
                diag: Some(atoms_from_pairs("diag_atoms", diag_atoms)?),
                offdiag: Some(atoms_from_pairs("offdiag_atoms", offdiag_atoms)?),
            }
        } else {
            if diag_atoms.is_some() || offdiag_atoms.is_some() {
                return Err(PyValueError::new_err(
                    "atom tables apply to wigner-custom only",
                ));
            }
            EnsembleSpec::of_kind(kind)
        };
        harness::sample_spectrum(&spec, n, SampleSeed::with_stream(master, stream))
            .map(|inner| Spectrum { inner })
            .map_err(value_err)
    }

    /// Wrap an externally computed eigenvalue list (sorted internally).
    /// Provenance is marked as a custom ensemble with a placeholder seed;
    /// exact-GUE centering is refused on such spectra.
    #[staticmethod]
    fn from_eigenvalues(eigenvalues: Vec<f64>) -> PyResult<Self> {
        CoreSpectrum::from_eigenvalues(
            eigenvalues,
            Provenance {
                ensemble: EnsembleKind::WignerCustom,
                seed: SampleSeed::new(0),
                solver: SolverPath::Bisection,
            },
        )
        .map(|inner| Spectrum { inner })
        .map_err(value_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    /// Eigenvalues in ascending order.
    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.clone()
    }

    #[getter]
    fn ensemble(&self) -> String {
        self.inner.provenance.ensemble.to_string()
    }

    #[getter]
    fn solver(&self) -> String {
        self.inner.provenance.solver.to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.n
    }

    fn __repr__(&self) -> String {
        format!(
            "Spectrum(ensemble='{}', n={}, solver='{}')",
            self.inner.provenance.ensemble, self.inner.n, self.inner.provenance.solver
        )
    }

    /// Number of eigenvalues at or below u.
    fn counting(&self, u: f64) -> usize {
        ples::counting(&self.inner, u)
    }

    /// Threshold statistic: sum of f over eigenvalues at or below u.
    ///
    /// u must lie in the bulk window [-2 + delta, 2 - delta]. Centering is
    /// the semicircle integral by default; exact_centering=True uses the
    /// exact finite-n mean instead (GUE spectra only). normalized carries
    /// centered / sqrt(f(u)^2 log n / (2 pi^2)) when that scale is positive.
    #[pyo3(signature = (f, u, delta = ples_core::DEFAULT_DELTA, exact_centering = false))]
    fn threshold_statistic(
        &self,
        f: &str,
        u: f64,
        delta: f64,
        exact_centering: bool,
    ) -> PyResult<(f64, f64, Option<f64>)> {
        let mode = if exact_centering {
            CenteringMode::ExactGue
        } else {
            CenteringMode::SemicircleIntegral
        };
        ples::type_a_with(&self.inner, &parse_fn(f)?, u, delta, mode)
            .map(triple)
            .map_err(value_err)
    }

    /// Rank statistic: sum of f over the k smallest eigenvalues, centered
    /// by the semicircle integral up to the k/n quantile.
    fn fixed_rank_statistic(&self, f: &str, k: usize) -> PyResult<(f64, f64, Option<f64>)> {
        ples::type_b(&self.inner, &parse_fn(f)?, k)
            .map(triple)
            .map_err(value_err)
    }

    /// Interpolated partial-sum process at time t in the working band.
    fn process_point(&self, f: &str, t: f64) -> PyResult<(f64, f64, Option<f64>)> {
        ples::process_point(&self.inner, &parse_fn(f)?, t)
            .map(triple)
            .map_err(value_err)
    }

    /// Counting function at u as a statistic row, centered by n F(u) and
    /// normalized by sqrt(log n / (2 pi^2)).
    fn counting_statistic(&self, u: f64) -> PyResult<(f64, f64, Option<f64>)> {
        ples::counting_statistic(&self.inner, u)
            .map(triple)
            .map_err(value_err)
    }

    /// Residual of the identity splitting the threshold sum into a
    /// truncated linear statistic plus f(u) times the count. Near zero up
    /// to roundoff for any spectrum; a cheap self-check.
    fn decomposition_residual(&self, f: &str, u: f64) -> PyResult<f64> {
        ples::decomposition_check(&self.inner, &parse_fn(f)?, u).map_err(value_err)
    }

    /// Bulk rigidity score: worst deviation of bulk eigenvalues from their
    /// semicircle quantiles on the n / log^2 n scale. Diagnostic only.
    fn rigidity(&self) -> PyResult<f64> {
        ples::rigidity_diagnostic(&self.inner).map_err(value_err)
    }

    /// Resolvent trace (1/n) sum 1/(lambda_i - z) at z = re + im*i, with
    /// im != 0. Returned as a Python complex number.
    fn stieltjes(&self, re: f64, im: f64) -> PyResult<Complex64> {
        ples::stieltjes(&self.inner, re, im).map_err(value_err)
    }
}

/// Spectral statistics of GUE and Wigner random matrices: exact finite-n
/// kernel formulas, limiting variances and covariances, seeded sampling,
/// partial-sum statistics, and the experiment runner.
#[pymodule]
fn ples_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Spectrum>()?;
    m.add_function(wrap_pyfunction!(density, m)?)?;
    m.add_function(wrap_pyfunction!(cdf, m)?)?;
    m.add_function(wrap_pyfunction!(quantile, m)?)?;
    m.add_function(wrap_pyfunction!(centering, m)?)?;
    m.add_function(wrap_pyfunction!(limit_variance, m)?)?;
    m.add_function(wrap_pyfunction!(process_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(exact_mean, m)?)?;
    m.add_function(wrap_pyfunction!(exact_variance, m)?)?;
    m.add_function(wrap_pyfunction!(exact_threshold_mean, m)?)?;
    m.add_function(wrap_pyfunction!(exact_threshold_variance, m)?)?;
    m.add_function(wrap_pyfunction!(counting_mean_variance, m)?)?;
    m.add_function(wrap_pyfunction!(ks_normal, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("DEFAULT_DELTA", ples_core::DEFAULT_DELTA)?;
    m.add("TIME_DELTA", ples_core::TIME_DELTA)?;
    Ok(())
}
