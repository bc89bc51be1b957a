//! Registry of test functions f, the truncation transform f -> f_u, and the
//! difference quotient used inside the limiting variance integrals.
//!
//! Functions form a closed registry (no arbitrary callables) so that
//! derivatives are exact and experiment configs can name them textually.

use crate::error::{Error, Result};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// Arguments closer than this are treated as a coincident pair and routed
/// through the finite-difference branch of the difference quotient.
pub const NEAR_DIAGONAL_THRESHOLD: f64 = 1e-8;
/// Step of that finite difference.
pub const FD_STEP: f64 = 1e-6;

const MAX_POLY_DEGREE: usize = 8;

/// A real test function with exact derivatives up to order 4 (order 1 for the
/// piecewise-linear plateau, 0 for the step).
#[derive(Clone, Debug, PartialEq)]
pub enum TestFunction {
    /// c0 + c1 x + ... with degree <= 8.
    Polynomial(Vec<f64>),
    /// x^p with p <= 8.
    Monomial(u32),
    /// exp(s x).
    ScaledExponential(f64),
    /// x
    Identity,
    /// x^2
    Square,
    /// x^3
    Cube,
    /// Smooth compactly supported bump exp(-1/(1 - (x/3)^2)) on (-3, 3).
    Bump,
    /// 0 left of a, 1 right of b, linear between. Lipschitz, kinks at a and b.
    Plateau { a: f64, b: f64 },
    /// Step 1_{x <= u}. Only admitted by the counting-function integrals;
    /// the generic quadrature entry points reject it.
    Indicator(f64),
}

impl TestFunction {
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("polynomial needs at least one coefficient"));
        }
        if coeffs.len() > MAX_POLY_DEGREE + 1 {
            return Err(Error::invalid(format!(
                "polynomial degree {} exceeds the registry maximum {MAX_POLY_DEGREE}",
                coeffs.len() - 1
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("polynomial coefficients must be finite"));
        }
        Ok(TestFunction::Polynomial(coeffs))
    }

    pub fn monomial(p: u32) -> Result<Self> {
        if p as usize > MAX_POLY_DEGREE {
            return Err(Error::invalid(format!(
                "monomial power {p} exceeds the registry maximum {MAX_POLY_DEGREE}"
            )));
        }
        Ok(TestFunction::Monomial(p))
    }

    pub fn plateau(a: f64, b: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid(format!(
                "plateau needs finite a < b, got a = {a}, b = {b}"
            )));
        }
        Ok(TestFunction::Plateau { a, b })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunction::Polynomial(c) => horner(c, x),
            TestFunction::Monomial(p) => x.powi(*p as i32),
            TestFunction::ScaledExponential(s) => (s * x).exp(),
            TestFunction::Identity => x,
            TestFunction::Square => x * x,
            TestFunction::Cube => x * x * x,
            TestFunction::Bump => bump_eval(x),
            TestFunction::Plateau { a, b } => {
                if x <= *a {
                    0.0
                } else if x >= *b {
                    1.0
                } else {
                    (x - a) / (b - a)
                }
            }
            TestFunction::Indicator(u) => {
                if x <= *u {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// k-th derivative, k in 0..=4. For the plateau only k <= 1 is meaningful
    /// (the one-sided value 0 is returned at the kinks); the indicator
    /// reports 0 everywhere.
    pub fn derivative(&self, k: u32, x: f64) -> f64 {
        if k == 0 {
            return self.eval(x);
        }
        match self {
            TestFunction::Polynomial(c) => {
                let mut dc = c.clone();
                for _ in 0..k {
                    dc = diff_coeffs(&dc);
                }
                horner(&dc, x)
            }
            TestFunction::Monomial(p) => {
                if (*p as u64) < k as u64 {
                    0.0
                } else {
                    let mut fac = 1.0;
                    for j in 0..k {
                        fac *= (*p - j) as f64;
                    }
                    fac * x.powi((*p - k) as i32)
                }
            }
            TestFunction::ScaledExponential(s) => s.powi(k as i32) * (s * x).exp(),
            TestFunction::Identity => {
                if k == 1 {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::Square => TestFunction::Polynomial(vec![0.0, 0.0, 1.0]).derivative(k, x),
            TestFunction::Cube => {
                TestFunction::Polynomial(vec![0.0, 0.0, 0.0, 1.0]).derivative(k, x)
            }
            TestFunction::Bump => bump_derivative(k, x),
            TestFunction::Plateau { a, b } => {
                if k == 1 && x > *a && x < *b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            TestFunction::Indicator(_) => 0.0,
        }
    }

    /// Derivative orders available before the function stops being smooth.
    pub fn derivative_order_available(&self) -> u32 {
        match self {
            TestFunction::Plateau { .. } => 1,
            TestFunction::Indicator(_) => 0,
            _ => 4,
        }
    }

    /// Locations where the function is not C^1 (quadrature panel boundaries).
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            TestFunction::Plateau { a, b } => vec![*a, *b],
            TestFunction::Indicator(u) => vec![*u],
            _ => Vec::new(),
        }
    }

    /// True for the step function that only the counting integrals accept.
    pub fn is_indicator(&self) -> bool {
        matches!(self, TestFunction::Indicator(_))
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

fn diff_coeffs(coeffs: &[f64]) -> Vec<f64> {
    if coeffs.len() <= 1 {
        return vec![0.0];
    }
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| i as f64 * c)
        .collect()
}

fn bump_eval(x: f64) -> f64 {
    let y = x / 3.0;
    if y.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - y * y)).exp()
    }
}

/// Derivatives of exp(g(y)), y = x/3, g = -1/(1-y^2), via Faa di Bruno with
/// the hand-expanded g^(k). Each d/dx contributes a factor 1/3.
fn bump_derivative(k: u32, x: f64) -> f64 {
    let y = x / 3.0;
    if y.abs() >= 1.0 {
        return 0.0;
    }
    let w = 1.0 / (1.0 - y * y);
    let f = (-w).exp();
    let g1 = -2.0 * y * w * w;
    let g2 = -2.0 * w * w - 8.0 * y * y * w.powi(3);
    let g3 = -24.0 * y * w.powi(3) - 48.0 * y.powi(3) * w.powi(4);
    let g4 = -24.0 * w.powi(3) - 288.0 * y * y * w.powi(4) - 384.0 * y.powi(4) * w.powi(5);
    let dy = match k {
        1 => g1 * f,
        2 => (g2 + g1 * g1) * f,
        3 => (g3 + 3.0 * g1 * g2 + g1.powi(3)) * f,
        4 => (g4 + 4.0 * g1 * g3 + 3.0 * g2 * g2 + 6.0 * g1 * g1 * g2 + g1.powi(4)) * f,
        _ => panic!("bump derivatives implemented for k <= 4"),
    };
    dy / 3.0f64.powi(k as i32)
}

/// The truncation transform f_u(x) = (f(x) - f(u)) 1_{x <= u}.
///
/// Continuous at u from the left; identically 0 beyond u.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedFunction {
    pub base: TestFunction,
    pub u: f64,
    f_at_u: f64,
}

impl TruncatedFunction {
    /// u may range over the full support [-2, 2]; statistics layers impose
    /// the tighter bulk bound [-2+delta, 2-delta] where they need it.
    pub fn new(base: TestFunction, u: f64) -> Result<Self> {
        if !(-2.0..=2.0).contains(&u) {
            return Err(Error::invalid(format!(
                "truncation threshold u = {u} outside [-2, 2]"
            )));
        }
        if base.is_indicator() {
            return Err(Error::invalid(
                "truncating an indicator is not supported; use the counting statistics",
            ));
        }
        let f_at_u = base.eval(u);
        Ok(TruncatedFunction { base, u, f_at_u })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.u {
            self.base.eval(x) - self.f_at_u
        } else {
            0.0
        }
    }

    /// Value of the base function at the threshold, f(u).
    pub fn base_at_u(&self) -> f64 {
        self.f_at_u
    }

    /// Kinks of f_u: the threshold plus any base kinks left of it.
    pub fn kinks(&self) -> Vec<f64> {
        let mut ks: Vec<f64> = self
            .base
            .kinks()
            .into_iter()
            .filter(|&k| k < self.u)
            .collect();
        ks.push(self.u);
        ks
    }
}

/// Either a plain test function or its truncated transform; the common
/// argument type for the exact finite-n mean/variance integrals.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    Plain(TestFunction),
    Truncated(TruncatedFunction),
}

impl Observable {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Observable::Plain(f) => f.eval(x),
            Observable::Truncated(f) => f.eval(x),
        }
    }

    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Observable::Plain(f) => f.kinks(),
            Observable::Truncated(f) => f.kinks(),
        }
    }

    pub fn is_indicator(&self) -> bool {
        matches!(self, Observable::Plain(f) if f.is_indicator())
    }
}

impl From<TestFunction> for Observable {
    fn from(f: TestFunction) -> Self {
        Observable::Plain(f)
    }
}

impl From<TruncatedFunction> for Observable {
    fn from(f: TruncatedFunction) -> Self {
        Observable::Truncated(f)
    }
}

/// (f_u(lambda) - f_u(mu)) / (lambda - mu), with the near-diagonal branch:
/// when |lambda - mu| < 1e-8 the symmetric finite difference of f_u at the
/// midpoint with step h = 1e-6 is used, switching to the one-sided rule on
/// the x <= u side when the stencil would straddle the kink.
pub fn difference_quotient(f: &TruncatedFunction, lambda: f64, mu: f64) -> f64 {
    let d = lambda - mu;
    if d.abs() >= NEAR_DIAGONAL_THRESHOLD {
        return (f.eval(lambda) - f.eval(mu)) / d;
    }
    let m = 0.5 * (lambda + mu);
    let h = FD_STEP;
    if m > f.u + h {
        // both points beyond the truncation: f_u vanishes identically
        0.0
    } else if m < f.u - h {
        (f.eval(m + h) - f.eval(m - h)) / (2.0 * h)
    } else {
        // stencil touches the kink: one-sided difference inside x <= u
        let x0 = m.min(f.u);
        (f.eval(x0) - f.eval(x0 - h)) / h
    }
}

// --- textual registry names used by configs and the CLI ---------------------

impl fmt::Display for TestFunction {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Polynomial(c) => {
                let parts: Vec<String> = c.iter().map(|x| format!("{x}")).collect();
                write!(out, "poly:{}", parts.join(","))
            }
            TestFunction::Monomial(p) => write!(out, "mono:{p}"),
            TestFunction::ScaledExponential(s) => write!(out, "exp:{s}"),
            TestFunction::Identity => write!(out, "x"),
            TestFunction::Square => write!(out, "x2"),
            TestFunction::Cube => write!(out, "x3"),
            TestFunction::Bump => write!(out, "bump"),
            TestFunction::Plateau { a, b } => write!(out, "plateau:{a},{b}"),
            TestFunction::Indicator(u) => write!(out, "step:{u}"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "x" => return Ok(TestFunction::Identity),
            "x2" => return Ok(TestFunction::Square),
            "x3" => return Ok(TestFunction::Cube),
            "bump" => return Ok(TestFunction::Bump),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("poly:") {
            let coeffs = parse_floats(rest, "poly")?;
            return TestFunction::polynomial(coeffs);
        }
        if let Some(rest) = s.strip_prefix("mono:") {
            let p: u32 = rest
                .parse()
                .map_err(|_| Error::invalid(format!("bad monomial power {rest:?}")))?;
            return TestFunction::monomial(p);
        }
        if let Some(rest) = s.strip_prefix("exp:") {
            let v = parse_floats(rest, "exp")?;
            if v.len() != 1 {
                return Err(Error::invalid("exp: takes exactly one scale"));
            }
            return Ok(TestFunction::ScaledExponential(v[0]));
        }
        if let Some(rest) = s.strip_prefix("plateau:") {
            let v = parse_floats(rest, "plateau")?;
            if v.len() != 2 {
                return Err(Error::invalid("plateau: takes exactly a,b"));
            }
            return TestFunction::plateau(v[0], v[1]);
        }
        Err(Error::invalid(format!(
            "unknown test function {s:?}; expected x, x2, x3, bump, poly:c0,c1,..., mono:p, exp:s or plateau:a,b"
        )))
    }
}

fn parse_floats(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad {what} number {tok:?}")))
        })
        .collect()
}

impl Serialize for TestFunction {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TestFunction {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(|e| D::Error::custom(format!("{e}")))
    }
}
