//! Internal composite Gauss-Legendre quadrature.
//!
//! All integral operations in the crate run over explicit panel lists so that
//! kinks of the integrand can be placed exactly on panel boundaries. Panel
//! sums are accumulated in a fixed left-to-right order, which keeps every
//! integral bit-reproducible across runs and worker counts.

use std::sync::OnceLock;

/// Nodes and weights of an m-point Gauss-Legendre rule on [-1, 1].
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Build the m-point rule by Newton iteration on the Legendre polynomial,
    /// starting from the Chebyshev angle guess. Converges to machine accuracy
    /// in a handful of steps for any practical m.
    pub fn new(m: usize) -> Self {
        assert!(m >= 2);
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            for _ in 0..60 {
                let (p, dp) = legendre_pair(m, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre_pair(m, x);
            nodes[m - 1 - i] = x;
            weights[m - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrate f over [a, b] with a single panel of this rule.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

/// (P_m(x), P_m'(x)) by the three-term recurrence.
fn legendre_pair(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// The default 16-point rule shared by the whole crate.
pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

/// Integrate f over the panels defined by consecutive break points.
pub fn composite<F: FnMut(f64) -> f64>(breaks: &[f64], mut f: F) -> f64 {
    let rule = gl16();
    let mut acc = 0.0;
    for w in breaks.windows(2) {
        acc += rule.integrate(w[0], w[1], &mut f);
    }
    acc
}

/// Break points for [a, b]: every interior kink becomes a panel boundary and
/// each resulting segment is subdivided uniformly so that the global panel
/// count is at least `min_panels`.
pub fn breaks_with_kinks(a: f64, b: f64, kinks: &[f64], min_panels: usize) -> Vec<f64> {
    assert!(b > a);
    let mut cuts: Vec<f64> = kinks
        .iter()
        .copied()
        .filter(|&k| k > a + 1e-14 && k < b - 1e-14)
        .collect();
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    cuts.dedup_by(|p, q| (*p - *q).abs() < 1e-13);

    let mut seg_ends = vec![a];
    seg_ends.extend(cuts);
    seg_ends.push(b);

    let total_len = b - a;
    let min_panels = min_panels.max(seg_ends.len() - 1);
    let mut breaks = vec![a];
    for seg in seg_ends.windows(2) {
        let (s0, s1) = (seg[0], seg[1]);
        let k = ((min_panels as f64) * (s1 - s0) / total_len).ceil().max(1.0) as usize;
        for j in 1..=k {
            breaks.push(s0 + (s1 - s0) * (j as f64) / (k as f64));
        }
    }
    breaks
}

/// Insert a geometric cascade of extra break points on both sides of `point`,
/// at distances scale/2, scale/4, ..., scale/2^levels. Used to resolve weak
/// (integrable) singularities sitting exactly on a panel boundary.
pub fn insert_graded(breaks: &mut Vec<f64>, point: f64, scale: f64, levels: u32) {
    let a = breaks[0];
    let b = *breaks.last().unwrap();
    for j in 1..=levels {
        let d = scale / f64::powi(2.0, j as i32);
        for cand in [point - d, point + d] {
            if cand > a + 1e-14 && cand < b - 1e-14 {
                breaks.push(cand);
            }
        }
    }
    breaks.sort_by(|p, q| p.partial_cmp(q).unwrap());
    breaks.dedup_by(|p, q| (*p - *q).abs() < 1e-15);
}

/// Flatten panel breaks into explicit node/weight arrays of the 16-point rule.
pub fn grid(breaks: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let rule = gl16();
    let m = rule.nodes.len();
    let count = (breaks.len() - 1) * m;
    let mut xs = Vec::with_capacity(count);
    let mut ws = Vec::with_capacity(count);
    for w in breaks.windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        let mid = 0.5 * (w[0] + w[1]);
        for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
            xs.push(mid + half * x);
            ws.push(wt * half);
        }
    }
    (xs, ws)
}

/// Adaptive composite integration: double the panel count until two
/// consecutive refinements agree within tol_abs. Returns (value, error
/// estimate). Kinks are pinned to panel boundaries on every level.
pub fn adaptive<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    kinks: &[f64],
    tol_abs: f64,
    mut f: F,
) -> (f64, f64) {
    let mut panels = 16;
    let mut prev = composite(&breaks_with_kinks(a, b, kinks, panels), &mut f);
    for _ in 0..8 {
        panels *= 2;
        let cur = composite(&breaks_with_kinks(a, b, kinks, panels), &mut f);
        let err = (cur - prev).abs();
        if err <= tol_abs {
            return (cur, err);
        }
        prev = cur;
    }
    (prev, f64::NAN)
}
