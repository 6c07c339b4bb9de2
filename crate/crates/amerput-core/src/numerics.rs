//! Quadrature, bracketed root finding and interpolation shared by the solvers.

use crate::error::{Error, Result};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    GaussLegendre,
    CompositeTrapezoid,
}

/// A fixed rule on the reference interval [-1, 1], applied on `panels`
/// equal sub-intervals of the integration range.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    kind: QuadratureKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    panels: usize,
}

impl QuadratureRule {
    pub fn gauss_legendre(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("quadrature needs at least 2 nodes, got {n}")));
        }
        let (nodes, weights) = legendre_nodes(n);
        Ok(Self { kind: QuadratureKind::GaussLegendre, nodes, weights, panels: 1 })
    }

    pub fn trapezoid(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("quadrature needs at least 2 nodes, got {n}")));
        }
        let h = 2.0 / (n - 1) as f64;
        let nodes = (0..n).map(|i| -1.0 + h * i as f64).collect();
        let weights = (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
            .collect();
        Ok(Self { kind: QuadratureKind::CompositeTrapezoid, nodes, weights, panels: 1 })
    }

    pub fn with_panels(mut self, panels: usize) -> Self {
        self.panels = panels.max(1);
        self
    }

    pub fn kind(&self) -> QuadratureKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    /// Reference nodes and weights on [-1, 1].
    pub fn reference(&self) -> (&[f64], &[f64]) {
        (&self.nodes, &self.weights)
    }

    /// Integrates `f` over [a, b]. A reversed interval flips the sign.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        self.integrate_panels(f, a, b, self.panels)
    }

    /// Same as [`integrate`](Self::integrate) with an explicit panel count.
    pub fn integrate_panels<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64, panels: usize) -> Result<f64> {
        let panels = panels.max(1);
        let width = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + width * p as f64;
            let half = 0.5 * width;
            let mid = lo + half;
            let mut sum = 0.0;
            for (t, w) in self.nodes.iter().zip(&self.weights) {
                let x = mid + half * t;
                let v = f(x);
                if !v.is_finite() {
                    return Err(Error::Evaluation { x });
                }
                sum += w * v;
            }
            total += half * sum;
        }
        Ok(total)
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_eval(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (_, d) = legendre_eval(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootBracket {
    pub lo: f64,
    pub hi: f64,
    pub tol_abs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSolution {
    pub root: f64,
    /// Final bracket; straddles the sign change.
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

pub const MAX_ROOT_ITERATIONS: usize = 200;

/// Bracketed bisection with safeguarded secant steps.
pub fn solve_root<F: FnMut(f64) -> f64>(mut f: F, bracket: RootBracket) -> Result<RootSolution> {
    let RootBracket { lo, hi, tol_abs } = bracket;
    if !(lo < hi) || !(tol_abs > 0.0) {
        return Err(Error::Parameter(format!("bad bracket [{lo}, {hi}] tol {tol_abs}")));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if !fa.is_finite() {
        return Err(Error::Evaluation { x: a });
    }
    if !fb.is_finite() {
        return Err(Error::Evaluation { x: b });
    }
    if fa == 0.0 {
        return Ok(RootSolution { root: a, lo: a, hi: a, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(RootSolution { root: b, lo: b, hi: b, iterations: 0 });
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket { lo, hi, f_lo: fa, f_hi: fb });
    }
    let mut force_bisect = false;
    for it in 1..=MAX_ROOT_ITERATIONS {
        let width = b - a;
        if width <= tol_abs {
            let root = if fa.abs() <= fb.abs() { a } else { b };
            return Ok(RootSolution { root, lo: a, hi: b, iterations: it - 1 });
        }
        let margin = 0.25 * tol_abs;
        let x = if force_bisect {
            0.5 * (a + b)
        } else {
            let s = b - fb * (b - a) / (fb - fa);
            if s.is_finite() {
                s.clamp(a + margin, b - margin)
            } else {
                0.5 * (a + b)
            }
        };
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::Evaluation { x });
        }
        if fx == 0.0 {
            return Ok(RootSolution { root: x, lo: x, hi: x, iterations: it });
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        // A secant step that fails to halve the bracket is followed by a bisection.
        force_bisect = !force_bisect && (b - a) > 0.5 * width;
    }
    let best = if fa.abs() <= fb.abs() { a } else { b };
    Err(Error::NonConvergence { iterations: MAX_ROOT_ITERATIONS, best })
}

fn check_knots(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Parameter("knot arrays must have equal length >= 2".into()));
    }
    if xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Parameter("knots must be strictly increasing".into()));
    }
    Ok(())
}

fn segment(xs: &[f64], x: f64) -> usize {
    let i = xs.partition_point(|&k| k <= x);
    i.clamp(1, xs.len() - 1) - 1
}

pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> Result<f64> {
    check_knots(xs, ys)?;
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    if !(x >= lo && x <= hi) {
        return Err(Error::Range { value: x, lo, hi });
    }
    let i = segment(xs, x);
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    Ok(ys[i] + t * (ys[i + 1] - ys[i]))
}

/// Natural cubic spline.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        check_knots(&xs, &ys)?;
        let n = xs.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for the interior second derivatives.
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let rhs = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
                let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
                c[i] = h1 / diag;
                d[i] = (rhs - h0 * d[i - 1]) / diag;
            }
            for i in (1..n - 1).rev() {
                m[i] = d[i] - c[i] * m[i + 1];
            }
        }
        Ok(Self { xs, ys, m })
    }

    pub fn lo(&self) -> f64 {
        self.xs[0]
    }

    pub fn hi(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    /// Evaluates the spline; outside the knot range the end cubic is continued.
    pub fn eval(&self, x: f64) -> f64 {
        let i = segment(&self.xs, x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}
