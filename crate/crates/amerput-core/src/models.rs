//! Diffusion and jump-diffusion model specifications.
//!
//! A [`DiffusionSpec`] carries the risk-neutral drift and volatility in price
//! units, together with the interest and dividend *flows* `r(S)` and `delta(S)`
//! so that `mu(S) = r(S) - delta(S)` holds pointwise. For the linear-drift
//! models the flows are `r*S` and `delta*S`; for NMR the dividend flow is
//! whatever makes the nonlinear drift consistent with discounting at `r`.

use crate::error::{param_err, Error, Result};
use crate::numerics::{QuadratureRule, SQRT_2PI};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

fn arc<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> ScalarFn {
    Arc::new(f)
}

/// Optional closed forms a model can register to keep quadrature out of the
/// inner loops. `gamma` is any antiderivative of `1/sigma`; `mu_y` and
/// `mu_y_prime` take that same (unanchored) coordinate.
#[derive(Clone, Default)]
pub struct ClosedForms {
    pub gamma: Option<ScalarFn>,
    pub gamma_inv: Option<ScalarFn>,
    pub mu_y: Option<ScalarFn>,
    pub mu_y_prime: Option<ScalarFn>,
    /// Antiderivative of `mu / sigma^2` in the price coordinate.
    pub drift_potential: Option<ScalarFn>,
    /// Set when `mu_Y` does not depend on the state.
    pub constant_mu_y: Option<f64>,
}

#[derive(Clone)]
pub struct DiffusionSpec {
    name: String,
    mu: ScalarFn,
    sigma: ScalarFn,
    sigma_prime: ScalarFn,
    mu_prime: Option<ScalarFn>,
    sigma_second: Option<ScalarFn>,
    r_flow: ScalarFn,
    delta_flow: ScalarFn,
    rate: f64,
    domain: (f64, f64),
    closed: ClosedForms,
    constant: Option<(f64, f64)>,
    sigma_prime_fd: bool,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("name", &self.name)
            .field("rate", &self.rate)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl DiffusionSpec {
    pub fn builder(name: impl Into<String>, rate: f64, mu: ScalarFn, sigma: ScalarFn) -> DiffusionBuilder {
        DiffusionBuilder {
            name: name.into(),
            rate,
            mu,
            sigma,
            sigma_prime: None,
            mu_prime: None,
            sigma_second: None,
            r_flow: None,
            domain: (0.0, f64::INFINITY),
            closed: ClosedForms::default(),
            constant: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn mu(&self, s: f64) -> f64 {
        (self.mu)(s)
    }
    pub fn sigma(&self, s: f64) -> f64 {
        (self.sigma)(s)
    }
    pub fn sigma_prime(&self, s: f64) -> f64 {
        (self.sigma_prime)(s)
    }
    pub fn mu_prime(&self, s: f64) -> Option<f64> {
        self.mu_prime.as_ref().map(|f| f(s))
    }
    pub fn sigma_second(&self, s: f64) -> Option<f64> {
        self.sigma_second.as_ref().map(|f| f(s))
    }
    pub fn r(&self, s: f64) -> f64 {
        (self.r_flow)(s)
    }
    pub fn delta(&self, s: f64) -> f64 {
        (self.delta_flow)(s)
    }
    /// Constant discount rate.
    pub fn rate(&self) -> f64 {
        self.rate
    }
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }
    pub fn contains(&self, s: f64) -> bool {
        s > self.domain.0 && s < self.domain.1
    }
    pub fn closed(&self) -> &ClosedForms {
        &self.closed
    }
    /// `(mu, sigma)` when both coefficients are state independent.
    pub fn constant_coefficients(&self) -> Option<(f64, f64)> {
        self.constant
    }
    pub fn sigma_prime_is_numeric(&self) -> bool {
        self.sigma_prime_fd
    }
}

pub struct DiffusionBuilder {
    name: String,
    rate: f64,
    mu: ScalarFn,
    sigma: ScalarFn,
    sigma_prime: Option<ScalarFn>,
    mu_prime: Option<ScalarFn>,
    sigma_second: Option<ScalarFn>,
    r_flow: Option<ScalarFn>,
    domain: (f64, f64),
    closed: ClosedForms,
    constant: Option<(f64, f64)>,
}

impl DiffusionBuilder {
    pub fn sigma_prime(mut self, f: ScalarFn) -> Self {
        self.sigma_prime = Some(f);
        self
    }
    pub fn mu_prime(mut self, f: ScalarFn) -> Self {
        self.mu_prime = Some(f);
        self
    }
    pub fn sigma_second(mut self, f: ScalarFn) -> Self {
        self.sigma_second = Some(f);
        self
    }
    /// Interest flow `r(S)`; defaults to `rate * S`.
    pub fn r_flow(mut self, f: ScalarFn) -> Self {
        self.r_flow = Some(f);
        self
    }
    pub fn domain(mut self, lo: f64, hi: f64) -> Self {
        self.domain = (lo, hi);
        self
    }
    pub fn closed(mut self, closed: ClosedForms) -> Self {
        self.closed = closed;
        self
    }
    pub fn constant(mut self, mu: f64, sigma: f64) -> Self {
        self.constant = Some((mu, sigma));
        self
    }

    pub fn build(self) -> Result<DiffusionSpec> {
        if !(self.domain.0 < self.domain.1) {
            return param_err(format!("empty domain {:?}", self.domain));
        }
        if !self.rate.is_finite() {
            return param_err("rate must be finite");
        }
        let sigma_prime_fd = self.sigma_prime.is_none();
        let sigma_prime = match self.sigma_prime {
            Some(f) => f,
            None => {
                log::warn!("model {}: sigma' not supplied, using central differences", self.name);
                let sigma = self.sigma.clone();
                arc(move |s| {
                    let h = 1e-5 * s.abs().max(1.0);
                    (sigma(s + h) - sigma(s - h)) / (2.0 * h)
                })
            }
        };
        let rate = self.rate;
        let r_flow = self.r_flow.unwrap_or_else(|| arc(move |s| rate * s));
        let delta_flow = {
            let (r, mu) = (r_flow.clone(), self.mu.clone());
            arc(move |s| r(s) - mu(s))
        };
        Ok(DiffusionSpec {
            name: self.name,
            mu: self.mu,
            sigma: self.sigma,
            sigma_prime,
            mu_prime: self.mu_prime,
            sigma_second: self.sigma_second,
            r_flow,
            delta_flow,
            rate,
            domain: self.domain,
            closed: self.closed,
            constant: self.constant,
            sigma_prime_fd,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbmParams {
    pub r: f64,
    pub delta: f64,
    pub sigma: f64,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self { r: 0.0488, delta: 0.0, sigma: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CevParams {
    pub r: f64,
    pub delta: f64,
    pub sigma: f64,
    pub alpha: f64,
}

impl Default for CevParams {
    fn default() -> Self {
        Self { r: 0.06, delta: 0.03, sigma: 10f64.sqrt() / 5.0, alpha: 1.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NmrParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub v: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub r: f64,
    pub delta: f64,
}

impl Default for NmrParams {
    fn default() -> Self {
        Self { a: 500.0, b: 5.0, c: 0.05, v: -0.05, sigma: 0.2, gamma: 1.5, r: 0.05, delta: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MertonParams {
    pub r: f64,
    pub delta: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub mu_j: f64,
    pub sigma_j: f64,
}

impl Default for MertonParams {
    fn default() -> Self {
        Self { r: 0.0488, delta: 0.0, sigma: 0.2, lambda: 0.1, mu_j: 0.0, sigma_j: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KouParams {
    pub r: f64,
    pub delta: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub p: f64,
    pub q: f64,
    pub eta1: f64,
    pub eta2: f64,
}

impl Default for KouParams {
    fn default() -> Self {
        Self { r: 0.0488, delta: 0.0, sigma: 0.2, lambda: 0.1, p: 0.04, q: 0.96, eta1: 3.7, eta2: 1.8 }
    }
}

fn check_finite(fields: &[(&str, f64)]) -> Result<()> {
    for (name, v) in fields {
        if !v.is_finite() {
            return param_err(format!("{name} must be finite, got {v}"));
        }
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 {
        Ok(())
    } else {
        param_err(format!("sigma must be positive, got {sigma}"))
    }
}

/// `int x^e dx` without the constant.
fn power_antiderivative(e: f64, x: f64) -> f64 {
    if (e + 1.0).abs() < 1e-14 {
        x.ln()
    } else {
        x.powf(e + 1.0) / (e + 1.0)
    }
}

/// Closed-form Lamperti coordinate for `sigma(S) = s * S^g`.
fn power_gamma(s: f64, g: f64) -> (ScalarFn, ScalarFn) {
    if (g - 1.0).abs() < 1e-14 {
        (arc(move |x| x.ln() / s), arc(move |y| (s * y).exp()))
    } else {
        let e = 1.0 - g;
        (
            arc(move |x| x.powf(e) / (s * e)),
            arc(move |y| {
                let u = s * e * y;
                if u > 0.0 {
                    u.powf(1.0 / e)
                } else {
                    f64::NAN
                }
            }),
        )
    }
}

/// Linear drift `m*S` with volatility `s*S^g` (GBM for g = 1, CEV otherwise).
fn linear_drift_power_vol(name: &str, r: f64, delta: f64, s: f64, g: f64) -> Result<DiffusionSpec> {
    let m = r - delta;
    let (gamma, gamma_inv) = power_gamma(s, g);
    let mut closed = ClosedForms {
        gamma: Some(gamma),
        gamma_inv: Some(gamma_inv),
        drift_potential: Some(arc(move |x| m / (s * s) * power_antiderivative(1.0 - 2.0 * g, x))),
        ..Default::default()
    };
    if (g - 1.0).abs() < 1e-14 {
        let c = m / s - 0.5 * s;
        closed.mu_y = Some(arc(move |_| c));
        closed.mu_y_prime = Some(arc(|_| 0.0));
        closed.constant_mu_y = Some(c);
    } else {
        let e = 1.0 - g;
        closed.mu_y = Some(arc(move |u| m * e * u - g / (2.0 * e * u)));
        closed.mu_y_prime = Some(arc(move |u| m * e + g / (2.0 * e * u * u)));
    }
    DiffusionSpec::builder(name, r, arc(move |x| m * x), arc(move |x| s * x.powf(g)))
        .sigma_prime(arc(move |x| s * g * x.powf(g - 1.0)))
        .mu_prime(arc(move |_| m))
        .sigma_second(arc(move |x| s * g * (g - 1.0) * x.powf(g - 2.0)))
        .domain(0.0, f64::INFINITY)
        .closed(closed)
        .build()
}

pub fn build_gbm(p: &GbmParams) -> Result<DiffusionSpec> {
    check_finite(&[("r", p.r), ("delta", p.delta), ("sigma", p.sigma)])?;
    check_sigma(p.sigma)?;
    linear_drift_power_vol("gbm", p.r, p.delta, p.sigma, 1.0)
}

pub fn build_cev(p: &CevParams) -> Result<DiffusionSpec> {
    check_finite(&[("r", p.r), ("delta", p.delta), ("sigma", p.sigma), ("alpha", p.alpha)])?;
    check_sigma(p.sigma)?;
    if !(p.alpha > 0.0) {
        return param_err(format!("alpha must be positive, got {}", p.alpha));
    }
    linear_drift_power_vol("cev", p.r, p.delta, p.sigma, 0.5 * p.alpha)
}

pub fn build_nmr(p: &NmrParams) -> Result<DiffusionSpec> {
    check_finite(&[
        ("a", p.a),
        ("b", p.b),
        ("c", p.c),
        ("v", p.v),
        ("sigma", p.sigma),
        ("gamma", p.gamma),
        ("r", p.r),
        ("delta", p.delta),
    ])?;
    check_sigma(p.sigma)?;
    let NmrParams { a, b, c, v, sigma: s, gamma: g, r, .. } = *p;
    let (gamma, gamma_inv) = power_gamma(s, g);
    let potential = arc(move |x| {
        (a * power_antiderivative(-1.0 - 2.0 * g, x)
            + b * power_antiderivative(-2.0 * g, x)
            + c * power_antiderivative(1.0 - 2.0 * g, x)
            + v * power_antiderivative(2.0 - 2.0 * g, x))
            / (s * s)
    });
    let closed = ClosedForms {
        gamma: Some(gamma),
        gamma_inv: Some(gamma_inv),
        drift_potential: Some(potential),
        ..Default::default()
    };
    DiffusionSpec::builder("nmr", r, arc(move |x| a / x + b + c * x + v * x * x), arc(move |x| s * x.powf(g)))
        .sigma_prime(arc(move |x| s * g * x.powf(g - 1.0)))
        .mu_prime(arc(move |x| -a / (x * x) + c + 2.0 * v * x))
        .sigma_second(arc(move |x| s * g * (g - 1.0) * x.powf(g - 2.0)))
        .domain(0.0, f64::INFINITY)
        .closed(closed)
        .build()
}

/// Distribution of the jump size in log price.
#[derive(Clone)]
pub enum JumpLaw {
    Normal { mean: f64, std: f64 },
    DoubleExponential { p: f64, eta_up: f64, eta_down: f64 },
    Custom { density: ScalarFn, support: (f64, f64) },
}

impl fmt::Debug for JumpLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpLaw::Normal { mean, std } => write!(f, "Normal({mean}, {std})"),
            JumpLaw::DoubleExponential { p, eta_up, eta_down } => {
                write!(f, "DoubleExponential(p={p}, eta1={eta_up}, eta2={eta_down})")
            }
            JumpLaw::Custom { support, .. } => write!(f, "Custom(support={support:?})"),
        }
    }
}

const FD_STEP_Z: f64 = 1e-4;

impl JumpLaw {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, JumpLaw::Normal { std, .. } if *std == 0.0)
    }

    /// Interval outside which the density is below 1e-12.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            JumpLaw::Normal { mean, std } => (mean - 8.0 * std, mean + 8.0 * std),
            JumpLaw::DoubleExponential { p, eta_up, eta_down } => {
                let edge = |w: f64, eta: f64| if w * eta > 1e-12 { (w * eta / 1e-12).ln() / eta } else { 0.0 };
                (-edge(1.0 - p, eta_down), edge(p, eta_up))
            }
            JumpLaw::Custom { support, .. } => support,
        }
    }

    /// Interval carrying both the density and its self-convolution.
    pub fn expansion_support(&self) -> (f64, f64) {
        match *self {
            JumpLaw::Normal { mean, std } => {
                let w = 8.0 * std::f64::consts::SQRT_2 * std;
                (mean.min(2.0 * mean) - w, mean.max(2.0 * mean) + w)
            }
            JumpLaw::DoubleExponential { eta_up, eta_down, .. } => {
                let (lo, hi) = self.support();
                (lo - 4.0 / eta_down, hi + 4.0 / eta_up)
            }
            JumpLaw::Custom { support, .. } => (2.0 * support.0, 2.0 * support.1),
        }
    }

    /// Panel width that resolves the density on the given side of zero with
    /// a 16-node Gauss rule.
    pub fn panel_width(&self, upper_side: bool) -> f64 {
        match *self {
            JumpLaw::Normal { std, .. } => 2.0 * std,
            JumpLaw::DoubleExponential { eta_up, eta_down, .. } => {
                4.0 / if upper_side { eta_up } else { eta_down }
            }
            JumpLaw::Custom { support, .. } => (support.1 - support.0) / 16.0,
        }
    }

    pub fn density(&self, z: f64) -> f64 {
        match *self {
            JumpLaw::Normal { mean, std } => {
                let u = (z - mean) / std;
                (-0.5 * u * u).exp() / (SQRT_2PI * std)
            }
            JumpLaw::DoubleExponential { p, eta_up, eta_down } => {
                if z >= 0.0 {
                    p * eta_up * (-eta_up * z).exp()
                } else {
                    (1.0 - p) * eta_down * (eta_down * z).exp()
                }
            }
            JumpLaw::Custom { ref density, .. } => density(z),
        }
    }

    pub fn density_d1(&self, z: f64) -> f64 {
        match *self {
            JumpLaw::Normal { mean, std } => -(z - mean) / (std * std) * self.density(z),
            JumpLaw::DoubleExponential { eta_up, eta_down, .. } => {
                if z >= 0.0 {
                    -eta_up * self.density(z)
                } else {
                    eta_down * self.density(z)
                }
            }
            JumpLaw::Custom { .. } => {
                (self.density(z + FD_STEP_Z) - self.density(z - FD_STEP_Z)) / (2.0 * FD_STEP_Z)
            }
        }
    }

    /// Second derivative; for the double exponential the point mass at 0
    /// coming from the density jump is not included.
    pub fn density_d2(&self, z: f64) -> f64 {
        match *self {
            JumpLaw::Normal { mean, std } => {
                let v = std * std;
                let u = z - mean;
                (u * u / (v * v) - 1.0 / v) * self.density(z)
            }
            JumpLaw::DoubleExponential { eta_up, eta_down, .. } => {
                let eta = if z >= 0.0 { eta_up } else { eta_down };
                eta * eta * self.density(z)
            }
            JumpLaw::Custom { .. } => {
                (self.density(z + FD_STEP_Z) - 2.0 * self.density(z) + self.density(z - FD_STEP_Z))
                    / (FD_STEP_Z * FD_STEP_Z)
            }
        }
    }

    /// Density of the sum of two independent jumps.
    pub fn self_convolution(&self, z: f64) -> f64 {
        match *self {
            JumpLaw::Normal { mean, std } => {
                let s = std * std::f64::consts::SQRT_2;
                let u = (z - 2.0 * mean) / s;
                (-0.5 * u * u).exp() / (SQRT_2PI * s)
            }
            JumpLaw::DoubleExponential { p, eta_up: e1, eta_down: e2 } => {
                let q = 1.0 - p;
                let cross = 2.0 * p * q * e1 * e2 / (e1 + e2);
                if z >= 0.0 {
                    p * p * e1 * e1 * z * (-e1 * z).exp() + cross * (-e1 * z).exp()
                } else {
                    q * q * e2 * e2 * (-z) * (e2 * z).exp() + cross * (e2 * z).exp()
                }
            }
            JumpLaw::Custom { support, .. } => {
                let rule = QuadratureRule::gauss_legendre(64).expect("64 nodes").with_panels(8);
                rule.integrate(|c| self.density(z - c) * self.density(c), support.0, support.1)
                    .unwrap_or(f64::NAN)
            }
        }
    }

    /// Level `z` with `P(Z > z) <= tail` (used to size value grids).
    pub fn upper_quantile(&self, tail: f64) -> f64 {
        match *self {
            JumpLaw::Normal { mean, std } => {
                use statrs::distribution::{ContinuousCDF, Normal};
                let n = Normal::new(0.0, 1.0).expect("standard normal");
                mean + std * n.inverse_cdf(1.0 - tail)
            }
            JumpLaw::DoubleExponential { p, eta_up, .. } => {
                if p <= tail {
                    0.0
                } else {
                    (p / tail).ln() / eta_up
                }
            }
            JumpLaw::Custom { support, .. } => support.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JumpSpec {
    pub intensity: f64,
    pub law: JumpLaw,
    /// `j = E[e^z - 1]`.
    pub mean_relative_jump: f64,
}

impl JumpSpec {
    pub fn log_jump_density(&self, z: f64) -> f64 {
        self.law.density(z)
    }
    pub fn support(&self) -> (f64, f64) {
        self.law.support()
    }
}

pub fn build_merton_jumps(p: &MertonParams) -> Result<JumpSpec> {
    check_finite(&[("lambda", p.lambda), ("mu_j", p.mu_j), ("sigma_j", p.sigma_j)])?;
    if p.sigma_j < 0.0 {
        return param_err(format!("sigma_j must be nonnegative, got {}", p.sigma_j));
    }
    if p.lambda < 0.0 {
        return param_err(format!("lambda must be nonnegative, got {}", p.lambda));
    }
    Ok(JumpSpec {
        intensity: p.lambda,
        law: JumpLaw::Normal { mean: p.mu_j, std: p.sigma_j },
        mean_relative_jump: (p.mu_j + 0.5 * p.sigma_j * p.sigma_j).exp() - 1.0,
    })
}

fn check_kou(p: &KouParams) -> Result<()> {
    check_finite(&[("lambda", p.lambda), ("p", p.p), ("q", p.q), ("eta1", p.eta1), ("eta2", p.eta2)])?;
    if p.lambda < 0.0 {
        return param_err(format!("lambda must be nonnegative, got {}", p.lambda));
    }
    if !(p.eta1 > 1.0) {
        return param_err(format!("eta1 must exceed 1, got {}", p.eta1));
    }
    if !(p.eta2 > 0.0) {
        return param_err(format!("eta2 must be positive, got {}", p.eta2));
    }
    if !(0.0..=1.0).contains(&p.p) || !(0.0..=1.0).contains(&p.q) || (p.p + p.q - 1.0).abs() > 1e-12 {
        return param_err(format!("p and q must be probabilities summing to 1, got {} and {}", p.p, p.q));
    }
    Ok(())
}

pub fn build_kou_jumps(p: &KouParams) -> Result<JumpSpec> {
    check_kou(p)?;
    let j = p.p * p.eta1 / (p.eta1 - 1.0) + p.q * p.eta2 / (p.eta2 + 1.0) - 1.0;
    Ok(JumpSpec {
        intensity: p.lambda,
        law: JumpLaw::DoubleExponential { p: p.p, eta_up: p.eta1, eta_down: p.eta2 },
        mean_relative_jump: j,
    })
}

/// Mean, variance and skewness of the Kou log jump.
pub fn kou_moments(p: &KouParams) -> Result<(f64, f64, f64)> {
    check_kou(p)?;
    let KouParams { p, q, eta1: e1, eta2: e2, .. } = *p;
    let phi1 = p / e1 - q / e2;
    let phi2 = p * q * (1.0 / e1 + 1.0 / e2).powi(2) + p / (e1 * e1) + q / (e2 * e2);
    let num = 2.0 * (p.powi(3) - 1.0) * e1.powi(3) - 2.0 * (q.powi(3) - 1.0) * e2.powi(3)
        + 6.0 * p * q * e1 * e2 * (q * e2 - p * e1);
    let den = (p * e2 * e2 + q * e1 * e1 + p * q * (e1 + e2).powi(2)).powf(1.5);
    Ok((phi1, phi2, num / den))
}

/// Jump-diffusion with the diffusion part written in log price.
#[derive(Debug, Clone)]
pub struct JumpDiffusionModel {
    pub name: String,
    /// Coefficients of `d log S` (drift includes `-lambda*j - sigma^2/2`).
    pub log_diffusion: DiffusionSpec,
    pub jumps: JumpSpec,
    pub rate: f64,
    pub dividend: f64,
}

fn log_gbm(name: &str, r: f64, delta: f64, sigma: f64, jumps: &JumpSpec) -> Result<DiffusionSpec> {
    let mu = r - delta - jumps.intensity * jumps.mean_relative_jump - 0.5 * sigma * sigma;
    let closed = ClosedForms {
        gamma: Some(arc(move |x| x / sigma)),
        gamma_inv: Some(arc(move |y| y * sigma)),
        mu_y: Some(arc(move |_| mu / sigma)),
        mu_y_prime: Some(arc(|_| 0.0)),
        drift_potential: Some(arc(move |x| mu / (sigma * sigma) * x)),
        constant_mu_y: Some(mu / sigma),
    };
    DiffusionSpec::builder(name, r, arc(move |_| mu), arc(move |_| sigma))
        .sigma_prime(arc(|_| 0.0))
        .mu_prime(arc(|_| 0.0))
        .sigma_second(arc(|_| 0.0))
        .r_flow(arc(move |_| r))
        .domain(f64::NEG_INFINITY, f64::INFINITY)
        .closed(closed)
        .constant(mu, sigma)
        .build()
}

pub fn build_merton(p: &MertonParams) -> Result<JumpDiffusionModel> {
    check_finite(&[("r", p.r), ("delta", p.delta), ("sigma", p.sigma)])?;
    check_sigma(p.sigma)?;
    let jumps = build_merton_jumps(p)?;
    Ok(JumpDiffusionModel {
        name: "merton".into(),
        log_diffusion: log_gbm("merton-log", p.r, p.delta, p.sigma, &jumps)?,
        jumps,
        rate: p.r,
        dividend: p.delta,
    })
}

pub fn build_kou(p: &KouParams) -> Result<JumpDiffusionModel> {
    check_finite(&[("r", p.r), ("delta", p.delta), ("sigma", p.sigma)])?;
    check_sigma(p.sigma)?;
    let jumps = build_kou_jumps(p)?;
    Ok(JumpDiffusionModel {
        name: "kou".into(),
        log_diffusion: log_gbm("kou-log", p.r, p.delta, p.sigma, &jumps)?,
        jumps,
        rate: p.r,
        dividend: p.delta,
    })
}

/// Wraps a model-independent error for callers that only see `Error`.
pub fn domain_error<T>(s: f64) -> Result<T> {
    Err(Error::Domain(s))
}
