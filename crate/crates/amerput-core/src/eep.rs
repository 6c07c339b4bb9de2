//! American put for diffusions: European leg plus early exercise premium,
//! with the exercise boundary solved backward on a step-function grid.

use crate::error::{Error, Result};
use crate::hermite::DensityExpansion;
use crate::models::{DiffusionSpec, GbmParams};
use crate::numerics::{norm_cdf, solve_root, QuadratureRule, RootBracket};
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use std::sync::atomic::{AtomicU64, Ordering};

/// Ratio between successive trial points when bracketing the boundary downward from the strike.
pub const BRACKET_STEP: f64 = 0.8;
/// The bracket search gives up below this fraction of the strike.
pub const BRACKET_FLOOR: f64 = 1e-8;
/// Boundary root tolerance, as a fraction of the strike.
pub const ROOT_TOL: f64 = 1e-8;
/// Integrals over `(0, K]` start here (fraction of the strike).
pub const LOWER_EDGE: f64 = 1e-8;
/// Half-width of the integration window in standard deviations of `Y`.
const WINDOW_SD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PutContract {
    pub strike: f64,
    pub maturity: f64,
    pub spot: f64,
}

impl PutContract {
    pub fn new(strike: f64, maturity: f64, spot: f64) -> Result<Self> {
        let c = Self { strike, maturity, spot };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("strike", self.strike), ("maturity", self.maturity), ("spot", self.spot)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn intrinsic(&self) -> f64 {
        (self.strike - self.spot).max(0.0)
    }
}

/// Step-function exercise boundary on `n_steps + 1` equally spaced knots.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    dt: f64,
    values: Vec<f64>,
}

impl BoundaryGrid {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 || !(dt > 0.0) {
            return Err(Error::Parameter("boundary grid needs N >= 2 and a positive step".into()));
        }
        Ok(Self { dt, values })
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, n: usize) -> f64 {
        self.values[n]
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// Value in force at time `t` (left knot of the step).
    pub fn at_time(&self, t: f64) -> f64 {
        let n = ((t / self.dt + 1e-9).floor().max(0.0) as usize).min(self.n_steps());
        self.values[n]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step_index,time_years,boundary")?;
        for (n, b) in self.values.iter().enumerate() {
            writeln!(out, "{},{},{}", n, self.time(n), b)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Diagnostics {
    pub quadrature_panels: u64,
    pub clamp_count: u64,
    pub root_iterations: usize,
    /// Downward bracket steps taken from the strike.
    pub bracket_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingResult {
    pub price: f64,
    pub european: f64,
    pub premium: f64,
    pub boundary: BoundaryGrid,
    pub diagnostics: Diagnostics,
}

/// The pieces of the premium recursion that depend on the transition law.
pub trait PremiumKernel {
    fn strike(&self) -> f64;
    /// Discounted European put with `tau` to run from state `s`.
    fn european_put(&self, tau: f64, s: f64) -> Result<f64>;
    /// Exercise-gain rate at state `s` for boundary knot `q`.
    fn weight(&self, q: usize, s: f64) -> Result<f64>;
    /// Discounted expected gain over `S < b_to` after `gap > 0` from `b_from`.
    fn eps(&self, q: usize, gap: f64, b_from: f64, b_to: f64) -> Result<f64>;
    fn panels_used(&self) -> u64 {
        0
    }
    fn clamps(&self) -> u64 {
        0
    }
}

/// `eps` including the zero-gap term, where the law is a point mass at
/// `b_from` that counts half when it sits on the boundary itself.
pub fn eps_with_diagonal<K: PremiumKernel + ?Sized>(k: &K, q: usize, gap: f64, b_from: f64, b_to: f64) -> Result<f64> {
    if gap > 0.0 {
        return k.eps(q, gap, b_from, b_to);
    }
    if b_from < b_to {
        k.weight(q, b_from)
    } else if b_from == b_to {
        Ok(0.5 * k.weight(q, b_from)?)
    } else {
        Ok(0.0)
    }
}

/// Trapezoid premium from knot `l` at state `s`, with knot `l` itself set to `b_l`.
pub fn premium_from<K: PremiumKernel + ?Sized>(k: &K, values: &[f64], dt: f64, l: usize, s: f64, b_l: f64) -> Result<f64> {
    let n = values.len() - 1;
    let mut total = 0.5 * eps_with_diagonal(k, l, 0.0, s, b_l)?;
    for (q, &b_q) in values.iter().enumerate().take(n).skip(l + 1) {
        total += k.eps(q, (q - l) as f64 * dt, s, b_q)?;
    }
    total += 0.5 * k.eps(n, (n - l) as f64 * dt, s, values[n])?;
    Ok(total * dt)
}

/// Backward recursion for the boundary knots `0..N`, knot `N` fixed to `terminal`.
pub fn solve_boundary_with<K: PremiumKernel + ?Sized>(
    k: &K,
    contract: &PutContract,
    n_steps: usize,
    terminal: f64,
    diag: &mut Diagnostics,
) -> Result<BoundaryGrid> {
    contract.validate()?;
    if n_steps < 2 {
        return Err(Error::Parameter(format!("need at least 2 time steps, got {n_steps}")));
    }
    let strike = contract.strike;
    let dt = contract.maturity / n_steps as f64;
    let mut values = vec![f64::NAN; n_steps + 1];
    values[n_steps] = terminal;
    for l in (0..n_steps).rev() {
        let tau = (n_steps - l) as f64 * dt;
        let residual = |b: f64| -> Result<f64> {
            Ok(strike - b - k.european_put(tau, b)? - premium_from(k, &values, dt, l, b, b)?)
        };
        // The boundary is the highest sign change below the strike. Scanning
        // down from K finds it without visiting states near zero, where strong
        // drifts can take the expansion outside its range.
        let mut hi = strike;
        let mut f_hi = residual(hi)?;
        let mut lo = hi * BRACKET_STEP;
        let mut f_lo = residual(lo)?;
        while f_lo.signum() == f_hi.signum() && f_lo.is_finite() {
            if lo * BRACKET_STEP < BRACKET_FLOOR * strike {
                return Err(Error::BoundarySolve { step: l, lo, hi, f_lo, f_hi });
            }
            diag.bracket_steps += 1;
            (hi, f_hi) = (lo, f_lo);
            lo *= BRACKET_STEP;
            f_lo = residual(lo)?;
        }
        if !f_lo.is_finite() || !f_hi.is_finite() {
            return Err(Error::BoundarySolve { step: l, lo, hi, f_lo, f_hi });
        }
        let mut failure = None;
        let sol = solve_root(
            |b| match residual(b) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            RootBracket { lo, hi, tol_abs: ROOT_TOL * strike },
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let sol = sol.map_err(|_| Error::BoundarySolve { step: l, lo, hi, f_lo, f_hi })?;
        diag.root_iterations += sol.iterations;
        values[l] = sol.root;
    }
    BoundaryGrid::new(dt, values)
}

/// Price from a solved boundary: `(P, p, e)`, intrinsic when `S0 <= B_0`.
/// The premium is floored so that `P` never falls below intrinsic.
pub fn price_with_boundary<K: PremiumKernel + ?Sized>(
    k: &K,
    contract: &PutContract,
    boundary: &BoundaryGrid,
) -> Result<(f64, f64, f64)> {
    let s0 = contract.spot;
    let european = k.european_put(contract.maturity, s0)?;
    if s0 <= boundary.value(0) {
        let intrinsic = contract.intrinsic();
        return Ok((intrinsic, european, intrinsic - european));
    }
    let premium = premium_from(k, boundary.values(), boundary.dt(), 0, s0, boundary.value(0))?;
    // Just above B_0 the discrete premium loses the half-weight diagonal term,
    // which can leave p + e a step-size amount under intrinsic.
    let premium = premium.max(contract.intrinsic() - european);
    Ok((european + premium, european, premium))
}

/// `min{K, r(K)/delta(K) K}`, or `K` when the dividend flow at `K` is not positive.
pub fn terminal_boundary(spec: &DiffusionSpec, strike: f64) -> f64 {
    let (r, d) = (spec.r(strike), spec.delta(strike));
    if d <= 0.0 {
        strike
    } else {
        strike.min(r / d * strike)
    }
}

/// Expansion-based kernel: integrals in the Lamperti coordinate over a window
/// of `WINDOW_SD` standard deviations clipped to the relevant states.
pub struct ExpansionKernel<'a> {
    expansion: &'a DensityExpansion,
    strike: f64,
    rule: QuadratureRule,
    y_floor: f64,
    y_strike: f64,
    panels: AtomicU64,
}

impl<'a> ExpansionKernel<'a> {
    pub fn new(expansion: &'a DensityExpansion, strike: f64) -> Result<Self> {
        let t = expansion.transform();
        let floor = (LOWER_EDGE * strike).max(t.spec().domain().0);
        let y_floor = if t.spec().contains(floor) { t.gamma(floor)? } else { f64::NEG_INFINITY };
        Ok(Self {
            expansion,
            strike,
            rule: QuadratureRule::gauss_legendre(64)?,
            y_floor,
            y_strike: t.gamma(strike)?,
            panels: AtomicU64::new(0),
        })
    }

    fn spec(&self) -> &DiffusionSpec {
        self.expansion.transform().spec()
    }

    /// `int_{lo}^{min(hi, y0 + w)} f(S) psi_Y(y | y0) dy` with the window applied.
    fn integrate<F: Fn(f64) -> f64>(&self, s0: f64, dt: f64, y_hi: f64, panels: usize, f: F) -> Result<f64> {
        let t = self.expansion.transform();
        let y0 = t.gamma(s0)?;
        let w = WINDOW_SD * dt.sqrt();
        let lo = (y0 - w).max(self.y_floor);
        let hi = (y0 + w).min(y_hi);
        if !(hi > lo) {
            return Ok(0.0);
        }
        let mut failure = None;
        let v = self.rule.integrate_panels(
            |y| {
                let out = t.gamma_inv(y).and_then(|s| Ok(f(s) * self.expansion.density_y(y0, s0, y, s, dt)?));
                match out {
                    Ok(v) => v,
                    Err(Error::Range { .. }) => 0.0,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            lo,
            hi,
            panels,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        self.panels.fetch_add(panels as u64, Ordering::Relaxed);
        v
    }
}

impl PremiumKernel for ExpansionKernel<'_> {
    fn strike(&self) -> f64 {
        self.strike
    }

    fn european_put(&self, tau: f64, s: f64) -> Result<f64> {
        let k = self.strike;
        let undiscounted = self.integrate(s, tau, self.y_strike, 4, |x| k - x)?;
        Ok((-self.spec().rate() * tau).exp() * undiscounted)
    }

    fn weight(&self, _q: usize, s: f64) -> Result<f64> {
        Ok(self.spec().rate() * self.strike - self.spec().delta(s))
    }

    fn eps(&self, _q: usize, gap: f64, b_from: f64, b_to: f64) -> Result<f64> {
        let t = self.expansion.transform();
        let spec = self.spec();
        let rk = spec.rate() * self.strike;
        let v = self.integrate(b_from, gap, t.gamma(b_to)?, 1, |x| rk - spec.delta(x))?;
        Ok((-spec.rate() * gap).exp() * v)
    }

    fn panels_used(&self) -> u64 {
        self.panels.load(Ordering::Relaxed)
    }

    fn clamps(&self) -> u64 {
        self.expansion.clamp_count()
    }
}

pub fn european_put(expansion: &DensityExpansion, contract: &PutContract, t: f64, s_t: f64) -> Result<f64> {
    contract.validate()?;
    if !(0.0..contract.maturity).contains(&t) {
        return Err(Error::Parameter(format!("time {t} outside [0, {})", contract.maturity)));
    }
    ExpansionKernel::new(expansion, contract.strike)?.european_put(contract.maturity - t, s_t)
}

pub fn eep_integrand_eps(
    expansion: &DensityExpansion,
    contract: &PutContract,
    s_gap: f64,
    b_from: f64,
    b_to: f64,
) -> Result<f64> {
    if !(s_gap >= 0.0) {
        return Err(Error::Parameter(format!("time gap must be nonnegative, got {s_gap}")));
    }
    eps_with_diagonal(&ExpansionKernel::new(expansion, contract.strike)?, 0, s_gap, b_from, b_to)
}

pub fn solve_boundary(expansion: &DensityExpansion, contract: &PutContract, n_steps: usize) -> Result<BoundaryGrid> {
    let k = ExpansionKernel::new(expansion, contract.strike)?;
    let terminal = terminal_boundary(expansion.transform().spec(), contract.strike);
    solve_boundary_with(&k, contract, n_steps, terminal, &mut Diagnostics::default())
}

fn price_kernel<K: PremiumKernel + ?Sized>(k: &K, contract: &PutContract, n_steps: usize, terminal: f64) -> Result<PricingResult> {
    let mut diagnostics = Diagnostics::default();
    let boundary = solve_boundary_with(k, contract, n_steps, terminal, &mut diagnostics)?;
    let (price, european, premium) = price_with_boundary(k, contract, &boundary)?;
    diagnostics.quadrature_panels = k.panels_used();
    diagnostics.clamp_count = k.clamps();
    Ok(PricingResult { price, european, premium, boundary, diagnostics })
}

pub fn price(expansion: &DensityExpansion, contract: &PutContract, n_steps: usize) -> Result<PricingResult> {
    let k = ExpansionKernel::new(expansion, contract.strike)?;
    let terminal = terminal_boundary(expansion.transform().spec(), contract.strike);
    price_kernel(&k, contract, n_steps, terminal)
}

/// Exact GBM kernels with no dividend yield.
#[derive(Debug, Clone, Copy)]
pub struct GbmKernels {
    pub r: f64,
    pub sigma: f64,
    pub strike: f64,
}

impl GbmKernels {
    pub fn new(params: &GbmParams, strike: f64) -> Result<Self> {
        if params.delta != 0.0 {
            return Err(Error::Unsupported(format!("closed-form kernels need delta = 0, got {}", params.delta)));
        }
        Ok(Self { r: params.r, sigma: params.sigma, strike })
    }

    pub fn rho2(&self) -> f64 {
        self.r - 0.5 * self.sigma * self.sigma
    }

    pub fn rho1(&self) -> f64 {
        self.rho2() + self.sigma * self.sigma
    }

    pub fn k1(&self, s: f64, k: f64, t: f64) -> f64 {
        ((k / s).ln() - self.rho1() * t) / (self.sigma * t.sqrt())
    }

    pub fn k2(&self, s: f64, k: f64, t: f64) -> f64 {
        ((k / s).ln() - self.rho2() * t) / (self.sigma * t.sqrt())
    }

    pub fn b2(&self, s: f64, b: f64, t: f64) -> f64 {
        ((b / s).ln() - self.rho2() * t) / (self.sigma * t.sqrt())
    }
}

impl PremiumKernel for GbmKernels {
    fn strike(&self) -> f64 {
        self.strike
    }

    fn european_put(&self, tau: f64, s: f64) -> Result<f64> {
        let k = self.strike;
        Ok(k * (-self.r * tau).exp() * norm_cdf(self.k2(s, k, tau)) - s * norm_cdf(self.k1(s, k, tau)))
    }

    fn weight(&self, _q: usize, _s: f64) -> Result<f64> {
        Ok(self.r * self.strike)
    }

    fn eps(&self, _q: usize, gap: f64, b_from: f64, b_to: f64) -> Result<f64> {
        Ok(self.r * self.strike * (-self.r * gap).exp() * norm_cdf(self.b2(b_from, b_to, gap)))
    }
}

/// Same recursion with the exact lognormal kernels in place of the expansion.
pub fn gbm_closed_form_price(params: &GbmParams, contract: &PutContract, n_steps: usize) -> Result<PricingResult> {
    let k = GbmKernels::new(params, contract.strike)?;
    price_kernel(&k, contract, n_steps, contract.strike)
}

pub fn write_price_report<W: Write>(mut out: W, result: &PricingResult, order: usize, runtime_seconds: f64) -> io::Result<()> {
    writeln!(out, "P = {:.6}", result.price)?;
    writeln!(out, "p = {:.6}", result.european)?;
    writeln!(out, "e = {:.6}", result.premium)?;
    writeln!(out, "N = {}", result.boundary.n_steps())?;
    writeln!(out, "m = {order}")?;
    writeln!(out, "runtime_seconds = {runtime_seconds:.3}")
}
