//! American put under jump-diffusions.
//!
//! The price splits as `P = p + e - g`: European leg, early exercise premium,
//! and the rebalancing cost `g >= 0` paid when a jump throws the price from
//! the exercise region back into continuation. `g` needs the option value
//! after the jump, so the boundary and a value grid are iterated to a fixed
//! point.

use crate::eep::{premium_from, solve_boundary_with, BoundaryGrid, Diagnostics, PremiumKernel, PutContract, LOWER_EDGE};
use crate::error::{Error, Result};
use crate::jump_hermite::JumpDensityExpansion;
use crate::models::{JumpDiffusionModel, JumpLaw};
use crate::numerics::{CubicSpline, QuadratureRule};
use std::sync::atomic::{AtomicU64, Ordering};

pub const DEFAULT_JUMP_STEPS: usize = 50;
pub const MAX_PASSES: usize = 20;
/// Fixed-point tolerance on the boundary, as a fraction of the strike.
pub const FIXED_POINT_TOL: f64 = 1e-5;
pub const GRID_POINTS: usize = 200;
/// Lowest value-grid node, as a fraction of the strike.
pub const GRID_FLOOR: f64 = 1e-3;
/// Post-jump mass allowed above the top of the value grid.
pub const GRID_TAIL: f64 = 1e-10;
const WINDOW_SD: f64 = 10.0;
/// Longest single expansion step used to build the European leg.
const SUB_STEP: f64 = 0.1;
const TABLE_SPACING: f64 = 0.005;
const TABLE_BELOW: f64 = 4.0;
const TABLE_ABOVE: f64 = 6.0;
const H_POINTS: usize = 256;

/// Integrals against the transition density in log price.
struct LogIntegrator<'a> {
    expansion: &'a JumpDensityExpansion,
    gauss: QuadratureRule,
    panel: QuadratureRule,
    jump_range: Option<(f64, f64)>,
    evaluations: AtomicU64,
}

impl<'a> LogIntegrator<'a> {
    fn new(expansion: &'a JumpDensityExpansion) -> Result<Self> {
        let jumps = expansion.jumps();
        let jump_range = (jumps.intensity > 0.0).then(|| {
            if expansion.order() >= 2 {
                jumps.law.expansion_support()
            } else {
                jumps.law.support()
            }
        });
        Ok(Self {
            expansion,
            gauss: QuadratureRule::gauss_legendre(64)?,
            panel: QuadratureRule::gauss_legendre(16)?,
            jump_range,
            evaluations: AtomicU64::new(0),
        })
    }

    fn law(&self) -> &JumpLaw {
        &self.expansion.jumps().law
    }

    /// `int_lo^hi f(x) psi(x | x0, dt) dx`, split at the Gaussian window, at
    /// `x0` and at `cuts`.
    fn integrate<F: Fn(f64) -> f64>(&self, x0: f64, dt: f64, lo: f64, hi: f64, cuts: &[f64], f: F) -> Result<f64> {
        let w = WINDOW_SD * self.expansion.transform().spec().sigma(x0) * dt.sqrt();
        let (mut a, mut b) = (x0 - w, x0 + w);
        if let Some((zl, zh)) = self.jump_range {
            a = a.min(x0 + zl);
            b = b.max(x0 + zh);
        }
        let (a, b) = (a.max(lo), b.min(hi));
        if !(b > a) {
            return Ok(0.0);
        }
        let mut pts = vec![a, b];
        pts.extend([x0 - w, x0, x0 + w].iter().chain(cuts).copied().filter(|&c| c > a && c < b));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut failure = None;
        let g = |x: f64| match self.expansion.density(x, x0, dt) {
            Ok(d) => f(x) * d,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        };
        let g = std::cell::RefCell::new(g);
        let mut total = 0.0;
        let mut nodes = 0;
        for pair in pts.windows(2) {
            let (u, v) = (pair[0], pair[1]);
            let inside = u >= x0 - w * (1.0 + 1e-12) && v <= x0 + w * (1.0 + 1e-12);
            total += if inside {
                nodes += 64;
                self.gauss.integrate(|x| (g.borrow_mut())(x), u, v)
            } else {
                let panels = ((v - u) / self.law().panel_width(u >= x0)).ceil().max(1.0) as usize;
                nodes += 16 * panels;
                self.panel.integrate_panels(|x| (g.borrow_mut())(x), u, v, panels)
            }
            .unwrap_or(f64::NAN);
        }
        drop(g);
        self.evaluations.fetch_add(nodes as u64, Ordering::Relaxed);
        match failure {
            Some(e) => Err(e),
            None => Ok(total),
        }
    }
}

/// Discounted European put values on a log-price table,
/// one table per time knot.
enum EuropeanLeg {
    Direct,
    Tables { dt: f64, tables: Vec<CubicSpline> },
}

/// Option value after a jump, on `(time knot, log-spaced state)` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    time_knots: Vec<f64>,
    space_knots: Vec<f64>,
    log_lo: f64,
    log_step: f64,
    strike: f64,
    values: Vec<Vec<f64>>,
}

impl ValueGrid {
    fn new(strike: f64, s_max: f64, dt: f64, n_steps: usize) -> Self {
        let log_lo = (GRID_FLOOR * strike).ln();
        let log_step = (s_max.ln() - log_lo) / (GRID_POINTS - 1) as f64;
        let space_knots: Vec<f64> = (0..GRID_POINTS).map(|i| (log_lo + i as f64 * log_step).exp()).collect();
        let payoff: Vec<f64> = space_knots.iter().map(|s| (strike - s).max(0.0)).collect();
        Self {
            time_knots: (0..=n_steps).map(|n| n as f64 * dt).collect(),
            space_knots,
            log_lo,
            log_step,
            strike,
            values: vec![payoff; n_steps + 1],
        }
    }

    pub fn time_knots(&self) -> &[f64] {
        &self.time_knots
    }

    pub fn space_knots(&self) -> &[f64] {
        &self.space_knots
    }

    pub fn values(&self, n: usize) -> &[f64] {
        &self.values[n]
    }

    pub fn s_max(&self) -> f64 {
        self.space_knots[GRID_POINTS - 1]
    }

    /// Value at knot `n`, linear in log price between nodes. Below the grid
    /// the put is deep in the exercise region and worth intrinsic.
    pub fn value(&self, n: usize, s: f64) -> Result<f64> {
        Ok((self.strike - s) + self.excess(n, s)?)
    }

    /// `P - (K - S)`, which is zero in the exercise region.
    pub fn excess(&self, n: usize, s: f64) -> Result<f64> {
        let u = (s.ln() - self.log_lo) / self.log_step;
        if !(u <= (GRID_POINTS - 1) as f64 * (1.0 + 1e-12)) {
            return Err(Error::Range { value: s, lo: self.space_knots[0], hi: self.s_max() });
        }
        if u <= 0.0 {
            return Ok(0.0);
        }
        let i = (u.floor() as usize).min(GRID_POINTS - 2);
        let t = u - i as f64;
        let row = &self.values[n];
        let ex = |j: usize| row[j] - (self.strike - self.space_knots[j]);
        Ok((1.0 - t) * ex(i) + t * ex(i + 1))
    }

    pub fn min_excess(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|row| row.iter().zip(&self.space_knots).map(|(v, s)| v - (self.strike - s).max(0.0)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `H_q(S-) = rho int (P(t_q, y) - (K - y)) v(ln(y/S-)) dy/y` on a log grid.
#[derive(Debug, Clone)]
struct RebalanceTable {
    spline: CubicSpline,
}

impl RebalanceTable {
    fn eval(&self, s: f64) -> f64 {
        let x = s.ln();
        if x < self.spline.lo() {
            0.0
        } else {
            self.spline.eval(x.min(self.spline.hi())).max(0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Full,
    Flow,
    Rebalance,
}

pub struct JumpKernel<'a> {
    log: LogIntegrator<'a>,
    strike: f64,
    rate: f64,
    dividend: f64,
    x_floor: f64,
    european: EuropeanLeg,
    rebalance: Vec<Option<RebalanceTable>>,
}

impl<'a> JumpKernel<'a> {
    pub fn new(model: &JumpDiffusionModel, expansion: &'a JumpDensityExpansion, contract: &PutContract, n_steps: usize) -> Result<Self> {
        contract.validate()?;
        if n_steps < 2 {
            return Err(Error::Parameter(format!("need at least 2 time steps, got {n_steps}")));
        }
        let mut k = Self {
            log: LogIntegrator::new(expansion)?,
            strike: contract.strike,
            rate: model.rate,
            dividend: model.dividend,
            x_floor: (LOWER_EDGE * contract.strike).ln(),
            european: EuropeanLeg::Direct,
            rebalance: vec![None; n_steps + 1],
        };
        if expansion.jumps().intensity > 0.0 {
            k.european = k.build_tables(contract.maturity / n_steps as f64, n_steps)?;
        }
        Ok(k)
    }

    fn rho(&self) -> f64 {
        self.log.expansion.jumps().intensity
    }

    fn with_part(&self, part: Part) -> PartView<'_, 'a> {
        PartView { kernel: self, part }
    }

    fn payoff(&self, x: f64) -> f64 {
        (self.strike - x.exp()).max(0.0)
    }

    /// European value outside a table: deep in the money it is the forward
    /// intrinsic, far out of the money it vanishes.
    fn table_value(&self, table: Option<&CubicSpline>, tau: f64, x: f64) -> f64 {
        match table {
            None => self.payoff(x),
            Some(t) if x < t.lo() => self.strike * (-self.rate * tau).exp() - x.exp() * (-self.dividend * tau).exp(),
            Some(t) if x > t.hi() => 0.0,
            Some(t) => t.eval(x),
        }
    }

    /// One expansion step of length `h` from `prev` (payoff when `None`).
    fn step(&self, prev: Option<&CubicSpline>, prev_tau: f64, h: f64, x0: f64) -> Result<f64> {
        let ln_k = self.strike.ln();
        let v = self.log.integrate(x0, h, self.x_floor, f64::INFINITY, &[ln_k], |x| self.table_value(prev, prev_tau, x))?;
        Ok((-self.rate * h).exp() * v)
    }

    fn build_tables(&self, dt: f64, n_steps: usize) -> Result<EuropeanLeg> {
        let ln_k = self.strike.ln();
        let count = ((TABLE_BELOW + TABLE_ABOVE) / TABLE_SPACING).round() as usize + 1;
        let xs: Vec<f64> = (0..count).map(|i| ln_k - TABLE_BELOW + i as f64 * TABLE_SPACING).collect();
        let subs = (dt / SUB_STEP - 1e-9).ceil().max(1.0) as usize;
        let h = dt / subs as f64;
        let mut tables: Vec<CubicSpline> = Vec::with_capacity(n_steps + 1);
        let payoff: Vec<f64> = xs.iter().map(|&x| self.payoff(x)).collect();
        tables.push(CubicSpline::new(xs.clone(), payoff)?);
        let mut tau = 0.0;
        for k in 1..=n_steps {
            let mut current: Option<CubicSpline> = None;
            for _ in 0..subs {
                let prev = match (&current, k) {
                    (Some(c), _) => Some(c),
                    (None, 1) => None,
                    (None, _) => tables.last(),
                };
                let ys = xs.iter().map(|&x| self.step(prev, tau, h, x)).collect::<Result<Vec<_>>>()?;
                tau += h;
                current = Some(CubicSpline::new(xs.clone(), ys)?);
            }
            tables.push(current.expect("at least one sub-step"));
        }
        Ok(EuropeanLeg::Tables { dt, tables })
    }

    fn european(&self, tau: f64, s: f64) -> Result<f64> {
        let x = s.ln();
        match &self.european {
            EuropeanLeg::Direct => {
                let v = self.log.integrate(x, tau, self.x_floor, self.strike.ln(), &[], |y| self.strike - y.exp())?;
                Ok((-self.rate * tau).exp() * v)
            }
            EuropeanLeg::Tables { dt, tables } => {
                let k = ((tau / dt + 1e-9).floor() as usize).min(tables.len() - 1);
                let rest = tau - k as f64 * dt;
                let table = (k > 0).then(|| &tables[k]);
                if rest <= 1e-12 * tau.max(1.0) {
                    Ok(self.table_value(table, tau, x))
                } else {
                    self.step(table, k as f64 * dt, rest, x)
                }
            }
        }
    }

    fn rebalance_at(&self, q: usize, s: f64) -> f64 {
        self.rebalance[q].as_ref().map_or(0.0, |t| t.eval(s))
    }

    /// Post-jump excess integral from `s`, straight from the value grid.
    fn rebalance_direct(&self, grid: &ValueGrid, q: usize, s: f64, b_q: f64) -> Result<f64> {
        let law = self.log.law();
        let (zl, zh) = law.support();
        let x0 = s.ln();
        let lo = (x0 + zl).max(b_q.ln());
        let hi = (x0 + zh).min(grid.s_max().ln());
        if !(hi > lo) {
            return Ok(0.0);
        }
        let mut pts = vec![lo, hi];
        if x0 > lo && x0 < hi {
            pts.insert(1, x0);
        }
        let mut total = 0.0;
        let mut failure = None;
        for pair in pts.windows(2) {
            let panels = ((pair[1] - pair[0]) / law.panel_width(pair[0] >= x0)).ceil().max(1.0) as usize;
            total += self.log.panel.integrate_panels(
                |y| match grid.excess(q, y.exp()) {
                    Ok(e) => e * law.density(y - x0),
                    Err(err) => {
                        failure.get_or_insert(err);
                        f64::NAN
                    }
                },
                pair[0],
                pair[1],
                panels,
            )?;
        }
        match failure {
            Some(e) => Err(e),
            None => Ok(self.rho() * total),
        }
    }

    fn tabulate_rebalance(&mut self, grid: &ValueGrid, boundary: &BoundaryGrid) -> Result<()> {
        let (_, zh) = self.log.law().support();
        let x_hi = self.strike.ln();
        for q in 0..=boundary.n_steps() {
            let b_q = boundary.value(q);
            let x_lo = (b_q.ln() - zh).max(self.x_floor).min(x_hi - 1e-3);
            let xs: Vec<f64> = (0..H_POINTS).map(|i| x_lo + (x_hi - x_lo) * i as f64 / (H_POINTS - 1) as f64).collect();
            let ys = xs.iter().map(|&x| self.rebalance_direct(grid, q, x.exp(), b_q)).collect::<Result<Vec<_>>>()?;
            self.rebalance[q] = Some(RebalanceTable { spline: CubicSpline::new(xs, ys)? });
        }
        Ok(())
    }

    fn flow(&self, s: f64) -> f64 {
        self.rate * self.strike - self.dividend * s
    }

    fn weight_part(&self, part: Part, q: usize, s: f64) -> f64 {
        match part {
            Part::Full => self.flow(s) - self.rebalance_at(q, s),
            Part::Flow => self.flow(s),
            Part::Rebalance => self.rebalance_at(q, s),
        }
    }

    fn eps_part(&self, part: Part, q: usize, gap: f64, b_from: f64, b_to: f64) -> Result<f64> {
        if part == Part::Rebalance && self.rebalance[q].is_none() {
            return Ok(0.0);
        }
        let v = self.log.integrate(b_from.ln(), gap, self.x_floor, b_to.ln(), &[], |x| self.weight_part(part, q, x.exp()))?;
        Ok((-self.rate * gap).exp() * v)
    }

    /// Value grid from the three-part representation at the current boundary.
    fn build_value_grid(&self, contract: &PutContract, boundary: &BoundaryGrid, s_max: f64) -> Result<ValueGrid> {
        let n = boundary.n_steps();
        let dt = boundary.dt();
        let mut grid = ValueGrid::new(self.strike, s_max, dt, n);
        let view = self.with_part(Part::Full);
        for q in 0..n {
            let tau = contract.maturity - q as f64 * dt;
            let b_q = boundary.value(q);
            for (i, &s) in grid.space_knots.clone().iter().enumerate() {
                let intrinsic = (self.strike - s).max(0.0);
                if s <= b_q {
                    grid.values[q][i] = intrinsic;
                    continue;
                }
                let p = self.european(tau, s)? + premium_from(&view, boundary.values(), dt, q, s, b_q)?;
                grid.values[q][i] = p.max(intrinsic);
            }
        }
        Ok(grid)
    }
}

struct PartView<'k, 'a> {
    kernel: &'k JumpKernel<'a>,
    part: Part,
}

impl PremiumKernel for PartView<'_, '_> {
    fn strike(&self) -> f64 {
        self.kernel.strike
    }

    fn european_put(&self, tau: f64, s: f64) -> Result<f64> {
        self.kernel.european(tau, s)
    }

    fn weight(&self, q: usize, s: f64) -> Result<f64> {
        Ok(self.kernel.weight_part(self.part, q, s))
    }

    fn eps(&self, q: usize, gap: f64, b_from: f64, b_to: f64) -> Result<f64> {
        self.kernel.eps_part(self.part, q, gap, b_from, b_to)
    }

    fn panels_used(&self) -> u64 {
        self.kernel.log.evaluations.load(Ordering::Relaxed)
    }

    fn clamps(&self) -> u64 {
        self.kernel.log.expansion.clamp_count()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JumpDiagnostics {
    pub base: Diagnostics,
    /// `max_n |B_new - B_old|` after each pass past the first.
    pub boundary_deltas: Vec<f64>,
    pub density_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpPricingResult {
    pub price: f64,
    pub european: f64,
    pub premium: f64,
    /// Rebalancing cost, subtracted from the price.
    pub rebalance: f64,
    pub boundary: BoundaryGrid,
    pub fixed_point_iters: usize,
    pub diagnostics: JumpDiagnostics,
}

fn terminal(model: &JumpDiffusionModel, strike: f64) -> f64 {
    if model.dividend <= 0.0 {
        strike
    } else {
        strike.min(model.rate / model.dividend * strike)
    }
}

fn grid_top(model: &JumpDiffusionModel, strike: f64) -> f64 {
    strike * model.jumps.law.upper_quantile(GRID_TAIL).max(0.0).exp() * 1.01
}

/// Runs the fixed point and hands back the kernel carrying the last
/// rebalancing tables together with the boundary and value grid.
fn fixed_point<'a>(
    model: &JumpDiffusionModel,
    expansion: &'a JumpDensityExpansion,
    contract: &PutContract,
    n_steps: usize,
) -> Result<(JumpKernel<'a>, BoundaryGrid, ValueGrid, usize, JumpDiagnostics)> {
    let mut kernel = JumpKernel::new(model, expansion, contract, n_steps)?;
    let mut diag = JumpDiagnostics::default();
    let b_term = terminal(model, contract.strike);
    let s_max = grid_top(model, contract.strike);
    let mut boundary = solve_boundary_with(&kernel.with_part(Part::Full), contract, n_steps, b_term, &mut diag.base)?;
    let mut passes = 1;
    let mut grid = kernel.build_value_grid(contract, &boundary, s_max)?;
    if kernel.rho() > 0.0 {
        loop {
            kernel.tabulate_rebalance(&grid, &boundary)?;
            let next = solve_boundary_with(&kernel.with_part(Part::Full), contract, n_steps, b_term, &mut diag.base)?;
            passes += 1;
            let delta = next.values().iter().zip(boundary.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            diag.boundary_deltas.push(delta);
            log::debug!("fixed point pass {passes}: boundary moved {delta:e}");
            boundary = next;
            grid = kernel.build_value_grid(contract, &boundary, s_max)?;
            if delta <= FIXED_POINT_TOL * contract.strike {
                break;
            }
            if passes >= MAX_PASSES {
                return Err(Error::FixedPoint { iterations: passes, delta });
            }
        }
    }
    diag.density_evaluations = kernel.log.evaluations.load(Ordering::Relaxed);
    diag.base.clamp_count = expansion.clamp_count();
    Ok((kernel, boundary, grid, passes, diag))
}

pub fn solve_boundary_jump(
    model: &JumpDiffusionModel,
    expansion: &JumpDensityExpansion,
    contract: &PutContract,
    n_steps: usize,
) -> Result<(BoundaryGrid, ValueGrid)> {
    let (_, boundary, grid, _, _) = fixed_point(model, expansion, contract, n_steps)?;
    Ok((boundary, grid))
}

pub fn price_jump(
    model: &JumpDiffusionModel,
    expansion: &JumpDensityExpansion,
    contract: &PutContract,
    n_steps: usize,
) -> Result<JumpPricingResult> {
    let (kernel, boundary, _, passes, mut diagnostics) = fixed_point(model, expansion, contract, n_steps)?;
    let s0 = contract.spot;
    let european = kernel.european(contract.maturity, s0)?;
    let intrinsic = contract.intrinsic();
    let (premium, rebalance) = if s0 <= boundary.value(0) {
        (intrinsic - european, 0.0)
    } else {
        let (dt, b0) = (boundary.dt(), boundary.value(0));
        let e = premium_from(&kernel.with_part(Part::Flow), boundary.values(), dt, 0, s0, b0)?;
        let g = premium_from(&kernel.with_part(Part::Rebalance), boundary.values(), dt, 0, s0, b0)?;
        // Same floor as the diffusion pricer; the shortfall is a step-size artifact.
        (e.max(intrinsic - european + g), g)
    };
    diagnostics.density_evaluations = kernel.log.evaluations.load(Ordering::Relaxed);
    Ok(JumpPricingResult {
        price: european + premium - rebalance,
        european,
        premium,
        rebalance,
        boundary,
        fixed_point_iters: passes,
        diagnostics,
    })
}

/// Discounted rebalancing term from `b_from` over `s_gap` into the exercise
/// region below `b_to`, for boundary knot `q`, given a value grid.
pub fn rebalancing_eta(
    model: &JumpDiffusionModel,
    expansion: &JumpDensityExpansion,
    contract: &PutContract,
    value_grid: &ValueGrid,
    boundary: &BoundaryGrid,
    q: usize,
    s_gap: f64,
    b_from: f64,
) -> Result<f64> {
    if q > boundary.n_steps() {
        return Err(Error::Parameter(format!("knot {q} beyond the boundary grid")));
    }
    let kernel = {
        let mut k = JumpKernel {
            log: LogIntegrator::new(expansion)?,
            strike: contract.strike,
            rate: model.rate,
            dividend: model.dividend,
            x_floor: (LOWER_EDGE * contract.strike).ln(),
            european: EuropeanLeg::Direct,
            rebalance: vec![None; boundary.n_steps() + 1],
        };
        if k.rho() == 0.0 {
            return Ok(0.0);
        }
        let b_q = boundary.value(q);
        if s_gap == 0.0 {
            // Point mass at b_from, counted half on the boundary itself.
            let h = k.rebalance_direct(value_grid, q, b_from, b_q)?;
            return Ok(if b_from < b_q {
                h
            } else if b_from == b_q {
                0.5 * h
            } else {
                0.0
            });
        }
        k.tabulate_rebalance(value_grid, boundary)?;
        k
    };
    kernel.eps_part(Part::Rebalance, q, s_gap, b_from, boundary.value(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eep::{gbm_closed_form_price, price as diffusion_price};
    use crate::hermite::DensityExpansion;
    use crate::lamperti::LampertiTransform;
    use crate::models::*;
    use approx::assert_abs_diff_eq;

    fn merton(lambda: f64) -> (JumpDiffusionModel, JumpDensityExpansion) {
        let m = build_merton(&MertonParams { lambda, ..Default::default() }).unwrap();
        let e = JumpDensityExpansion::from_model(&m, 2).unwrap();
        (m, e)
    }

    fn contract() -> PutContract {
        PutContract::new(40.0, 0.5, 40.0).unwrap()
    }

    #[test]
    fn zero_intensity_matches_diffusion_solver() {
        let (m, e) = merton(0.0);
        let c = contract();
        let jump = price_jump(&m, &e, &c, 20).unwrap();
        assert_eq!(jump.fixed_point_iters, 1);
        assert_eq!(jump.rebalance, 0.0);
        let gbm = GbmParams { r: 0.0488, delta: 0.0, sigma: 0.2 };
        let d = DensityExpansion::new(LampertiTransform::new(build_gbm(&gbm).unwrap(), 40.0).unwrap(), 2).unwrap();
        let diff = diffusion_price(&d, &c, 20).unwrap();
        assert_abs_diff_eq!(jump.price, diff.price, epsilon = 1e-5);
        for (a, b) in jump.boundary.values().iter().zip(diff.boundary.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6 * 40.0);
        }
        let exact = gbm_closed_form_price(&gbm, &c, 20).unwrap();
        assert_abs_diff_eq!(jump.price, exact.price, epsilon = 1e-3);
    }

    #[test]
    fn merton_european_leg_tracks_poisson_mixture() {
        let (m, e) = merton(0.1);
        let c = contract();
        let k = JumpKernel::new(&m, &e, &c, 10).unwrap();
        let got = k.european(0.5, 40.0).unwrap();
        // Poisson mixture of Black-Scholes puts.
        let (r, sig, sj, lam, j) = (0.0488f64, 0.2f64, 0.2f64, 0.1f64, (0.02f64).exp() - 1.0);
        let lp = lam * (1.0 + j);
        let mut want = 0.0;
        let mut w = (-lp * 0.5f64).exp();
        for n in 0..30 {
            if n > 0 {
                w *= lp * 0.5 / n as f64;
            }
            let v2 = sig * sig + n as f64 * sj * sj / 0.5;
            let rn = r - lam * j + n as f64 * (1.0 + j).ln() / 0.5;
            let v = (v2 * 0.5).sqrt();
            let d1 = ((40.0f64 / 40.0).ln() + (rn + 0.5 * v2) * 0.5) / v;
            let put = 40.0 * (-rn * 0.5).exp() * crate::numerics::norm_cdf(-(d1 - v)) - 40.0 * crate::numerics::norm_cdf(-d1);
            want += w * put;
        }
        assert_abs_diff_eq!(got, want, epsilon = 1e-3);
    }

    #[test]
    fn merton_price_decomposition() {
        let (m, e) = merton(0.1);
        let c = contract();
        let r = price_jump(&m, &e, &c, 20).unwrap();
        assert_eq!(r.price, r.european + r.premium - r.rebalance);
        assert!(r.rebalance >= 0.0);
        assert!(r.price >= r.european - 1e-6 * 40.0);
        assert!(r.price >= c.intrinsic() - 1e-6 * 40.0);
        assert!(r.fixed_point_iters >= 2 && r.fixed_point_iters <= MAX_PASSES);
        let b = r.boundary.values();
        assert!(b.iter().all(|&x| x > 0.0 && x <= 40.0));
        assert!(b.windows(2).all(|w| w[0] <= w[1] + 1e-9));
    }

    #[test]
    fn value_grid_dominates_intrinsic() {
        let (m, e) = merton(0.25);
        let (boundary, grid) = solve_boundary_jump(&m, &e, &contract(), 10).unwrap();
        assert!(grid.min_excess() >= -1e-6 * 40.0);
        assert_eq!(grid.space_knots().len(), GRID_POINTS);
        assert_eq!(grid.time_knots().len(), 11);
        let last = grid.values(10);
        for (v, s) in last.iter().zip(grid.space_knots()) {
            assert_eq!(*v, (40.0 - s).max(0.0));
        }
        assert!(grid.value(0, grid.s_max() * 1.1).is_err());
        assert_eq!(boundary.n_steps(), 10);
    }

    #[test]
    fn eta_examples() {
        let (m, e) = merton(0.1);
        let c = contract();
        let (boundary, grid) = solve_boundary_jump(&m, &e, &c, 10).unwrap();
        let eta = rebalancing_eta(&m, &e, &c, &grid, &boundary, 5, 0.01, 35.0).unwrap();
        assert!(eta.is_finite() && eta >= 0.0);
        assert!(eta <= 0.1 * 40.0 * (-0.0488f64 * 0.01).exp());
        let (m0, e0) = merton(0.0);
        assert_eq!(rebalancing_eta(&m0, &e0, &c, &grid, &boundary, 5, 0.01, 35.0).unwrap(), 0.0);
    }

    #[test]
    fn boundary_falls_with_intensity() {
        let c = contract();
        let (m1, e1) = merton(0.01);
        let (m2, e2) = merton(0.25);
        let (lo, _) = solve_boundary_jump(&m1, &e1, &c, 10).unwrap();
        let (hi, _) = solve_boundary_jump(&m2, &e2, &c, 10).unwrap();
        for (a, b) in lo.values().iter().zip(hi.values()) {
            assert!(a >= b, "{a} < {b}");
        }
    }

    #[test]
    fn kou_rebalancing_is_a_cost() {
        let c = contract();
        let mut last = f64::INFINITY;
        let mut deltas_shrink = true;
        for lambda in [0.01, 0.2] {
            let m = build_kou(&KouParams { lambda, ..Default::default() }).unwrap();
            let e = JumpDensityExpansion::from_model(&m, 2).unwrap();
            let r = price_jump(&m, &e, &c, 10).unwrap();
            assert!(r.rebalance >= 0.0 && r.price >= r.european);
            assert!(r.boundary.value(0) <= last);
            last = r.boundary.value(0);
            deltas_shrink &= r.diagnostics.boundary_deltas.windows(2).all(|w| w[1] <= w[0]);
        }
        assert!(deltas_shrink);
    }
}
