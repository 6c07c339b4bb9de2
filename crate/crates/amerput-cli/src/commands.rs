use crate::config::{ModelParams, RunConfig};
use crate::error::{CliError, CliResult};
use amerput_core::eep::{self, BoundaryGrid, PutContract};
use amerput_core::hermite::{write_density_csv, DensityDumpRow, DensityExpansion};
use amerput_core::jump_eep::{price_jump, solve_boundary_jump};
use amerput_core::jump_hermite::JumpDensityExpansion;
use amerput_core::lamperti::LampertiTransform;
use amerput_core::models::{GbmParams, MertonParams};
use amerput_oracles::{crr_binomial_put, lognormal_density, merton_mixture_density};
use rayon::prelude::*;
use std::io::Write;
use std::time::Instant;

pub const TABLE_SPOT: f64 = 40.0;
pub const TABLE_RATE: f64 = 0.0488;
/// Rows closer than this to the published Hermite column count as reproduced.
pub const PUBLISHED_TOL: f64 = 1e-3;

const PUBLISHED: &str = include_str!("../fixtures/table1.csv");

pub fn diffusion_expansion(params: &ModelParams, strike: f64, order: usize) -> amerput_core::Result<DensityExpansion> {
    let transform = LampertiTransform::with_default_anchor(params.diffusion()?, Some(strike))?;
    DensityExpansion::new(transform, order)
}

/// Price with the model's own solver: plain EEP for diffusions, the
/// rebalancing fixed point for jump models.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceReport {
    pub price: f64,
    pub european: f64,
    pub premium: f64,
    pub rebalance: Option<f64>,
    pub fixed_point_iters: Option<usize>,
    pub boundary: BoundaryGrid,
    pub order: usize,
}

impl PriceReport {
    pub fn write<W: Write>(&self, mut out: W, runtime_seconds: f64) -> std::io::Result<()> {
        writeln!(out, "P = {:.6}", self.price)?;
        writeln!(out, "p = {:.6}", self.european)?;
        writeln!(out, "e = {:.6}", self.premium)?;
        if let Some(g) = self.rebalance {
            writeln!(out, "g = {g:.6}")?;
        }
        if let Some(k) = self.fixed_point_iters {
            writeln!(out, "fixed_point_iters = {k}")?;
        }
        writeln!(out, "N = {}", self.boundary.n_steps())?;
        writeln!(out, "m = {}", self.order)?;
        writeln!(out, "runtime_seconds = {runtime_seconds:.3}")
    }
}

pub fn price(cfg: &RunConfig) -> CliResult<PriceReport> {
    price_contract(&cfg.params, &cfg.contract, cfg.order, cfg.steps)
}

pub fn price_contract(params: &ModelParams, contract: &PutContract, order: usize, steps: usize) -> CliResult<PriceReport> {
    if params.kind().is_jump() {
        let model = params.jump_model()?;
        let expansion = JumpDensityExpansion::from_model(&model, order)?;
        let r = price_jump(&model, &expansion, contract, steps)?;
        Ok(PriceReport {
            price: r.price,
            european: r.european,
            premium: r.premium,
            rebalance: Some(r.rebalance),
            fixed_point_iters: Some(r.fixed_point_iters),
            boundary: r.boundary,
            order,
        })
    } else {
        let expansion = diffusion_expansion(params, contract.strike, order)?;
        let r = eep::price(&expansion, contract, steps)?;
        Ok(PriceReport {
            price: r.price,
            european: r.european,
            premium: r.premium,
            rebalance: None,
            fixed_point_iters: None,
            boundary: r.boundary,
            order,
        })
    }
}

pub fn run_price<W: Write>(cfg: &RunConfig, out: W) -> CliResult<PriceReport> {
    let start = Instant::now();
    let report = price(cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    log::info!("priced {:?} in {elapsed:.3}s", cfg.model());
    report.write(out, elapsed).map_err(stdout_error)?;
    Ok(report)
}

pub fn boundary(cfg: &RunConfig) -> CliResult<BoundaryGrid> {
    if cfg.model().is_jump() {
        let model = cfg.params.jump_model()?;
        let expansion = JumpDensityExpansion::from_model(&model, cfg.order)?;
        Ok(solve_boundary_jump(&model, &expansion, &cfg.contract, cfg.steps)?.0)
    } else {
        let expansion = diffusion_expansion(&cfg.params, cfg.contract.strike, cfg.order)?;
        Ok(eep::solve_boundary(&expansion, &cfg.contract, cfg.steps)?)
    }
}

pub fn run_boundary<W: Write>(cfg: &RunConfig, out: W) -> CliResult<BoundaryGrid> {
    let grid = boundary(cfg)?;
    grid.write_csv(out).map_err(stdout_error)?;
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub strike: f64,
    pub sigma: f64,
    pub maturity: f64,
    pub benchmark: f64,
    pub hermite: f64,
    pub abs_error: f64,
    pub published: f64,
    /// Solver error message when the row could not be priced.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    fn priced(&self) -> impl Iterator<Item = &BenchRow> {
        self.rows.iter().filter(|r| r.failure.is_none())
    }

    pub fn rmse(&self) -> f64 {
        let (sum, n) = self.priced().fold((0.0, 0usize), |(s, n), r| (s + r.abs_error * r.abs_error, n + 1));
        (sum / n.max(1) as f64).sqrt()
    }

    pub fn within_published(&self, tol: f64) -> usize {
        self.priced().filter(|r| (r.hermite - r.published).abs() <= tol).count()
    }

    pub fn failed(&self) -> usize {
        self.rows.len() - self.priced().count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "K,sigma,T,benchmark,hermite,abs_error,published,status")?;
        for r in &self.rows {
            let status = if r.failure.is_some() { "failed" } else { "ok" };
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.3e},{},{status}",
                r.strike, r.sigma, r.maturity, r.benchmark, r.hermite, r.abs_error, r.published
            )?;
        }
        writeln!(out, "# rmse = {:.3e}", self.rmse())?;
        writeln!(out, "# within_{PUBLISHED_TOL:e}_of_published = {}/{}", self.within_published(PUBLISHED_TOL), self.rows.len())?;
        for r in self.rows.iter().filter(|r| r.failure.is_some()) {
            writeln!(out, "# failed ({}, {}, {}): {}", r.strike, r.sigma, r.maturity, r.failure.as_deref().unwrap_or(""))?;
        }
        Ok(())
    }
}

/// Published (K, sigma, T, hermite) rows in table order.
pub fn published_rows() -> Vec<(f64, f64, f64, f64)> {
    PUBLISHED
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.trim().parse().expect("fixture is numeric")).collect();
            (f[0], f[1], f[2], f[4])
        })
        .collect()
}

pub fn table_params(sigma: f64) -> GbmParams {
    GbmParams { r: TABLE_RATE, delta: 0.0, sigma }
}

pub fn table_contract(strike: f64, maturity: f64) -> PutContract {
    PutContract { strike, maturity, spot: TABLE_SPOT }
}

fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("workers: {e}")))
}

/// The 27-row benchmark grid, priced with `cfg.order` and `cfg.steps`.
/// Row failures are recorded, not propagated.
pub fn table1(cfg: &RunConfig) -> CliResult<BenchTable> {
    let published = published_rows();
    let binomial_steps = cfg.oracle.binomial_steps;
    let (order, steps) = (cfg.order, cfg.steps);
    let rows = pool(cfg.workers)?.install(|| {
        published
            .par_iter()
            .map(|&(strike, sigma, maturity, published)| {
                let params = table_params(sigma);
                let contract = table_contract(strike, maturity);
                let priced = crr_binomial_put(&params, &contract, binomial_steps).and_then(|b| {
                    let expansion = diffusion_expansion(&ModelParams::Gbm(params), strike, order)?;
                    Ok((b, eep::price(&expansion, &contract, steps)?.price))
                });
                match priced {
                    Ok((benchmark, hermite)) => BenchRow {
                        strike,
                        sigma,
                        maturity,
                        benchmark,
                        hermite,
                        abs_error: (benchmark - hermite).abs(),
                        published,
                        failure: None,
                    },
                    Err(e) => BenchRow {
                        strike,
                        sigma,
                        maturity,
                        benchmark: f64::NAN,
                        hermite: f64::NAN,
                        abs_error: f64::NAN,
                        published,
                        failure: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });
    Ok(BenchTable { rows })
}

pub fn run_table1<W: Write>(cfg: &RunConfig, out: W) -> CliResult<BenchTable> {
    let table = table1(cfg)?;
    table.write_csv(out).map_err(stdout_error)?;
    match table.failed() {
        0 => Ok(table),
        failed => Err(CliError::Rows { failed, total: table.rows.len() }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySummary {
    pub normalization_error: f64,
    pub clamp_count: u64,
    /// Against the exact density where one exists (GBM, Merton).
    pub sup_relative_error: Option<f64>,
}

impl DensitySummary {
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# normalization_error = {:.3e}", self.normalization_error)?;
        writeln!(out, "# clamp_count = {}", self.clamp_count)?;
        match self.sup_relative_error {
            Some(e) => writeln!(out, "# sup_relative_error = {e:.3e}"),
            None => writeln!(out, "# sup_relative_error = n/a"),
        }
    }
}

/// Only points where the exact density exceeds this fraction of its peak
/// enter the jump-model sup error.
pub const MIXTURE_FLOOR: f64 = 1e-6;
/// Central probability mass used for the GBM sup error.
pub const CENTRAL_MASS: f64 = 0.99;

/// Density of `S_dt` from the contract spot on a log-spaced grid, with its
/// normalization and (when available) the error against the exact density.
pub fn density_check(cfg: &RunConfig) -> CliResult<(Vec<DensityDumpRow>, DensitySummary)> {
    let s0 = cfg.contract.spot;
    let dt = cfg.density.delta_t;
    let n = cfg.density.points;
    let order = cfg.order;
    let (rows, clamp_count) = if cfg.model().is_jump() {
        let model = cfg.params.jump_model()?;
        let expansion = JumpDensityExpansion::from_model(&model, order)?;
        let sd = model.log_diffusion.sigma(s0.ln()) * dt.sqrt();
        let (z_lo, z_hi) = model.jumps.law.expansion_support();
        let x0 = s0.ln();
        let (lo, hi) = (x0 + z_lo.min(0.0) - 10.0 * sd, x0 + z_hi.max(0.0) + 10.0 * sd);
        // Half the points on the diffusive core, the rest on the jump tails.
        let tail = n / 4;
        let core = n - 2 * tail;
        let (c_lo, c_hi) = (x0 - 10.0 * sd, x0 + 10.0 * sd);
        let h_lo = (c_lo - lo) / tail as f64;
        let h_hi = (hi - c_hi) / tail as f64;
        let xs = (0..tail)
            .map(|i| lo + h_lo * i as f64)
            .chain(log_grid(c_lo, c_hi, core).map(f64::ln))
            .chain((1..=tail).map(|i| c_hi + h_hi * i as f64));
        let rows = xs
            .map(f64::exp)
            .map(|s| {
                Ok(DensityDumpRow {
                    s_from: s0,
                    s_to: s,
                    delta_t: dt,
                    m: order,
                    density: expansion.price_density(s, s0, dt)?,
                    intensity: Some(model.jumps.intensity),
                })
            })
            .collect::<amerput_core::Result<Vec<_>>>()?;
        (rows, expansion.clamp_count())
    } else {
        let spec = cfg.params.diffusion()?;
        let expansion = diffusion_expansion(&cfg.params, cfg.contract.strike, order)?;
        let sd = spec.sigma(s0) / s0 * dt.sqrt();
        let (d_lo, d_hi) = spec.domain();
        let lo = (s0.ln() - 10.0 * sd).max(if d_lo > 0.0 { (d_lo * 1.0001).ln() } else { f64::NEG_INFINITY });
        let hi = (s0.ln() + 10.0 * sd).min(d_hi.ln());
        let rows = log_grid(lo, hi, n)
            .map(|s| {
                Ok(DensityDumpRow { s_from: s0, s_to: s, delta_t: dt, m: order, density: expansion.density(s, s0, dt)?, intensity: None })
            })
            .collect::<amerput_core::Result<Vec<_>>>()?;
        (rows, expansion.clamp_count())
    };
    let normalization_error = (log_trapezoid(&rows) - 1.0).abs();
    let sup_relative_error = match cfg.params {
        ModelParams::Gbm(p) => Some(gbm_sup_error(&p, &rows)),
        ModelParams::Merton(p) => Some(merton_sup_error(&p, &rows)),
        _ => None,
    };
    Ok((rows, DensitySummary { normalization_error, clamp_count, sup_relative_error }))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |i| (lo + h * i as f64).exp())
}

/// Trapezoid rule for `∫ψ(s) ds` in `ln s`.
fn log_trapezoid(rows: &[DensityDumpRow]) -> f64 {
    rows.windows(2)
        .map(|w| 0.5 * (w[0].density * w[0].s_to + w[1].density * w[1].s_to) * (w[1].s_to.ln() - w[0].s_to.ln()))
        .sum()
}

fn gbm_sup_error(p: &GbmParams, rows: &[DensityDumpRow]) -> f64 {
    use amerput_oracles::lognormal_quantile;
    let Some(first) = rows.first() else { return 0.0 };
    let tail = 0.5 * (1.0 - CENTRAL_MASS);
    let lo = lognormal_quantile(p, first.s_from, first.delta_t, tail);
    let hi = lognormal_quantile(p, first.s_from, first.delta_t, 1.0 - tail);
    rows.iter()
        .filter(|r| r.s_to >= lo && r.s_to <= hi)
        .map(|r| {
            let exact = lognormal_density(p, r.s_to, r.s_from, r.delta_t);
            (r.density - exact).abs() / exact
        })
        .fold(0.0, f64::max)
}

fn merton_sup_error(p: &MertonParams, rows: &[DensityDumpRow]) -> f64 {
    let exact: Vec<f64> = rows.iter().map(|r| merton_mixture_density(p, r.s_to, r.s_from, r.delta_t)).collect();
    let peak = exact.iter().cloned().fold(0.0, f64::max);
    rows.iter()
        .zip(&exact)
        .filter(|(_, &e)| e >= MIXTURE_FLOOR * peak)
        .map(|(r, &e)| (r.density - e).abs() / e)
        .fold(0.0, f64::max)
}

pub fn run_density_check<W: Write>(cfg: &RunConfig, mut out: W) -> CliResult<DensitySummary> {
    let (rows, summary) = density_check(cfg)?;
    write_density_csv(&mut out, &rows).map_err(stdout_error)?;
    summary.write(&mut out).map_err(stdout_error)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub order: usize,
    pub strike: f64,
    pub price: f64,
    pub benchmark: f64,
    /// NaN when the benchmark is too small for a relative error.
    pub relative_error: f64,
}

/// Benchmarks below this are treated as zero in the sweep.
pub const SWEEP_FLOOR: f64 = 1e-8;

pub fn order_sweep(cfg: &RunConfig) -> CliResult<Vec<SweepRow>> {
    let ModelParams::Gbm(params) = cfg.params else {
        return Err(CliError::Config(format!("order-sweep needs the binomial benchmark, so model must be gbm (got {:?})", cfg.model())));
    };
    let jobs: Vec<(usize, f64)> =
        cfg.sweep.orders.iter().flat_map(|&m| cfg.sweep.strikes.iter().map(move |&k| (m, k))).collect();
    let (spot, maturity, steps, binomial_steps) = (cfg.contract.spot, cfg.contract.maturity, cfg.steps, cfg.oracle.binomial_steps);
    let results: Vec<amerput_core::Result<SweepRow>> = pool(cfg.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(order, strike)| {
                let contract = PutContract { strike, maturity, spot };
                let benchmark = crr_binomial_put(&params, &contract, binomial_steps)?;
                let expansion = diffusion_expansion(&ModelParams::Gbm(params), strike, order)?;
                let price = eep::price(&expansion, &contract, steps)?.price;
                let relative_error = if benchmark < SWEEP_FLOOR { f64::NAN } else { (price - benchmark).abs() / benchmark };
                Ok(SweepRow { order, strike, price, benchmark, relative_error })
            })
            .collect()
    });
    Ok(results.into_iter().collect::<amerput_core::Result<Vec<_>>>()?)
}

/// Median of the defined relative errors for each order, in sweep order.
pub fn sweep_medians(rows: &[SweepRow]) -> Vec<(usize, f64)> {
    let mut orders: Vec<usize> = rows.iter().map(|r| r.order).collect();
    orders.dedup();
    orders
        .into_iter()
        .map(|m| {
            let mut errs: Vec<f64> =
                rows.iter().filter(|r| r.order == m && r.relative_error.is_finite()).map(|r| r.relative_error).collect();
            errs.sort_by(f64::total_cmp);
            let med = match errs.len() {
                0 => f64::NAN,
                n if n % 2 == 1 => errs[n / 2],
                n => 0.5 * (errs[n / 2 - 1] + errs[n / 2]),
            };
            (m, med)
        })
        .collect()
}

pub fn run_order_sweep<W: Write>(cfg: &RunConfig, mut out: W) -> CliResult<Vec<SweepRow>> {
    let rows = order_sweep(cfg)?;
    let io = |w: &mut W| -> std::io::Result<()> {
        writeln!(w, "m,strike,price,benchmark,relative_error")?;
        for r in &rows {
            writeln!(w, "{},{},{:.8},{:.8},{:.6e}", r.order, r.strike, r.price, r.benchmark, r.relative_error)?;
        }
        for (m, med) in sweep_medians(&rows) {
            writeln!(w, "# median_relative_error m={m} = {med:.6e}")?;
        }
        Ok(())
    };
    io(&mut out).map_err(stdout_error)?;
    Ok(rows)
}

fn stdout_error(source: std::io::Error) -> CliError {
    CliError::Output { path: "<output>".into(), source }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn row(benchmark: f64, hermite: f64, published: f64, failure: Option<&str>) -> BenchRow {
        BenchRow {
            strike: 40.0,
            sigma: 0.2,
            maturity: 0.5833,
            benchmark,
            hermite,
            abs_error: (benchmark - hermite).abs(),
            published,
            failure: failure.map(str::to_owned),
        }
    }

    #[test]
    fn fixture_covers_grid() {
        let rows = published_rows();
        assert_eq!(rows.len(), 27);
        assert_eq!(rows[0], (35.0, 0.2, 0.0833, 0.0062));
        assert_eq!(rows[26], (45.0, 0.4, 0.5833, 7.3833));
    }

    #[test]
    fn table_statistics() {
        let same = BenchTable { rows: vec![row(1.0, 1.0, 1.0, None), row(2.0, 2.0, 2.1, None)] };
        assert_eq!(same.rmse(), 0.0);
        assert_eq!(same.within_published(PUBLISHED_TOL), 1);
        let t = BenchTable {
            rows: vec![row(1.0, 1.003, 1.0, None), row(1.0, 0.996, 1.0, None), row(f64::NAN, f64::NAN, 1.0, Some("x"))],
        };
        assert!((t.rmse() - (12.5e-6f64).sqrt()).abs() < 1e-12);
        assert_eq!(t.failed(), 1);
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.lines().nth(3).unwrap().ends_with(",failed"));
        assert!(text.contains("# within_1e-3_of_published = 0/3"));
    }

    #[test]
    fn medians_skip_undefined() {
        let r = |order, e| SweepRow { order, strike: 0.0, price: 0.0, benchmark: 0.0, relative_error: e };
        let rows = [r(1, f64::NAN), r(1, 3.0), r(1, 1.0), r(2, 2.0), r(2, 4.0), r(3, f64::NAN)];
        let m = sweep_medians(&rows);
        assert_eq!(m[0], (1, 2.0));
        assert_eq!(m[1], (2, 3.0));
        assert!(m[2].1.is_nan());
    }
}
