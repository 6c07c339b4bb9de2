//! Closed-form small-time expansion of a diffusion transition density.
//!
//! In the Lamperti coordinate the density is a Gaussian kernel times
//! `exp(int mu_Y)` times the series `sum_k c_k dt^k / k!`. The coefficients
//! `c_1` and `c_2` use exact reductions of their integral recursion (the
//! second-derivative terms integrate by parts), so only `c_3` needs a
//! numerical derivative.

use crate::error::{Error, Result};
use crate::lamperti::LampertiTransform;
use crate::numerics::QuadratureRule;
use std::io::{self, Write};
use std::sync::atomic::{AtomicU64, Ordering};

pub const MAX_ORDER: usize = 3;
/// Below these |y - y0| the coefficients are interpolated across the diagonal.
const C2_BAND: f64 = 1e-3;
const C3_BAND: f64 = 1e-2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug)]
pub struct DensityExpansion {
    transform: LampertiTransform,
    order: usize,
    coeff_rule: QuadratureRule,
    clamps: AtomicU64,
}

impl Clone for DensityExpansion {
    fn clone(&self) -> Self {
        Self {
            transform: self.transform.clone(),
            order: self.order,
            coeff_rule: self.coeff_rule.clone(),
            clamps: AtomicU64::new(0),
        }
    }
}

impl DensityExpansion {
    pub fn new(transform: LampertiTransform, order: usize) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::Unsupported(format!("expansion order {order} exceeds {MAX_ORDER}")));
        }
        Ok(Self { transform, order, coeff_rule: QuadratureRule::gauss_legendre(32)?, clamps: AtomicU64::new(0) })
    }

    pub fn transform(&self) -> &LampertiTransform {
        &self.transform
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of evaluations where the truncated series went non-positive.
    pub fn clamp_count(&self) -> u64 {
        self.clamps.load(Ordering::Relaxed)
    }

    pub fn reset_clamp_count(&self) {
        self.clamps.store(0, Ordering::Relaxed);
    }

    fn lambda(&self, y: f64) -> Result<f64> {
        self.transform.lambda(y)
    }

    /// Mean of `lambda` over [y0, y].
    fn c1(&self, y0: f64, y: f64) -> Result<f64> {
        let d = y - y0;
        if d.abs() < 1e-12 {
            return self.lambda(y0);
        }
        let (nodes, weights) = self.coeff_rule.reference();
        let mut sum = 0.0;
        for (t, w) in nodes.iter().zip(weights) {
            sum += w * self.lambda(y0 + 0.5 * (1.0 + t) * d)?;
        }
        Ok(0.5 * sum)
    }

    /// Central difference of `lambda`, one-sided next to the domain edge.
    fn lambda_prime(&self, y: f64) -> Result<f64> {
        let h = 1e-4 * y.abs().max(1.0);
        let mid = self.lambda(y)?;
        match (self.lambda(y + h), self.lambda(y - h)) {
            (Ok(up), Ok(dn)) => Ok((up - dn) / (2.0 * h)),
            (Ok(up), Err(_)) => Ok((-3.0 * mid + 4.0 * up - self.lambda(y + 2.0 * h)?) / (2.0 * h)),
            (Err(_), Ok(dn)) => Ok((3.0 * mid - 4.0 * dn + self.lambda(y - 2.0 * h)?) / (2.0 * h)),
            (Err(e), Err(_)) => Err(e),
        }
    }

    fn c2(&self, y0: f64, y: f64) -> Result<f64> {
        let d = y - y0;
        if d.abs() < C2_BAND {
            let lo = self.c2_direct(y0, y0 - C2_BAND)?;
            let hi = self.c2_direct(y0, y0 + C2_BAND)?;
            return Ok(lo + (d + C2_BAND) / (2.0 * C2_BAND) * (hi - lo));
        }
        self.c2_direct(y0, y)
    }

    fn c2_direct(&self, y0: f64, y: f64) -> Result<f64> {
        let d = y - y0;
        let c1 = self.c1(y0, y)?;
        Ok(c1 * c1 + (self.lambda(y)? + self.lambda(y0)? - 2.0 * c1) / (d * d))
    }

    /// `d c_2 / d y` from the reduced form; only `lambda'` is differenced.
    fn c2_slope(&self, y0: f64, y: f64) -> Result<f64> {
        let d = y - y0;
        if d.abs() < C2_BAND {
            let lo = self.c2_direct(y0, y0 - C2_BAND)?;
            let hi = self.c2_direct(y0, y0 + C2_BAND)?;
            return Ok((hi - lo) / (2.0 * C2_BAND));
        }
        let c1 = self.c1(y0, y)?;
        let (l, l0) = (self.lambda(y)?, self.lambda(y0)?);
        let c1_slope = (l - c1) / d;
        Ok(2.0 * c1 * c1_slope + (self.lambda_prime(y)? - 2.0 * c1_slope) / (d * d)
            - 2.0 * (l + l0 - 2.0 * c1) / (d * d * d))
    }

    fn c3(&self, y0: f64, y: f64) -> Result<f64> {
        let d = y - y0;
        if d.abs() < C3_BAND {
            let lo = self.c3_direct(y0, y0 - C3_BAND)?;
            let hi = self.c3_direct(y0, y0 + C3_BAND)?;
            return Ok(lo + (d + C3_BAND) / (2.0 * C3_BAND) * (hi - lo));
        }
        self.c3_direct(y0, y)
    }

    fn c3_direct(&self, y0: f64, y: f64) -> Result<f64> {
        let d = y - y0;
        let (nodes, weights) = self.coeff_rule.reference();
        let (mut with_lambda, mut plain) = (0.0, 0.0);
        for (t, w) in nodes.iter().zip(weights) {
            let u = 0.5 * (1.0 + t) * d;
            let c2 = self.c2(y0, y0 + u)?;
            with_lambda += w * u * u * self.lambda(y0 + u)? * c2;
            plain += w * c2;
        }
        with_lambda *= 0.5 * d;
        plain *= 0.5 * d;
        let by_parts = 0.5 * (d * d * self.c2_slope(y0, y)? - 2.0 * d * self.c2(y0, y)? + 2.0 * plain);
        Ok(3.0 * (with_lambda + by_parts) / (d * d * d))
    }

    /// Expansion coefficient `c_j(y | y0)`.
    pub fn coeff_c(&self, j: usize, y0: f64, y: f64) -> Result<f64> {
        if j == 0 {
            return Ok(1.0);
        }
        if let Some(l) = self.transform.constant_lambda() {
            return Ok(l.powi(j as i32));
        }
        match j {
            1 => self.c1(y0, y),
            2 => self.c2(y0, y),
            3 => self.c3(y0, y),
            _ => Err(Error::Unsupported(format!("coefficient c_{j} is not implemented"))),
        }
    }

    /// `sum_{k<=m} c_k dt^k / k!`.
    pub fn series(&self, y0: f64, y: f64, dt: f64) -> Result<f64> {
        let mut total = 1.0;
        let mut factor = 1.0;
        for k in 1..=self.order {
            factor *= dt / k as f64;
            total += self.coeff_c(k, y0, y)? * factor;
        }
        Ok(total)
    }

    fn check_dt(dt: f64) -> Result<()> {
        if dt > 0.0 && dt.is_finite() {
            Ok(())
        } else {
            Err(Error::Parameter(format!("time step must be positive, got {dt}")))
        }
    }

    /// Log of the Gaussian-times-drift factor in the `y` coordinate.
    fn log_kernel_y(&self, y0: f64, s0: f64, y: f64, s: f64, dt: f64) -> Result<f64> {
        let z = (y - y0) / dt.sqrt();
        let drift = self.transform.mu_y_integral_states(y0, s0, y, s)?;
        Ok(-0.5 * z * z - 0.5 * dt.ln() - LN_SQRT_2PI + drift)
    }

    /// Density of `Y` at `y` given `y0`; `s0`, `s` are the matching states.
    pub fn density_y(&self, y0: f64, s0: f64, y: f64, s: f64, dt: f64) -> Result<f64> {
        Self::check_dt(dt)?;
        let series = self.series(y0, y, dt)?;
        if series <= 0.0 {
            self.clamps.fetch_add(1, Ordering::Relaxed);
            return Ok(0.0);
        }
        Ok(self.log_kernel_y(y0, s0, y, s, dt)?.exp() * series)
    }

    /// Approximate transition density of `S_{t+dt}` at `s_to` given `S_t = s_from`.
    pub fn density(&self, s_to: f64, s_from: f64, dt: f64) -> Result<f64> {
        Self::check_dt(dt)?;
        let y0 = self.transform.gamma(s_from)?;
        let y = self.transform.gamma(s_to)?;
        Ok(self.density_y(y0, s_from, y, s_to, dt)? / self.transform.spec().sigma(s_to))
    }

    /// Log density; `-inf` where the series is clamped.
    pub fn log_density(&self, s_to: f64, s_from: f64, dt: f64) -> Result<f64> {
        Self::check_dt(dt)?;
        let y0 = self.transform.gamma(s_from)?;
        let y = self.transform.gamma(s_to)?;
        let series = self.series(y0, y, dt)?;
        if series <= 0.0 {
            self.clamps.fetch_add(1, Ordering::Relaxed);
            return Ok(f64::NEG_INFINITY);
        }
        let jac = self.transform.spec().sigma(s_to).ln();
        Ok(self.log_kernel_y(y0, s_from, y, s_to, dt)? + series.ln() - jac)
    }
}

/// One row of the density-dump CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityDumpRow {
    pub s_from: f64,
    pub s_to: f64,
    pub delta_t: f64,
    pub m: usize,
    pub density: f64,
    /// Present for jump models only.
    pub intensity: Option<f64>,
}

pub fn write_density_csv<W: Write>(mut out: W, rows: &[DensityDumpRow]) -> io::Result<()> {
    let jump = rows.iter().any(|r| r.intensity.is_some());
    if jump {
        writeln!(out, "S_from,S_to,delta_t,m,density,intensity")?;
    } else {
        writeln!(out, "S_from,S_to,delta_t,m,density")?;
    }
    for r in rows {
        write!(out, "{},{},{},{},{}", r.s_from, r.s_to, r.delta_t, r.m, r.density)?;
        if jump {
            write!(out, ",{}", r.intensity.unwrap_or(0.0))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn expansion(spec: DiffusionSpec, anchor: f64, m: usize) -> DensityExpansion {
        DensityExpansion::new(LampertiTransform::new(spec, anchor).unwrap(), m).unwrap()
    }

    fn gbm_params() -> GbmParams {
        GbmParams { r: 0.0488, delta: 0.0, sigma: 0.2 }
    }

    fn unit() -> DiffusionSpec {
        DiffusionSpec::builder("unit", 0.0, Arc::new(|_| 0.0), Arc::new(|_| 1.0))
            .sigma_prime(Arc::new(|_| 0.0))
            .domain(f64::NEG_INFINITY, f64::INFINITY)
            .build()
            .unwrap()
    }

    /// GBM functions with no closed forms, so every generic code path runs.
    fn bare_gbm() -> DiffusionSpec {
        DiffusionSpec::builder("bare-gbm", 0.0488, Arc::new(|x| 0.0488 * x), Arc::new(|x| 0.2 * x))
            .sigma_prime(Arc::new(|_| 0.2))
            .build()
            .unwrap()
    }

    fn lognormal(p: &GbmParams, s_to: f64, s_from: f64, dt: f64) -> f64 {
        let v = p.sigma * p.sigma * dt;
        let m = s_from.ln() + (p.r - p.delta - 0.5 * p.sigma * p.sigma) * dt;
        let u = s_to.ln() - m;
        (-(u * u) / (2.0 * v)).exp() / (s_to * (2.0 * PI * v).sqrt())
    }

    #[test]
    fn c0_is_one() {
        let e = expansion(build_cev(&CevParams::default()).unwrap(), 100.0, 3);
        assert_eq!(e.coeff_c(0, 0.3, -1.2).unwrap(), 1.0);
    }

    #[test]
    fn unit_diffusion_reduces_to_brownian_kernel() {
        for m in 0..=3 {
            let e = expansion(unit(), 0.0, m);
            for &(x0, x, dt) in &[(0.0, 0.3, 0.1), (1.0, -0.5, 0.5), (2.0, 2.0, 0.01)] {
                assert_eq!(e.coeff_c(1, x0, x).unwrap(), 0.0);
                let z: f64 = (x - x0) / f64::sqrt(dt);
                let want = (-0.5 * z * z).exp() / (2.0 * PI * dt).sqrt();
                assert_abs_diff_eq!(e.density(x, x0, dt).unwrap(), want, epsilon = 1e-12);
                let log_want = -0.5 * z * z - 0.5 * (2.0 * PI * dt).ln();
                assert_abs_diff_eq!(e.log_density(x, x0, dt).unwrap(), log_want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gbm_c1_equals_constant_lambda() {
        let lam = -0.5 * 0.144f64.powi(2);
        let fast = expansion(build_gbm(&gbm_params()).unwrap(), 40.0, 2);
        let slow = expansion(bare_gbm(), 40.0, 2);
        for &(a, b) in &[(40.0, 44.0), (30.0, 53.0), (36.0, 36.0)] {
            let (y0, y) = (fast.transform().gamma(a).unwrap(), fast.transform().gamma(b).unwrap());
            assert_abs_diff_eq!(fast.coeff_c(1, y0, y).unwrap(), lam, epsilon = 1e-15);
            assert_abs_diff_eq!(fast.coeff_c(1, y0, y).unwrap(), -0.010368, epsilon = 1e-6);
            let (y0, y) = (slow.transform().gamma(a).unwrap(), slow.transform().gamma(b).unwrap());
            assert_abs_diff_eq!(slow.coeff_c(1, y0, y).unwrap(), lam, epsilon = 1e-8);
            assert_abs_diff_eq!(slow.coeff_c(2, y0, y).unwrap(), lam * lam, epsilon = 1e-6);
        }
    }

    /// Literal recursion with nested central differences and fine quadrature.
    fn recursion_oracle(e: &DensityExpansion, j: usize, y0: f64, y: f64) -> f64 {
        let prev = |w: f64| e.coeff_c(j - 1, y0, w).unwrap();
        let rule = QuadratureRule::gauss_legendre(64).unwrap().with_panels(4);
        let integrand = |w: f64| {
            let h = 1e-4 * w.abs().max(1.0);
            let d2 = (prev(w + h) - 2.0 * prev(w) + prev(w - h)) / (h * h);
            (w - y0).powi(j as i32 - 1) * (e.transform().lambda(w).unwrap() * prev(w) + 0.5 * d2)
        };
        j as f64 * (y - y0).powi(-(j as i32)) * rule.integrate(integrand, y0, y).unwrap()
    }

    #[test]
    fn reduced_coefficients_match_literal_recursion() {
        let cases = [
            (expansion(build_cev(&CevParams { alpha: 1.7, ..Default::default() }).unwrap(), 100.0, 3), 60.0, 90.0),
            (expansion(build_nmr(&NmrParams::default()).unwrap(), 20.0, 3), 18.0, 23.0),
        ];
        for (e, a, b) in &cases {
            let (y0, y) = (e.transform().gamma(*a).unwrap(), e.transform().gamma(*b).unwrap());
            for j in 1..=3 {
                let got = e.coeff_c(j, y0, y).unwrap();
                let want = recursion_oracle(e, j, y0, y);
                assert!((got - want).abs() <= 1e-5 * want.abs().max(1e-3), "j={j}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn limit_branch_is_continuous() {
        let e = expansion(build_nmr(&NmrParams::default()).unwrap(), 20.0, 3);
        let y0 = e.transform().gamma(20.0).unwrap();
        assert_abs_diff_eq!(e.coeff_c(1, y0, y0).unwrap(), e.transform().lambda(y0).unwrap(), epsilon = 1e-14);
        for (j, band) in [(2, C2_BAND), (3, C3_BAND)] {
            let inside = e.coeff_c(j, y0, y0 + (1.0 - 1e-6) * band).unwrap();
            let outside = e.coeff_c(j, y0, y0 + (1.0 + 1e-6) * band).unwrap();
            assert!((inside - outside).abs() <= 1e-6 * inside.abs().max(1.0), "c_{j}: {inside} vs {outside}");
            assert!(e.coeff_c(j, y0, y0).unwrap().is_finite());
        }
        // c_2 on the diagonal tends to lambda^2 + lambda''/6.
        let l = |w: f64| e.transform().lambda(w).unwrap();
        let h = 1e-3;
        let l2 = (l(y0 + h) - 2.0 * l(y0) + l(y0 - h)) / (h * h);
        let want = l(y0).powi(2) + l2 / 6.0;
        assert!((e.coeff_c(2, y0, y0).unwrap() - want).abs() <= 1e-4 * want.abs().max(1.0));
    }

    fn sup_rel_error_vs_lognormal(m: usize) -> f64 {
        let p = gbm_params();
        let e = expansion(build_gbm(&p).unwrap(), 40.0, m);
        (0..=230)
            .map(|i| 30.0 + 0.1 * i as f64)
            .map(|s| {
                let exact = lognormal(&p, s, 40.0, 0.0833);
                (e.density(s, 40.0, 0.0833).unwrap() - exact).abs() / exact
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn gbm_density_matches_lognormal() {
        assert!(sup_rel_error_vs_lognormal(2) <= 1e-3);
    }

    #[test]
    fn gbm_error_non_increasing_in_order() {
        let errs: Vec<f64> = (0..=2).map(sup_rel_error_vs_lognormal).collect();
        assert!(errs[1] <= errs[0] && errs[2] <= errs[1], "{errs:?}");
    }

    fn mass(e: &DensityExpansion, s_from: f64, dt: f64) -> f64 {
        let t = e.transform();
        let y0 = t.gamma(s_from).unwrap();
        let w = 10.0 * dt.sqrt();
        let rule = QuadratureRule::gauss_legendre(64).unwrap().with_panels(4);
        rule.integrate(
            |y| match t.gamma_inv(y) {
                Ok(s) => e.density_y(y0, s_from, y, s, dt).unwrap(),
                Err(_) => 0.0,
            },
            y0 - w,
            y0 + w,
        )
        .unwrap()
    }

    #[test]
    fn densities_are_normalized() {
        let cases = [
            (expansion(build_gbm(&gbm_params()).unwrap(), 40.0, 2), 40.0),
            (expansion(build_cev(&CevParams::default()).unwrap(), 100.0, 2), 90.0),
            (expansion(build_cev(&CevParams { alpha: 1.7, ..Default::default() }).unwrap(), 100.0, 2), 90.0),
            (expansion(build_nmr(&NmrParams::default()).unwrap(), 20.0, 2), 20.0),
        ];
        for (e, s) in &cases {
            // NMR is only ever stepped below its maturity of 0.0833.
            let steps: &[f64] = if e.transform().spec().name() == "nmr" { &[0.01, 0.0833] } else { &[0.01, 0.0833, 0.1] };
            for &dt in steps {
                let total = mass(e, *s, dt);
                assert!((total - 1.0).abs() <= 1e-3, "{} dt={dt}: {total}", e.transform().spec().name());
            }
        }
    }

    #[test]
    fn nmr_mass_defect_is_third_order() {
        let e = expansion(build_nmr(&NmrParams::default()).unwrap(), 20.0, 2);
        let coarse = (mass(&e, 20.0, 0.05) - 1.0).abs();
        let fine = (mass(&e, 20.0, 0.025) - 1.0).abs();
        let ratio = coarse / fine;
        assert!((6.0..=10.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn mass_concentrates_for_short_steps() {
        let e = expansion(build_cev(&CevParams::default()).unwrap(), 100.0, 2);
        let spec = e.transform().spec().clone();
        let s0 = 90.0;
        let dt = 0.01;
        let half = 5.0 * spec.sigma(s0) * f64::sqrt(dt);
        let rule = QuadratureRule::gauss_legendre(64).unwrap().with_panels(4);
        let inside = rule.integrate(|s| e.density(s, s0, dt).unwrap(), s0 - half, s0 + half).unwrap();
        assert!(inside > 0.9999, "{inside}");
    }

    #[test]
    fn log_density_survives_underflow() {
        let e = expansion(build_gbm(&gbm_params()).unwrap(), 40.0, 2);
        let (s, s0, dt) = (200.0, 40.0, 0.01);
        assert_eq!(e.density(s, s0, dt).unwrap(), 0.0);
        let ld = e.log_density(s, s0, dt).unwrap();
        assert!(ld.is_finite() && ld < -700.0);
        for s in [35.0, 40.0, 47.0] {
            let d = e.density(s, s0, 0.0833).unwrap();
            assert_abs_diff_eq!(e.log_density(s, s0, 0.0833).unwrap().exp(), d, epsilon = 1e-14 * d);
        }
    }

    #[test]
    fn negative_series_is_clamped_and_counted() {
        // mu_Y = 10 gives lambda = -50, so 1 + lambda*dt < 0 at dt = 0.1.
        let p = GbmParams { r: 2.1, delta: 0.0, sigma: 0.2 };
        let e = expansion(build_gbm(&p).unwrap(), 1.0, 1);
        assert_eq!(e.clamp_count(), 0);
        assert_eq!(e.density(1.1, 1.0, 0.1).unwrap(), 0.0);
        assert_eq!(e.log_density(1.1, 1.0, 0.1).unwrap(), f64::NEG_INFINITY);
        assert_eq!(e.clamp_count(), 2);
        e.reset_clamp_count();
        assert_eq!(e.clamp_count(), 0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let e = expansion(build_gbm(&gbm_params()).unwrap(), 40.0, 2);
        assert!(matches!(e.density(40.0, 40.0, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(e.density(40.0, 40.0, -1.0), Err(Error::Parameter(_))));
        let t = LampertiTransform::new(build_gbm(&gbm_params()).unwrap(), 40.0).unwrap();
        assert!(DensityExpansion::new(t, 4).is_err());
    }

    #[test]
    fn csv_dump_layout() {
        let rows = [DensityDumpRow { s_from: 40.0, s_to: 41.5, delta_t: 0.0833, m: 2, density: 0.25, intensity: None }];
        let mut buf = Vec::new();
        write_density_csv(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "S_from,S_to,delta_t,m,density\n40,41.5,0.0833,2,0.25\n");
    }

    proptest! {
        #[test]
        fn concurrent_evaluation_is_bit_identical(s in 20.0f64..80.0, dt in 0.005f64..0.1) {
            let e = Arc::new(expansion(build_cev(&CevParams { alpha: 1.7, ..Default::default() }).unwrap(), 100.0, 2));
            let first = e.density(s, 50.0, dt).unwrap();
            let handles: Vec<_> = (0..4).map(|_| {
                let e = Arc::clone(&e);
                std::thread::spawn(move || e.density(s, 50.0, dt).unwrap())
            }).collect();
            for h in handles {
                prop_assert_eq!(h.join().unwrap().to_bits(), first.to_bits());
            }
        }
    }
}
