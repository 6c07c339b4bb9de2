//! Small-time expansion of a jump-diffusion transition density.
//!
//! The density is a Gaussian-type series `dt^{-1/2} exp(-C_{-1}/dt) sum C_k dt^k`
//! plus a regular jump series `sum D_k dt^k`. States are in the coordinate of
//! the supplied diffusion, which for the catalog models is log price, so jump
//! sizes enter additively as `x' - x`.
//!
//! Constant coefficients have closed forms for every term. Anything else goes
//! through the generic recursion, which applies the generator by central
//! differences; it is slow and meant for validation and custom models.

use crate::error::{Error, Result};
use crate::lamperti::LampertiTransform;
use crate::models::{DiffusionSpec, JumpDiffusionModel, JumpLaw, JumpSpec};
use crate::numerics::{QuadratureRule, SQRT_2PI};
use std::sync::atomic::{AtomicU64, Ordering};

pub const MAX_JUMP_ORDER: usize = 2;
/// Below this `|w_B|` the recursion prefactor is replaced by its limit.
const DIAGONAL: f64 = 1e-10;
/// Step for derivatives in the `w` coordinate.
const W_STEP: f64 = 1e-3;
/// Generator steps, scaled by `max(1, |x|)`. The C recursion nests the
/// differences, so its optimal step is larger.
const C_STEP: f64 = 2e-3;
const D_STEP: f64 = 1e-3;

/// Gaussian even moment `E[Z^{2r}] = (2r-1)!!`.
pub fn gaussian_moment(r: u32) -> f64 {
    (1..=r).map(|i| (2 * i - 1) as f64).product()
}

#[derive(Debug)]
pub struct JumpDensityExpansion {
    transform: LampertiTransform,
    jumps: JumpSpec,
    order: usize,
    rule: QuadratureRule,
    /// `(mu, sigma)` when the closed forms apply.
    constant: Option<(f64, f64)>,
    clamps: AtomicU64,
}

impl Clone for JumpDensityExpansion {
    fn clone(&self) -> Self {
        Self {
            transform: self.transform.clone(),
            jumps: self.jumps.clone(),
            order: self.order,
            rule: self.rule.clone(),
            constant: self.constant,
            clamps: AtomicU64::new(0),
        }
    }
}

impl JumpDensityExpansion {
    pub fn new(diffusion: DiffusionSpec, jumps: JumpSpec, order: usize) -> Result<Self> {
        if !(1..=MAX_JUMP_ORDER).contains(&order) {
            return Err(Error::Unsupported(format!("jump expansion order must be 1 or 2, got {order}")));
        }
        if !(jumps.intensity >= 0.0 && jumps.intensity.is_finite()) {
            return Err(Error::Parameter(format!("jump intensity must be nonnegative, got {}", jumps.intensity)));
        }
        let constant = diffusion.constant_coefficients();
        let transform = LampertiTransform::with_default_anchor(diffusion, None)?;
        Ok(Self {
            transform,
            jumps,
            order,
            rule: QuadratureRule::gauss_legendre(32)?,
            constant,
            clamps: AtomicU64::new(0),
        })
    }

    pub fn from_model(model: &JumpDiffusionModel, order: usize) -> Result<Self> {
        Self::new(model.log_diffusion.clone(), model.jumps.clone(), order)
    }

    /// Forces the generic recursion even when closed forms exist.
    pub fn without_closed_forms(mut self) -> Self {
        self.constant = None;
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn jumps(&self) -> &JumpSpec {
        &self.jumps
    }

    pub fn transform(&self) -> &LampertiTransform {
        &self.transform
    }

    pub fn clamp_count(&self) -> u64 {
        self.clamps.load(Ordering::Relaxed)
    }

    pub fn reset_clamp_count(&self) {
        self.clamps.store(0, Ordering::Relaxed);
    }

    fn spec(&self) -> &DiffusionSpec {
        self.transform.spec()
    }

    fn rho(&self) -> f64 {
        self.jumps.intensity
    }

    fn law(&self) -> &JumpLaw {
        &self.jumps.law
    }

    /// `w_B(s, s') = int_{s'}^{s} du / sigma(u)`.
    pub fn w_b(&self, s: f64, s_to: f64) -> Result<f64> {
        Ok(self.transform.gamma(s)? - self.transform.gamma(s_to)?)
    }

    pub fn c_minus1(&self, s: f64, s_to: f64) -> Result<f64> {
        let w = self.w_b(s, s_to)?;
        Ok(0.5 * w * w)
    }

    pub fn c0(&self, s: f64, s_to: f64) -> Result<f64> {
        if let Some((mu, sig)) = self.constant {
            return Ok((mu * (s_to - s) / (sig * sig)).exp() / (SQRT_2PI * sig));
        }
        let t = &self.transform;
        let closed = t.spec().closed();
        let drift = if closed.drift_potential.is_some() || closed.constant_mu_y.is_some() {
            t.mu_y_integral_states(t.gamma(s)?, s, t.gamma(s_to)?, s_to)?
        } else {
            let spec = self.spec();
            let panels = ((s_to - s).abs() / 0.25).ceil().clamp(1.0, 1000.0) as usize;
            self.rule.integrate_panels(
                |u| {
                    let sig = spec.sigma(u);
                    spec.mu(u) / (sig * sig) - 0.5 * spec.sigma_prime(u) / sig
                },
                s,
                s_to,
                panels,
            )?
        };
        Ok(drift.exp() / (SQRT_2PI * self.spec().sigma(s_to)))
    }

    /// `-(rho + mu^2 / (2 sigma^2))`, the per-order factor of the closed form.
    fn kappa(&self, mu: f64, sig: f64) -> f64 {
        -(self.rho() + mu * mu / (2.0 * sig * sig))
    }

    pub fn coeff_c(&self, k: usize, s: f64, s_to: f64) -> Result<f64> {
        if k == 0 {
            return self.c0(s, s_to);
        }
        if let Some((mu, sig)) = self.constant {
            let kappa = self.kappa(mu, sig);
            let fact: f64 = (1..=k).map(|i| i as f64).product();
            return Ok(self.c0(s, s_to)? * kappa.powi(k as i32) / fact);
        }
        self.c_generic(k, s, s_to)
    }

    /// `A f (u) = sigma^2/2 f'' + mu f'` by five-point central differences.
    fn generator(&self, f: &dyn Fn(f64) -> Result<f64>, u: f64, step: f64) -> Result<f64> {
        let h = step * u.abs().max(1.0);
        let (m2, m1, mid, p1, p2) = (f(u - 2.0 * h)?, f(u - h)?, f(u)?, f(u + h)?, f(u + 2.0 * h)?);
        let d1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
        let d2 = (-m2 + 16.0 * m1 - 30.0 * mid + 16.0 * p1 - p2) / (12.0 * h * h);
        let sig = self.spec().sigma(u);
        let v = 0.5 * sig * sig * d2 + self.spec().mu(u) * d1;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation { x: u })
        }
    }

    /// `[(A - rho) C_{k-1}](u, s') / C_0(u, s')`.
    fn source(&self, k: usize, u: f64, s_to: f64) -> Result<f64> {
        let prev = |v: f64| self.coeff_c(k - 1, v, s_to);
        let a = self.generator(&prev, u, C_STEP)?;
        Ok((a - self.rho() * prev(u)?) / self.c0(u, s_to)?)
    }

    /// `C_k` from `C_{k-1}`: solves `sigma w_B dF/ds + k F = source` for
    /// `F = C_k / C_0`, which is regular across the diagonal.
    fn c_generic(&self, k: usize, s: f64, s_to: f64) -> Result<f64> {
        let w0 = self.w_b(s, s_to)?;
        let c0 = self.c0(s, s_to)?;
        if w0.abs() < DIAGONAL {
            return Ok(c0 * self.source(k, s, s_to)? / k as f64);
        }
        let (nodes, weights) = self.rule.reference();
        let half = 0.5 * (s - s_to);
        let mut acc = 0.0;
        for (t, w) in nodes.iter().zip(weights) {
            let u = s_to + half * (1.0 + t);
            let wu = self.w_b(u, s_to)?;
            acc += w * wu.powi(k as i32 - 1) / self.spec().sigma(u) * self.source(k, u, s_to)?;
        }
        Ok(c0 * acc * half / w0.powi(k as i32))
    }

    pub fn d1(&self, s: f64, s_to: f64) -> f64 {
        self.rho() * self.law().density(s_to - s)
    }

    pub fn coeff_d(&self, k: usize, s: f64, s_to: f64) -> Result<f64> {
        match k {
            1 => Ok(self.d1(s, s_to)),
            2 if self.rho() == 0.0 => Ok(0.0),
            2 => match self.constant {
                Some((mu, sig)) => Ok(self.d2_constant(mu, sig, s_to - s)),
                None => self.d2_generic(s, s_to),
            },
            _ => Err(Error::Unsupported(format!("coefficient D_{k} is not implemented"))),
        }
    }

    fn d2_constant(&self, mu: f64, sig: f64, z: f64) -> f64 {
        let (rho, law) = (self.rho(), self.law());
        rho * (0.5 * sig * sig * law.density_d2(z) - mu * law.density_d1(z))
            + 0.5 * rho * rho * law.self_convolution(z)
            - rho * rho * law.density(z)
    }

    /// `int v(z - c) v(c) dc`, split at the kinks a double exponential has.
    fn convolution_quadrature(&self, z: f64) -> Result<f64> {
        let law = self.law();
        let (lo, hi) = law.support();
        let mut cuts = vec![lo, hi];
        for c in [0.0, z, z - hi, z - lo] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
        cuts.sort_by(f64::total_cmp);
        let rule = QuadratureRule::gauss_legendre(64)?;
        let mut total = 0.0;
        for pair in cuts.windows(2) {
            let panels = ((pair[1] - pair[0]) / law.panel_width(pair[0] >= 0.0)).ceil().max(1.0) as usize;
            total += rule.integrate_panels(|c| law.density(z - c) * law.density(c), pair[0], pair[1], panels)?;
        }
        Ok(total)
    }

    /// `m_k(w) = C_k(u, s') v(u - s) sigma(u)` with `w_B(u, s') = w`.
    fn m(&self, k: usize, s: f64, s_to: f64, w: f64) -> Result<f64> {
        let t = &self.transform;
        let u = t.gamma_inv(t.gamma(s_to)? + w)?;
        Ok(self.coeff_c(k, u, s_to)? * self.law().density(u - s) * self.spec().sigma(u))
    }

    fn d2_generic(&self, s: f64, s_to: f64) -> Result<f64> {
        let rho = self.rho();
        let d1 = |v: f64| Ok(self.d1(v, s_to));
        let z = s_to - s;
        let jump_part = rho * (rho * self.convolution_quadrature(z)? - rho * self.law().density(z));
        let big_l = self.generator(&d1, s, D_STEP)? + jump_part;
        let m1 = self.m(1, s, s_to, 0.0)?;
        let m0 = |w: f64| self.m(0, s, s_to, w);
        let m0_d2 = (m0(W_STEP)? - 2.0 * m0(0.0)? + m0(-W_STEP)?) / (W_STEP * W_STEP);
        let moments = gaussian_moment(0) * m1 + gaussian_moment(1) / 2.0 * m0_d2;
        Ok(0.5 * (big_l + SQRT_2PI * rho * moments))
    }

    fn check_dt(dt: f64) -> Result<()> {
        if dt > 0.0 && dt.is_finite() {
            Ok(())
        } else {
            Err(Error::Parameter(format!("time step must be positive, got {dt}")))
        }
    }

    /// Density in the diffusion's coordinate of moving from `s` to `s_to`.
    pub fn density(&self, s_to: f64, s: f64, dt: f64) -> Result<f64> {
        Self::check_dt(dt)?;
        let raw = match self.constant {
            Some((mu, sig)) => self.raw_constant(mu, sig, s_to - s, dt),
            None => self.raw_generic(s_to, s, dt)?,
        };
        if raw < 0.0 {
            self.clamps.fetch_add(1, Ordering::Relaxed);
            return Ok(0.0);
        }
        Ok(raw)
    }

    fn raw_constant(&self, mu: f64, sig: f64, z: f64, dt: f64) -> f64 {
        let u = z / sig;
        let log_kernel = -0.5 * u * u / dt + mu * z / (sig * sig);
        let mut total = 0.0;
        if log_kernel > -745.0 {
            let kappa = self.kappa(mu, sig);
            let (mut series, mut term) = (1.0, 1.0);
            for k in 1..=self.order {
                term *= kappa * dt / k as f64;
                series += term;
            }
            total += log_kernel.exp() / (SQRT_2PI * sig * dt.sqrt()) * series;
        }
        if self.rho() > 0.0 {
            total += self.d1(0.0, z) * dt;
            if self.order >= 2 {
                total += self.d2_constant(mu, sig, z) * dt * dt;
            }
        }
        total
    }

    fn raw_generic(&self, s_to: f64, s: f64, dt: f64) -> Result<f64> {
        let kernel = (-self.c_minus1(s, s_to)? / dt).exp() / dt.sqrt();
        let mut total = 0.0;
        if kernel > 0.0 {
            let mut series = 0.0;
            for k in 0..=self.order {
                series += self.coeff_c(k, s, s_to)? * dt.powi(k as i32);
            }
            total += kernel * series;
        }
        if self.rho() > 0.0 {
            for k in 1..=self.order {
                total += self.coeff_d(k, s, s_to)? * dt.powi(k as i32);
            }
        }
        Ok(total)
    }

    /// Density in price for a log-price expansion: `psi_x(ln S', ln S) / S'`.
    pub fn price_density(&self, s_to: f64, s_from: f64, dt: f64) -> Result<f64> {
        if !(s_to > 0.0) {
            return Err(Error::Domain(s_to));
        }
        if !(s_from > 0.0) {
            return Err(Error::Domain(s_from));
        }
        Ok(self.density(s_to.ln(), s_from.ln(), dt)? / s_to)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::DensityExpansion;
    use crate::models::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn no_jumps() -> JumpSpec {
        JumpSpec { intensity: 0.0, law: JumpLaw::Normal { mean: 0.0, std: 0.2 }, mean_relative_jump: 0.0202 }
    }

    fn unit() -> DiffusionSpec {
        DiffusionSpec::builder("unit", 0.0, Arc::new(|_| 0.0), Arc::new(|_| 1.0))
            .sigma_prime(Arc::new(|_| 0.0))
            .domain(f64::NEG_INFINITY, f64::INFINITY)
            .build()
            .unwrap()
    }

    /// Log-price diffusion with level-dependent volatility.
    fn local_vol() -> DiffusionSpec {
        let sig = |x: f64| 0.2 + 0.05 * (x - 3.7).tanh();
        let sig_p = |x: f64| 0.05 / (x - 3.7).cosh().powi(2);
        DiffusionSpec::builder("local-vol", 0.05, Arc::new(move |x| 0.05 - 0.5 * sig(x) * sig(x)), Arc::new(sig))
            .sigma_prime(Arc::new(sig_p))
            .domain(f64::NEG_INFINITY, f64::INFINITY)
            .build()
            .unwrap()
    }

    fn merton() -> JumpDensityExpansion {
        JumpDensityExpansion::from_model(&build_merton(&MertonParams::default()).unwrap(), 2).unwrap()
    }

    fn kou() -> JumpDensityExpansion {
        JumpDensityExpansion::from_model(&build_kou(&KouParams::default()).unwrap(), 2).unwrap()
    }

    #[test]
    fn gaussian_moments_are_double_factorials() {
        let want = [1.0, 1.0, 3.0, 15.0, 105.0];
        let rule = QuadratureRule::gauss_legendre(64).unwrap().with_panels(16);
        for r in 0..=4u32 {
            assert_eq!(gaussian_moment(r), want[r as usize]);
            let quad = rule
                .integrate(|s| (-0.5 * s * s).exp() * s.powi(2 * r as i32) / SQRT_2PI, -14.0, 14.0)
                .unwrap();
            assert_abs_diff_eq!(quad, want[r as usize], epsilon = 1e-10);
        }
    }

    #[test]
    fn c_minus1_examples() {
        let e = JumpDensityExpansion::new(unit(), no_jumps(), 1).unwrap();
        assert_eq!(e.c_minus1(0.7, 0.7).unwrap(), 0.0);
        assert_abs_diff_eq!(e.c_minus1(1.0, 3.0).unwrap(), 2.0, epsilon = 1e-12);
        let g = JumpDensityExpansion::new(build_gbm(&GbmParams::default()).unwrap(), no_jumps(), 1).unwrap();
        let want = 0.5 * ((44.0f64 / 40.0).ln() / 0.2).powi(2);
        assert_abs_diff_eq!(g.c_minus1(40.0, 44.0).unwrap(), want, epsilon = 1e-12);
        assert_abs_diff_eq!(want, 0.11356, epsilon = 1e-5);
    }

    #[test]
    fn c0_examples() {
        let e = JumpDensityExpansion::new(unit(), no_jumps(), 1).unwrap();
        assert_abs_diff_eq!(e.c0(0.3, 1.2).unwrap(), 0.398_942_280_4, epsilon = 1e-10);
        let g = JumpDensityExpansion::new(build_cev(&CevParams::default()).unwrap(), no_jumps(), 1).unwrap();
        let sig = g.spec().sigma(90.0);
        assert_abs_diff_eq!(g.c0(90.0, 90.0).unwrap(), 1.0 / (SQRT_2PI * sig), epsilon = 1e-14);
    }

    #[test]
    fn c0_matches_diffusion_kernel_prefactor() {
        let m = merton();
        let d = DensityExpansion::new(LampertiTransform::new(m.spec().clone(), 0.0).unwrap(), 0).unwrap();
        let (x0, x) = (40f64.ln(), 43f64.ln());
        let dt = 0.01;
        let gauss = (-m.c_minus1(x0, x).unwrap() / dt).exp() / dt.sqrt();
        assert!((m.c0(x0, x).unwrap() * gauss / d.density(x, x0, dt).unwrap() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn flat_kernel_has_vanishing_first_coefficient() {
        let e = JumpDensityExpansion::new(unit(), no_jumps(), 2).unwrap();
        assert_abs_diff_eq!(e.coeff_c(1, 0.4, 0.4).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.coeff_c(1, 0.4, 1.1).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn d1_examples() {
        assert_eq!(JumpDensityExpansion::new(unit(), no_jumps(), 1).unwrap().d1(0.0, 0.3), 0.0);
        assert_abs_diff_eq!(merton().d1(3.0, 3.0), 0.1 / (2.0 * std::f64::consts::PI * 0.04).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(merton().d1(3.0, 3.0), 0.19947, epsilon = 1e-5);
        let want = 0.1 * 0.04 * 3.7 * (-1.85f64).exp();
        assert_abs_diff_eq!(kou().d1(1.0, 1.5), want, epsilon = 1e-15);
        assert_abs_diff_eq!(want, 0.002327, epsilon = 1e-6);
    }

    #[test]
    fn higher_coefficients_are_finite_on_the_diagonal() {
        let x = 40f64.ln();
        for e in [merton(), merton().without_closed_forms()] {
            assert!(e.coeff_c(1, x, x).unwrap().is_finite());
            assert!(e.coeff_c(2, x, x).unwrap().is_finite());
            assert!(e.coeff_d(2, x, 41f64.ln()).unwrap().is_finite());
        }
    }

    fn assert_rel(got: f64, want: f64, tol: f64, what: &str) {
        assert!((got - want).abs() <= tol * want.abs().max(1e-12), "{what}: {got} vs {want}");
    }

    #[test]
    fn generic_recursion_matches_closed_forms() {
        for fast in [merton(), kou()] {
            let slow = fast.clone().without_closed_forms();
            let x0 = 40f64.ln();
            for z in [-0.3, -0.05, 0.02, 0.15, 0.4] {
                let x = x0 + z;
                for k in 0..=2 {
                    let (a, b) = (slow.coeff_c(k, x0, x).unwrap(), fast.coeff_c(k, x0, x).unwrap());
                    assert_rel(a, b, 1e-6, &format!("C_{k} z={z}"));
                }
                let (a, b) = (slow.coeff_d(2, x0, x).unwrap(), fast.coeff_d(2, x0, x).unwrap());
                assert_rel(a, b, 1e-4, &format!("D_2 z={z}"));
                let (a, b) = (slow.density(x, x0, 0.01).unwrap(), fast.density(x, x0, 0.01).unwrap());
                assert_rel(a, b, 1e-6, &format!("density z={z}"));
            }
        }
    }

    #[test]
    fn zero_intensity_matches_diffusion_expansion() {
        let cases: Vec<(DiffusionSpec, f64, Vec<f64>, usize)> = vec![
            (build_gbm(&GbmParams::default()).unwrap(), 40.0, (0..=16).map(|i| 36.0 + 0.5 * i as f64).collect(), 1),
            (build_cev(&CevParams { alpha: 1.7, ..Default::default() }).unwrap(), 90.0, (0..=16).map(|i| 82.0 + i as f64).collect(), 2),
            (local_vol(), 3.6, (0..=16).map(|i| 3.45 + 0.02 * i as f64).collect(), 2),
        ];
        for (spec, s0, grid, m) in cases {
            let jump = JumpDensityExpansion::new(spec.clone(), no_jumps(), m).unwrap();
            let diff = DensityExpansion::new(LampertiTransform::with_default_anchor(spec, None).unwrap(), m).unwrap();
            for s in grid {
                let want = diff.density(s, s0, 0.01).unwrap();
                if want > 1e-8 {
                    assert_rel(jump.density(s, s0, 0.01).unwrap(), want, 1e-6, &format!("s={s}"));
                }
            }
        }
    }

    #[test]
    fn merton_density_is_normalized() {
        let e = merton();
        let x0 = 40f64.ln();
        let (lo, hi) = e.law().expansion_support();
        let rule = QuadratureRule::gauss_legendre(64).unwrap();
        let dt: f64 = 0.01;
        let w = 10.0 * 0.2 * dt.sqrt();
        let mut total = rule.integrate_panels(|x| e.density(x, x0, dt).unwrap(), x0 - w, x0 + w, 8).unwrap();
        total += rule.integrate_panels(|x| e.density(x, x0, dt).unwrap(), x0 + lo, x0 - w, 16).unwrap();
        total += rule.integrate_panels(|x| e.density(x, x0, dt).unwrap(), x0 + w, x0 + hi, 16).unwrap();
        assert!((total - 1.0).abs() <= 5e-3, "{total}");
    }

    #[test]
    fn price_density_is_log_density_over_price() {
        let e = merton();
        let d = e.price_density(42.0, 40.0, 0.05).unwrap();
        assert_abs_diff_eq!(d * 42.0, e.density(42f64.ln(), 40f64.ln(), 0.05).unwrap(), epsilon = 1e-15);
        assert!(matches!(e.price_density(-1.0, 40.0, 0.05), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(JumpDensityExpansion::from_model(&build_merton(&MertonParams::default()).unwrap(), 3).is_err());
        assert!(JumpDensityExpansion::from_model(&build_merton(&MertonParams::default()).unwrap(), 0).is_err());
        assert!(matches!(merton().density(1.0, 1.0, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn far_tail_is_carried_by_jump_terms() {
        let e = merton();
        let x0 = 40f64.ln();
        let d = e.density(x0 - 0.6, x0, 0.01).unwrap();
        let want = 0.01 * e.d1(x0, x0 - 0.6);
        assert!(d > 0.0 && (d / want - 1.0).abs() < 0.05, "{d} vs {want}");
    }

    proptest! {
        #[test]
        fn w_b_is_antisymmetric(a in 10.0f64..200.0, b in 10.0f64..200.0) {
            let e = JumpDensityExpansion::new(build_cev(&CevParams::default()).unwrap(), no_jumps(), 1).unwrap();
            let sum = e.w_b(a, b).unwrap() + e.w_b(b, a).unwrap();
            prop_assert!(sum.abs() <= 1e-12);
        }

        #[test]
        fn density_is_nonnegative(z in -1.5f64..1.5, dt in 0.001f64..0.1) {
            for e in [merton(), kou()] {
                prop_assert!(e.density(3.0 + z, 3.0, dt).unwrap() >= 0.0);
            }
        }
    }
}
