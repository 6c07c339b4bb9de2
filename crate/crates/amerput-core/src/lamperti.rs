//! Unit-diffusion coordinate `y = gamma(S) = int_anchor^S du / sigma(u)`.

use crate::error::{Error, Result};
use crate::models::DiffusionSpec;
use crate::numerics::{solve_root, QuadratureRule, RootBracket};

const CACHE_KNOTS: usize = 512;
const GAMMA_PANEL: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct LampertiTransform {
    spec: DiffusionSpec,
    anchor: f64,
    /// Closed-form antiderivative at the anchor (zero when integrating numerically).
    offset: f64,
    cache_s: Vec<f64>,
    cache_y: Vec<f64>,
    rule: QuadratureRule,
}

impl LampertiTransform {
    pub fn new(spec: DiffusionSpec, anchor: f64) -> Result<Self> {
        if !spec.contains(anchor) {
            return Err(Error::Domain(anchor));
        }
        let rule = QuadratureRule::gauss_legendre(32)?;
        let mut t = Self { spec, anchor, offset: 0.0, cache_s: Vec::new(), cache_y: Vec::new(), rule };
        if let Some(g) = &t.spec.closed().gamma {
            t.offset = g(anchor);
        }
        if t.spec.closed().gamma_inv.is_none() {
            t.build_cache()?;
        }
        Ok(t)
    }

    /// Anchors at the strike when given, else at the middle of the domain.
    pub fn with_default_anchor(spec: DiffusionSpec, strike: Option<f64>) -> Result<Self> {
        let anchor = match strike {
            Some(k) => k,
            None => {
                let (lo, hi) = spec.domain();
                match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => 0.5 * (lo + hi),
                    (true, false) => lo + 1.0,
                    (false, true) => hi - 1.0,
                    (false, false) => 0.0,
                }
            }
        };
        Self::new(spec, anchor)
    }

    fn positive_domain(&self) -> bool {
        self.spec.domain().0 >= 0.0
    }

    fn build_cache(&mut self) -> Result<()> {
        let (lo, hi) = self.spec.domain();
        let a = self.anchor;
        let (s_lo, s_hi) = if self.positive_domain() {
            ((a * 1e-4).max(lo + 1e-9 * (a - lo)), (a * 1e4).min(hi - 1e-9 * (hi - a)))
        } else {
            ((a - 50.0).max(lo + 1e-9 * (a - lo)), (a + 50.0).min(hi - 1e-9 * (hi - a)))
        };
        let n = CACHE_KNOTS;
        let knots: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                if self.positive_domain() {
                    (s_lo.ln() + t * (s_hi.ln() - s_lo.ln())).exp()
                } else {
                    s_lo + t * (s_hi - s_lo)
                }
            })
            .collect();
        let ys = knots.iter().map(|&s| self.gamma(s)).collect::<Result<Vec<_>>>()?;
        self.cache_s = knots;
        self.cache_y = ys;
        Ok(())
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn gamma(&self, s: f64) -> Result<f64> {
        if !self.spec.contains(s) {
            return Err(Error::Domain(s));
        }
        if let Some(g) = &self.spec.closed().gamma {
            return Ok(g(s) - self.offset);
        }
        let spec = &self.spec;
        if self.positive_domain() {
            let (u0, u1) = (self.anchor.ln(), s.ln());
            let panels = ((u1 - u0).abs() / GAMMA_PANEL).ceil().max(1.0) as usize;
            self.rule.integrate_panels(
                |u| {
                    let x = u.exp();
                    x / spec.sigma(x)
                },
                u0,
                u1,
                panels,
            )
        } else {
            let panels = ((s - self.anchor).abs() / GAMMA_PANEL).ceil().clamp(1.0, 10_000.0) as usize;
            self.rule.integrate_panels(|x| 1.0 / spec.sigma(x), self.anchor, s, panels)
        }
    }

    pub fn gamma_inv(&self, y: f64) -> Result<f64> {
        if let Some(gi) = &self.spec.closed().gamma_inv {
            let s = gi(y + self.offset);
            if s.is_finite() && self.spec.contains(s) {
                return Ok(s);
            }
            let (lo, hi) = self.spec.domain();
            return Err(Error::Range { value: y, lo, hi });
        }
        let n = self.cache_y.len();
        let (y_lo, y_hi) = (self.cache_y[0], self.cache_y[n - 1]);
        if !(y >= y_lo && y <= y_hi) {
            return Err(Error::Range { value: y, lo: y_lo, hi: y_hi });
        }
        let i = self.cache_y.partition_point(|&k| k <= y).clamp(1, n - 1) - 1;
        let (a, b) = (self.cache_s[i], self.cache_s[i + 1]);
        if y == self.cache_y[i] {
            return Ok(a);
        }
        let mut failed = None;
        let sol = solve_root(
            |s| match self.gamma(s) {
                Ok(g) => g - y,
                Err(e) => {
                    failed = Some(e);
                    f64::NAN
                }
            },
            RootBracket { lo: a, hi: b, tol_abs: 1e-14 * a.abs().max(1e-3) },
        );
        if let Some(e) = failed {
            return Err(e);
        }
        Ok(sol?.root)
    }

    /// `mu_Y` when it is the same for every state.
    pub fn constant_mu_y(&self) -> Option<f64> {
        self.spec.closed().constant_mu_y
    }

    pub fn constant_lambda(&self) -> Option<f64> {
        self.constant_mu_y().map(|c| -0.5 * c * c)
    }

    pub fn mu_y(&self, y: f64) -> Result<f64> {
        if let Some(f) = &self.spec.closed().mu_y {
            return Ok(f(y + self.offset));
        }
        let s = self.gamma_inv(y)?;
        Ok(self.mu_y_at_state(s))
    }

    fn mu_y_at_state(&self, s: f64) -> f64 {
        self.spec.mu(s) / self.spec.sigma(s) - 0.5 * self.spec.sigma_prime(s)
    }

    pub fn mu_y_prime(&self, y: f64) -> Result<f64> {
        if let Some(f) = &self.spec.closed().mu_y_prime {
            return Ok(f(y + self.offset));
        }
        let s = self.gamma_inv(y)?;
        if let (Some(mp), Some(ss)) = (self.spec.mu_prime(s), self.spec.sigma_second(s)) {
            let (mu, sig, sp) = (self.spec.mu(s), self.spec.sigma(s), self.spec.sigma_prime(s));
            return Ok(mp - mu * sp / sig - 0.5 * sig * ss);
        }
        self.mu_y_prime_numeric(y)
    }

    /// Central difference of `mu_Y` with step `1e-5 * max(1, |y|)`.
    pub fn mu_y_prime_numeric(&self, y: f64) -> Result<f64> {
        let h = 1e-5 * y.abs().max(1.0);
        Ok((self.mu_y(y + h)? - self.mu_y(y - h)?) / (2.0 * h))
    }

    pub fn lambda(&self, y: f64) -> Result<f64> {
        if let Some(l) = self.constant_lambda() {
            return Ok(l);
        }
        let m = self.mu_y(y)?;
        Ok(-0.5 * (m * m + self.mu_y_prime(y)?))
    }

    /// `int_{y0}^{y1} mu_Y(w) dw` where `s0`, `s1` are the matching states.
    pub fn mu_y_integral_states(&self, y0: f64, s0: f64, y1: f64, s1: f64) -> Result<f64> {
        if let Some(c) = self.constant_mu_y() {
            return Ok(c * (y1 - y0));
        }
        if let Some(h) = &self.spec.closed().drift_potential {
            let sig_ratio = self.spec.sigma(s1) / self.spec.sigma(s0);
            return Ok(h(s1) - h(s0) - 0.5 * sig_ratio.ln());
        }
        let panels = ((y1 - y0).abs() / 0.5).ceil().clamp(1.0, 1000.0) as usize;
        let mut failed = None;
        let v = self.rule.integrate_panels(
            |w| match self.mu_y(w) {
                Ok(m) => m,
                Err(e) => {
                    failed = Some(e);
                    f64::NAN
                }
            },
            y0,
            y1,
            panels,
        );
        match failed {
            Some(e) => Err(e),
            None => v,
        }
    }

    pub fn mu_y_integral(&self, y0: f64, y1: f64) -> Result<f64> {
        let s0 = self.gamma_inv(y0)?;
        let s1 = self.gamma_inv(y1)?;
        self.mu_y_integral_states(y0, s0, y1, s1)
    }
}
