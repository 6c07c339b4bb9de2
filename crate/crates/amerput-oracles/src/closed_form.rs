use amerput_core::eep::PutContract;
use amerput_core::models::{GbmParams, MertonParams};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Poisson weights are dropped once they fall below this past the mode.
const WEIGHT_CUTOFF: f64 = 1e-14;

fn std_normal() -> Normal {
    Normal::standard()
}

fn bs_put(s: f64, k: f64, t: f64, r: f64, q: f64, sigma: f64) -> f64 {
    if k <= 0.0 {
        return 0.0;
    }
    let fwd_k = k * (-r * t).exp();
    let fwd_s = s * (-q * t).exp();
    let v = sigma * t.max(0.0).sqrt();
    if v == 0.0 {
        return (fwd_k - fwd_s).max(0.0);
    }
    let d1 = ((fwd_s / fwd_k).ln() + 0.5 * v * v) / v;
    let n = std_normal();
    fwd_k * n.cdf(-(d1 - v)) - fwd_s * n.cdf(-d1)
}

/// European put with continuous dividend yield.
pub fn black_scholes_put(params: &GbmParams, contract: &PutContract) -> f64 {
    bs_put(contract.spot, contract.strike, contract.maturity, params.r, params.delta, params.sigma)
}

/// Exact GBM transition density of `S_dt = s_to` given `S_0 = s_from`.
pub fn lognormal_density(params: &GbmParams, s_to: f64, s_from: f64, dt: f64) -> f64 {
    if s_to <= 0.0 || s_from <= 0.0 {
        return 0.0;
    }
    let v = params.sigma * dt.sqrt();
    let mean = s_from.ln() + (params.r - params.delta - 0.5 * params.sigma * params.sigma) * dt;
    Normal::new(mean, v).map(|n| n.pdf(s_to.ln()) / s_to).unwrap_or(f64::NAN)
}

/// Level `s` with `P(S_dt <= s) = prob` under GBM from `s_from`.
pub fn lognormal_quantile(params: &GbmParams, s_from: f64, dt: f64, prob: f64) -> f64 {
    let v = params.sigma * dt.sqrt();
    let mean = s_from.ln() + (params.r - params.delta - 0.5 * params.sigma * params.sigma) * dt;
    (mean + v * std_normal().inverse_cdf(prob)).exp()
}

fn jump_compensator(params: &MertonParams) -> f64 {
    (params.mu_j + 0.5 * params.sigma_j * params.sigma_j).exp() - 1.0
}

/// Poisson weights with mean `lambda_eff * t`, truncated past the mode once
/// they fall under the cutoff (or at `max_terms`).
fn poisson_weights(mean: f64, max_terms: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut w = (-mean).exp();
    for n in 0..max_terms.max(1) {
        if n > 0 {
            w *= mean / n as f64;
        }
        out.push(w);
        if n as f64 > mean && w < WEIGHT_CUTOFF {
            break;
        }
    }
    out
}

/// Weights of the Merton series for the risk-adjusted intensity `lambda (1 + j)`.
pub fn merton_weights(params: &MertonParams, maturity: f64, n_terms: usize) -> Vec<f64> {
    poisson_weights(params.lambda * (1.0 + jump_compensator(params)) * maturity, n_terms)
}

/// Merton's series: a Poisson mixture of Black-Scholes puts with a per-term
/// rate and variance.
pub fn merton_series_put(params: &MertonParams, contract: &PutContract, n_terms: usize) -> f64 {
    let t = contract.maturity;
    let j = jump_compensator(params);
    let log_j = (1.0 + j).ln();
    merton_weights(params, t, n_terms)
        .iter()
        .enumerate()
        .map(|(n, w)| {
            let n = n as f64;
            let r_n = params.r - params.lambda * j + n * log_j / t;
            let var = params.sigma * params.sigma + n * params.sigma_j * params.sigma_j / t;
            w * bs_put(contract.spot, contract.strike, t, r_n, params.delta, var.sqrt())
        })
        .sum()
}

/// Exact Merton transition density of the price, as a Poisson mixture of lognormals.
pub fn merton_mixture_density(params: &MertonParams, s_to: f64, s_from: f64, dt: f64) -> f64 {
    if s_to <= 0.0 || s_from <= 0.0 {
        return 0.0;
    }
    let j = jump_compensator(params);
    let drift = (params.r - params.delta - params.lambda * j - 0.5 * params.sigma * params.sigma) * dt;
    let z = s_to.ln() - s_from.ln() - drift;
    poisson_weights(params.lambda * dt, 200)
        .iter()
        .enumerate()
        .map(|(n, w)| {
            let n = n as f64;
            let sd = (params.sigma * params.sigma * dt + n * params.sigma_j * params.sigma_j).sqrt();
            let u = (z - n * params.mu_j) / sd;
            w * std_normal().pdf(u) / sd
        })
        .sum::<f64>()
        / s_to
}
