use crate::config::OracleConfig;
use amerput_core::eep::PutContract;
use amerput_core::models::GbmParams;
use amerput_core::{Error, Result};

pub const MIN_SPACE_STEPS: usize = 50;
/// Half-width of the log-price grid in standard deviations over the life.
const GRID_SD: f64 = 5.0;
/// Fully implicit start-up steps that damp the payoff kink.
const RANNACHER_STEPS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct FdResult {
    pub price: f64,
    /// Largest node at `t = 0` where the value equals intrinsic.
    pub boundary: Option<f64>,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64]) {
    let n = d.len();
    let mut cp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    d[0] /= b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        d[i] = (d[i] - a[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= cp[i] * d[i + 1];
    }
}

/// Crank-Nicolson American put in log price with projection onto the payoff.
pub fn fd_american_put(params: &GbmParams, contract: &PutContract, config: &OracleConfig) -> Result<FdResult> {
    contract.validate()?;
    config.validate()?;
    let j = config.fd_space_steps;
    if j < MIN_SPACE_STEPS {
        return Err(Error::Parameter(format!("need at least {MIN_SPACE_STEPS} space steps, got {j}")));
    }
    if !(params.sigma > 0.0) {
        return Err(Error::Parameter("finite differences need sigma > 0".into()));
    }
    let (k, s0, t) = (contract.strike, contract.spot, contract.maturity);
    let half = GRID_SD * params.sigma * t.sqrt();
    let (x0, xk) = (s0.ln(), k.ln());
    let (lo, hi) = (x0.min(xk) - half, x0.max(xk) + half);
    let h = (hi - lo) / j as f64;
    let nodes: Vec<f64> = (0..=j).map(|i| lo + i as f64 * h).collect();
    let payoff: Vec<f64> = nodes.iter().map(|x| (k - x.exp()).max(0.0)).collect();

    let s2 = params.sigma * params.sigma;
    let nu = params.r - params.delta - 0.5 * s2;
    // Spatial operator L V_i = al V_{i-1} + be V_i + ga V_{i+1}.
    let al = 0.5 * s2 / (h * h) - 0.5 * nu / h;
    let be = -s2 / (h * h) - params.r;
    let ga = 0.5 * s2 / (h * h) + 0.5 * nu / h;

    let m = config.fd_time_steps;
    let dtau = t / m as f64;
    let mut v = payoff.clone();
    let n_in = j - 1;
    let (mut a, mut b, mut c, mut rhs) = (vec![0.0; n_in], vec![0.0; n_in], vec![0.0; n_in], vec![0.0; n_in]);
    for step in 0..m {
        let theta = if step < RANNACHER_STEPS { 1.0 } else { 0.5 };
        // Deep in the money the put is exercised; far out of it it is worthless.
        let (left, right) = (k - nodes[0].exp(), 0.0);
        for i in 0..n_in {
            let g = i + 1;
            let lv = al * v[g - 1] + be * v[g] + ga * v[g + 1];
            rhs[i] = v[g] + (1.0 - theta) * dtau * lv;
            a[i] = -theta * dtau * al;
            b[i] = 1.0 - theta * dtau * be;
            c[i] = -theta * dtau * ga;
        }
        rhs[0] -= a[0] * left;
        rhs[n_in - 1] -= c[n_in - 1] * right;
        a[0] = 0.0;
        c[n_in - 1] = 0.0;
        thomas(&a, &b, &c, &mut rhs);
        v[0] = left;
        v[j] = right;
        for i in 0..n_in {
            v[i + 1] = rhs[i].max(payoff[i + 1]);
        }
    }

    // Quadratic interpolation at the spot.
    let i = (((x0 - lo) / h).round() as usize).clamp(1, j - 1);
    let (xa, xb, xc) = (nodes[i - 1], nodes[i], nodes[i + 1]);
    let price = v[i - 1] * (x0 - xb) * (x0 - xc) / ((xa - xb) * (xa - xc))
        + v[i] * (x0 - xa) * (x0 - xc) / ((xb - xa) * (xb - xc))
        + v[i + 1] * (x0 - xa) * (x0 - xb) / ((xc - xa) * (xc - xb));
    let boundary = (0..=j)
        .rev()
        .find(|&i| payoff[i] > 0.0 && v[i] <= payoff[i] + 1e-12 * k)
        .map(|i| nodes[i].exp());
    Ok(FdResult { price, boundary, nodes: nodes.iter().map(|x| x.exp()).collect(), values: v })
}
