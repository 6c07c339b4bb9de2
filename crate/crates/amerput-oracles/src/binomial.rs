use amerput_core::eep::{BoundaryGrid, PutContract};
use amerput_core::models::GbmParams;
use amerput_core::{Error, Result};

struct Tree {
    steps: usize,
    dt: f64,
    up: f64,
    p_up: f64,
    disc: f64,
}

impl Tree {
    fn new(params: &GbmParams, contract: &PutContract, steps: usize) -> Result<Self> {
        contract.validate()?;
        if steps == 0 {
            return Err(Error::Parameter("binomial tree needs at least one step".into()));
        }
        if !(params.sigma > 0.0) {
            return Err(Error::Parameter(format!("binomial tree needs sigma > 0, got {}", params.sigma)));
        }
        let dt = contract.maturity / steps as f64;
        let up = (params.sigma * dt.sqrt()).exp();
        let down = 1.0 / up;
        let p_up = (((params.r - params.delta) * dt).exp() - down) / (up - down);
        if !(0.0..=1.0).contains(&p_up) {
            return Err(Error::Parameter(format!("risk-neutral probability {p_up} outside [0, 1]")));
        }
        Ok(Self { steps, dt, up, p_up, disc: (-params.r * dt).exp() })
    }

    fn price(&self, s0: f64, layer: usize, node: usize) -> f64 {
        s0 * self.up.powi(2 * node as i32 - layer as i32)
    }

    /// Backward induction; `on_layer(n, values)` sees each layer after the
    /// exercise check, `exercised[i]` telling whether node `i` is exercised.
    fn run<F: FnMut(usize, &[bool])>(&self, contract: &PutContract, mut on_layer: F) -> f64 {
        let (k, s0) = (contract.strike, contract.spot);
        let n = self.steps;
        // Node prices of the current layer; one layer back is a factor `up`.
        let mut s: Vec<f64> = (0..=n).map(|i| self.price(s0, n, i)).collect();
        let mut v: Vec<f64> = s.iter().map(|x| (k - x).max(0.0)).collect();
        let mut exercised = vec![false; n + 1];
        let (pu, pd) = (self.disc * self.p_up, self.disc * (1.0 - self.p_up));
        for layer in (0..n).rev() {
            for i in 0..=layer {
                s[i] *= self.up;
                let cont = pu * v[i + 1] + pd * v[i];
                let intrinsic = k - s[i];
                exercised[i] = intrinsic > 0.0 && cont <= intrinsic;
                v[i] = if exercised[i] { intrinsic } else { cont };
            }
            on_layer(layer, &exercised[..=layer]);
        }
        v[0]
    }
}

/// Cox-Ross-Rubinstein American put.
pub fn crr_binomial_put(params: &GbmParams, contract: &PutContract, steps: usize) -> Result<f64> {
    let tree = Tree::new(params, contract, steps)?;
    Ok(tree.run(contract, |_, _| {}))
}

/// Exercise boundary read off the tree (largest exercised node per layer),
/// sampled onto an `n_steps` grid by step interpolation.
pub fn binomial_implied_boundary(params: &GbmParams, contract: &PutContract, steps: usize, n_steps: usize) -> Result<BoundaryGrid> {
    let tree = Tree::new(params, contract, steps)?;
    let mut layers: Vec<Option<f64>> = vec![None; steps + 1];
    layers[steps] = Some(contract.strike);
    tree.run(contract, |layer, ex| {
        layers[layer] = ex.iter().rposition(|&e| e).map(|i| tree.price(contract.spot, layer, i));
    });
    // Layers without an exercised node take the next layer that has one.
    for n in (0..steps).rev() {
        if layers[n].is_none() {
            layers[n] = layers[n + 1];
        }
    }
    let dt = contract.maturity / n_steps as f64;
    let values = (0..=n_steps)
        .map(|k| {
            let layer = ((k as f64 * dt / tree.dt) + 1e-9).floor() as usize;
            layers[layer.min(steps)].unwrap_or(contract.strike)
        })
        .collect();
    BoundaryGrid::new(dt, values)
}
