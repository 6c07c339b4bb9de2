use crate::config::OracleConfig;
use amerput_core::eep::PutContract;
use amerput_core::models::{DiffusionSpec, GbmParams, JumpDiffusionModel, JumpLaw};
use amerput_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson, StandardNormal};
use rayon::prelude::*;

/// Runs with a larger share of non-finite paths are rejected.
pub const MAX_EXPLOSIVE_FRACTION: f64 = 1e-3;
/// Antithetic pairs per random stream.
const BLOCK_PAIRS: usize = 4096;

#[derive(Debug, Clone, Copy)]
pub enum McModel<'a> {
    /// Exact lognormal terminal draw.
    Gbm(GbmParams),
    /// Euler-Maruyama in the state coordinate.
    Diffusion(&'a DiffusionSpec),
    /// Log-price diffusion plus compound Poisson jumps; exact in one step
    /// when the log coefficients are constant.
    Jump(&'a JumpDiffusionModel),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub price: f64,
    pub std_err: f64,
    pub paths: usize,
    pub explosive: usize,
}

/// Running mean and squared deviations (Welford), merged with Chan's rule.
#[derive(Default, Clone, Copy)]
struct Block {
    mean: f64,
    m2: f64,
    pairs: usize,
    explosive: usize,
}

impl Block {
    fn push(&mut self, y: f64) {
        self.pairs += 1;
        let d = y - self.mean;
        self.mean += d / self.pairs as f64;
        self.m2 += d * (y - self.mean);
    }

    fn merge(self, o: Block) -> Block {
        let n = self.pairs + o.pairs;
        if n == 0 {
            return Block { explosive: self.explosive + o.explosive, ..self };
        }
        let d = o.mean - self.mean;
        let (na, nb) = (self.pairs as f64, o.pairs as f64);
        Block {
            mean: self.mean + d * nb / n as f64,
            m2: self.m2 + o.m2 + d * d * na * nb / n as f64,
            pairs: n,
            explosive: self.explosive + o.explosive,
        }
    }
}

enum JumpSampler {
    Normal(Normal<f64>),
    DoubleExp { p: f64, up: Exp<f64>, down: Exp<f64> },
}

impl JumpSampler {
    fn new(law: &JumpLaw) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| Error::Parameter(format!("jump law: {e}"));
        match *law {
            JumpLaw::Normal { mean, std } => Ok(Self::Normal(Normal::new(mean, std).map_err(|e| bad(&e))?)),
            JumpLaw::DoubleExponential { p, eta_up, eta_down } => Ok(Self::DoubleExp {
                p,
                up: Exp::new(eta_up).map_err(|e| bad(&e))?,
                down: Exp::new(eta_down).map_err(|e| bad(&e))?,
            }),
            JumpLaw::Custom { .. } => Err(Error::Unsupported("Monte Carlo cannot sample a custom jump law".into())),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Normal(n) => n.sample(rng),
            Self::DoubleExp { p, up, down } => {
                if rng.random::<f64>() < *p {
                    up.sample(rng)
                } else {
                    -down.sample(rng)
                }
            }
        }
    }
}

struct Simulator<'a> {
    model: McModel<'a>,
    contract: PutContract,
    steps: usize,
    jumps: Option<(f64, JumpSampler)>,
}

impl Simulator<'_> {
    fn compound_jumps<R: Rng>(&self, rng: &mut R, dt: f64) -> f64 {
        match &self.jumps {
            Some((lambda, sampler)) if *lambda > 0.0 => {
                let n = Poisson::new(lambda * dt).map(|d| d.sample(rng) as u64).unwrap_or(0);
                (0..n).map(|_| sampler.sample(rng)).sum()
            }
            _ => 0.0,
        }
    }

    /// Terminal states of an antithetic pair; `None` marks a non-finite path.
    fn pair<R: Rng>(&self, rng: &mut R) -> [Option<f64>; 2] {
        let (s0, t) = (self.contract.spot, self.contract.maturity);
        match self.model {
            McModel::Gbm(p) => {
                let z: f64 = rng.sample(StandardNormal);
                let m = s0.ln() + (p.r - p.delta - 0.5 * p.sigma * p.sigma) * t;
                let v = p.sigma * t.sqrt();
                [Some((m + v * z).exp()), Some((m - v * z).exp())]
            }
            McModel::Jump(model) => {
                let spec = &model.log_diffusion;
                if let Some((mu, sigma)) = spec.constant_coefficients() {
                    let z: f64 = rng.sample(StandardNormal);
                    let base = s0.ln() + mu * t + self.compound_jumps(rng, t);
                    let v = sigma * t.sqrt();
                    return [finite((base + v * z).exp()), finite((base - v * z).exp())];
                }
                let dt = t / self.steps as f64;
                let (mut a, mut b) = (s0.ln(), s0.ln());
                for _ in 0..self.steps {
                    let z: f64 = rng.sample(StandardNormal);
                    let j = self.compound_jumps(rng, dt);
                    a += spec.mu(a) * dt + spec.sigma(a) * dt.sqrt() * z + j;
                    b += spec.mu(b) * dt - spec.sigma(b) * dt.sqrt() * z + j;
                }
                [finite(a.exp()), finite(b.exp())]
            }
            McModel::Diffusion(spec) => {
                let dt = t / self.steps as f64;
                let lo = spec.domain().0;
                let mut paths = [Some(s0), Some(s0)];
                for _ in 0..self.steps {
                    let z: f64 = rng.sample(StandardNormal);
                    for (path, sign) in paths.iter_mut().zip([1.0, -1.0]) {
                        if let Some(s) = *path {
                            // Paths that reach the lower edge stay there.
                            if s <= lo {
                                continue;
                            }
                            let next = s + spec.mu(s) * dt + sign * spec.sigma(s) * dt.sqrt() * z;
                            *path = finite(next).map(|x| x.max(lo));
                        }
                    }
                }
                paths
            }
        }
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn rate(model: &McModel) -> f64 {
    match model {
        McModel::Gbm(p) => p.r,
        McModel::Diffusion(spec) => spec.rate(),
        McModel::Jump(m) => m.rate,
    }
}

/// European put by Monte Carlo with antithetic pairs. Each block of pairs
/// draws from its own ChaCha stream keyed by the seed, and blocks are summed
/// in order, so results do not depend on thread scheduling.
pub fn mc_european_put(model: McModel, contract: &PutContract, config: &OracleConfig) -> Result<McEstimate> {
    contract.validate()?;
    config.validate()?;
    let jumps = match model {
        McModel::Jump(m) => Some((m.jumps.intensity, JumpSampler::new(&m.jumps.law)?)),
        _ => None,
    };
    let sim = Simulator { model, contract: *contract, steps: config.mc_time_steps, jumps };
    let pairs = config.mc_paths.div_ceil(2);
    let blocks = pairs.div_ceil(BLOCK_PAIRS);
    let disc = (-rate(&model) * contract.maturity).exp();
    let k = contract.strike;
    let results: Vec<Block> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.mc_seed);
            rng.set_stream(block as u64);
            let n = BLOCK_PAIRS.min(pairs - block * BLOCK_PAIRS);
            let mut acc = Block::default();
            for _ in 0..n {
                match sim.pair(&mut rng) {
                    [Some(a), Some(b)] => {
                        acc.push(0.5 * disc * ((k - a).max(0.0) + (k - b).max(0.0)));
                    }
                    pair => acc.explosive += pair.iter().filter(|p| p.is_none()).count().max(1),
                }
            }
            acc
        })
        .collect();
    let total = results.into_iter().fold(Block::default(), Block::merge);
    if total.explosive as f64 > MAX_EXPLOSIVE_FRACTION * (2 * pairs) as f64 || total.pairs < 2 {
        return Err(Error::Parameter(format!(
            "{} of {} Monte Carlo paths were non-finite",
            total.explosive,
            2 * pairs
        )));
    }
    let n = total.pairs as f64;
    let var = total.m2 / (n - 1.0);
    Ok(McEstimate { price: total.mean, std_err: (var / n).sqrt(), paths: 2 * pairs, explosive: total.explosive })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn deterministic_without_noise() {
        let p = GbmParams { r: 0.05, delta: 0.0, sigma: 0.0 };
        let c = PutContract::new(45.0, 1.0, 40.0).unwrap();
        let cfg = OracleConfig { mc_paths: 1000, ..Default::default() };
        let est = mc_european_put(McModel::Gbm(p), &c, &cfg).unwrap();
        let want = (-0.05f64).exp() * (45.0 - 40.0 * 0.05f64.exp());
        assert_abs_diff_eq!(est.price, want, epsilon = 1e-12);
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn odd_path_counts_round_up_to_pairs() {
        let c = PutContract::new(40.0, 0.5, 40.0).unwrap();
        let cfg = OracleConfig { mc_paths: 9, ..Default::default() };
        assert_eq!(mc_european_put(McModel::Gbm(GbmParams::default()), &c, &cfg).unwrap().paths, 10);
    }
}
