use amerput_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub binomial_steps: usize,
    pub mc_paths: usize,
    pub mc_seed: u64,
    /// Euler steps per path for models without exact simulation.
    pub mc_time_steps: usize,
    pub fd_space_steps: usize,
    pub fd_time_steps: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            binomial_steps: 10_000,
            mc_paths: 1_000_000,
            mc_seed: 20_240_601,
            mc_time_steps: 1000,
            fd_space_steps: 200,
            fd_time_steps: 200,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("binomial_steps", self.binomial_steps),
            ("mc_paths", self.mc_paths),
            ("mc_time_steps", self.mc_time_steps),
            ("fd_space_steps", self.fd_space_steps),
            ("fd_time_steps", self.fd_time_steps),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Parameter(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}
