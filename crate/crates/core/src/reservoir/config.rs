use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reservoir hyper-parameters. Every output artifact echoes these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    /// Neurons per reservoir.
    pub n: usize,
    /// Target spectral radius of each recurrence matrix, in (0, 1).
    pub rho: f64,
    pub input_scale: f64,
    /// Ridge regularization; enters the solve squared.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        ReservoirConfig {
            n: 30,
            rho: 0.9,
            input_scale: 1.0,
            lambda: 1e-2,
            seed: 0,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("reservoir size n must be >= 1"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.input_scale > 0.0) || !self.input_scale.is_finite() {
            return Err(Error::invalid(format!(
                "input_scale must be positive, got {}",
                self.input_scale
            )));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be > 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Length of every dynamic feature built with this config.
    pub fn feature_len(&self) -> usize {
        2 * self.n + 1
    }
}
