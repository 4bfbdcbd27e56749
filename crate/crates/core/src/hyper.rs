use crate::error::{Error, Result};

/// Training knobs shared by every learned model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub latent_dim: usize,
    pub learning_rate: f64,
    /// L2 coefficient.
    pub lambda1: f64,
    /// L1 coefficient on the interview weights (cold-start models only).
    pub lambda2: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            latent_dim: 10,
            learning_rate: 0.01,
            lambda1: 1e-4,
            lambda2: 0.0,
            epochs: 20,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim < 1 {
            return Err(Error::InvalidHyper("latent_dim must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidHyper("learning_rate must be > 0".into()));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::InvalidHyper("lambda1 must be >= 0".into()));
        }
        if self.lambda2.is_nan() || self.lambda2 < 0.0 {
            return Err(Error::InvalidHyper("lambda2 must be >= 0".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidHyper("epochs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        Hyperparams::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let base = Hyperparams::default();
        for bad in [
            Hyperparams { latent_dim: 0, ..base },
            Hyperparams { learning_rate: 0.0, ..base },
            Hyperparams { lambda1: -1.0, ..base },
            Hyperparams { lambda2: f64::NAN, ..base },
            Hyperparams { epochs: 0, ..base },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
