use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::csgeim::MeasurementVector;
use crate::error::{Error, Result};

/// Gaussian measurement noise with absolute standard deviation `sigma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
    pub repetitions: usize,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64, repetitions: usize) -> Result<Self> {
        let spec = NoiseSpec {
            sigma,
            seed,
            repetitions,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Config(format!("noise sigma = {} must be finite and >= 0", self.sigma)));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("at least one noise repetition is required".into()));
        }
        Ok(())
    }

    /// `exact + sigma * z` with `z_k = standard_normal(seed, repetition, k)`.
    pub fn perturb(&self, exact: &[f64], repetition: u64) -> MeasurementVector {
        let mut values = exact.to_vec();
        if self.sigma > 0.0 {
            values
                .iter_mut()
                .enumerate()
                .for_each(|(k, v)| *v += self.sigma * standard_normal(self.seed, repetition, k as u64));
        }
        MeasurementVector {
            values,
            sigma: self.sigma,
            seed: self.seed,
            repetition,
        }
    }
}

/// Counter-based standard normal draw: the ChaCha stream is selected by the
/// repetition and the block position by the sensor index, so each value is a
/// pure function of `(seed, repetition, sensor)`.
pub fn standard_normal(seed: u64, repetition: u64, sensor: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repetition);
    rng.set_word_pos(u128::from(sensor) << 24);
    rng.sample(StandardNormal)
}

/// The first `m` draws of one repetition.
pub fn normal_block(seed: u64, repetition: u64, m: usize) -> Vec<f64> {
    (0..m as u64).map(|k| standard_normal(seed, repetition, k)).collect()
}
