//! Motion-coherence probability model.
//!
//! The support `S` of a region (number of neighbors agreeing with a motion
//! pattern) is binomial with success probability `p_true` when the region
//! really moves with that pattern and `p_false` otherwise:
//!
//! ```text
//! p_true  = t + (1 - t) * beta * m/M
//! p_false = beta * (1 - t) * m/M
//! ```
//!
//! A cell is declared dynamic when its support clears the upper
//! `k_sigma` tail of the false-hypothesis binomial.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StatModel {
    /// Probability that a neighbor is consistent with the keypoint's motion.
    pub t: f64,
    /// Inflation for assumption violations (repeated structure).
    pub beta: f64,
    /// Fraction of location possibilities covered by one region.
    pub m_over_m: f64,
}

impl StatModel {
    pub fn new(t: f64, beta: f64, m_over_m: f64) -> Result<Self> {
        let model = Self { t, beta, m_over_m };
        model.validate()?;
        Ok(model)
    }

    /// Uniform region prior over a `gx × gy` grid.
    pub fn for_grid(gx: usize, gy: usize) -> Self {
        Self { t: 0.6, beta: 1.0, m_over_m: 1.0 / (gx * gy) as f64 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.t) {
            return Err(Error::Config(format!("t must lie in [0, 1], got {}", self.t)));
        }
        if self.beta.is_nan() || self.beta <= 0.0 || self.beta.is_infinite() {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.m_over_m > 0.0 && self.m_over_m < 1.0) {
            return Err(Error::Config(format!("m/M must lie in (0, 1), got {}", self.m_over_m)));
        }
        if self.beta * self.m_over_m > 1.0 {
            return Err(Error::Config(format!("beta * m/M must not exceed 1, got {}", self.beta * self.m_over_m)));
        }
        Ok(())
    }

    pub fn p_true(&self) -> f64 {
        self.t + (1.0 - self.t) * self.beta * self.m_over_m
    }

    pub fn p_false(&self) -> f64 {
        self.beta * (1.0 - self.t) * self.m_over_m
    }

    /// `n * p_false + k_sigma * sqrt(n * p_false * (1 - p_false))`
    pub fn support_threshold(&self, n: usize, k_sigma: f64) -> f64 {
        let (mean, sd) = binomial_moments(n, self.p_false());
        mean + k_sigma * sd
    }

    pub fn separability(&self, n: usize, k_sigma: f64) -> SeparabilityReport {
        let p_true = self.p_true();
        let p_false = self.p_false();
        let (mean_true, sd_true) = binomial_moments(n, p_true);
        let (mean_false, sd_false) = binomial_moments(n, p_false);
        let threshold = mean_false + k_sigma * sd_false;
        SeparabilityReport {
            n,
            p_true,
            p_false,
            mean_true,
            sd_true,
            mean_false,
            sd_false,
            threshold,
            separable: mean_true - k_sigma * sd_true > threshold,
        }
    }

    /// Simulates `trials` neighborhoods of `n` features under both hypotheses
    /// and returns the empirical per-feature hit rates `(p_true, p_false)`.
    ///
    /// Each neighbor is first coherent with probability `t`. A coherent
    /// neighbor lands in the region only when the region shares its motion;
    /// an incoherent one lands there with probability `beta * m/M`.
    pub fn monte_carlo_check(&self, n: usize, trials: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stray = (self.beta * self.m_over_m).clamp(0.0, 1.0);
        let mut hits_true = 0u64;
        let mut hits_false = 0u64;
        for _ in 0..trials {
            for same_motion in [true, false] {
                let mut support = 0u64;
                for _ in 0..n {
                    let coherent = rng.random_bool(self.t);
                    let hit = if coherent { same_motion } else { rng.random_bool(stray) };
                    support += hit as u64;
                }
                if same_motion {
                    hits_true += support;
                } else {
                    hits_false += support;
                }
            }
        }
        let draws = (trials * n).max(1) as f64;
        (hits_true as f64 / draws, hits_false as f64 / draws)
    }
}

fn binomial_moments(n: usize, p: f64) -> (f64, f64) {
    let n = n as f64;
    (n * p, (n * p * (1.0 - p)).max(0.0).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparabilityReport {
    pub n: usize,
    pub p_true: f64,
    pub p_false: f64,
    pub mean_true: f64,
    pub sd_true: f64,
    pub mean_false: f64,
    pub sd_false: f64,
    pub threshold: f64,
    /// `mean_true - k * sd_true > threshold`
    pub separable: bool,
}
