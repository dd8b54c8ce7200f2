//! Small models with fully analytic answers, used as oracles.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::ScalarModel;

/// Sample mean of `N` observations; enough for both toy models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanObs {
    pub n: usize,
    pub mean: f64,
}

fn sample_mean(rng: &mut dyn RngCore, mu: f64, sd: f64, n: usize) -> MeanObs {
    let s: f64 = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            mu + sd * z
        })
        .sum();
    MeanObs {
        n,
        mean: s / n as f64,
    }
}

/// `x | θ ~ N(θ 1_N, I)`, `θ ~ N(0, σ²)`; the support is truncated at `±10σ`.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    pub n: usize,
    pub sigma2: f64,
}

impl LinearGaussian {
    pub fn new(n: usize, sigma2: f64) -> Result<Self> {
        if n == 0 || !(sigma2 > 0.0) {
            return Err(Error::BadParams(format!(
                "need N >= 1 and sigma2 > 0 (got {n}, {sigma2})"
            )));
        }
        Ok(Self { n, sigma2 })
    }

    pub fn bcrb_closed(&self) -> f64 {
        1.0 / (self.n as f64 + 1.0 / self.sigma2)
    }

    /// Posterior mean, which is also the mode.
    pub fn map_closed(&self, x: &MeanObs) -> f64 {
        let ns = self.n as f64 * self.sigma2;
        x.mean * ns / (ns + 1.0)
    }
}

impl ScalarModel for LinearGaussian {
    type Obs = MeanObs;

    fn support(&self) -> (f64, f64) {
        let r = 10.0 * self.sigma2.sqrt();
        (-r, r)
    }

    fn prior_logpdf(&self, t: f64) -> f64 {
        -0.5 * t * t / self.sigma2 - 0.5 * (2.0 * std::f64::consts::PI * self.sigma2).ln()
    }

    fn prior_logpdf_deriv(&self, t: f64) -> Option<f64> {
        Some(-t / self.sigma2)
    }

    fn cond_fim(&self, _t: f64) -> f64 {
        self.n as f64
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.sigma2.sqrt() * z
    }

    fn sample_cond(&self, rng: &mut dyn RngCore, t: f64) -> MeanObs {
        sample_mean(rng, t, 1.0, self.n)
    }

    fn cond_loglik(&self, x: &MeanObs, t: f64) -> f64 {
        // up to a θ-free term that depends on the scatter of the samples
        -0.5 * x.n as f64 * (x.mean - t).powi(2)
    }

    fn n_obs(&self) -> usize {
        self.n
    }
}

/// Uniform prior on `(lo, hi)` with `x | θ ~ N(θ 1_N, σ² I)`: the joint
/// information is the constant `N/σ²`.
#[derive(Debug, Clone)]
pub struct UniformLocation {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub sigma2: f64,
}

impl UniformLocation {
    pub fn new(lo: f64, hi: f64, n: usize, sigma2: f64) -> Result<Self> {
        if !(lo < hi) || n == 0 || !(sigma2 > 0.0) {
            return Err(Error::BadParams("need lo < hi, N >= 1, sigma2 > 0".into()));
        }
        Ok(Self { lo, hi, n, sigma2 })
    }

    pub fn information(&self) -> f64 {
        self.n as f64 / self.sigma2
    }
}

impl ScalarModel for UniformLocation {
    type Obs = MeanObs;

    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn prior_logpdf(&self, t: f64) -> f64 {
        if t > self.lo && t < self.hi {
            -(self.hi - self.lo).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn prior_logpdf_deriv(&self, _t: f64) -> Option<f64> {
        Some(0.0)
    }

    fn cond_fim(&self, _t: f64) -> f64 {
        self.information()
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> f64 {
        self.lo + (self.hi - self.lo) * rng.random::<f64>()
    }

    fn sample_cond(&self, rng: &mut dyn RngCore, t: f64) -> MeanObs {
        sample_mean(rng, t, self.sigma2.sqrt(), self.n)
    }

    fn cond_loglik(&self, x: &MeanObs, t: f64) -> f64 {
        -0.5 * x.n as f64 * (x.mean - t).powi(2) / self.sigma2
    }

    fn n_obs(&self) -> usize {
        self.n
    }
}
