//! Joint mean and variance of Gaussian samples.
//!
//! `x | (μ, φ) ~ N(μ 1_N, φ I_N)` with independent priors `μ ~ N(0, σ_μ²)` and
//! `φ ~ Beta(a, a)`. The μ axis is truncated at `±6σ_μ` for integration.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::model::{check_vector_prior, VectorModel};

/// Half-width of the μ box in prior standard deviations.
pub const MU_TRUNCATION: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanVarParams {
    pub a: f64,
    pub n: usize,
    pub sigma_mu2: f64,
}

impl Default for MeanVarParams {
    fn default() -> Self {
        Self {
            a: 2.1,
            n: 100,
            sigma_mu2: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanVarObs {
    pub n: usize,
    pub mean: f64,
    /// `Σ (x_i - x̄)²`.
    pub scatter: f64,
}

#[derive(Debug, Clone)]
pub struct MeanVar {
    p: MeanVarParams,
    ln_b: f64,
    gamma: Gamma<f64>,
}

impl MeanVar {
    pub fn new(p: MeanVarParams) -> Result<Self> {
        if !(p.a > 2.0) || !p.a.is_finite() {
            return Err(Error::BadParams(format!(
                "beta shape a must exceed 2, got {}",
                p.a
            )));
        }
        if p.n == 0 {
            return Err(Error::BadParams("sample count N must be at least 1".into()));
        }
        if !(p.sigma_mu2 > 0.0) || !p.sigma_mu2.is_finite() {
            return Err(Error::BadParams(format!(
                "sigma_mu2 must be positive, got {}",
                p.sigma_mu2
            )));
        }
        let m = Self {
            p,
            ln_b: ln_beta(p.a, p.a),
            gamma: Gamma::new(p.a, 1.0).map_err(|e| Error::BadParams(e.to_string()))?,
        };
        check_vector_prior(&m)?;
        Ok(m)
    }

    pub fn params(&self) -> MeanVarParams {
        self.p
    }

    /// `γ(φ) = (a-1)(1/(1-φ) - 1/φ)`, minus the log-derivative of the beta prior.
    pub fn gamma_fn(&self, phi: f64) -> f64 {
        (self.p.a - 1.0) * (1.0 / (1.0 - phi) - 1.0 / phi)
    }

    /// Closed-form BCRB matrix.
    pub fn bcrb_closed(&self) -> DMatrix<f64> {
        let (a, n) = (self.p.a, self.p.n as f64);
        let b11 = 1.0 / (1.0 / self.p.sigma_mu2 + n * (2.0 * a - 1.0) / (a - 1.0));
        let b22 = (a - 2.0) / ((2.0 * a - 1.0) * (n + 4.0 * (a - 1.0)));
        DMatrix::from_diagonal(&DVector::from_vec(vec![b11, b22]))
    }

    /// Closed-form ECRB matrix.
    pub fn ecrb_closed(&self) -> DMatrix<f64> {
        let (a, n) = (self.p.a, self.p.n as f64);
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0 / (2.0 * n),
            (a + 1.0) / (n * (2.0 * a + 1.0)),
        ]))
    }
}

impl VectorModel for MeanVar {
    type Obs = MeanVarObs;

    fn dim(&self) -> usize {
        2
    }

    fn support(&self) -> (DVector<f64>, DVector<f64>) {
        let r = MU_TRUNCATION * self.p.sigma_mu2.sqrt();
        (
            DVector::from_vec(vec![-r, 0.0]),
            DVector::from_vec(vec![r, 1.0]),
        )
    }

    fn prior_logpdf(&self, t: &DVector<f64>) -> f64 {
        let (mu, phi) = (t[0], t[1]);
        if phi <= 0.0 || phi >= 1.0 {
            return f64::NEG_INFINITY;
        }
        let s2 = self.p.sigma_mu2;
        let normal = -0.5 * mu * mu / s2 - 0.5 * (2.0 * std::f64::consts::PI * s2).ln();
        normal + (self.p.a - 1.0) * (phi.ln() + (-phi).ln_1p()) - self.ln_b
    }

    fn prior_grad(&self, t: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![-t[0] / self.p.sigma_mu2, -self.gamma_fn(t[1])])
    }

    fn cond_fim(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let (n, phi) = (self.p.n as f64, t[1]);
        DMatrix::from_diagonal(&DVector::from_vec(vec![n / phi, n / (2.0 * phi * phi)]))
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let z: f64 = StandardNormal.sample(rng);
        let x: f64 = self.gamma.sample(rng);
        let y: f64 = self.gamma.sample(rng);
        DVector::from_vec(vec![self.p.sigma_mu2.sqrt() * z, x / (x + y)])
    }

    fn sample_cond(&self, rng: &mut dyn RngCore, t: &DVector<f64>) -> MeanVarObs {
        let (mu, sd) = (t[0], t[1].sqrt());
        let xs: Vec<f64> = (0..self.p.n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                mu + sd * z
            })
            .collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let scatter = xs.iter().map(|x| (x - mean).powi(2)).sum();
        MeanVarObs {
            n: self.p.n,
            mean,
            scatter,
        }
    }

    fn cond_loglik(&self, x: &MeanVarObs, t: &DVector<f64>) -> f64 {
        let (mu, phi, n) = (t[0], t[1], x.n as f64);
        let ss = x.scatter + n * (x.mean - mu).powi(2);
        -0.5 * n * (2.0 * std::f64::consts::PI * phi).ln() - ss / (2.0 * phi)
    }

    fn n_obs(&self) -> usize {
        self.p.n
    }
}
