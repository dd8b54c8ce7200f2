//! Unknown variance of zero-mean Gaussian samples under a symmetric beta prior.
//!
//! `x | θ ~ N(0, θ I_N)`, `θ ~ Beta(a, a)` on `(0, 1)`.

use rand::RngCore;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::model::{check_scalar_prior, ScalarModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceBetaParams {
    pub a: f64,
    pub n: usize,
}

impl Default for VarianceBetaParams {
    fn default() -> Self {
        Self { a: 2.1, n: 128 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceObs {
    pub n: usize,
    pub sum_sq: f64,
}

#[derive(Debug, Clone)]
pub struct VarianceBeta {
    a: f64,
    n: usize,
    ln_b: f64,
    gamma: Gamma<f64>,
}

impl VarianceBeta {
    pub fn new(p: VarianceBetaParams) -> Result<Self> {
        if !(p.a > 2.0) || !p.a.is_finite() {
            return Err(Error::BadParams(format!(
                "beta shape a must exceed 2, got {}",
                p.a
            )));
        }
        if p.n == 0 {
            return Err(Error::BadParams("sample count N must be at least 1".into()));
        }
        let m = Self {
            a: p.a,
            n: p.n,
            ln_b: ln_beta(p.a, p.a),
            gamma: Gamma::new(p.a, 1.0).map_err(|e| Error::BadParams(e.to_string()))?,
        };
        check_scalar_prior(&m)?;
        Ok(m)
    }

    pub fn params(&self) -> VarianceBetaParams {
        VarianceBetaParams {
            a: self.a,
            n: self.n,
        }
    }

    pub fn prior_mean(&self) -> f64 {
        0.5
    }

    pub fn prior_variance(&self) -> f64 {
        1.0 / (4.0 * (2.0 * self.a + 1.0))
    }

    /// `E[J_D] = N (2a-1)/(a-2)`, from the inverse second moment of the prior.
    pub fn expected_cond_fim(&self) -> f64 {
        let a = self.a;
        self.n as f64 * (2.0 * a - 1.0) / (a - 2.0)
    }

    /// `E[L_P] = 4(a-1)(2a-1)/(a-2)`.
    pub fn expected_l_p(&self) -> f64 {
        let a = self.a;
        4.0 * (a - 1.0) * (2.0 * a - 1.0) / (a - 2.0)
    }

    pub fn bcrb_closed(&self) -> f64 {
        1.0 / (self.expected_cond_fim() + self.expected_l_p())
    }

    /// `E[2θ²/N] = (a+1)/(N(2a+1))`.
    pub fn ecrb_closed(&self) -> f64 {
        let a = self.a;
        (a + 1.0) / (self.n as f64 * (2.0 * a + 1.0))
    }

    /// `J_DP⁻¹`, its first derivative, and the second derivative of `J_DP⁻²`, analytically.
    pub fn j_dp_inv_derivatives(&self, t: f64) -> (f64, f64, f64) {
        let (n, c) = (self.n as f64, (self.a - 1.0).powi(2));
        let u = 1.0 / t - 1.0 / (1.0 - t);
        let du = -1.0 / (t * t) - 1.0 / (1.0 - t).powi(2);
        let d2u = 2.0 / t.powi(3) - 2.0 / (1.0 - t).powi(3);
        let j = n / (2.0 * t * t) + c * u * u;
        let dj = -n / t.powi(3) + 2.0 * c * u * du;
        let d2j = 3.0 * n / t.powi(4) + 2.0 * c * (du * du + u * d2u);
        let g = 1.0 / j;
        let dg = -dj / (j * j);
        // (j⁻²)'' = 6 j'² / j⁴ - 2 j'' / j³
        let d2g2 = 6.0 * dj * dj / j.powi(4) - 2.0 * d2j / j.powi(3);
        (g, dg, d2g2)
    }

    /// Likelihood maximizer `Σx²/N`, clamped into the support.
    pub fn ml_closed(&self, x: &VarianceObs, clip: f64) -> f64 {
        (x.sum_sq / x.n as f64).clamp(clip, 1.0 - clip)
    }

    /// Posterior mode: the root in (0, 1) of
    /// `(N - 4(a-1)) θ² + (2(a-1) - N - S) θ + S = 0`.
    pub fn map_closed(&self, x: &VarianceObs) -> f64 {
        let (n, s, b1) = (x.n as f64, x.sum_sq, self.a - 1.0);
        let qa = n - 4.0 * b1;
        let qb = 2.0 * b1 - n - s;
        let qc = s;
        if qa.abs() < 1e-14 * (n + s) {
            return -qc / qb;
        }
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
        // numerically stable pair of roots
        let q = -0.5 * (qb + qb.signum() * disc);
        let (r1, r2) = (q / qa, qc / q);
        if r1 > 0.0 && r1 < 1.0 {
            r1
        } else {
            r2
        }
    }
}

impl ScalarModel for VarianceBeta {
    type Obs = VarianceObs;

    fn support(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn prior_logpdf(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= 1.0 {
            return f64::NEG_INFINITY;
        }
        (self.a - 1.0) * (t.ln() + (-t).ln_1p()) - self.ln_b
    }

    fn prior_logpdf_deriv(&self, t: f64) -> Option<f64> {
        Some((self.a - 1.0) * (1.0 / t - 1.0 / (1.0 - t)))
    }

    fn cond_fim(&self, t: f64) -> f64 {
        self.n as f64 / (2.0 * t * t)
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> f64 {
        let x: f64 = self.gamma.sample(rng);
        let y: f64 = self.gamma.sample(rng);
        x / (x + y)
    }

    fn sample_cond(&self, rng: &mut dyn RngCore, t: f64) -> VarianceObs {
        let sd = t.sqrt();
        let sum_sq = (0..self.n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                (sd * z).powi(2)
            })
            .sum();
        VarianceObs { n: self.n, sum_sq }
    }

    fn cond_loglik(&self, x: &VarianceObs, t: f64) -> f64 {
        let n = x.n as f64;
        -0.5 * n * (2.0 * std::f64::consts::PI * t).ln() - x.sum_sq / (2.0 * t)
    }

    fn n_obs(&self) -> usize {
        self.n
    }
}
