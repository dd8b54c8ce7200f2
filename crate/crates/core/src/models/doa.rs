//! Single-source direction of arrival on a uniform half-wavelength linear array.
//!
//! Snapshots `x_j = a(θ) α_j + v_j`, `j = 1..N_s`, with `α_j ~ CN(0, σ_α²)`,
//! `v_j ~ CN(0, σ² I)` and steering elements `a_n(θ) = exp(iπ (n - (N_a-1)/2) sin θ)`.
//! The prior is a raised-cosine window on `(-s, s)` with roll-off `κ`.
//! The noise power is fixed at `σ² = 1`, so `σ_α²` equals the linear SNR.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_scalar_prior, ScalarModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoaParams {
    pub n_a: usize,
    pub n_s: usize,
    /// Linear SNR `σ_α²/σ²`.
    pub snr: f64,
    pub s: f64,
    pub kappa: f64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl DoaParams {
    /// 32 sensors, 128 snapshots, edge at 85°, roll-off 0.98.
    pub fn preset(snr_db: f64) -> Self {
        Self {
            n_a: 32,
            n_s: 128,
            snr: db_to_linear(snr_db),
            s: 85.0 * PI / 180.0,
            kappa: 0.98,
        }
    }
}

/// Sufficient statistics of a batch of snapshots: lag sums of the sample
/// covariance, `c_k = Σ_j Σ_m x_j[m] conj(x_j[m+k])`. `c_0` is the total energy.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaObs {
    pub n_s: usize,
    pub lags: Vec<Complex64>,
}

impl DoaObs {
    pub fn from_snapshots(snapshots: &[Vec<Complex64>]) -> Self {
        let n_a = snapshots.first().map_or(0, Vec::len);
        let mut lags = vec![Complex64::new(0.0, 0.0); n_a];
        for x in snapshots {
            for (k, lag) in lags.iter_mut().enumerate() {
                for m in 0..n_a - k {
                    *lag += x[m] * x[m + k].conj();
                }
            }
        }
        Self {
            n_s: snapshots.len(),
            lags,
        }
    }

    pub fn energy(&self) -> f64 {
        self.lags.first().map_or(0.0, |c| c.re)
    }

    /// `Σ_j |a(θ)ᴴ x_j|²` as a trigonometric polynomial in `sin θ`.
    pub fn beam_power(&self, theta: f64) -> f64 {
        let z = Complex64::from_polar(1.0, PI * theta.sin());
        let mut zk = Complex64::new(1.0, 0.0);
        let mut acc = 0.0;
        for c in self.lags.iter().skip(1) {
            zk *= z;
            acc += (c * zk).re;
        }
        self.energy() + 2.0 * acc
    }
}

#[derive(Debug, Clone)]
pub struct Doa {
    p: DoaParams,
    delta: f64,
    norm: f64,
}

impl Doa {
    pub fn new(p: DoaParams) -> Result<Self> {
        if p.n_a < 2 || p.n_s == 0 {
            return Err(Error::BadParams(format!(
                "need at least 2 sensors and 1 snapshot (got {} and {})",
                p.n_a, p.n_s
            )));
        }
        if !(p.snr > 0.0) || !p.snr.is_finite() {
            return Err(Error::BadParams(format!(
                "snr must be positive, got {}",
                p.snr
            )));
        }
        if !(p.s > 0.0 && p.s < PI / 2.0) {
            return Err(Error::BadParams(format!(
                "edge s must lie in (0, π/2), got {}",
                p.s
            )));
        }
        if !(0.0..=1.0).contains(&p.kappa) {
            return Err(Error::BadParams(format!(
                "roll-off kappa must lie in [0, 1], got {}",
                p.kappa
            )));
        }
        let (na, ns) = (p.n_a as f64, p.n_s as f64);
        let delta =
            PI * PI * ns * p.snr * p.snr / (1.0 + na * p.snr) * na * na * (na * na - 1.0) / 6.0;
        let m = Self {
            p,
            delta,
            norm: p.s * (1.0 + p.kappa),
        };
        check_scalar_prior(&m)?;
        Ok(m)
    }

    pub fn params(&self) -> DoaParams {
        self.p
    }

    /// `δ` such that `J_D(θ) = δ cos² θ`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `δ` from the unreduced sum over array elements.
    pub fn delta_from_sum(&self) -> f64 {
        let (na, ns, snr) = (self.p.n_a as f64, self.p.n_s as f64, self.p.snr);
        let c = (na - 1.0) / 2.0;
        let s2: f64 = (0..self.p.n_a).map(|n| (n as f64 - c).powi(2)).sum();
        2.0 * PI * PI * ns * na * snr * snr / (1.0 + na * snr) * s2
    }

    fn rolloff_width(&self) -> f64 {
        self.p.s * (1.0 - self.p.kappa)
    }

    pub fn steering(&self, theta: f64) -> Vec<Complex64> {
        let c = (self.p.n_a as f64 - 1.0) / 2.0;
        (0..self.p.n_a)
            .map(|n| Complex64::from_polar(1.0, PI * (n as f64 - c) * theta.sin()))
            .collect()
    }

    fn cn(rng: &mut dyn RngCore, var: f64) -> Complex64 {
        let sd = (var / 2.0).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(sd * re, sd * im)
    }

    pub fn sample_snapshots(&self, rng: &mut dyn RngCore, theta: f64) -> Vec<Vec<Complex64>> {
        let a = self.steering(theta);
        (0..self.p.n_s)
            .map(|_| {
                let alpha = Self::cn(rng, self.p.snr);
                a.iter().map(|an| an * alpha + Self::cn(rng, 1.0)).collect()
            })
            .collect()
    }

    /// Weight of the beamformer statistic in the marginal log-likelihood,
    /// `σ_α² / (σ² (σ² + N_a σ_α²))` with `σ² = 1`.
    pub fn beam_weight(&self) -> f64 {
        self.p.snr / (1.0 + self.p.n_a as f64 * self.p.snr)
    }
}

impl ScalarModel for Doa {
    type Obs = DoaObs;

    fn support(&self) -> (f64, f64) {
        (-self.p.s, self.p.s)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let e = self.p.s * self.p.kappa;
        if self.p.kappa > 0.0 && self.p.kappa < 1.0 {
            vec![-e, e]
        } else {
            Vec::new()
        }
    }

    fn prior_logpdf(&self, t: f64) -> f64 {
        let r = t.abs();
        let (s, k) = (self.p.s, self.p.kappa);
        if r >= s {
            f64::NEG_INFINITY
        } else if r <= s * k {
            -self.norm.ln()
        } else {
            // (1 + cos u)/2 = cos²(u/2), which stays accurate as u → π
            let u = PI * (r - s * k) / self.rolloff_width();
            2.0 * (0.5 * u).cos().ln() - self.norm.ln()
        }
    }

    fn prior_logpdf_deriv(&self, t: f64) -> Option<f64> {
        let r = t.abs();
        let (s, k) = (self.p.s, self.p.kappa);
        if r <= s * k {
            return Some(0.0);
        }
        let w = self.rolloff_width();
        let u = PI * (r - s * k) / w;
        Some(-(PI / w) * (0.5 * u).tan() * t.signum())
    }

    fn cond_fim(&self, t: f64) -> f64 {
        self.delta * t.cos().powi(2)
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> f64 {
        let (s, k) = (self.p.s, self.p.kappa);
        let w = self.rolloff_width();
        let flat_mass = 2.0 * s * k / self.norm;
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        if rng.random::<f64>() < flat_mass {
            return sign * s * k * rng.random::<f64>();
        }
        // roll-off offset has density ∝ 1 + cos(π t / w) on [0, w]
        loop {
            let t = w * rng.random::<f64>();
            if 2.0 * rng.random::<f64>() < 1.0 + (PI * t / w).cos() {
                return sign * (s * k + t);
            }
        }
    }

    fn sample_cond(&self, rng: &mut dyn RngCore, t: f64) -> DoaObs {
        DoaObs::from_snapshots(&self.sample_snapshots(rng, t))
    }

    /// Marginal log-density of the snapshots with the source amplitudes
    /// integrated out. By the matrix inversion lemma only the beamformer
    /// statistic depends on `θ`.
    fn cond_loglik(&self, x: &DoaObs, t: f64) -> f64 {
        let (na, ns) = (self.p.n_a as f64, x.n_s as f64);
        let log_det = (1.0 + na * self.p.snr).ln();
        -ns * (na * PI.ln() + log_det) - x.energy() + self.beam_weight() * x.beam_power(t)
    }

    fn n_obs(&self) -> usize {
        self.p.n_s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{l_p_scalar, prior_mass, prior_pdf, score_check};
    use crate::numerics::QuadratureSpec;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn delta_reduced_form_matches_sum() {
        for db in [-10.0, 0.0, 10.0] {
            let m = Doa::new(DoaParams::preset(db)).unwrap();
            assert!((m.delta() / m.delta_from_sum() - 1.0).abs() < 1e-13);
        }
        let m = Doa::new(DoaParams::preset(10.0)).unwrap();
        let want = PI * PI * 128.0 * 100.0 / 321.0 * 1024.0 * 1023.0 / 6.0;
        assert!((m.delta() / want - 1.0).abs() < 1e-14);
        assert_eq!(m.cond_fim(0.0), m.delta());
        assert!(m.cond_fim(0.5) > m.cond_fim(1.0));
    }

    #[test]
    fn prior_is_normalized_continuous_and_vanishes_at_edges() {
        let m = Doa::new(DoaParams::preset(0.0)).unwrap();
        let mass = prior_mass(&m, &QuadratureSpec::default()).unwrap();
        assert!((mass - 1.0).abs() < 1e-8, "{mass}");
        let e = m.p.s * m.p.kappa;
        for sgn in [-1.0, 1.0] {
            let (l, r) = (
                prior_pdf(&m, sgn * (e - 1e-12)),
                prior_pdf(&m, sgn * (e + 1e-12)),
            );
            assert!((l - r).abs() < 1e-9);
            assert_eq!(prior_pdf(&m, sgn * m.p.s), 0.0);
            assert!(prior_pdf(&m, sgn * (m.p.s - 1e-9)) < 1e-12);
        }
        assert_eq!(l_p_scalar(&m, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn beam_power_matches_direct_sum() {
        let m = Doa::new(DoaParams {
            n_a: 6,
            n_s: 5,
            ..DoaParams::preset(3.0)
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let snaps = m.sample_snapshots(&mut rng, 0.4);
        let obs = DoaObs::from_snapshots(&snaps);
        for t in [-1.2, -0.1, 0.4, 0.9] {
            let a = m.steering(t);
            let direct: f64 = snaps
                .iter()
                .map(|x| {
                    a.iter()
                        .zip(x)
                        .map(|(an, xn)| an.conj() * xn)
                        .sum::<Complex64>()
                        .norm_sqr()
                })
                .sum();
            assert!((obs.beam_power(t) - direct).abs() < 1e-10 * direct.max(1.0));
        }
    }

    /// Dense complex Gaussian log-density with covariance `σ_α² a aᴴ + I`.
    fn dense_loglik(m: &Doa, snaps: &[Vec<Complex64>], t: f64) -> f64 {
        let n = m.p.n_a;
        let a = DVector::from_vec(m.steering(t));
        let r =
            DMatrix::<Complex64>::identity(n, n) + &a * a.adjoint() * Complex64::new(m.p.snr, 0.0);
        let chol = r.clone().cholesky().unwrap();
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
        snaps
            .iter()
            .map(|x| {
                let x = DVector::from_vec(x.clone());
                let q = (x.adjoint() * chol.solve(&x))[(0, 0)].re;
                -(n as f64) * PI.ln() - log_det - q
            })
            .sum()
    }

    #[test]
    fn marginal_loglik_matches_dense_density() {
        let m = Doa::new(DoaParams {
            n_a: 8,
            n_s: 4,
            ..DoaParams::preset(5.0)
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let t0 = m.sample_prior(&mut rng);
            let snaps = m.sample_snapshots(&mut rng, t0);
            let obs = DoaObs::from_snapshots(&snaps);
            let t = m.sample_prior(&mut rng);
            let want = dense_loglik(&m, &snaps, t);
            assert!((m.cond_loglik(&obs, t) - want).abs() < 1e-8, "{want}");
        }
    }

    #[test]
    fn fisher_identity_at_five_angles() {
        let m = Doa::new(DoaParams {
            n_s: 16,
            ..DoaParams::preset(0.0)
        })
        .unwrap();
        for t in [-1.2, -0.5, 0.0, 0.4, 1.1] {
            let c = score_check(&m, t, 10_000, 4).unwrap();
            let jd = m.cond_fim(t);
            assert!(
                (c.mean_sq_score / jd - 1.0).abs() < 0.05,
                "{t}: {} vs {jd}",
                c.mean_sq_score
            );
            assert!(c.mean_score.abs() < 3.0 * c.se_score);
        }
    }

    #[test]
    fn prior_samples_cover_both_regions() {
        let m = Doa::new(DoaParams::preset(0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<f64> = (0..20_000).map(|_| m.sample_prior(&mut rng)).collect();
        assert!(xs.iter().all(|x| x.abs() < m.p.s));
        let roll =
            xs.iter().filter(|x| x.abs() > m.p.s * m.p.kappa).count() as f64 / xs.len() as f64;
        let want = m.rolloff_width() / m.norm;
        assert!((roll - want).abs() < 4.0 * (want / xs.len() as f64).sqrt());
    }
}
