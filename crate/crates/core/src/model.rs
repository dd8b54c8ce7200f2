//! Model interface and the quantities derived from it.
//!
//! A model supplies its prior, its conditional Fisher information `J_D` in
//! closed form, and samplers for simulation. Everything else (the prior term
//! `L_P`, the joint information `J_DP = J_D + L_P`, regularity diagnostics) is
//! derived here.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{
    integrate_pieces_multi, min_eig_sym, pairwise_sum, QuadratureSpec, StepRule,
};

/// Scalar-parameter Bayesian estimation problem.
pub trait ScalarModel: Sync {
    /// Observation record (usually reduced to sufficient statistics).
    type Obs: Send + Sync;

    /// Open support `(lo, hi)` of the prior.
    fn support(&self) -> (f64, f64);

    /// Interior points where the prior is only piecewise smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn prior_logpdf(&self, theta: f64) -> f64;

    /// Analytic derivative of the log prior, if the model has one.
    fn prior_logpdf_deriv(&self, _theta: f64) -> Option<f64> {
        None
    }

    /// Conditional Fisher information `J_D(θ)`.
    fn cond_fim(&self, theta: f64) -> f64;

    fn sample_prior(&self, rng: &mut dyn RngCore) -> f64;

    fn sample_cond(&self, rng: &mut dyn RngCore, theta: f64) -> Self::Obs;

    fn cond_loglik(&self, x: &Self::Obs, theta: f64) -> f64;

    fn n_obs(&self) -> usize;
}

/// Vector-parameter model on a box.
pub trait VectorModel: Sync {
    type Obs: Send + Sync;

    fn dim(&self) -> usize;

    /// Box `(lo, hi)`; the prior is assumed negligible outside it.
    fn support(&self) -> (DVector<f64>, DVector<f64>);

    fn prior_logpdf(&self, theta: &DVector<f64>) -> f64;

    /// Gradient of the log prior.
    fn prior_grad(&self, theta: &DVector<f64>) -> DVector<f64>;

    fn cond_fim(&self, theta: &DVector<f64>) -> DMatrix<f64>;

    fn sample_prior(&self, rng: &mut dyn RngCore) -> DVector<f64>;

    fn sample_cond(&self, rng: &mut dyn RngCore, theta: &DVector<f64>) -> Self::Obs;

    fn cond_loglik(&self, x: &Self::Obs, theta: &DVector<f64>) -> f64;

    fn n_obs(&self) -> usize;
}

fn in_support<M: ScalarModel + ?Sized>(m: &M, theta: f64) -> Result<()> {
    let (lo, hi) = m.support();
    if theta > lo && theta < hi {
        Ok(())
    } else {
        Err(Error::OutOfSupport { theta, lo, hi })
    }
}

pub fn prior_pdf<M: ScalarModel + ?Sized>(m: &M, theta: f64) -> f64 {
    m.prior_logpdf(theta).exp()
}

/// Derivative of the log prior; analytic when available, otherwise a central difference.
pub fn prior_score<M: ScalarModel + ?Sized>(m: &M, theta: f64) -> f64 {
    if let Some(d) = m.prior_logpdf_deriv(theta) {
        return d;
    }
    let (lo, hi) = m.support();
    let h = StepRule::default().step(theta, lo, hi);
    (m.prior_logpdf(theta + h) - m.prior_logpdf(theta - h)) / (2.0 * h)
}

/// `L_P(θ)`, the squared derivative of the log prior.
pub fn l_p_scalar<M: ScalarModel + ?Sized>(m: &M, theta: f64) -> Result<f64> {
    in_support(m, theta)?;
    let s = prior_score(m, theta);
    Ok(s * s)
}

/// `J_DP(θ) = J_D(θ) + L_P(θ)`.
pub fn j_dp_scalar<M: ScalarModel + ?Sized>(m: &M, theta: f64) -> Result<f64> {
    let v = m.cond_fim(theta) + l_p_scalar(m, theta)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonPositiveInformation { theta, value: v })
    }
}

/// `[lo, breakpoints.., hi]`.
pub fn pieces<M: ScalarModel + ?Sized>(m: &M) -> Vec<f64> {
    let (lo, hi) = m.support();
    let mut b = vec![lo];
    b.extend(m.breakpoints().into_iter().filter(|x| *x > lo && *x < hi));
    b.push(hi);
    b
}

/// Prior expectations of several functions at once: `E[g_c(θ)]` for `c < dim`.
pub fn expectations<M, G>(m: &M, q: &QuadratureSpec, dim: usize, g: G) -> Result<Vec<f64>>
where
    M: ScalarModel + ?Sized,
    G: Fn(f64, &mut [f64]) -> Result<()>,
{
    integrate_pieces_multi(
        |t, out| {
            let p = prior_pdf(m, t);
            if p == 0.0 {
                out.iter_mut().for_each(|o| *o = 0.0);
                return Ok(());
            }
            g(t, out)?;
            out.iter_mut().for_each(|o| *o *= p);
            Ok(())
        },
        dim,
        &pieces(m),
        q,
    )
}

pub fn expectation<M, G>(m: &M, q: &QuadratureSpec, g: G) -> Result<f64>
where
    M: ScalarModel + ?Sized,
    G: Fn(f64) -> Result<f64>,
{
    Ok(expectations(m, q, 1, |t, out| {
        out[0] = g(t)?;
        Ok(())
    })?[0])
}

/// Quadrature of the prior density over its support.
pub fn prior_mass<M: ScalarModel + ?Sized>(m: &M, q: &QuadratureSpec) -> Result<f64> {
    expectation(m, q, |_| Ok(1.0))
}

/// Construction-time sanity checks on a scalar prior: it integrates to one
/// within 1e-4, and any analytic log-derivative agrees with finite differences
/// at 32 interior points within 1e-4 relative.
pub fn check_scalar_prior<M: ScalarModel + ?Sized>(m: &M) -> Result<()> {
    let mass = prior_mass(m, &QuadratureSpec::default())?;
    if (mass - 1.0).abs() > 1e-4 {
        return Err(Error::BadParams(format!(
            "prior integrates to {mass}, not 1"
        )));
    }
    let (lo, hi) = m.support();
    let width = hi - lo;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..32 {
        let t = lo + width * rng.random_range(0.01..0.99);
        let Some(d) = m.prior_logpdf_deriv(t) else {
            return Ok(());
        };
        let h = 1e-6 * width;
        let fd = (m.prior_logpdf(t + h) - m.prior_logpdf(t - h)) / (2.0 * h);
        if (fd - d).abs() > 1e-4 * d.abs().max(1.0) {
            return Err(Error::DerivativeMismatch {
                theta: t,
                which: "prior log-derivative",
            });
        }
    }
    Ok(())
}

/// Boundary products entering the regularity conditions of the weighted bound.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    /// Points at which the products were evaluated.
    pub at: [f64; 2],
    /// Largest `|w f|`.
    pub c1: f64,
    /// Largest `|θ w f|`.
    pub c2: f64,
    /// Largest `|(w²)' f|`.
    pub c3: f64,
    /// Largest `|w² f'|`.
    pub c4: f64,
    pub warnings: Vec<String>,
}

impl RegularityReport {
    pub fn ok(&self) -> bool {
        self.warnings.is_empty()
    }
}

pub const REGULARITY_TOL: f64 = 1e-6;

/// Evaluate the boundary products of a weight `w` against the prior at both
/// clipped ends of the support. Diagnostic only; the observation factor is
/// not included, which is exact whenever it factors out of the boundary terms.
pub fn check_regularity<M, W>(m: &M, w: W, clip: f64) -> RegularityReport
where
    M: ScalarModel + ?Sized,
    W: Fn(f64) -> f64,
{
    let (lo, hi) = m.support();
    let width = hi - lo;
    let at = [lo + clip * width, hi - clip * width];
    let (mut c1, mut c2, mut c3, mut c4) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &t in &at {
        let f = prior_pdf(m, t);
        let wt = w(t);
        let h = StepRule::default().step(t, lo, hi);
        let dw2 = (w(t + h).powi(2) - w(t - h).powi(2)) / (2.0 * h);
        let df = f * prior_score(m, t);
        c1 = c1.max((wt * f).abs());
        c2 = c2.max((t * wt * f).abs());
        c3 = c3.max((dw2 * f).abs());
        c4 = c4.max((wt * wt * df).abs());
    }
    let mut warnings = Vec::new();
    for (name, v) in [("C1", c1), ("C2", c2), ("C3", c3), ("C4", c4)] {
        if !(v <= REGULARITY_TOL) {
            warnings.push(format!(
                "{name} boundary product {v:.3e} exceeds {REGULARITY_TOL:.0e}"
            ));
        }
    }
    RegularityReport {
        at,
        c1,
        c2,
        c3,
        c4,
        warnings,
    }
}

/// Monte-Carlo summary of the conditional score at a fixed parameter.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreCheck {
    pub theta: f64,
    pub draws: usize,
    pub mean_score: f64,
    pub se_score: f64,
    /// Average squared score; estimates `J_D(θ)`.
    pub mean_sq_score: f64,
    /// Average of `-∂²/∂θ² log f(x|θ)`; also estimates `J_D(θ)`.
    pub mean_neg_hessian: f64,
}

/// Score and curvature of the conditional log-likelihood over `draws`
/// simulated observations at `theta`, by central differences.
pub fn score_check<M: ScalarModel + ?Sized>(
    m: &M,
    theta: f64,
    draws: usize,
    seed: u64,
) -> Result<ScoreCheck> {
    in_support(m, theta)?;
    let (lo, hi) = m.support();
    let h = (1e-4 * theta.abs().max(1e-2)).min((theta - lo).min(hi - theta) / 4.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(draws);
    let mut hess = Vec::with_capacity(draws);
    for _ in 0..draws {
        let x = m.sample_cond(&mut rng, theta);
        let (lp, l0, lm) = (
            m.cond_loglik(&x, theta + h),
            m.cond_loglik(&x, theta),
            m.cond_loglik(&x, theta - h),
        );
        scores.push((lp - lm) / (2.0 * h));
        hess.push(-(lp - 2.0 * l0 + lm) / (h * h));
    }
    let n = draws as f64;
    let mean_score = pairwise_sum(&scores) / n;
    let dev: Vec<f64> = scores.iter().map(|s| (s - mean_score).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    let sq: Vec<f64> = scores.iter().map(|s| s * s).collect();
    Ok(ScoreCheck {
        theta,
        draws,
        mean_score,
        se_score: (var / n).sqrt(),
        mean_sq_score: pairwise_sum(&sq) / n,
        mean_neg_hessian: pairwise_sum(&hess) / n,
    })
}

fn in_box<M: VectorModel + ?Sized>(m: &M, theta: &DVector<f64>) -> Result<()> {
    let (lo, hi) = m.support();
    if theta.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: theta.len(),
        });
    }
    for i in 0..theta.len() {
        if !(theta[i] > lo[i] && theta[i] < hi[i]) {
            return Err(Error::OutOfSupport {
                theta: theta[i],
                lo: lo[i],
                hi: hi[i],
            });
        }
    }
    Ok(())
}

/// `J_DP(θ) = J_D(θ) + g gᵀ` with `g` the gradient of the log prior.
pub fn j_dp_matrix<M: VectorModel + ?Sized>(m: &M, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    in_box(m, theta)?;
    let g = m.prior_grad(theta);
    let j = m.cond_fim(theta) + &g * g.transpose();
    // Cholesky rather than an eigenvalue test: near the edges of a box the
    // diagonal can span many decades, which an eigen-solver cannot resolve.
    if j.iter().all(|v| v.is_finite()) && j.clone().cholesky().is_some() {
        Ok(j)
    } else {
        Err(Error::NonPositiveInformation {
            theta: theta[0],
            value: min_eig_sym(&j).unwrap_or(f64::NAN),
        })
    }
}

/// Finite-difference gradient of the log prior.
pub fn prior_grad_fd<M: VectorModel + ?Sized>(
    m: &M,
    theta: &DVector<f64>,
    h: &[f64],
) -> DVector<f64> {
    DVector::from_fn(m.dim(), |i, _| {
        let mut p = theta.clone();
        let mut q = theta.clone();
        p[i] += h[i];
        q[i] -= h[i];
        (m.prior_logpdf(&p) - m.prior_logpdf(&q)) / (2.0 * h[i])
    })
}

/// The analytic gradient agrees with finite differences at 32 interior points.
pub fn check_vector_prior<M: VectorModel + ?Sized>(m: &M) -> Result<()> {
    let (lo, hi) = m.support();
    let h: Vec<f64> = (0..m.dim()).map(|i| 1e-6 * (hi[i] - lo[i])).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..32 {
        let t = DVector::from_fn(m.dim(), |i, _| {
            lo[i] + (hi[i] - lo[i]) * rng.random_range(0.01..0.99)
        });
        let g = m.prior_grad(&t);
        let fd = prior_grad_fd(m, &t, &h);
        for i in 0..m.dim() {
            if (g[i] - fd[i]).abs() > 1e-4 * g[i].abs().max(1.0) {
                return Err(Error::DerivativeMismatch {
                    theta: t[i],
                    which: "prior gradient",
                });
            }
        }
    }
    Ok(())
}

/// Views a scalar model as a one-dimensional vector model.
#[derive(Debug, Clone)]
pub struct AsVector<M>(pub M);

impl<M: ScalarModel> VectorModel for AsVector<M> {
    type Obs = M::Obs;

    fn dim(&self) -> usize {
        1
    }

    fn support(&self) -> (DVector<f64>, DVector<f64>) {
        let (lo, hi) = self.0.support();
        (DVector::from_element(1, lo), DVector::from_element(1, hi))
    }

    fn prior_logpdf(&self, theta: &DVector<f64>) -> f64 {
        self.0.prior_logpdf(theta[0])
    }

    fn prior_grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, prior_score(&self.0, theta[0]))
    }

    fn cond_fim(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.0.cond_fim(theta[0]))
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_element(1, self.0.sample_prior(rng))
    }

    fn sample_cond(&self, rng: &mut dyn RngCore, theta: &DVector<f64>) -> Self::Obs {
        self.0.sample_cond(rng, theta[0])
    }

    fn cond_loglik(&self, x: &Self::Obs, theta: &DVector<f64>) -> f64 {
        self.0.cond_loglik(x, theta[0])
    }

    fn n_obs(&self) -> usize {
        self.0.n_obs()
    }
}
