//! MAP and ML estimators by grid scan plus golden-section refinement, and the
//! seeded Monte-Carlo MSE harness.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ScalarModel, VectorModel};
use crate::numerics::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Map,
    Ml,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "map" => Ok(Estimator::Map),
            "ml" => Ok(Estimator::Ml),
            other => Err(Error::BadParams(format!(
                "unknown estimator `{other}` (expected map or ml)"
            ))),
        }
    }
}

pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub trials: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// Coarse scan size. Vector models use `max(16, ⌈√grid⌉)` points per axis.
    pub grid: usize,
    /// Maximum coordinate sweeps for vector refinement.
    pub refine: usize,
    /// Fraction of the support width trimmed from each end before searching.
    pub clip: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            trials: 5000,
            seed: 7,
            estimator: Estimator::Map,
            grid: 512,
            refine: 20,
            clip: 1e-10,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < MIN_TRIALS {
            return Err(Error::BadParams(format!(
                "trials must be at least {MIN_TRIALS}, got {}",
                self.trials
            )));
        }
        if self.grid < 3 {
            return Err(Error::BadParams(format!(
                "search grid needs at least 3 points, got {}",
                self.grid
            )));
        }
        if self.refine == 0 {
            return Err(Error::BadParams("refine must be at least 1".into()));
        }
        if !(self.clip >= 0.0 && self.clip < 0.25) {
            return Err(Error::BadParams(format!(
                "clip must lie in [0, 0.25), got {}",
                self.clip
            )));
        }
        Ok(())
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
pub const SEARCH_TOL: f64 = 1e-6;

fn finite_or_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Golden-section maximization of a unimodal-on-`[a, b]` function down to width `tol`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (finite_or_neg_inf(f(c)), finite_or_neg_inf(f(d)));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = finite_or_neg_inf(f(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = finite_or_neg_inf(f(d));
        }
    }
    0.5 * (a + b)
}

/// Scan `n` equispaced points of `[lo, hi]`, then refine between the
/// neighbours of the best one. Returns a point inside `[lo, hi]`.
pub fn maximize_scalar<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> Result<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    let mut best = None;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..n {
        let t = lo + i as f64 * step;
        let v = f(t);
        if v.is_finite() && v > best_v {
            best_v = v;
            best = Some(i);
        }
    }
    let i = best.ok_or(Error::DegenerateObjective)?;
    let a = lo + i.saturating_sub(1) as f64 * step;
    let b = (lo + (i + 1).min(n - 1) as f64 * step).min(hi);
    let t = golden_max(&f, a, b, (hi - lo) * SEARCH_TOL);
    // keep the grid winner unless refinement actually improved on it
    let winner = lo + i as f64 * step;
    let out = if finite_or_neg_inf(f(t)) >= best_v {
        t
    } else {
        winner
    };
    Ok(out.clamp(lo, hi))
}

fn clipped(lo: f64, hi: f64, clip: f64) -> (f64, f64) {
    let w = hi - lo;
    (lo + clip * w, hi - clip * w)
}

/// Maximizer of `cond_loglik + prior_logpdf` (MAP) or `cond_loglik` (ML) over the clipped support.
pub fn estimate_scalar<M: ScalarModel + ?Sized>(
    m: &M,
    x: &M::Obs,
    est: Estimator,
    cfg: &McConfig,
) -> Result<f64> {
    let (lo, hi) = m.support();
    let (a, b) = clipped(lo, hi, cfg.clip);
    match est {
        Estimator::Map => {
            maximize_scalar(|t| m.cond_loglik(x, t) + m.prior_logpdf(t), a, b, cfg.grid)
        }
        Estimator::Ml => maximize_scalar(|t| m.cond_loglik(x, t), a, b, cfg.grid),
    }
}

pub fn map_estimate<M: ScalarModel + ?Sized>(m: &M, x: &M::Obs, cfg: &McConfig) -> Result<f64> {
    estimate_scalar(m, x, Estimator::Map, cfg)
}

pub fn ml_estimate<M: ScalarModel + ?Sized>(m: &M, x: &M::Obs, cfg: &McConfig) -> Result<f64> {
    estimate_scalar(m, x, Estimator::Ml, cfg)
}

/// Vector analogue: tensor-grid scan, then coordinate-wise golden sections
/// of one scan cell on each side, repeated until no coordinate moves more
/// than `width·1e-6` or `cfg.refine` sweeps are spent.
pub fn estimate_vector<M: VectorModel + ?Sized>(
    m: &M,
    x: &M::Obs,
    est: Estimator,
    cfg: &McConfig,
) -> Result<DVector<f64>> {
    let dim = m.dim();
    let (lo, hi) = m.support();
    let (a, b): (Vec<f64>, Vec<f64>) = (0..dim).map(|i| clipped(lo[i], hi[i], cfg.clip)).unzip();
    let per_axis = ((cfg.grid as f64).sqrt().ceil() as usize).max(16);
    let steps: Vec<f64> = (0..dim)
        .map(|i| (b[i] - a[i]) / (per_axis - 1) as f64)
        .collect();
    let obj = |t: &DVector<f64>| {
        let v = m.cond_loglik(x, t)
            + match est {
                Estimator::Map => m.prior_logpdf(t),
                Estimator::Ml => 0.0,
            };
        finite_or_neg_inf(v)
    };

    let total = per_axis.pow(dim as u32);
    let mut best = None;
    let mut best_v = f64::NEG_INFINITY;
    let mut t = DVector::zeros(dim);
    for flat in 0..total {
        let mut rem = flat;
        for i in 0..dim {
            t[i] = a[i] + (rem % per_axis) as f64 * steps[i];
            rem /= per_axis;
        }
        let v = obj(&t);
        if v.is_finite() && v > best_v {
            best_v = v;
            best = Some(t.clone());
        }
    }
    let mut cur = best.ok_or(Error::DegenerateObjective)?;
    for _ in 0..cfg.refine {
        let mut moved: f64 = 0.0;
        for i in 0..dim {
            let tol = (hi[i] - lo[i]) * SEARCH_TOL;
            let (ca, cb) = ((cur[i] - steps[i]).max(a[i]), (cur[i] + steps[i]).min(b[i]));
            let mut probe = cur.clone();
            let line = |s: f64| {
                let mut p = probe.clone();
                p[i] = s;
                obj(&p)
            };
            let s = golden_max(line, ca, cb, tol);
            probe[i] = s;
            let v = obj(&probe);
            if v >= best_v {
                moved = moved.max((s - cur[i]).abs() / (hi[i] - lo[i]));
                best_v = v;
                cur = probe;
            }
        }
        if moved <= SEARCH_TOL {
            break;
        }
    }
    Ok(cur)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McResult {
    pub mse: f64,
    pub rmse: f64,
    /// Jackknife standard error of `mse` (for a sample mean it equals `s/√n`).
    pub se: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McMatrixResult {
    /// Empirical `E[e eᵀ]`.
    pub mse: DMatrix<f64>,
    /// Square roots of the diagonal of `mse`.
    pub rmse: DVector<f64>,
    /// Entrywise jackknife standard errors.
    pub se: DMatrix<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// Generator for trial `index`: the master seed picks the key, the index picks the stream.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Mean and its jackknife standard error, both through pairwise sums.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn gather<T: Send>(trials: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let out: Vec<Result<T>> = (0..trials).into_par_iter().map(&f).collect();
    out.into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Trial {
                index: index as u64,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Monte-Carlo MSE for an arbitrary estimator `est(x, θ_true)`. The true value
/// is passed so oracles can be expressed; real estimators ignore it.
pub fn monte_carlo_mse_with<M, E>(m: &M, trials: usize, seed: u64, est: E) -> Result<McResult>
where
    M: ScalarModel + ?Sized,
    E: Fn(&M::Obs, f64) -> Result<f64> + Sync,
{
    if trials < 2 {
        return Err(Error::BadParams("need at least 2 trials".into()));
    }
    let sq = gather(trials, |i| {
        let mut rng = trial_rng(seed, i);
        let theta = m.sample_prior(&mut rng);
        let x = m.sample_cond(&mut rng, theta);
        let e = est(&x, theta)? - theta;
        Ok(e * e)
    })?;
    let (mse, se) = mean_and_se(&sq);
    Ok(McResult {
        mse,
        rmse: mse.sqrt(),
        se,
        trials,
        seed,
    })
}

pub fn monte_carlo_mse<M: ScalarModel + ?Sized>(m: &M, cfg: &McConfig) -> Result<McResult> {
    cfg.validate()?;
    monte_carlo_mse_with(m, cfg.trials, cfg.seed, |x, _| {
        estimate_scalar(m, x, cfg.estimator, cfg)
    })
}

pub fn monte_carlo_mse_vector_with<M, E>(
    m: &M,
    trials: usize,
    seed: u64,
    est: E,
) -> Result<McMatrixResult>
where
    M: VectorModel + ?Sized,
    E: Fn(&M::Obs, &DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    if trials < 2 {
        return Err(Error::BadParams("need at least 2 trials".into()));
    }
    let dim = m.dim();
    let errs = gather(trials, |i| {
        let mut rng = trial_rng(seed, i);
        let theta = m.sample_prior(&mut rng);
        let x = m.sample_cond(&mut rng, &theta);
        Ok(est(&x, &theta)? - theta)
    })?;
    let mut mse = DMatrix::zeros(dim, dim);
    let mut se = DMatrix::zeros(dim, dim);
    for r in 0..dim {
        for c in r..dim {
            let prods: Vec<f64> = errs.iter().map(|e| e[r] * e[c]).collect();
            let (mu, s) = mean_and_se(&prods);
            mse[(r, c)] = mu;
            mse[(c, r)] = mu;
            se[(r, c)] = s;
            se[(c, r)] = s;
        }
    }
    Ok(McMatrixResult {
        rmse: mse.diagonal().map(f64::sqrt),
        mse,
        se,
        trials,
        seed,
    })
}

pub fn monte_carlo_mse_vector<M: VectorModel + ?Sized>(
    m: &M,
    cfg: &McConfig,
) -> Result<McMatrixResult> {
    cfg.validate()?;
    monte_carlo_mse_vector_with(m, cfg.trials, cfg.seed, |x, _| {
        estimate_vector(m, x, cfg.estimator, cfg)
    })
}
