//! Quadrature, finite differences and small dense linear algebra.
//!
//! Integrals run over a clipped interval `[lo + εW, hi − εW]`. By default the
//! panels are graded towards both ends and each clipped sliver is restored by a
//! power-law tail fit, so integrable endpoint singularities such as
//! `θ^-0.9` come out right without pushing ε to zero.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Five-point Gauss-Legendre abscissae on [-1, 1].
const GL5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    CompositeSimpson,
    GaussLegendrePanels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    pub panels: usize,
    /// Fraction of the interval width removed at each end.
    pub clip: f64,
    /// Exponent of the endpoint grading map; 1 means uniform panels.
    pub grading: u32,
    /// Add a power-law estimate of the clipped slivers back in.
    pub tail: bool,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::GaussLegendrePanels,
            panels: 400,
            clip: 1e-10,
            grading: 10,
            tail: true,
        }
    }
}

impl QuadratureSpec {
    /// Per-axis defaults for tensor-product integration in two or three dimensions.
    pub fn default_box() -> Self {
        Self {
            panels: 120,
            ..Self::default()
        }
    }

    /// Uniform panels, no tail fit.
    pub fn plain(scheme: Scheme, panels: usize, clip: f64) -> Self {
        Self {
            scheme,
            panels,
            clip,
            grading: 1,
            tail: false,
        }
    }

    pub fn with_panels(self, panels: usize) -> Self {
        Self { panels, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.panels < 8 {
            return Err(Error::BadParams(format!(
                "quadrature panels must be at least 8, got {}",
                self.panels
            )));
        }
        if !(0.0..0.5).contains(&self.clip) {
            return Err(Error::BadParams(format!(
                "quadrature clip must lie in [0, 0.5), got {}",
                self.clip
            )));
        }
        if self.grading == 0 {
            return Err(Error::BadParams("quadrature grading must be >= 1".into()));
        }
        Ok(())
    }
}

/// A one-dimensional rule: weighted nodes plus optional probe points for the tail fit.
#[derive(Debug, Clone)]
pub struct Rule {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Sliver width `εW` when tail correction is on.
    sliver: Option<f64>,
}

impl Rule {
    pub fn new(lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<Rule> {
        spec.validate()?;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::BadParams(format!("invalid interval [{lo}, {hi}]")));
        }
        let width = hi - lo;
        let d = spec.clip * width;
        let (a, b) = (lo + d, hi - d);
        let inner = b - a;
        let p = spec.grading as i32;

        let (ref_x, ref_w): (&[f64], Vec<f64>) = match spec.scheme {
            Scheme::GaussLegendrePanels => (&GL5_X, GL5_W.to_vec()),
            Scheme::CompositeSimpson => (&[-1.0, 0.0, 1.0], vec![1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0]),
        };

        let mut nodes = Vec::with_capacity(spec.panels * ref_x.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        let n = spec.panels as f64;
        for k in 0..spec.panels {
            let (ul, uh) = (k as f64 / n, (k + 1) as f64 / n);
            let half = 0.5 * (uh - ul);
            let mid = 0.5 * (uh + ul);
            for (x, w) in ref_x.iter().zip(&ref_w) {
                let u = mid + half * x;
                let wu = half * w;
                let (node, jac) = if p == 1 {
                    (a + inner * u, inner)
                } else {
                    let (up, vp) = (u.powi(p), (1.0 - u).powi(p));
                    let den = up + vp;
                    let jac = inner * f64::from(p) * (u * (1.0 - u)).powi(p - 1) / (den * den);
                    let node = if u < 0.5 {
                        a + inner * up / den
                    } else {
                        b - inner * vp / den
                    };
                    (node, jac)
                };
                let weight = wu * jac;
                if weight > 0.0 {
                    nodes.push(node);
                    weights.push(weight);
                }
            }
        }
        let sliver = (spec.tail && d > 0.0).then_some(d);
        Ok(Rule {
            lo,
            hi,
            nodes,
            weights,
            sliver,
        })
    }

    /// All evaluation points: quadrature nodes first, then the four tail probes.
    pub fn points(&self) -> Vec<f64> {
        let mut pts = self.nodes.clone();
        if let Some(d) = self.sliver {
            pts.extend([
                self.lo + d,
                self.lo + 2.0 * d,
                self.hi - d,
                self.hi - 2.0 * d,
            ]);
        }
        pts
    }

    pub fn len(&self) -> usize {
        self.nodes.len() + if self.sliver.is_some() { 4 } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Combine `dim`-component values laid out point-major (`values[i * dim + c]`).
    pub fn combine(&self, values: &[f64], dim: usize) -> Result<Vec<f64>> {
        let pts = self.points();
        debug_assert_eq!(values.len(), pts.len() * dim);
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIntegrand { at: pts[i / dim] });
        }
        let mut out = vec![0.0; dim];
        let mut abs = vec![0.0; dim];
        for (i, w) in self.weights.iter().enumerate() {
            for c in 0..dim {
                out[c] += w * values[i * dim + c];
                abs[c] += (w * values[i * dim + c]).abs();
            }
        }
        if let Some(d) = self.sliver {
            let base = self.nodes.len() * dim;
            for (c, o) in out.iter_mut().enumerate() {
                let v = |j: usize| values[base + j * dim + c];
                let bulk = abs[c];
                *o += self.tail(v(0), v(1), d, bulk, "lower")?;
                *o += self.tail(v(2), v(3), d, bulk, "upper")?;
            }
        }
        Ok(out)
    }

    /// Power-law fit `f ∝ x^α` to the two probes, integrated over the sliver.
    /// A steep fit only counts as divergence when the sliver is not already
    /// negligible next to the bulk, since rounding noise has no exponent.
    fn tail(&self, f1: f64, f2: f64, d: f64, bulk: f64, side: &'static str) -> Result<f64> {
        if f1 == 0.0 {
            return Ok(0.0);
        }
        if f2 == 0.0 || f1.signum() != f2.signum() {
            return Ok(f1 * d);
        }
        let alpha = (f2 / f1).log2();
        if alpha <= -1.0 && (f1 * d).abs() <= TAIL_NOISE * bulk {
            return Ok(f1 * d);
        }
        if alpha <= -1.0 {
            return Err(Error::DivergentIntegral {
                lo: self.lo,
                hi: self.hi,
                side,
                alpha,
            });
        }
        Ok(f1 * d / (alpha + 1.0))
    }
}

/// Relative size below which a sliver contribution is treated as noise.
pub const TAIL_NOISE: f64 = 1e-8;

/// Integrate a vector-valued function; `f(x, out)` fills `out` (length `dim`).
pub fn integrate_1d_multi<F>(
    f: F,
    dim: usize,
    lo: f64,
    hi: f64,
    spec: &QuadratureSpec,
) -> Result<Vec<f64>>
where
    F: Fn(f64, &mut [f64]) -> Result<()>,
{
    let rule = Rule::new(lo, hi, spec)?;
    let pts = rule.points();
    let mut values = vec![0.0; pts.len() * dim];
    for (x, chunk) in pts.iter().zip(values.chunks_mut(dim)) {
        f(*x, chunk)?;
    }
    rule.combine(&values, dim)
}

/// Integrate over consecutive pieces `[b_0, b_1], [b_1, b_2], ...`, each with its own rule.
pub fn integrate_pieces_multi<F>(
    f: F,
    dim: usize,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<f64>>
where
    F: Fn(f64, &mut [f64]) -> Result<()>,
{
    let mut total = vec![0.0; dim];
    for w in breaks.windows(2) {
        let part = integrate_1d_multi(&f, dim, w[0], w[1], spec)?;
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    Ok(total)
}

pub fn integrate_1d<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let v = integrate_1d_multi(
        |x, out| {
            out[0] = f(x);
            Ok(())
        },
        1,
        lo,
        hi,
        spec,
    )?;
    Ok(v[0])
}

/// Tensor-product integration of a vector-valued function over a box of dimension at most 3.
///
/// The outermost axis is evaluated in parallel; partial results are gathered in
/// node order, so the value does not depend on the thread count.
pub fn integrate_box_multi<F>(
    f: F,
    dim: usize,
    lo: &[f64],
    hi: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    let m = lo.len();
    if hi.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: hi.len(),
        });
    }
    if m > 3 {
        return Err(Error::DimensionTooLarge(m));
    }
    if m == 0 {
        return Err(Error::BadParams("box must have at least one axis".into()));
    }
    let rules = lo
        .iter()
        .zip(hi)
        .map(|(&l, &h)| Rule::new(l, h, spec))
        .collect::<Result<Vec<_>>>()?;
    let outer = rules[0].points();
    let parts = outer
        .par_iter()
        .map(|&x0| {
            let mut point = vec![0.0; m];
            point[0] = x0;
            inner_axes(&f, dim, &rules, 1, &mut point)
        })
        .collect::<Result<Vec<_>>>()?;
    rules[0].combine(&parts.concat(), dim)
}

fn inner_axes<F>(
    f: &F,
    dim: usize,
    rules: &[Rule],
    axis: usize,
    point: &mut [f64],
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    if axis == rules.len() {
        let mut out = vec![0.0; dim];
        f(point, &mut out)?;
        return Ok(out);
    }
    let pts = rules[axis].points();
    let mut values = Vec::with_capacity(pts.len() * dim);
    for x in pts {
        point[axis] = x;
        values.extend(inner_axes(f, dim, rules, axis + 1, point)?);
    }
    rules[axis].combine(&values, dim)
}

pub fn integrate_box<F>(f: F, lo: &[f64], hi: &[f64], spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let v = integrate_box_multi(
        |x, out| {
            out[0] = f(x);
            Ok(())
        },
        1,
        lo,
        hi,
        spec,
    )?;
    Ok(v[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffOrder {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffSpec {
    pub h: f64,
    pub order: DiffOrder,
}

/// Central difference of the requested order.
pub fn diff_1d<F: Fn(f64) -> f64>(f: F, theta: f64, spec: &DiffSpec) -> Result<f64> {
    let h = spec.h;
    if !(h > 0.0) {
        return Err(Error::BadParams(format!(
            "difference step must be positive, got {h}"
        )));
    }
    let eval = |x: f64| {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteIntegrand { at: x })
        }
    };
    let (fp, fm) = (eval(theta + h)?, eval(theta - h)?);
    Ok(match spec.order {
        DiffOrder::First => (fp - fm) / (2.0 * h),
        DiffOrder::Second => (fp - 2.0 * eval(theta)? + fm) / (h * h),
    })
}

/// Step-size policy for the derivatives inside the bounds: `h = max(abs, rel·|θ|)`,
/// shrunk near the edge of the support so that stencils stay inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    pub abs: f64,
    pub rel: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        Self {
            abs: 1e-5,
            rel: 1e-5,
        }
    }
}

impl StepRule {
    pub fn step(&self, theta: f64, lo: f64, hi: f64) -> f64 {
        let h = self.abs.max(self.rel * theta.abs());
        let room = (theta - lo).min(hi - theta);
        h.min(room / 4.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.abs > 0.0 && self.rel >= 0.0 {
            Ok(())
        } else {
            Err(Error::BadParams(format!(
                "difference steps must be positive (abs {}, rel {})",
                self.abs, self.rel
            )))
        }
    }
}

fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn check_square(a: &DMatrix<f64>, b_len: Option<usize>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    match b_len {
        Some(n) if n != a.nrows() => Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: n,
        }),
        _ => Ok(()),
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig_sym(a: &DMatrix<f64>) -> Result<f64> {
    check_square(a, None)?;
    let scale = a.amax().max(1.0);
    let asym = max_asymmetry(a);
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let eig = symmetrize(a).symmetric_eigenvalues();
    Ok(eig.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Solve `Ax = b` for symmetric positive definite `A` by Cholesky factorization.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    check_square(a, Some(b.len()))?;
    let s = symmetrize(a);
    match s.clone().cholesky() {
        Some(ch) => Ok(ch.solve(b)),
        None => Err(Error::NotPositiveDefinite {
            min_eig: s.symmetric_eigenvalues().min(),
        }),
    }
}

/// Solve a general square system by LU with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    check_square(a, Some(b.len()))?;
    let x = a.clone().lu().solve(b).ok_or(Error::SingularSystem)?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SingularSystem)
    }
}

/// Inverse of a symmetric positive definite matrix.
pub fn inv_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(a, None)?;
    let s = symmetrize(a);
    match s.clone().cholesky() {
        Some(ch) => Ok(symmetrize(&ch.inverse())),
        None => Err(Error::NotPositiveDefinite {
            min_eig: s.symmetric_eigenvalues().min(),
        }),
    }
}

/// Sum in a fixed binary-tree order. The result depends only on the slice
/// contents, never on how the values were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}
