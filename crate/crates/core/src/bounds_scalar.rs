//! Bounds for scalar parameters.
//!
//! With `g = J_DP⁻¹` and the correction ratio
//! `ρ = E[(g')² − (g²)''] / E[g]`, the tight bound is `E[g]/(1+ρ)` and the
//! suboptimal weighted bound is `E[g](1−ρ)`. Derivatives of `g` and `g²` are
//! central differences of those functions directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    check_regularity, expectation, expectations, j_dp_scalar, RegularityReport, ScalarModel,
};
use crate::numerics::{QuadratureSpec, StepRule};
use crate::wbcrb_opt::{build_grid, build_operators, optimal_weight, GridDiagnostics};

/// Relative change under panel doubling above which a result is not trusted.
pub const CONVERGENCE_LIMIT: f64 = 1e-3;

/// `E[J_DP(θ)]`.
pub fn expected_information<M: ScalarModel + ?Sized>(m: &M, q: &QuadratureSpec) -> Result<f64> {
    expectation(m, q, |t| j_dp_scalar(m, t))
}

/// `1 / E[J_DP]`.
pub fn bcrb<M: ScalarModel + ?Sized>(m: &M, q: &QuadratureSpec) -> Result<f64> {
    let j = expected_information(m, q)?;
    if j > 0.0 {
        Ok(1.0 / j)
    } else {
        Err(Error::NonPositiveInformation {
            theta: f64::NAN,
            value: j,
        })
    }
}

/// `E[J_D⁻¹]`.
pub fn ecrb<M: ScalarModel + ?Sized>(m: &M, q: &QuadratureSpec) -> Result<f64> {
    expectation(m, q, |t| {
        let jd = m.cond_fim(t);
        if jd > 0.0 {
            Ok(1.0 / jd)
        } else {
            Err(Error::NonPositiveInformation {
                theta: t,
                value: jd,
            })
        }
    })
}

fn check_weight<M, W, D1, D2>(m: &M, w: &W, dw: &D1, d2w: &D2) -> Result<()>
where
    M: ScalarModel + ?Sized,
    W: Fn(f64) -> f64,
    D1: Fn(f64) -> f64,
    D2: Fn(f64) -> f64,
{
    let (lo, hi) = m.support();
    let width = hi - lo;
    let rule = StepRule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xd1ff);
    for _ in 0..8 {
        let t = lo + width * rng.random_range(0.05..0.95);
        let wt = w(t);
        if !(wt > 0.0) {
            return Err(Error::BadParams(format!(
                "weight must be positive, w({t}) = {wt}"
            )));
        }
        let h = rule.step(t, lo, hi);
        let fd1 = (w(t + h) - w(t - h)) / (2.0 * h);
        let fd2 = (dw(t + h) - dw(t - h)) / (2.0 * h);
        let (a1, a2) = (dw(t), d2w(t));
        if (fd1 - a1).abs() > 1e-3 * a1.abs().max(fd1.abs()) + 1e-9 * wt / width {
            return Err(Error::DerivativeMismatch {
                theta: t,
                which: "first",
            });
        }
        if (fd2 - a2).abs() > 1e-3 * a2.abs().max(fd2.abs()) + 1e-9 * wt / (width * width) {
            return Err(Error::DerivativeMismatch {
                theta: t,
                which: "second",
            });
        }
    }
    Ok(())
}

/// Weighted bound for a positive weight with analytic derivatives:
/// `E²[w] / (E[w² J_DP] − E[(w')² + 2 w w''])`.
pub fn wbcrb_given_weight<M, W, D1, D2>(
    m: &M,
    w: W,
    dw: D1,
    d2w: D2,
    q: &QuadratureSpec,
) -> Result<f64>
where
    M: ScalarModel + ?Sized,
    W: Fn(f64) -> f64,
    D1: Fn(f64) -> f64,
    D2: Fn(f64) -> f64,
{
    check_weight(m, &w, &dw, &d2w)?;
    let e = expectations(m, q, 3, |t, out| {
        let (wt, d1, d2) = (w(t), dw(t), d2w(t));
        out[0] = wt;
        out[1] = wt * wt * j_dp_scalar(m, t)?;
        out[2] = d1 * d1 + 2.0 * wt * d2;
        Ok(())
    })?;
    let den = e[1] - e[2];
    if !(den > 0.0) {
        return Err(Error::NonPositiveDenominator(den));
    }
    Ok(e[0] * e[0] / den)
}

/// Moments shared by the tight and suboptimal bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseMoments {
    /// `E[J_DP⁻¹]`.
    pub e_inv: f64,
    /// `E[((J_DP⁻¹)')² − (J_DP⁻²)'']`.
    pub correction: f64,
}

impl InverseMoments {
    pub fn rho(&self) -> f64 {
        self.correction / self.e_inv
    }
}

pub fn inverse_moments<M: ScalarModel + ?Sized>(
    m: &M,
    q: &QuadratureSpec,
    step: &StepRule,
) -> Result<InverseMoments> {
    step.validate()?;
    let (lo, hi) = m.support();
    let e = expectations(m, q, 2, |t, out| {
        let h = step.step(t, lo, hi);
        let g = 1.0 / j_dp_scalar(m, t)?;
        let gp = 1.0 / j_dp_scalar(m, t + h)?;
        let gm = 1.0 / j_dp_scalar(m, t - h)?;
        let d1 = (gp - gm) / (2.0 * h);
        let d2 = (gp * gp - 2.0 * g * g + gm * gm) / (h * h);
        out[0] = g;
        out[1] = d1 * d1 - d2;
        Ok(())
    })?;
    Ok(InverseMoments {
        e_inv: e[0],
        correction: e[1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AtBcrb {
    pub bound: f64,
    pub rho: f64,
    pub e_inv: f64,
}

fn at_from(mo: &InverseMoments) -> Result<AtBcrb> {
    let rho = mo.rho();
    if !(1.0 + rho > 0.0) {
        return Err(Error::RhoDegenerate(1.0 + rho));
    }
    Ok(AtBcrb {
        bound: mo.e_inv / (1.0 + rho),
        rho,
        e_inv: mo.e_inv,
    })
}

/// `E[J_DP⁻¹] / (1 + ρ)`.
pub fn at_bcrb<M: ScalarModel + ?Sized>(
    m: &M,
    q: &QuadratureSpec,
    step: &StepRule,
) -> Result<AtBcrb> {
    at_from(&inverse_moments(m, q, step)?)
}

/// `E[J_DP⁻¹] + E[(J_DP⁻²)'' − ((J_DP⁻¹)')²]`.
pub fn wbcrb_sub<M: ScalarModel + ?Sized>(
    m: &M,
    q: &QuadratureSpec,
    step: &StepRule,
) -> Result<f64> {
    let mo = inverse_moments(m, q, step)?;
    at_from(&mo)?;
    Ok(mo.e_inv - mo.correction)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarSettings {
    pub quad: QuadratureSpec,
    pub step: StepRule,
    /// Grid spacing for the optimized weight; `None` skips it.
    pub delta: Option<f64>,
}

impl Default for ScalarSettings {
    fn default() -> Self {
        Self {
            quad: QuadratureSpec::default(),
            step: StepRule::default(),
            delta: Some(0.02),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalarDiagnostics {
    /// Relative change of `E[J_DP]` when the panel count doubles.
    pub panel_doubling_change: f64,
    /// `ρ > 1` makes the suboptimal bound negative (valid but vacuous).
    pub sub_vacuous: bool,
    /// Boundary products for the weight `J_DP⁻¹`.
    pub regularity: RegularityReport,
    pub grid: Option<GridDiagnostics>,
}

/// The full family of scalar bounds at one configuration.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub bcrb: f64,
    pub ecrb: f64,
    pub at_bcrb: f64,
    pub rho: f64,
    pub e_j_dp_inv: f64,
    pub wbcrb_sub: f64,
    pub wbcrb_opt: Option<f64>,
    pub settings: ScalarSettings,
    pub diagnostics: ScalarDiagnostics,
}

pub fn scalar_report<M: ScalarModel + ?Sized>(m: &M, s: &ScalarSettings) -> Result<BoundReport> {
    let q = &s.quad;
    let j = expected_information(m, q)?;
    let j2 = expected_information(m, &q.with_panels(2 * q.panels))?;
    let change = ((j2 - j) / j2).abs();
    if !(change <= CONVERGENCE_LIMIT) {
        return Err(Error::NonConverged {
            rel_change: change,
            limit: CONVERGENCE_LIMIT,
        });
    }
    let mo = inverse_moments(m, q, &s.step)?;
    let at = at_from(&mo)?;
    let sub = mo.e_inv - mo.correction;
    let regularity = check_regularity(
        m,
        |t| j_dp_scalar(m, t).map_or(f64::NAN, |v| 1.0 / v),
        q.clip,
    );
    let (opt, grid) = match s.delta {
        Some(delta) => {
            let ops = build_operators(m, &build_grid(m, delta)?)?;
            let w = optimal_weight(&ops)?;
            (Some(w.bound), Some(w.diagnostics))
        }
        None => (None, None),
    };
    Ok(BoundReport {
        n: m.n_obs(),
        bcrb: 1.0 / j,
        ecrb: ecrb(m, q)?,
        at_bcrb: at.bound,
        rho: at.rho,
        e_j_dp_inv: mo.e_inv,
        wbcrb_sub: sub,
        wbcrb_opt: opt,
        settings: *s,
        diagnostics: ScalarDiagnostics {
            panel_doubling_change: change,
            sub_vacuous: sub <= 0.0,
            regularity,
            grid,
        },
    })
}
