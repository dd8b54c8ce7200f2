//! Matrix bounds for vector parameters.
//!
//! For a weighting field `W(θ)` with row divergence `d = div W`, the weighted
//! bound is `E[W] F⁻¹ E[W]` with
//! `F = E[W J_DP W] − E[d dᵀ] − E[W (∂d/∂θ)ᵀ] − E[(∂d/∂θ) W]`,
//! where `(∂d/∂θ)_{ik} = ∂d_i/∂θ_k`. The tight bound takes `W = J_DP⁻¹`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{j_dp_matrix, VectorModel};
use crate::numerics::{
    integrate_box_multi, inv_spd, min_eig_sym, symmetrize, QuadratureSpec, StepRule,
};

/// Asymmetry of `F` (relative to its largest entry) above which a warning is raised.
pub const F_ASYMMETRY_WARN: f64 = 1e-8;

/// Row divergence `[div W]_m = Σ_n ∂W_mn/∂θ_n` by central differences with
/// per-axis steps `h`. Every stencil point must stay inside `(lo, hi)`.
pub fn divergence_w<W>(
    wfn: &W,
    theta: &DVector<f64>,
    h: &[f64],
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<DVector<f64>>
where
    W: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let m = theta.len();
    if h.len() != m || lo.len() != m || hi.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: h.len(),
        });
    }
    let mut div = DVector::zeros(m);
    for n in 0..m {
        let (mut p, mut q) = (theta.clone(), theta.clone());
        p[n] += h[n];
        q[n] -= h[n];
        for x in [p[n], q[n]] {
            if !(x > lo[n] && x < hi[n]) {
                return Err(Error::OutOfSupport {
                    theta: x,
                    lo: lo[n],
                    hi: hi[n],
                });
            }
        }
        let (wp, wq) = (wfn(&p)?, wfn(&q)?);
        for row in 0..m {
            div[row] += (wp[(row, n)] - wq[(row, n)]) / (2.0 * h[n]);
        }
    }
    Ok(div)
}

/// Per-axis steps `rel · width_i`, shrunk to an eighth of the distance to the
/// box edge so that nested stencils stay inside.
pub fn box_steps(
    theta: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    step: &StepRule,
) -> Vec<f64> {
    (0..theta.len())
        .map(|i| {
            let room = (theta[i] - lo[i]).min(hi[i] - theta[i]);
            (step.rel * (hi[i] - lo[i]))
                .max(f64::MIN_POSITIVE)
                .min(room / 8.0)
        })
        .collect()
}

fn mat_from(v: &[f64], m: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(m, m, v)
}

/// Expectations collected in one pass over the box; every block is `M×M`.
struct Moments {
    e_w: DMatrix<f64>,
    e_wjw: DMatrix<f64>,
    e_dd: DMatrix<f64>,
    e_wdd: DMatrix<f64>,
    e_j: DMatrix<f64>,
    e_jd_inv: DMatrix<f64>,
}

const BLOCKS: usize = 6;

fn moments<M, W>(model: &M, wfn: &W, q: &QuadratureSpec, step: &StepRule) -> Result<Moments>
where
    M: VectorModel + ?Sized,
    W: Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Sync,
{
    step.validate()?;
    let m = model.dim();
    let (lo, hi) = model.support();
    let mm = m * m;
    let vals = integrate_box_multi(
        |x, out| {
            let theta = DVector::from_column_slice(x);
            let p = model.prior_logpdf(&theta).exp();
            if p == 0.0 {
                out.iter_mut().for_each(|o| *o = 0.0);
                return Ok(());
            }
            let h = box_steps(&theta, &lo, &hi, step);
            let w = wfn(&theta)?;
            let j = j_dp_matrix(model, &theta)?;
            let d = divergence_w(wfn, &theta, &h, &lo, &hi)?;
            // jac[(i, k)] = ∂d_i/∂θ_k
            let mut jac = DMatrix::zeros(m, m);
            for k in 0..m {
                let (mut a, mut b) = (theta.clone(), theta.clone());
                a[k] += h[k];
                b[k] -= h[k];
                let da = divergence_w(wfn, &a, &h, &lo, &hi)?;
                let db = divergence_w(wfn, &b, &h, &lo, &hi)?;
                jac.set_column(k, &((da - db) / (2.0 * h[k])));
            }
            let jd_inv = inv_spd(&model.cond_fim(&theta))?;
            let blocks = [
                &w,
                &(&w * &j * &w),
                &(&d * d.transpose()),
                &(&w * jac.transpose()),
                &j,
                &jd_inv,
            ];
            for (b, blk) in blocks.iter().enumerate() {
                for (c, v) in blk.iter().enumerate() {
                    out[b * mm + c] = p * v;
                }
            }
            Ok(())
        },
        BLOCKS * mm,
        lo.as_slice(),
        hi.as_slice(),
        q,
    )?;
    let blk = |b: usize| mat_from(&vals[b * mm..(b + 1) * mm], m);
    Ok(Moments {
        e_w: blk(0),
        e_wjw: blk(1),
        e_dd: blk(2),
        e_wdd: blk(3),
        e_j: blk(4),
        e_jd_inv: blk(5),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightedMatrixBound {
    pub bound: DMatrix<f64>,
    pub e_w: DMatrix<f64>,
    pub f_inner: DMatrix<f64>,
    /// Largest `|F − Fᵀ|` entry relative to the largest `|F|` entry, before symmetrization.
    pub f_asymmetry: f64,
}

fn assemble(mo: &Moments) -> Result<WeightedMatrixBound> {
    let raw = &mo.e_wjw - &mo.e_dd - &mo.e_wdd - mo.e_wdd.transpose();
    let scale = raw.amax().max(f64::MIN_POSITIVE);
    let f_asymmetry = (&raw - raw.transpose()).amax() / scale;
    let f = symmetrize(&raw);
    let f_inv = inv_spd(&f)?;
    Ok(WeightedMatrixBound {
        bound: symmetrize(&(&mo.e_w * f_inv * &mo.e_w)),
        e_w: symmetrize(&mo.e_w),
        f_inner: f,
        f_asymmetry,
    })
}

/// Weighted matrix bound for a supplied weighting field.
pub fn wbcrb_matrix<M, W>(
    model: &M,
    wfn: W,
    q: &QuadratureSpec,
    step: &StepRule,
) -> Result<WeightedMatrixBound>
where
    M: VectorModel + ?Sized,
    W: Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Sync,
{
    assemble(&moments(model, &wfn, q, step)?)
}

pub fn bcrb_matrix<M: VectorModel + ?Sized>(model: &M, q: &QuadratureSpec) -> Result<DMatrix<f64>> {
    let (lo, hi) = model.support();
    let m = model.dim();
    let v = integrate_box_multi(
        |x, out| {
            let theta = DVector::from_column_slice(x);
            let p = model.prior_logpdf(&theta).exp();
            if p == 0.0 {
                out.iter_mut().for_each(|o| *o = 0.0);
                return Ok(());
            }
            let j = j_dp_matrix(model, &theta)?;
            out.iter_mut().zip(j.iter()).for_each(|(o, v)| *o = p * v);
            Ok(())
        },
        m * m,
        lo.as_slice(),
        hi.as_slice(),
        q,
    )?;
    inv_spd(&mat_from(&v, m))
}

pub fn ecrb_matrix<M: VectorModel + ?Sized>(model: &M, q: &QuadratureSpec) -> Result<DMatrix<f64>> {
    let (lo, hi) = model.support();
    let m = model.dim();
    let v = integrate_box_multi(
        |x, out| {
            let theta = DVector::from_column_slice(x);
            let p = model.prior_logpdf(&theta).exp();
            if p == 0.0 {
                out.iter_mut().for_each(|o| *o = 0.0);
                return Ok(());
            }
            let inv = inv_spd(&model.cond_fim(&theta))?;
            out.iter_mut().zip(inv.iter()).for_each(|(o, v)| *o = p * v);
            Ok(())
        },
        m * m,
        lo.as_slice(),
        hi.as_slice(),
        q,
    )?;
    Ok(symmetrize(&mat_from(&v, m)))
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixDiagnostics {
    pub f_asymmetry: f64,
    /// Smallest eigenvalue of `ecrb − bcrb`.
    pub jensen_min_eig: f64,
    /// Largest `|W f_θ|` entry over the box corners (the mixed boundary product).
    pub corner_product: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixBoundReport {
    pub bcrb: DMatrix<f64>,
    pub ecrb: DMatrix<f64>,
    pub at_bcrb: DMatrix<f64>,
    /// `E[J_DP⁻¹]`.
    pub e_j_dp_inv: DMatrix<f64>,
    pub f_inner: DMatrix<f64>,
    pub diagnostics: MatrixDiagnostics,
}

fn corner_product<M: VectorModel + ?Sized>(model: &M, clip: f64) -> f64 {
    let (lo, hi) = model.support();
    let m = model.dim();
    let mut worst: f64 = 0.0;
    for mask in 0..(1usize << m) {
        let theta = DVector::from_fn(m, |i, _| {
            let w = hi[i] - lo[i];
            if mask & (1 << i) == 0 {
                lo[i] + clip * w
            } else {
                hi[i] - clip * w
            }
        });
        let p = model.prior_logpdf(&theta).exp();
        if let Ok(j) = j_dp_matrix(model, &theta) {
            if let Ok(w) = inv_spd(&j) {
                worst = worst.max(w.amax() * p);
            }
        }
    }
    worst
}

/// Tight matrix bound with `W = J_DP⁻¹`, together with the matrix BCRB and ECRB.
pub fn at_bcrb_matrix<M: VectorModel + ?Sized>(
    model: &M,
    q: &QuadratureSpec,
    step: &StepRule,
) -> Result<MatrixBoundReport> {
    let wfn = |t: &DVector<f64>| inv_spd(&j_dp_matrix(model, t)?);
    let mo = moments(model, &wfn, q, step)?;
    let weighted = assemble(&mo)?;
    let bcrb = inv_spd(&mo.e_j)?;
    let ecrb = symmetrize(&mo.e_jd_inv);
    let jensen_min_eig = min_eig_sym(&symmetrize(&(&ecrb - &bcrb)))?;
    let corner = corner_product(model, q.clip);
    let mut warnings = Vec::new();
    if weighted.f_asymmetry > F_ASYMMETRY_WARN {
        warnings.push(format!(
            "F asymmetry {:.3e} before symmetrization",
            weighted.f_asymmetry
        ));
    }
    if corner > crate::model::REGULARITY_TOL {
        warnings.push(format!("corner boundary product {corner:.3e}"));
    }
    Ok(MatrixBoundReport {
        bcrb,
        ecrb,
        at_bcrb: weighted.bound,
        e_j_dp_inv: weighted.e_w,
        f_inner: weighted.f_inner,
        diagnostics: MatrixDiagnostics {
            f_asymmetry: weighted.f_asymmetry,
            jensen_min_eig,
            corner_product: corner,
            warnings,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds_scalar::{bcrb, wbcrb_given_weight};
    use crate::model::AsVector;
    use crate::models::{
        MeanVar, MeanVarParams, UniformLocation, VarianceBeta, VarianceBetaParams,
    };

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn wide() -> (DVector<f64>, DVector<f64>) {
        (
            DVector::from_element(2, -10.0),
            DVector::from_element(2, 10.0),
        )
    }

    #[test]
    fn divergence_examples() {
        let (lo, hi) = wide();
        let t = DVector::from_vec(vec![1.0, 2.0]);
        let h = [1e-3, 1e-3];
        let c = divergence_w(
            &|_: &DVector<f64>| Ok(DMatrix::from_element(2, 2, 3.0)),
            &t,
            &h,
            &lo,
            &hi,
        )
        .unwrap();
        assert_eq!(c, DVector::zeros(2));
        let sq = |x: &DVector<f64>| Ok(DMatrix::from_diagonal(&x.map(|v| v * v)));
        let d = divergence_w(&sq, &t, &h, &lo, &hi).unwrap();
        assert!((d[0] - 2.0).abs() < 1e-9 && (d[1] - 4.0).abs() < 1e-9);
        let err = divergence_w(&sq, &t, &[20.0, 1e-3], &lo, &hi).unwrap_err();
        assert!(matches!(err, Error::OutOfSupport { .. }));
    }

    #[test]
    fn divergence_of_inverse_information_at_symmetric_point() {
        let m = MeanVar::new(MeanVarParams::default()).unwrap();
        let (lo, hi) = m.support();
        let t = DVector::from_vec(vec![0.0, 0.5]);
        let w = |x: &DVector<f64>| inv_spd(&j_dp_matrix(&m, x)?);
        let h = box_steps(&t, &lo, &hi, &StepRule::default());
        let d = divergence_w(&w, &t, &h, &lo, &hi).unwrap();
        assert!(d[0].abs() < 1e-9);
        assert!(rel(d[1], 2.0 / 100.0) < 1e-6, "{}", d[1]);
    }

    #[test]
    fn identity_weight_gives_bcrb() {
        let m = MeanVar::new(MeanVarParams::default()).unwrap();
        let q = QuadratureSpec::default_box();
        let r = wbcrb_matrix(
            &m,
            |_: &DVector<f64>| Ok(DMatrix::identity(2, 2)),
            &q,
            &StepRule::default(),
        )
        .unwrap();
        let b = bcrb_matrix(&m, &q).unwrap();
        // E[W] is the prior mass times I, and the ±6σ box holds all but ~2e-9 of it
        let mass = r.e_w[(0, 0)];
        assert!((mass - 1.0).abs() < 1e-8);
        assert!((&r.bound - &b * (mass * mass)).amax() < 1e-12 * b.amax());
    }

    #[test]
    fn one_dimensional_box_matches_scalar_module() {
        let vb = VarianceBeta::new(VarianceBetaParams { a: 2.1, n: 64 }).unwrap();
        let q = QuadratureSpec::default();
        let step = StepRule::default();
        // w = θ² keeps every boundary term well behaved
        let scalar = wbcrb_given_weight(&vb, |t| t * t, |t| 2.0 * t, |_| 2.0, &q).unwrap();
        let v = AsVector(vb.clone());
        let mat = wbcrb_matrix(
            &v,
            |t: &DVector<f64>| Ok(DMatrix::from_element(1, 1, t[0] * t[0])),
            &q,
            &step,
        )
        .unwrap();
        assert!(
            rel(mat.bound[(0, 0)], scalar) < 1e-8,
            "{} {scalar}",
            mat.bound[(0, 0)]
        );
        assert!(rel(bcrb_matrix(&v, &q).unwrap()[(0, 0)], bcrb(&vb, &q).unwrap()) < 1e-12);
    }

    #[test]
    fn constant_information_collapses() {
        let v = AsVector(UniformLocation::new(0.0, 1.0, 25, 1.0).unwrap());
        let r = at_bcrb_matrix(&v, &QuadratureSpec::default(), &StepRule::default()).unwrap();
        for mat in [&r.bcrb, &r.ecrb, &r.at_bcrb] {
            assert!(rel(mat[(0, 0)], 0.04) < 1e-10);
        }
    }

    #[test]
    fn mean_var_report() {
        let m = MeanVar::new(MeanVarParams::default()).unwrap();
        let r = at_bcrb_matrix(&m, &QuadratureSpec::default_box(), &StepRule::default()).unwrap();
        let (bc, ec) = (m.bcrb_closed(), m.ecrb_closed());
        for i in 0..2 {
            assert!(rel(r.bcrb[(i, i)], bc[(i, i)]) < 1e-6, "{}", r.bcrb[(i, i)]);
            assert!(rel(r.ecrb[(i, i)], ec[(i, i)]) < 1e-6, "{}", r.ecrb[(i, i)]);
        }
        assert!(r.bcrb[(0, 1)].abs() < 1e-12 && r.ecrb[(0, 1)].abs() < 1e-12);
        for mat in [&r.bcrb, &r.ecrb, &r.at_bcrb, &r.f_inner] {
            assert!((mat - mat.transpose()).amax() < 1e-10);
        }
        assert!(r.diagnostics.jensen_min_eig >= -1e-9);
        // the tight bound sits between the BCRB and the ECRB here
        for i in 0..2 {
            assert!(r.bcrb[(i, i)] < r.at_bcrb[(i, i)] && r.at_bcrb[(i, i)] < r.ecrb[(i, i)]);
        }
        let again = wbcrb_matrix(
            &m,
            |t: &DVector<f64>| inv_spd(&j_dp_matrix(&m, t)?),
            &QuadratureSpec::default_box(),
            &StepRule::default(),
        )
        .unwrap();
        assert!((&again.bound - &r.at_bcrb).amax() <= 1e-12 * r.at_bcrb.amax());
    }
    #[test]
    fn matrix_jensen_and_asymptotic_approach_to_ecrb() {
        let q = QuadratureSpec::default_box();
        let mut ratios = Vec::new();
        for n in [20, 100, 500, 2000] {
            let m = MeanVar::new(MeanVarParams {
                n,
                ..MeanVarParams::default()
            })
            .unwrap();
            let r = at_bcrb_matrix(&m, &q, &StepRule::default()).unwrap();
            assert!(r.diagnostics.jensen_min_eig >= -1e-9, "{n}");
            ratios.push((&r.at_bcrb - &r.ecrb).norm() / r.ecrb.norm());
        }
        assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
        assert!(ratios[3] <= 0.05, "{ratios:?}");
    }
}
