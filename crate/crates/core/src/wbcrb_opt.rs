//! Optimal weighting on a uniform grid.
//!
//! On grid points `θ_1..θ_L` with spacing `Δ`, the weighted-bound denominator
//! becomes the quadratic form `Q(w) = wᵀ(ZF + Φ̄)w` where `f = Δ·f_θ(θ_i)`,
//! `F = diag(f)`, `Z = diag(J_DP(θ_i))`, `D` is the backward difference and
//! `Φ̄ = −(FDD + (FDD)ᵀ + DᵀFD)`. Minimizing `Q` subject to `fᵀw = 1` gives
//! `w = A⁻¹f / (fᵀA⁻¹f)` with `A = ZF + Φ̄`, and the bound `fᵀA⁻¹f`.
//!
//! `A` is frequently indefinite: `DD` is a second difference centred one cell
//! behind the row it sits in, which flips its sign on the alternating mode.
//! The stationary point is still computed (by LU) and the smallest eigenvalue
//! of `A` is reported alongside it.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{j_dp_scalar, prior_pdf, ScalarModel};
use crate::numerics::{inv_spd, min_eig_sym, solve, symmetrize};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub points: Vec<f64>,
    pub delta: f64,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Cell midpoints of `L = ⌊width/Δ⌋` cells centred in the open support; at least three cells are required.
pub fn build_grid<M: ScalarModel + ?Sized>(m: &M, delta: f64) -> Result<Grid> {
    let (lo, hi) = m.support();
    let width = hi - lo;
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::SpacingTooCoarse { delta, width });
    }
    // the small slack keeps Δ = width/k from losing a cell to rounding
    let l = (width / delta + 1e-9).floor() as usize;
    if l < 3 {
        return Err(Error::SpacingTooCoarse { delta, width });
    }
    let start = lo + 0.5 * (width - l as f64 * delta) + 0.5 * delta;
    let points = (0..l).map(|i| start + i as f64 * delta).collect();
    Ok(Grid { points, delta })
}

#[derive(Debug, Clone)]
pub struct GridOperators {
    pub f: DVector<f64>,
    /// Diagonal of `Z`.
    pub z: DVector<f64>,
    pub d: DMatrix<f64>,
    pub phi_bar: DMatrix<f64>,
}

impl GridOperators {
    /// `(ZF + Φ̄)`, symmetrized.
    pub fn system(&self) -> DMatrix<f64> {
        let zf = DMatrix::from_diagonal(&self.z.component_mul(&self.f));
        symmetrize(&(zf + &self.phi_bar))
    }

    /// `Q(w) = wᵀ(ZF + Φ̄)w`.
    pub fn quadratic(&self, w: &DVector<f64>) -> f64 {
        w.dot(&(self.system() * w))
    }
}

/// Lower-bidiagonal backward difference: `1/Δ` on the diagonal, `−1/Δ` below it.
pub fn difference_matrix(l: usize, delta: f64) -> DMatrix<f64> {
    DMatrix::from_fn(l, l, |i, j| {
        if i == j {
            1.0 / delta
        } else if i == j + 1 {
            -1.0 / delta
        } else {
            0.0
        }
    })
}

pub fn build_operators<M: ScalarModel + ?Sized>(m: &M, g: &Grid) -> Result<GridOperators> {
    let l = g.len();
    if l < 3 {
        return Err(Error::SpacingTooCoarse {
            delta: g.delta,
            width: l as f64 * g.delta,
        });
    }
    let f = DVector::from_iterator(l, g.points.iter().map(|&t| g.delta * prior_pdf(m, t)));
    let z = DVector::from_iterator(
        l,
        g.points
            .iter()
            .map(|&t| j_dp_scalar(m, t))
            .collect::<Result<Vec<_>>>()?,
    );
    let d = difference_matrix(l, g.delta);
    let fm = DMatrix::from_diagonal(&f);
    let fdd = &fm * &d * &d;
    let phi_bar = -(&fdd + fdd.transpose() + d.transpose() * &fm * &d);
    Ok(GridOperators { f, z, d, phi_bar })
}

#[derive(Debug, Clone, Serialize)]
pub struct GridDiagnostics {
    pub points: usize,
    pub delta: f64,
    /// Smallest eigenvalue of `ZF + Φ̄`.
    pub min_eig: f64,
    pub definite: bool,
    /// `Σ f_i`, the Riemann mass of the prior on the grid.
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct OptimalWeight {
    pub w: DVector<f64>,
    /// `fᵀ(ZF + Φ̄)⁻¹f`.
    pub bound: f64,
    pub diagnostics: GridDiagnostics,
}

pub fn optimal_weight(ops: &GridOperators) -> Result<OptimalWeight> {
    let a = ops.system();
    let u = solve(&a, &ops.f)?;
    let bound = ops.f.dot(&u);
    if !(bound > 0.0) {
        return Err(Error::NonPositiveDenominator(bound));
    }
    let min_eig = min_eig_sym(&a)?;
    Ok(OptimalWeight {
        w: u / bound,
        bound,
        diagnostics: GridDiagnostics {
            points: ops.f.len(),
            delta: 1.0 / ops.d[(0, 0)],
            min_eig,
            definite: min_eig > 0.0,
            mass: ops.f.sum(),
        },
    })
}

pub fn wbcrb_opt(ops: &GridOperators) -> Result<f64> {
    Ok(optimal_weight(ops)?.bound)
}

/// Smallest eigenvalue of `(I + Ψ)⁻¹ − (I − Ψ)` for symmetric `Ψ` with `I + Ψ ≻ 0`.
/// It is never negative.
pub fn inverse_gap_min_eig(psi: &DMatrix<f64>) -> Result<f64> {
    let n = psi.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let inv = inv_spd(&(&eye + psi))?;
    min_eig_sym(&symmetrize(&(inv - (eye - psi))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds_scalar::{at_bcrb, ecrb, inverse_moments, wbcrb_sub};
    use crate::models::{UniformLocation, VarianceBeta, VarianceBetaParams};
    use crate::numerics::{QuadratureSpec, StepRule};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vb(n: usize) -> VarianceBeta {
        VarianceBeta::new(VarianceBetaParams { a: 2.1, n }).unwrap()
    }

    fn unit_flat(info: f64) -> UniformLocation {
        UniformLocation::new(0.0, 1.0, 1, 1.0 / info).unwrap()
    }

    #[test]
    fn grid_layouts() {
        let g = build_grid(&unit_flat(1.0), 0.25).unwrap();
        assert_eq!(g.points, vec![0.125, 0.375, 0.625, 0.875]);
        let g = build_grid(&vb(8), 0.02).unwrap();
        assert_eq!(g.len(), 50);
        assert!(g
            .points
            .windows(2)
            .all(|w| ((w[1] - w[0]) - 0.02).abs() < 1e-12));
        assert!(g.points[0] > 0.0 && g.points[49] < 1.0);
        assert!(matches!(
            build_grid(&vb(8), 0.34),
            Err(Error::SpacingTooCoarse { .. })
        ));
        assert!(matches!(
            build_grid(&vb(8), 0.0),
            Err(Error::SpacingTooCoarse { .. })
        ));
    }

    #[test]
    fn three_point_operators() {
        let m = unit_flat(1.0);
        let g = build_grid(&m, 1.0 / 3.0).unwrap();
        let ops = build_operators(&m, &g).unwrap();
        assert_eq!(g.len(), 3);
        for i in 0..3 {
            assert!((ops.f[i] - 1.0 / 3.0).abs() < 1e-15);
        }
        let want = DMatrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, -3.0, 3.0, 0.0, 0.0, -3.0, 3.0]);
        assert!((&ops.d - want).amax() < 1e-12);
        assert_eq!(ops.phi_bar, ops.phi_bar.transpose());
    }

    #[test]
    fn discrete_second_difference_of_a_quadratic() {
        let m = vb(8);
        let g = build_grid(&m, 0.02).unwrap();
        let ops = build_operators(&m, &g).unwrap();
        let w = DVector::from_iterator(g.len(), g.points.iter().map(|t| t * t));
        let ddw = &ops.d * &ops.d * w;
        for i in 2..g.len() {
            assert!((ddw[i] - 2.0).abs() < 1e-8, "{i}: {}", ddw[i]);
        }
    }

    #[test]
    fn riemann_sums_match_quadrature() {
        let m = vb(128);
        let g = build_grid(&m, 0.02).unwrap();
        let ops = build_operators(&m, &g).unwrap();
        assert!((ops.f.sum() - 1.0).abs() < 1e-3);
        let ones = DVector::from_element(g.len(), 1.0);
        let inv = ones.dot(&ops.f.component_div(&ops.z));
        let e_inv = inverse_moments(&m, &QuadratureSpec::default(), &StepRule::default())
            .unwrap()
            .e_inv;
        assert!(((inv - e_inv) / e_inv).abs() < 1e-3, "{inv} vs {e_inv}");
        // 1ᵀZf is a midpoint sum of E[J_DP], whose integrand is singular at
        // both ends; it undershoots and only creeps up under refinement
        let zf = ones.dot(&ops.z.component_mul(&ops.f));
        let exact = 1.0 / m.bcrb_closed();
        let fine = build_operators(&m, &build_grid(&m, 0.005).unwrap()).unwrap();
        let zf_fine = DVector::from_element(fine.f.len(), 1.0).dot(&fine.z.component_mul(&fine.f));
        assert!(zf < zf_fine && zf_fine < exact, "{zf} {zf_fine} {exact}");
    }

    #[test]
    fn constraint_and_value_identities() {
        for n in [8, 128, 1024] {
            let m = vb(n);
            let ops = build_operators(&m, &build_grid(&m, 0.02).unwrap()).unwrap();
            let opt = optimal_weight(&ops).unwrap();
            assert!((ops.f.dot(&opt.w) - 1.0).abs() < 1e-10);
            assert!((opt.bound * ops.quadratic(&opt.w) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn default_settings_are_indefinite() {
        let m = vb(128);
        let ops = build_operators(&m, &build_grid(&m, 0.02).unwrap()).unwrap();
        let opt = optimal_weight(&ops).unwrap();
        assert!(!opt.diagnostics.definite && opt.diagnostics.min_eig < 0.0);
        // alternating mode: Q ≈ E[J_DP] − 12/Δ²
        let alt = DVector::from_fn(ops.f.len(), |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        assert!(ops.quadratic(&alt) < 0.0);
    }

    #[test]
    fn stationarity_on_indefinite_system() {
        let m = vb(128);
        let ops = build_operators(&m, &build_grid(&m, 0.02).unwrap()).unwrap();
        let opt = optimal_weight(&ops).unwrap();
        let a = ops.system();
        let q0 = ops.quadratic(&opt.w);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let mut w = DVector::from_fn(ops.f.len(), |_, _| rng.random_range(0.1..2.0));
            w /= ops.f.dot(&w);
            let e = &w - &opt.w;
            let lhs = ops.quadratic(&w) - q0;
            let rhs = e.dot(&(&a * &e));
            assert!((lhs - rhs).abs() <= 1e-9 * (lhs.abs() + q0.abs()));
        }
    }

    #[test]
    fn optimal_against_smooth_feasible_perturbations() {
        let m = vb(128);
        let g = build_grid(&m, 0.02).unwrap();
        let ops = build_operators(&m, &g).unwrap();
        let opt = optimal_weight(&ops).unwrap();
        let q0 = ops.quadratic(&opt.w);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            // a low-order polynomial perturbation, projected onto fᵀv = 0
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut v = DVector::from_iterator(
                g.len(),
                g.points
                    .iter()
                    .map(|t| c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t),
            );
            v -= DVector::from_element(g.len(), ops.f.dot(&v) / ops.f.sum());
            let w = &opt.w + v * (0.2 * opt.w.amax());
            assert!(ops.quadratic(&w) >= q0 * (1.0 - 1e-12));
        }
    }

    #[test]
    fn random_feasible_weights_on_definite_system() {
        // J_DP ≥ N/2 must beat the ~12/Δ² alternating mode for A to be definite
        let m = vb(65_536);
        let ops = build_operators(&m, &build_grid(&m, 0.02).unwrap()).unwrap();
        let opt = optimal_weight(&ops).unwrap();
        assert!(opt.diagnostics.definite, "{}", opt.diagnostics.min_eig);
        let q0 = ops.quadratic(&opt.w);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let mut w = DVector::from_fn(ops.f.len(), |_, _| rng.random_range(0.01..1.0));
            w /= ops.f.dot(&w);
            assert!(q0 <= ops.quadratic(&w));
        }
    }

    #[test]
    fn flat_prior_constant_information() {
        let c = 1e6;
        let m = unit_flat(c);
        let g = build_grid(&m, 0.01).unwrap();
        let ops = build_operators(&m, &g).unwrap();
        let opt = optimal_weight(&ops).unwrap();
        assert!(opt.diagnostics.definite);
        assert!((ops.f.dot(&opt.w) - 1.0).abs() < 1e-10);
        let l = g.len();
        let mid = opt.w[l / 2];
        for i in l / 4..3 * l / 4 {
            assert!((opt.w[i] - mid).abs() < 1e-3 * mid, "{i}");
        }
        // uniform weight gives 1/c exactly; the optimum is at least as large
        assert!(opt.bound >= 1.0 / c * (1.0 - 1e-12));
        assert!((opt.bound * c - 1.0).abs() < 0.05, "{}", opt.bound * c);
    }

    #[test]
    fn large_sample_limit_is_the_ecrb() {
        let m = vb(4096);
        let q = QuadratureSpec::default();
        let ops = build_operators(&m, &build_grid(&m, 0.02).unwrap()).unwrap();
        let opt = wbcrb_opt(&ops).unwrap();
        let riemann = DVector::from_element(ops.f.len(), 1.0).dot(&ops.f.component_div(&ops.z));
        let e = ecrb(&m, &q).unwrap();
        assert!(((opt - e) / e).abs() < 0.02, "{opt} vs {e}");
        assert!(((riemann - e) / e).abs() < 0.02);
    }

    #[test]
    fn dominates_tight_and_suboptimal_bounds() {
        let q = QuadratureSpec::default();
        let s = StepRule::default();
        for n in [16, 32, 64, 128, 256, 512, 1024] {
            let m = vb(n);
            let opt =
                wbcrb_opt(&build_operators(&m, &build_grid(&m, 0.02).unwrap()).unwrap()).unwrap();
            let at = at_bcrb(&m, &q, &s).unwrap().bound;
            let sub = wbcrb_sub(&m, &q, &s).unwrap();
            assert!(opt >= at * (1.0 - 0.005), "{n}: {opt} {at}");
            assert!(opt >= sub * (1.0 - 0.005));
        }
    }

    #[test]
    fn refinement_stability_at_default_settings() {
        let m = vb(128);
        let coarse =
            wbcrb_opt(&build_operators(&m, &build_grid(&m, 0.02).unwrap()).unwrap()).unwrap();
        let fine =
            wbcrb_opt(&build_operators(&m, &build_grid(&m, 0.01).unwrap()).unwrap()).unwrap();
        assert!(((fine - coarse) / coarse).abs() < 0.01, "{coarse} {fine}");
    }

    #[test]
    fn reference_values() {
        let want = [(8, 2.38912e-2), (128, 3.70746e-3), (1024, 5.54872e-4)];
        for (n, v) in want {
            let m = vb(n);
            let opt =
                wbcrb_opt(&build_operators(&m, &build_grid(&m, 0.02).unwrap()).unwrap()).unwrap();
            assert!(((opt - v) / v).abs() < 1e-5, "{n}: {opt}");
        }
    }

    #[test]
    fn lemma_examples() {
        assert!(inverse_gap_min_eig(&DMatrix::zeros(3, 3)).unwrap().abs() < 1e-15);
        let psi = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.5]));
        assert!((inverse_gap_min_eig(&psi).unwrap() - 1.0 / 6.0).abs() < 1e-14);
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.5, 0.0]));
        assert!(matches!(
            inverse_gap_min_eig(&bad),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    mod props {
        use super::*;
        use nalgebra::SymmetricEigen;
        use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn lemma_on_random_spectra(seed in any::<u64>(), n in 1usize..12) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                let q = SymmetricEigen::new(&m + m.transpose()).eigenvectors;
                let lam = DVector::from_fn(n, |_, _| rng.random_range(-0.9..5.0));
                let psi = symmetrize(&(&q * DMatrix::from_diagonal(&lam) * q.transpose()));
                prop_assert!(inverse_gap_min_eig(&psi).unwrap() >= -1e-10);
            }
        }
    }
}
