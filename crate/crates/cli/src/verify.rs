//! Per-preset invariant suite: orderings, identities and closed-form oracles.

use bayes_bounds::bounds_scalar::{
    bcrb, inverse_moments, scalar_report, wbcrb_given_weight, ScalarSettings,
};
use bayes_bounds::bounds_vector::{at_bcrb_matrix, bcrb_matrix, wbcrb_matrix};
use bayes_bounds::model::{prior_mass, score_check, ScalarModel, VectorModel};
use bayes_bounds::models::{
    Doa, DoaParams, MeanVar, MeanVarParams, VarianceBeta, VarianceBetaParams,
};
use bayes_bounds::numerics::{min_eig_sym, symmetrize, QuadratureSpec, StepRule};
use bayes_bounds::wbcrb_opt::inverse_gap_min_eig;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Preset;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Default)]
struct Suite(Vec<Check>);

impl Suite {
    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.0.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    /// Record an evaluation error as a failed check.
    fn attempt<T>(&mut self, name: &str, r: bayes_bounds::Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.check(name, false, format!("{}: {e}", e.name()));
                None
            }
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Slack on orderings that compare the grid bound with quadrature bounds.
const GRID_BUDGET: f64 = 0.005;

fn fisher_identity<M: ScalarModel>(s: &mut Suite, label: &str, m: &M, thetas: &[f64]) {
    for (i, &t) in thetas.iter().enumerate() {
        let name = format!("{label}: Fisher identity at θ={t:.4}");
        if let Some(c) = s.attempt(&name, score_check(m, t, 10_000, 100 + i as u64)) {
            let jd = m.cond_fim(t);
            let zero_mean = c.mean_score.abs() <= 3.0 * c.se_score;
            let sq = rel(c.mean_sq_score, jd) < 0.05;
            let hess = rel(c.mean_neg_hessian, jd) < 0.05;
            s.check(
                name,
                zero_mean && sq && hess,
                format!(
                    "E[score]={:.3e}±{:.1e}, E[score²]={:.4e}, -E[∂²]={:.4e}, J_D={jd:.4e}",
                    c.mean_score, c.se_score, c.mean_sq_score, c.mean_neg_hessian
                ),
            );
        }
    }
}

fn scalar_chain<M: ScalarModel>(s: &mut Suite, label: &str, m: &M, q: &QuadratureSpec) {
    let settings = ScalarSettings {
        quad: *q,
        ..ScalarSettings::default()
    };
    let Some(r) = s.attempt(
        &format!("{label}: bound report"),
        scalar_report(m, &settings),
    ) else {
        return;
    };
    let opt = r.wbcrb_opt.unwrap_or(f64::NAN);
    s.check(
        format!("{label}: bcrb <= ecrb"),
        r.bcrb <= r.ecrb,
        format!("{:.6e} <= {:.6e}", r.bcrb, r.ecrb),
    );
    s.check(
        format!("{label}: wbcrb_sub <= at_bcrb"),
        r.wbcrb_sub <= r.at_bcrb,
        format!("{:.6e} <= {:.6e}", r.wbcrb_sub, r.at_bcrb),
    );
    s.check(
        format!("{label}: at_bcrb <= wbcrb_opt (grid budget)"),
        r.at_bcrb <= opt * (1.0 + GRID_BUDGET),
        format!("{:.6e} <= {:.6e}", r.at_bcrb, opt),
    );
    s.check(
        format!("{label}: bcrb <= wbcrb_opt (grid budget)"),
        r.bcrb <= opt * (1.0 + GRID_BUDGET),
        format!("{:.6e} <= {:.6e}", r.bcrb, opt),
    );
    s.check(
        format!("{label}: at_bcrb·(1+rho) = E[1/J_DP]"),
        rel(r.at_bcrb * (1.0 + r.rho), r.e_j_dp_inv) < 1e-10,
        format!("rho={:.6e}", r.rho),
    );
    s.check(
        format!("{label}: wbcrb_sub = E[1/J_DP](1-rho)"),
        rel(r.wbcrb_sub, r.e_j_dp_inv * (1.0 - r.rho)) < 1e-10,
        format!("{:.6e}", r.wbcrb_sub),
    );
    if let Some(w1) = s.attempt(
        &format!("{label}: unit weight"),
        wbcrb_given_weight(m, |_| 1.0, |_| 0.0, |_| 0.0, q),
    ) {
        s.check(
            format!("{label}: wbcrb(w=1) = bcrb"),
            rel(w1, r.bcrb) < 1e-10,
            format!("{w1:.10e}"),
        );
    }
    s.check(
        format!("{label}: boundary regularity for w = 1/J_DP"),
        r.diagnostics.regularity.ok(),
        r.diagnostics.regularity.warnings.join("; "),
    );
    s.check(
        format!("{label}: panel doubling"),
        r.diagnostics.panel_doubling_change <= 1e-3,
        format!("{:.2e}", r.diagnostics.panel_doubling_change),
    );
}

fn lemma(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e44a);
    let mut worst = f64::INFINITY;
    for _ in 0..200 {
        let n = rng.random_range(1..10);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = SymmetricEigen::new(&a + a.transpose()).eigenvectors;
        let lam = DVector::from_fn(n, |_, _| rng.random_range(-0.9..5.0));
        let psi = symmetrize(&(&q * DMatrix::from_diagonal(&lam) * q.transpose()));
        match inverse_gap_min_eig(&psi) {
            Ok(v) => worst = worst.min(v),
            Err(_) => worst = f64::NEG_INFINITY,
        }
    }
    s.check(
        "(I+Psi)^-1 >= I-Psi on 200 random symmetric matrices",
        worst >= -1e-10,
        format!("smallest eigenvalue {worst:.3e}"),
    );
}

fn variance_beta(s: &mut Suite) {
    let q = QuadratureSpec::default();
    for n in [8usize, 16, 32, 64, 128, 256, 512, 1024] {
        let Some(m) = s.attempt("model", VarianceBeta::new(VarianceBetaParams { a: 2.1, n }))
        else {
            return;
        };
        let label = format!("N={n}");
        scalar_chain(s, &label, &m, &q);
        if let Some(b) = s.attempt(&label, bcrb(&m, &q)) {
            s.check(
                format!("{label}: bcrb closed form"),
                rel(b, m.bcrb_closed()) < 1e-8,
                format!("{b:.8e}"),
            );
        }
        if let Some(e) = s.attempt(&label, bayes_bounds::bounds_scalar::ecrb(&m, &q)) {
            s.check(
                format!("{label}: ecrb closed form"),
                rel(e, m.ecrb_closed()) < 1e-10,
                format!("{e:.8e}"),
            );
        }
        if let Some(mo) = s.attempt(&label, inverse_moments(&m, &q, &StepRule::default())) {
            // analytic derivatives of 1/J_DP as an independent route to rho
            let analytic = s.attempt(
                &label,
                bayes_bounds::model::expectation(&m, &q, |t| {
                    let (_, dg, d2g2) = m.j_dp_inv_derivatives(t);
                    Ok(dg * dg - d2g2)
                }),
            );
            if let Some(a) = analytic {
                s.check(
                    format!("{label}: rho from analytic derivatives"),
                    rel(a / mo.e_inv, mo.rho()) < 1e-4,
                    format!("{:.6e} vs {:.6e}", a / mo.e_inv, mo.rho()),
                );
            }
        }
    }
    if let Some(m) = s.attempt(
        "model",
        VarianceBeta::new(VarianceBetaParams { a: 2.1, n: 128 }),
    ) {
        if let Some(mass) = s.attempt("prior mass", prior_mass(&m, &q)) {
            s.check(
                "prior integrates to 1",
                (mass - 1.0).abs() < 1e-8,
                format!("{mass:.12}"),
            );
        }
        fisher_identity(s, "N=128", &m, &[0.1, 0.3, 0.5, 0.7, 0.9]);
    }
    lemma(s);
}

fn doa(s: &mut Suite) {
    let q = QuadratureSpec::default();
    for db in [-10.0, -5.0, 0.0, 5.0, 10.0] {
        let Some(m) = s.attempt("model", Doa::new(DoaParams::preset(db))) else {
            return;
        };
        let label = format!("snr={db}dB");
        s.check(
            format!("{label}: delta reduced form = direct sum"),
            rel(m.delta(), m.delta_from_sum()) < 1e-12,
            format!("{:.10e}", m.delta()),
        );
        scalar_chain(s, &label, &m, &q);
    }
    if let Some(m) = s.attempt("model", Doa::new(DoaParams::preset(0.0))) {
        if let Some(mass) = s.attempt("prior mass", prior_mass(&m, &q)) {
            s.check(
                "prior integrates to 1",
                (mass - 1.0).abs() < 1e-8,
                format!("{mass:.12}"),
            );
        }
        fisher_identity(s, "snr=0dB", &m, &[-1.2, -0.6, 0.0, 0.5, 1.1]);
    }
}

fn mean_var(s: &mut Suite) {
    let q = QuadratureSpec::default_box();
    let Some(m) = s.attempt("model", MeanVar::new(MeanVarParams::default())) else {
        return;
    };
    let Some(r) = s.attempt(
        "matrix report",
        at_bcrb_matrix(&m, &q, &StepRule::default()),
    ) else {
        return;
    };
    let entrywise = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        let scale = b.amax();
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| {
                if *y == 0.0 {
                    (x - y).abs() / scale
                } else {
                    rel(*x, *y)
                }
            })
            .fold(0.0, f64::max)
    };
    let eb = entrywise(&r.bcrb, &m.bcrb_closed());
    let ee = entrywise(&r.ecrb, &m.ecrb_closed());
    s.check(
        "bcrb matrix = closed form",
        eb < 1e-4,
        format!("max rel {eb:.2e}"),
    );
    s.check(
        "ecrb matrix = closed form",
        ee < 1e-4,
        format!("max rel {ee:.2e}"),
    );
    s.check(
        "min_eig(ecrb - bcrb) >= -1e-9",
        r.diagnostics.jensen_min_eig >= -1e-9,
        format!("{:.3e}", r.diagnostics.jensen_min_eig),
    );
    let asym = [&r.bcrb, &r.ecrb, &r.at_bcrb]
        .iter()
        .map(|x| (*x - x.transpose()).amax())
        .fold(0.0, f64::max);
    s.check(
        "bound matrices symmetric",
        asym <= 1e-12,
        format!("{asym:.2e}"),
    );
    if let Some(e) = s.attempt(
        "at_bcrb vs bcrb",
        min_eig_sym(&symmetrize(&(&r.at_bcrb - &r.bcrb))),
    ) {
        s.check("at_bcrb - bcrb is PSD", e >= -1e-9, format!("{e:.3e}"));
    }
    if let (Some(w), Some(b)) = (
        s.attempt(
            "identity weight",
            wbcrb_matrix(
                &m,
                |_: &DVector<f64>| Ok(DMatrix::identity(2, 2)),
                &q,
                &StepRule::default(),
            ),
        ),
        s.attempt("bcrb matrix", bcrb_matrix(&m, &q)),
    ) {
        let mass = w.e_w[(0, 0)];
        let d = (&w.bound - &b * (mass * mass)).amax() / b.amax();
        s.check("W = I reproduces the bcrb", d < 1e-12, format!("{d:.2e}"));
    }
    s.check(
        "F symmetric before symmetrization",
        r.diagnostics.f_asymmetry < 1e-8,
        format!("{:.2e}", r.diagnostics.f_asymmetry),
    );
    let (lo, hi) = m.support();
    s.check(
        "support box",
        lo.len() == m.dim() && hi[1] == 1.0 && lo[1] == 0.0,
        format!("{lo:?} {hi:?}"),
    );
}

/// Run the suite for a preset.
pub fn verify(p: Preset) -> Vec<Check> {
    let mut s = Suite::default();
    match p {
        Preset::VarianceBeta => variance_beta(&mut s),
        Preset::Doa => doa(&mut s),
        Preset::MeanVar => mean_var(&mut s),
    }
    s.0
}

pub fn render(checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        out.push_str(&format!("{tag} {} ({})\n", c.name, c.detail));
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    out.push_str(&format!("{} checks, {failed} failed\n", checks.len()));
    out
}
