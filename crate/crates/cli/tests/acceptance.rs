//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.
//!
//! Monte-Carlo settings are the library defaults (5000 trials, seed 7).

use std::time::Instant;

use bayes_bounds::bounds_scalar::{bcrb, scalar_report, wbcrb_given_weight, ScalarSettings};
use bayes_bounds::estimators::{Estimator, McConfig};
use bayes_bounds::numerics::{min_eig_sym, symmetrize, QuadratureSpec};
use bayes_bounds::wbcrb_opt::inverse_gap_min_eig;
use bayes_bounds::ScalarModel;
use bayes_bounds_cli::config::{BoundKind, ModelInstance, Preset, RunConfig, Sweep};
use bayes_bounds_cli::run::{self, BoundValue, McOut, PointResult};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            pass: true,
            notes: Vec::new(),
        }
    }

    fn require(&mut self, ok: bool, note: impl Into<String>) {
        let note = note.into();
        if !ok {
            self.pass = false;
            self.notes.push(format!("violated: {note}"));
        } else {
            self.notes.push(note);
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn config(preset: Preset, bounds: Vec<BoundKind>, mc: Option<Estimator>) -> RunConfig {
    let mut c = RunConfig::for_preset(preset);
    c.bounds = bounds;
    c.mc = mc.map(|estimator| McConfig {
        estimator,
        ..McConfig::default()
    });
    c
}

fn sweep(preset: Preset, bounds: Vec<BoundKind>, mc: Option<Estimator>) -> Vec<PointResult> {
    run::compute(&config(preset, bounds, mc))
        .unwrap_or_else(|e| panic!("{} sweep: {e}", preset.name()))
}

fn scalar(p: &PointResult, k: BoundKind) -> f64 {
    match p.bounds.iter().find(|(b, _)| *b == k) {
        Some((_, BoundValue::Scalar(v))) => *v,
        _ => panic!("no scalar {} at {}", k.name(), p.value),
    }
}

fn matrix(p: &PointResult, k: BoundKind) -> DMatrix<f64> {
    match p.bounds.iter().find(|(b, _)| *b == k) {
        Some((_, BoundValue::Matrix(rows))) => {
            DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c])
        }
        _ => panic!("no matrix {} at {}", k.name(), p.value),
    }
}

fn chain(vb: &[PointResult], elapsed: f64) -> Outcome {
    let mut o = Outcome::new();
    for p in vb {
        let (sub, at, opt, b) = (
            scalar(p, BoundKind::WbcrbSub),
            scalar(p, BoundKind::AtBcrb),
            scalar(p, BoundKind::WbcrbOpt),
            scalar(p, BoundKind::Bcrb),
        );
        let cap = opt * 1.005;
        o.require(
            sub <= at && at <= cap && b <= cap,
            format!(
                "N={}: sub {sub:.4e} ≤ at {at:.4e} ≤ opt·1.005 {cap:.4e}, bcrb {b:.4e}",
                p.value
            ),
        );
    }
    o.require(elapsed < 30.0, format!("runtime {elapsed:.2}s < 30s"));
    o
}

fn jensen(vb: &[PointResult], doa: &[PointResult], mv: &[PointResult]) -> Outcome {
    let mut o = Outcome::new();
    for (name, pts) in [("variance-beta", vb), ("doa", doa)] {
        let bad: Vec<f64> = pts
            .iter()
            .filter(|p| scalar(p, BoundKind::Bcrb) > scalar(p, BoundKind::Ecrb))
            .map(|p| p.value)
            .collect();
        o.require(
            bad.is_empty(),
            format!("{name}: bcrb ≤ ecrb at {} points (bad: {bad:?})", pts.len()),
        );
    }
    for p in mv {
        let d = matrix(p, BoundKind::Ecrb) - matrix(p, BoundKind::Bcrb);
        let e = min_eig_sym(&symmetrize(&d)).unwrap();
        o.require(
            e >= -1e-9,
            format!("mean-var σ_μ²={}: min_eig(ecrb−bcrb) = {e:.3e}", p.value),
        );
    }
    o
}

fn tightness(vb: &[PointResult]) -> Outcome {
    let mut o = Outcome::new();
    for k in [BoundKind::AtBcrb, BoundKind::WbcrbOpt] {
        let gaps: Vec<f64> = vb
            .iter()
            .map(|p| (scalar(p, k) / scalar(p, BoundKind::Ecrb) - 1.0).abs())
            .collect();
        let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
        let last = *gaps.last().unwrap();
        let shown: Vec<String> = gaps.iter().map(|g| format!("{g:.3}")).collect();
        o.require(
            monotone,
            format!("{}: |ratio−1| decreasing [{}]", k.name(), shown.join(", ")),
        );
        o.require(
            last <= 0.05,
            format!("{}: |ratio−1| = {last:.4} at N=1024 (≤ 0.05)", k.name()),
        );
    }
    o
}

fn scalar_mc(p: &PointResult) -> (f64, f64) {
    match &p.mc {
        Some(McOut::Scalar(r)) => (r.mse, r.se),
        _ => panic!("scalar Monte-Carlo missing at {}", p.value),
    }
}

fn at_value(pts: &[PointResult], v: f64) -> &PointResult {
    pts.iter()
        .find(|p| p.value == v)
        .unwrap_or_else(|| panic!("sweep point {v} missing"))
}

fn map_attainability(vb_map: &[PointResult]) -> Outcome {
    let mut o = Outcome::new();
    let p = at_value(vb_map, 1024.0);
    let (mse, _) = scalar_mc(p);
    let r = mse.sqrt();
    for k in [BoundKind::WbcrbOpt, BoundKind::AtBcrb] {
        let b = scalar(p, k).sqrt();
        let d = rel(r, b);
        o.require(
            d <= 0.05,
            format!("N=1024: √MSE {r:.5e} vs √{} {b:.5e}, rel {d:.4}", k.name()),
        );
    }
    o
}

fn ecrb_invalid(vb_map: &[PointResult]) -> Outcome {
    let mut o = Outcome::new();
    let p = at_value(vb_map, 8.0);
    let (mse, se) = scalar_mc(p);
    let e = scalar(p, BoundKind::Ecrb);
    o.require(
        mse < e - 3.0 * se,
        format!("N=8: MAP MSE {mse:.4e} < ecrb {e:.4e} − 3·{se:.2e}"),
    );
    o
}

fn sandwich(runs: &[(&str, &str, &[PointResult])]) -> Outcome {
    let mut o = Outcome::new();
    for (preset, est, pts) in runs {
        let mut worst = f64::NEG_INFINITY;
        let mut count = 0;
        for p in pts.iter() {
            match &p.mc {
                Some(McOut::Scalar(r)) => {
                    for (k, v) in &p.bounds {
                        // ecrb is a valid bound only on the DOA model
                        if *k == BoundKind::Ecrb && *preset != "doa" {
                            continue;
                        }
                        let BoundValue::Scalar(b) = v else {
                            unreachable!()
                        };
                        let excess = (b - r.mse) / r.se;
                        worst = worst.max(excess);
                        count += 1;
                        if excess > 3.0 {
                            o.require(
                                false,
                                format!(
                                    "{preset}/{est} at {}: {} {b:.4e} > MSE {:.4e} + 3·{:.2e}",
                                    p.value,
                                    k.name(),
                                    r.mse,
                                    r.se
                                ),
                            );
                        }
                    }
                }
                Some(McOut::Matrix(r)) => {
                    let se_max = r.se.max();
                    for (k, _) in &p.bounds {
                        if *k == BoundKind::Ecrb {
                            continue;
                        }
                        let b = matrix(p, *k);
                        for i in 0..b.nrows() {
                            let excess = (b[(i, i)] - r.mse[(i, i)]) / r.se[(i, i)];
                            worst = worst.max(excess);
                            count += 1;
                            if excess > 3.0 {
                                o.require(false, format!("{preset}/{est} σ_μ²={}: {}[{i}{i}] {:.4e} > MSE {:.4e} + 3·{:.2e}", p.value, k.name(), b[(i, i)], r.mse[(i, i)], r.se[(i, i)]));
                            }
                        }
                        let e = min_eig_sym(&symmetrize(&(&r.mse - &b))).unwrap();
                        count += 1;
                        if e < -3.0 * se_max {
                            o.require(false, format!("{preset}/{est} σ_μ²={}: min_eig(MSE−{}) = {e:.3e} < −3·{se_max:.2e}", p.value, k.name()));
                        }
                    }
                }
                None => panic!("Monte-Carlo missing"),
            }
        }
        o.notes.push(format!(
            "{preset}/{est}: {count} comparisons, max (bound−MSE)/SE = {worst:.2}"
        ));
    }
    o
}

fn closed_forms() -> Outcome {
    let mut o = Outcome::new();
    let mut c = config(
        Preset::MeanVar,
        vec![BoundKind::Bcrb, BoundKind::Ecrb],
        None,
    );
    c.params.a = Some(2.1);
    c.params.n = Some(100);
    c.sweep = Sweep {
        axis: bayes_bounds_cli::config::Axis::SigmaMu2,
        values: vec![0.1],
    };
    let p = &run::compute(&c).expect("mean-var point")[0];
    let ModelInstance::MeanVar(m) = c.model_at(0.1).unwrap() else {
        unreachable!()
    };
    let (b, e) = (matrix(p, BoundKind::Bcrb), matrix(p, BoundKind::Ecrb));
    for (name, got, want) in [("bcrb", &b, m.bcrb_closed()), ("ecrb", &e, m.ecrb_closed())] {
        let worst = got
            .iter()
            .zip(want.iter())
            .map(|(g, w)| if *w == 0.0 { g.abs() } else { rel(*g, *w) })
            .fold(0.0, f64::max);
        o.require(
            worst <= 1e-4,
            format!("{name}: max entrywise rel {worst:.2e}"),
        );
    }
    // printed to four significant digits
    for (name, got, spot) in [
        ("bcrb₁₁", b[(0, 0)], 3.323e-3),
        ("ecrb₁₁", e[(0, 0)], 5.0e-3),
        ("ecrb₂₂", e[(1, 1)], 5.962e-3),
    ] {
        o.require(
            rel(got, spot) < 2e-4,
            format!("{name} = {got:.5e} (≈ {spot:e})"),
        );
    }
    o
}

fn doa_threshold(doa_map: &[PointResult], doa_ml: &[PointResult]) -> Outcome {
    let mut o = Outcome::new();
    let hi = at_value(doa_map, 10.0);
    let trio = [BoundKind::AtBcrb, BoundKind::WbcrbOpt, BoundKind::Ecrb].map(|k| scalar(hi, k));
    let spread = trio.iter().cloned().fold(0.0, f64::max)
        / trio.iter().cloned().fold(f64::INFINITY, f64::min)
        - 1.0;
    o.require(
        spread <= 0.02,
        format!(
            "10 dB: at/opt/ecrb = {:.5e}/{:.5e}/{:.5e}, spread {spread:.4}",
            trio[0], trio[1], trio[2]
        ),
    );
    let (mse, _) = scalar_mc(hi);
    let d = rel(mse.sqrt(), trio[0].sqrt());
    o.require(
        d <= 0.10,
        format!("10 dB: √MSE(MAP) vs √at_bcrb rel {d:.4}"),
    );
    for (est, pts) in [("map", doa_map), ("ml", doa_ml)] {
        let lo = at_value(pts, -10.0);
        let (mse, se) = scalar_mc(lo);
        for (k, v) in &lo.bounds {
            let BoundValue::Scalar(b) = v else {
                unreachable!()
            };
            o.require(
                *b <= mse + 3.0 * se,
                format!(
                    "−10 dB {est}: {} {b:.4e} ≤ {mse:.4e} + 3·{se:.2e}",
                    k.name()
                ),
            );
        }
    }
    o
}

fn identity_checks<M: ScalarModel>(o: &mut Outcome, label: &str, m: &M) {
    let q = QuadratureSpec::default();
    let b = bcrb(m, &q).unwrap();
    let w1 = wbcrb_given_weight(m, |_| 1.0, |_| 0.0, |_| 0.0, &q).unwrap();
    o.require(
        rel(w1, b) <= 1e-10,
        format!("{label}: w≡1 gives bcrb (rel {:.1e})", rel(w1, b)),
    );
    let s = ScalarSettings {
        delta: None,
        ..ScalarSettings::default()
    };
    let r = scalar_report(m, &s).unwrap();
    let e = r.e_j_dp_inv;
    let at = rel(r.at_bcrb * (1.0 + r.rho), e);
    let sub = rel(r.wbcrb_sub, e * (1.0 - r.rho));
    o.require(
        at <= 1e-10 && sub <= 1e-10,
        format!("{label}: at(1+ρ)=E rel {at:.1e}, sub=E(1−ρ) rel {sub:.1e}"),
    );
}

fn reductions() -> Outcome {
    let mut o = Outcome::new();
    for preset in [Preset::VarianceBeta, Preset::Doa] {
        let c = RunConfig::for_preset(preset);
        for &v in &c.sweep.values {
            let label = format!("{} {}={v}", preset.name(), c.sweep.axis.name());
            match c.model_at(v).unwrap() {
                ModelInstance::VarianceBeta(m) => identity_checks(&mut o, &label, &m),
                ModelInstance::Doa(m) => identity_checks(&mut o, &label, &m),
                ModelInstance::MeanVar(_) => unreachable!(),
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst = f64::INFINITY;
    for _ in 0..200 {
        let n = rng.random_range(1..10);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = SymmetricEigen::new(&a + a.transpose()).eigenvectors;
        let lam = DVector::from_fn(n, |_, _| rng.random_range(-0.95..10.0));
        let psi = symmetrize(&(&q * DMatrix::from_diagonal(&lam) * q.transpose()));
        worst = worst.min(inverse_gap_min_eig(&psi).unwrap_or(f64::NEG_INFINITY));
    }
    o.require(
        worst >= -1e-10,
        format!("(I+Ψ)⁻¹ ⪰ I−Ψ on 200 matrices, smallest eigenvalue {worst:.3e}"),
    );
    o
}

fn csv_with_threads(cfg: &RunConfig, threads: &str) -> String {
    std::env::set_var("BAYES_BOUNDS_THREADS", threads);
    let out = run::run(cfg).expect("run");
    std::env::remove_var("BAYES_BOUNDS_THREADS");
    out
}

fn determinism() -> Outcome {
    let mut o = Outcome::new();
    for preset in Preset::ALL {
        let mut c = config(preset, BoundKind::all_for(preset), Some(Estimator::Map));
        if let Some(mc) = c.mc.as_mut() {
            mc.trials = 1000;
            mc.seed = 42;
        }
        let a = csv_with_threads(&c, "1");
        let b = csv_with_threads(&c, "1");
        let t = csv_with_threads(&c, "3");
        o.require(
            a == b && a == t,
            format!(
                "{}: {} bytes identical across runs and 1/3 threads",
                preset.name(),
                a.len()
            ),
        );
    }
    o
}

fn main() {
    let start = Instant::now();
    let t = Instant::now();
    let vb = sweep(
        Preset::VarianceBeta,
        BoundKind::all_for(Preset::VarianceBeta),
        None,
    );
    let vb_time = t.elapsed().as_secs_f64();
    let doa = sweep(Preset::Doa, BoundKind::all_for(Preset::Doa), None);
    let mv = sweep(Preset::MeanVar, BoundKind::all_for(Preset::MeanVar), None);

    let mc_runs: Vec<(Preset, Estimator, Vec<PointResult>)> = Preset::ALL
        .iter()
        .flat_map(|&p| [Estimator::Map, Estimator::Ml].map(|e| (p, e)))
        .map(|(p, e)| (p, e, sweep(p, BoundKind::all_for(p), Some(e))))
        .collect();
    let find = |p: Preset, e: Estimator| -> &[PointResult] {
        &mc_runs
            .iter()
            .find(|(q, f, _)| *q == p && *f == e)
            .unwrap()
            .2
    };
    let tags: Vec<(&str, &str, &[PointResult])> = mc_runs
        .iter()
        .map(|(p, e, r)| {
            (
                p.name(),
                if *e == Estimator::Map { "map" } else { "ml" },
                r.as_slice(),
            )
        })
        .collect();

    let results = [
        ("1 ordering chain on variance-beta", chain(&vb, vb_time)),
        ("2 bcrb ≤ ecrb on all presets", jensen(&vb, &doa, &mv)),
        ("3 asymptotic tightness on variance-beta", tightness(&vb)),
        (
            "4 MAP attains wbcrb_opt and at_bcrb at N=1024",
            map_attainability(find(Preset::VarianceBeta, Estimator::Map)),
        ),
        (
            "5 MAP beats ecrb at N=8",
            ecrb_invalid(find(Preset::VarianceBeta, Estimator::Map)),
        ),
        ("6 bounds ≤ MSE + 3·SE for MAP and ML", sandwich(&tags)),
        ("7 mean-var closed forms", closed_forms()),
        (
            "8 DOA coincidence above threshold, validity below",
            doa_threshold(
                find(Preset::Doa, Estimator::Map),
                find(Preset::Doa, Estimator::Ml),
            ),
        ),
        ("9 reduction identities", reductions()),
        (
            "10 bit-identical CSV across runs and thread counts",
            determinism(),
        ),
    ];

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}", if o.pass { "PASS" } else { "FAIL" });
        for n in &o.notes {
            println!("      {n}");
        }
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1}s)",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
