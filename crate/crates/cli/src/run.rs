//! Sweep execution and output writing.

use std::fs;
use std::path::{Path, PathBuf};

use bayes_bounds::bounds_scalar::{scalar_report, ScalarSettings};
use bayes_bounds::bounds_vector::at_bcrb_matrix;
use bayes_bounds::estimators::{monte_carlo_mse, monte_carlo_mse_vector, McMatrixResult, McResult};
use bayes_bounds::parallel::with_env_pool;
use bayes_bounds::ScalarModel;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{BoundKind, Format, ModelInstance, RunConfig};
use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "bayes-bounds/1";

/// Component labels for the vector preset.
pub const COMPONENTS: [&str; 2] = ["mu", "phi"];

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum BoundValue {
    Scalar(f64),
    /// Row-major matrix.
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
pub enum McOut {
    Scalar(McResult),
    Matrix(McMatrixResult),
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub value: f64,
    pub bounds: Vec<(BoundKind, BoundValue)>,
    pub mc: Option<McOut>,
    pub diagnostics: Value,
}

fn rows_of(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

fn scalar_point<M: ScalarModel>(m: &M, cfg: &RunConfig, value: f64) -> CliResult<PointResult> {
    let axis = cfg.sweep.axis.name();
    let fail = |e| CliError::numerical(axis, value, e);
    let wanted = cfg.bounds_sorted();
    let mut bounds = Vec::new();
    let mut diagnostics = Value::Null;
    if !wanted.is_empty() {
        let settings = ScalarSettings {
            quad: cfg.quad(),
            step: cfg.diff,
            delta: wanted
                .contains(&BoundKind::WbcrbOpt)
                .then_some(cfg.grid_delta),
        };
        let r = scalar_report(m, &settings).map_err(fail)?;
        for k in wanted {
            let v = match k {
                BoundKind::Bcrb => r.bcrb,
                BoundKind::Ecrb => r.ecrb,
                BoundKind::AtBcrb => r.at_bcrb,
                BoundKind::WbcrbSub => r.wbcrb_sub,
                BoundKind::WbcrbOpt => r.wbcrb_opt.expect("grid requested"),
            };
            bounds.push((k, BoundValue::Scalar(v)));
        }
        diagnostics = json!({
            "rho": r.rho,
            "e_j_dp_inv": r.e_j_dp_inv,
            "scalar": r.diagnostics,
        });
    }
    let mc = match &cfg.mc {
        Some(c) => Some(McOut::Scalar(monte_carlo_mse(m, c).map_err(fail)?)),
        None => None,
    };
    Ok(PointResult {
        value,
        bounds,
        mc,
        diagnostics,
    })
}

fn vector_point(
    m: &bayes_bounds::models::MeanVar,
    cfg: &RunConfig,
    value: f64,
) -> CliResult<PointResult> {
    let axis = cfg.sweep.axis.name();
    let fail = |e| CliError::numerical(axis, value, e);
    let wanted = cfg.bounds_sorted();
    let mut bounds = Vec::new();
    let mut diagnostics = Value::Null;
    if !wanted.is_empty() {
        let r = at_bcrb_matrix(m, &cfg.quad(), &cfg.diff).map_err(fail)?;
        for k in wanted {
            let mat = match k {
                BoundKind::Bcrb => &r.bcrb,
                BoundKind::Ecrb => &r.ecrb,
                BoundKind::AtBcrb => &r.at_bcrb,
                // rejected by validation
                BoundKind::WbcrbSub | BoundKind::WbcrbOpt => unreachable!(),
            };
            bounds.push((k, BoundValue::Matrix(rows_of(mat))));
        }
        diagnostics = json!({
            "e_j_dp_inv": rows_of(&r.e_j_dp_inv),
            "f_inner": rows_of(&r.f_inner),
            "matrix": r.diagnostics,
        });
    }
    let mc = match &cfg.mc {
        Some(c) => Some(McOut::Matrix(monte_carlo_mse_vector(m, c).map_err(fail)?)),
        None => None,
    };
    Ok(PointResult {
        value,
        bounds,
        mc,
        diagnostics,
    })
}

pub fn compute_point(cfg: &RunConfig, value: f64) -> CliResult<PointResult> {
    match cfg.model_at(value)? {
        ModelInstance::VarianceBeta(m) => scalar_point(&m, cfg, value),
        ModelInstance::Doa(m) => scalar_point(&m, cfg, value),
        ModelInstance::MeanVar(m) => vector_point(&m, cfg, value),
    }
}

/// Evaluate every sweep point (in parallel) and return them in sweep order.
pub fn compute(cfg: &RunConfig) -> CliResult<Vec<PointResult>> {
    cfg.validate()?;
    let results = with_env_pool(|| {
        cfg.sweep
            .values
            .par_iter()
            .map(|&v| compute_point(cfg, v))
            .collect::<Vec<_>>()
    })
    .map_err(|e| CliError::config("BAYES_BOUNDS_THREADS", e.to_string()))?;
    results.into_iter().collect()
}

fn rmse(x: f64) -> f64 {
    if x >= 0.0 {
        x.sqrt()
    } else {
        f64::NAN
    }
}

/// Header row for the configuration.
pub fn columns(cfg: &RunConfig) -> Vec<String> {
    let mut cols = vec![cfg.sweep.axis.name().to_string()];
    let vector = cfg.preset.is_vector();
    let comp = |base: &str| -> Vec<String> {
        if vector {
            COMPONENTS.iter().map(|c| format!("{base}_{c}")).collect()
        } else {
            vec![base.to_string()]
        }
    };
    for k in cfg.bounds_sorted() {
        cols.extend(comp(k.name()));
    }
    if cfg.mc.is_some() {
        cols.extend(comp(if cfg.raw_mse { "mc_mse" } else { "mc_rmse" }));
        cols.extend(comp("mc_se"));
    }
    cols
}

/// Numeric row matching [`columns`]; bounds and MC results are square-rooted
/// unless `raw_mse` is set. In RMSE mode the MC standard error is carried
/// through the square root by the delta method, `se/(2·rmse)`.
pub fn row(cfg: &RunConfig, p: &PointResult) -> Vec<f64> {
    let scale = |x: f64| if cfg.raw_mse { x } else { rmse(x) };
    let mut out = vec![p.value];
    for (_, b) in &p.bounds {
        match b {
            BoundValue::Scalar(v) => out.push(scale(*v)),
            BoundValue::Matrix(m) => out.extend((0..m.len()).map(|i| scale(m[i][i]))),
        }
    }
    let se_of = |mse: f64, se: f64| {
        if cfg.raw_mse {
            se
        } else {
            se / (2.0 * mse.sqrt())
        }
    };
    match &p.mc {
        Some(McOut::Scalar(r)) => {
            out.push(scale(r.mse));
            out.push(se_of(r.mse, r.se));
        }
        Some(McOut::Matrix(r)) => {
            let d = r.mse.nrows();
            out.extend((0..d).map(|i| scale(r.mse[(i, i)])));
            out.extend((0..d).map(|i| se_of(r.mse[(i, i)], r.se[(i, i)])));
        }
        None => {}
    }
    out
}

/// Numbers use Rust's shortest round-trip formatting, so equal floats give equal text.
pub fn csv_string(cfg: &RunConfig, points: &[PointResult]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns(cfg))
        .map_err(|e| CliError::Output(e.to_string()))?;
    for p in points {
        let r = row(cfg, p);
        let mut rec = vec![format!("{}", r[0])];
        rec.extend(r[1..].iter().map(|x| format!("{x:e}")));
        w.write_record(&rec)
            .map_err(|e| CliError::Output(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Output(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Output(e.to_string()))
}

fn mc_json(mc: &McOut) -> Value {
    match mc {
        McOut::Scalar(r) => json!(r),
        McOut::Matrix(r) => json!({
            "mse": rows_of(&r.mse),
            "rmse": r.rmse.iter().copied().collect::<Vec<_>>(),
            "se": rows_of(&r.se),
            "trials": r.trials,
            "seed": r.seed,
        }),
    }
}

/// Full record of a run: configuration echo, per-point values, matrices and diagnostics.
pub fn sidecar(cfg: &RunConfig, points: &[PointResult]) -> Value {
    let cols = columns(cfg);
    let pts: Vec<Value> = points
        .iter()
        .map(|p| {
            let values: serde_json::Map<String, Value> = cols
                .iter()
                .cloned()
                .zip(row(cfg, p).into_iter().map(|x| json!(x)))
                .collect();
            let bounds: serde_json::Map<String, Value> = p
                .bounds
                .iter()
                .map(|(k, v)| (k.name().to_string(), json!(v)))
                .collect();
            json!({
                "value": p.value,
                "row": values,
                "bounds": bounds,
                "mc": p.mc.as_ref().map(mc_json),
                "diagnostics": p.diagnostics,
            })
        })
        .collect();
    json!({
        "schema": SCHEMA,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "seed": cfg.mc.map(|m| m.seed),
        "columns": cols,
        "points": pts,
    })
}

/// Sidecar path next to a CSV output: `fig1.csv` → `fig1.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}

fn pretty(v: &Value) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Output(e.to_string()))
}

/// Run the configuration. Returns the text destined for stdout (empty when
/// everything went to files).
pub fn run(cfg: &RunConfig) -> CliResult<String> {
    let points = compute(cfg)?;
    let main = match cfg.format {
        Format::Csv => csv_string(cfg, &points)?,
        Format::Json => pretty(&sidecar(cfg, &points))? + "\n",
    };
    match &cfg.out {
        None => Ok(main),
        Some(path) => {
            write(path, &main)?;
            if cfg.format == Format::Csv {
                write(
                    &sidecar_path(path),
                    &(pretty(&sidecar(cfg, &points))? + "\n"),
                )?;
            }
            Ok(String::new())
        }
    }
}
