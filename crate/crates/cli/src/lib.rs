//! Command-line front end: `bounds` sweeps a preset and writes CSV/JSON,
//! `verify` runs a preset's invariant suite.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod run;
pub mod verify;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use bayes_bounds::estimators::McConfig;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use config::{key_values, Axis, BoundKind, Format, Overrides, Preset, RunConfig, Sweep};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "bayes-bounds",
    version,
    about = "Bayesian Cramér-Rao-type bounds and Monte-Carlo MSE"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Compute bounds (and optionally Monte-Carlo RMSE) over a sweep.
    Bounds(Box<BoundsArgs>),
    /// Run the invariant suite of a preset; exit 0 iff every check passes.
    Verify {
        /// variance-beta, doa or mean-var
        preset: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, clap::Args)]
struct BoundsArgs {
    /// Model preset: variance-beta, doa or mean-var.
    #[arg(long)]
    preset: Option<String>,
    /// Full run configuration as JSON (a sidecar file is accepted too).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter overrides, e.g. `a=2.5,n=64`.
    #[arg(long)]
    set: Option<String>,
    /// Sweep, e.g. `N=8,16,32` or `snr=-10,0,10`.
    #[arg(long)]
    sweep: Option<String>,
    /// Comma list of bounds or `all`.
    #[arg(long)]
    bounds: Option<String>,
    /// Monte-Carlo settings, e.g. `trials=5000,estimator=map,seed=7`.
    #[arg(long)]
    mc: Option<String>,
    /// Grid spacing for wbcrb_opt.
    #[arg(long)]
    grid_delta: Option<f64>,
    /// Quadrature panels per piece.
    #[arg(long)]
    panels: Option<usize>,
    /// Relative boundary clip of the quadrature.
    #[arg(long)]
    clip: Option<f64>,
    /// Relative finite-difference step.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Report MSE rather than RMSE.
    #[arg(long)]
    raw_mse: bool,
}

fn parse_sweep(s: &str) -> CliResult<Sweep> {
    let (axis, values) = s
        .split_once('=')
        .ok_or_else(|| CliError::config("sweep", format!("expected AXIS=v1,v2,..., got `{s}`")))?;
    let axis = Axis::parse(axis.trim())?;
    let values = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|e| CliError::config("sweep.values", format!("`{v}`: {e}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Sweep { axis, values })
}

fn parse_mc(s: &str) -> CliResult<McConfig> {
    let mut mc = McConfig::default();
    for (k, v) in key_values(s, "mc")? {
        let bad = |e: String| CliError::config(&format!("mc.{k}"), e);
        match k.as_str() {
            "trials" => mc.trials = v.parse().map_err(|e| bad(format!("{e}")))?,
            "seed" => mc.seed = v.parse().map_err(|e| bad(format!("{e}")))?,
            "estimator" => {
                mc.estimator = v
                    .parse()
                    .map_err(|e: bayes_bounds::Error| bad(e.to_string()))?
            }
            "grid" => mc.grid = v.parse().map_err(|e| bad(format!("{e}")))?,
            "refine" => mc.refine = v.parse().map_err(|e| bad(format!("{e}")))?,
            "clip" => mc.clip = v.parse().map_err(|e| bad(format!("{e}")))?,
            _ => return Err(CliError::config("mc", format!("unknown key `{k}`"))),
        }
    }
    Ok(mc)
}

/// Read a configuration file: a bare RunConfig, or a sidecar carrying one under `config`.
pub fn load_config(path: &std::path::Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
    let v: Value =
        serde_json::from_str(&text).map_err(|e| CliError::config("config", e.to_string()))?;
    let v = if v.get("schema").is_some() {
        v.get("config").cloned().unwrap_or(Value::Null)
    } else {
        v
    };
    serde_json::from_value(v).map_err(|e| CliError::config("config", e.to_string()))
}

fn build_config(a: BoundsArgs) -> CliResult<RunConfig> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(path), _) => load_config(path)?,
        (None, Some(p)) => RunConfig::for_preset(Preset::parse(p)?),
        (None, None) => {
            return Err(CliError::config(
                "preset",
                "give --preset or --config".into(),
            ))
        }
    };
    if let (Some(_), Some(p)) = (&a.config, &a.preset) {
        if Preset::parse(p)? != cfg.preset {
            return Err(CliError::config(
                "preset",
                "--preset disagrees with --config".into(),
            ));
        }
    }
    if let Some(s) = &a.set {
        cfg.params = Overrides::parse(s)?;
    }
    if let Some(s) = &a.sweep {
        cfg.sweep = parse_sweep(s)?;
    }
    if let Some(b) = &a.bounds {
        cfg.bounds = BoundKind::parse_list(b, cfg.preset)?;
    }
    if let Some(m) = &a.mc {
        cfg.mc = Some(parse_mc(m)?);
    }
    if let Some(d) = a.grid_delta {
        cfg.grid_delta = d;
    }
    if a.panels.is_some() || a.clip.is_some() {
        let mut q = cfg.quad();
        if let Some(p) = a.panels {
            q.panels = p;
        }
        if let Some(c) = a.clip {
            q.clip = c;
        }
        cfg.quadrature = Some(q);
    }
    if let Some(h) = a.step {
        cfg.diff.rel = h;
    }
    if let Some(o) = a.out {
        cfg.out = Some(o);
    }
    if let Some(f) = a.format {
        cfg.format = match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        };
    }
    if a.raw_mse {
        cfg.raw_mse = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Entry point shared by the binary and the tests. Returns the exit status:
/// 0 on success, 1 on a failed verification or I/O trouble, 2 on an invalid
/// configuration and 3 on a numerical failure.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match cli.cmd {
        Cmd::Bounds(a) => match build_config(*a).and_then(|c| run::run(&c)) {
            Ok(text) => {
                let _ = out.write_all(text.as_bytes());
                0
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                e.exit_code()
            }
        },
        Cmd::Verify { preset } => match Preset::parse(&preset) {
            Ok(p) => {
                let checks = verify::verify(p);
                let _ = out.write_all(verify::render(&checks).as_bytes());
                if checks.iter().all(|c| c.pass) {
                    0
                } else {
                    1
                }
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                e.exit_code()
            }
        },
    }
}
