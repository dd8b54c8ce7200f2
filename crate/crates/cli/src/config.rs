//! Run configuration: preset, overrides, sweep, requested bounds, Monte-Carlo and numerics.

use std::path::PathBuf;

use bayes_bounds::estimators::McConfig;
use bayes_bounds::models::{
    Doa, DoaParams, MeanVar, MeanVarParams, VarianceBeta, VarianceBetaParams,
};
use bayes_bounds::numerics::{QuadratureSpec, StepRule};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    VarianceBeta,
    Doa,
    MeanVar,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::VarianceBeta, Preset::Doa, Preset::MeanVar];

    pub fn name(self) -> &'static str {
        match self {
            Preset::VarianceBeta => "variance-beta",
            Preset::Doa => "doa",
            Preset::MeanVar => "mean-var",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                CliError::config(
                    "preset",
                    format!("unknown preset `{s}` (expected variance-beta, doa or mean-var)"),
                )
            })
    }

    pub fn is_vector(self) -> bool {
        self == Preset::MeanVar
    }

    pub fn default_sweep(self) -> Sweep {
        match self {
            Preset::VarianceBeta => Sweep {
                axis: Axis::N,
                values: vec![8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0],
            },
            Preset::Doa => Sweep {
                axis: Axis::Snr,
                values: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            },
            Preset::MeanVar => Sweep {
                axis: Axis::SigmaMu2,
                values: vec![0.01, 0.03, 0.1, 0.3, 1.0],
            },
        }
    }

    fn axes(self) -> &'static [Axis] {
        match self {
            Preset::VarianceBeta => &[Axis::N, Axis::A],
            Preset::Doa => &[Axis::Snr, Axis::N],
            Preset::MeanVar => &[Axis::N, Axis::A, Axis::SigmaMu2],
        }
    }
}

/// Sweep axis. For `doa`, `N` means the snapshot count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "N")]
    N,
    #[serde(rename = "snr")]
    Snr,
    #[serde(rename = "a")]
    A,
    #[serde(rename = "sigma_mu2")]
    SigmaMu2,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::N => "N",
            Axis::Snr => "snr",
            Axis::A => "a",
            Axis::SigmaMu2 => "sigma_mu2",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        [Axis::N, Axis::Snr, Axis::A, Axis::SigmaMu2]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                CliError::config(
                    "sweep.axis",
                    format!("unknown axis `{s}` (expected N, snr, a or sigma_mu2)"),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Bcrb,
    Ecrb,
    AtBcrb,
    WbcrbSub,
    WbcrbOpt,
}

impl BoundKind {
    /// Column order in every output.
    pub const ALL: [BoundKind; 5] = [
        BoundKind::Bcrb,
        BoundKind::Ecrb,
        BoundKind::AtBcrb,
        BoundKind::WbcrbSub,
        BoundKind::WbcrbOpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Bcrb => "bcrb",
            BoundKind::Ecrb => "ecrb",
            BoundKind::AtBcrb => "at_bcrb",
            BoundKind::WbcrbSub => "wbcrb_sub",
            BoundKind::WbcrbOpt => "wbcrb_opt",
        }
    }

    pub fn scalar_only(self) -> bool {
        matches!(self, BoundKind::WbcrbSub | BoundKind::WbcrbOpt)
    }

    /// Parse a comma list; `all` expands to every bound valid for the preset.
    pub fn parse_list(s: &str, preset: Preset) -> CliResult<Vec<BoundKind>> {
        if s.trim() == "all" {
            return Ok(Self::all_for(preset));
        }
        let mut out = Vec::new();
        for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            let k = Self::ALL
                .into_iter()
                .find(|k| k.name() == item)
                .ok_or_else(|| CliError::config("bounds", format!("unknown bound `{item}`")))?;
            out.push(k);
        }
        Ok(out)
    }

    pub fn all_for(preset: Preset) -> Vec<BoundKind> {
        Self::ALL
            .into_iter()
            .filter(|k| !(preset.is_vector() && k.scalar_only()))
            .collect()
    }
}

/// Optional parameter overrides on top of a preset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    /// Sample count (snapshots for `doa`).
    pub n: Option<usize>,
    pub a: Option<f64>,
    pub snr_db: Option<f64>,
    pub sigma_mu2: Option<f64>,
    pub n_a: Option<usize>,
    /// Prior edge in degrees.
    pub s_deg: Option<f64>,
    pub kappa: Option<f64>,
}

impl Overrides {
    /// Parse `key=value` pairs separated by commas.
    pub fn parse(s: &str) -> CliResult<Self> {
        let mut o = Self::default();
        for (k, v) in key_values(s, "set")? {
            let bad = |e: String| CliError::config(&format!("set.{k}"), e);
            match k.as_str() {
                "n" | "N" => o.n = Some(v.parse().map_err(|e| bad(format!("{e}")))?),
                "n_a" => o.n_a = Some(v.parse().map_err(|e| bad(format!("{e}")))?),
                "a" => o.a = Some(parse_f64(&v).map_err(bad)?),
                "snr_db" | "snr" => o.snr_db = Some(parse_f64(&v).map_err(bad)?),
                "sigma_mu2" => o.sigma_mu2 = Some(parse_f64(&v).map_err(bad)?),
                "s_deg" => o.s_deg = Some(parse_f64(&v).map_err(bad)?),
                "kappa" => o.kappa = Some(parse_f64(&v).map_err(bad)?),
                _ => return Err(CliError::config("set", format!("unknown parameter `{k}`"))),
            }
        }
        Ok(o)
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}"))
}

pub(crate) fn key_values(s: &str, field: &str) -> CliResult<Vec<(String, String)>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::config(field, format!("expected key=value, got `{kv}`")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn default_delta() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    #[serde(default)]
    pub params: Overrides,
    pub sweep: Sweep,
    pub bounds: Vec<BoundKind>,
    #[serde(default)]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(default)]
    pub diff: StepRule,
    /// Grid spacing for `wbcrb_opt`.
    #[serde(default = "default_delta")]
    pub grid_delta: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: Format,
    /// Report MSE instead of RMSE.
    #[serde(default)]
    pub raw_mse: bool,
}

fn default_format() -> Format {
    Format::Csv
}

impl RunConfig {
    pub fn for_preset(preset: Preset) -> Self {
        Self {
            preset,
            params: Overrides::default(),
            sweep: preset.default_sweep(),
            bounds: BoundKind::all_for(preset),
            mc: None,
            quadrature: None,
            diff: StepRule::default(),
            grid_delta: default_delta(),
            out: None,
            format: Format::Csv,
            raw_mse: false,
        }
    }

    /// Quadrature in effect: explicit, or the 1-D or box default.
    pub fn quad(&self) -> QuadratureSpec {
        self.quadrature.unwrap_or_else(|| {
            if self.preset.is_vector() {
                QuadratureSpec::default_box()
            } else {
                QuadratureSpec::default()
            }
        })
    }

    /// Requested bounds in canonical column order, without repeats.
    pub fn bounds_sorted(&self) -> Vec<BoundKind> {
        let mut b = self.bounds.clone();
        b.sort();
        b.dedup();
        b
    }

    pub fn validate(&self) -> CliResult<()> {
        let s = &self.sweep;
        if s.values.is_empty() {
            return Err(CliError::config(
                "sweep.values",
                "sweep list is empty".into(),
            ));
        }
        if s.values.iter().any(|v| !v.is_finite()) || s.values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::config(
                "sweep.values",
                "values must be finite and strictly increasing".into(),
            ));
        }
        if !self.preset.axes().contains(&s.axis) {
            return Err(CliError::config(
                "sweep.axis",
                format!(
                    "axis {} does not apply to preset {}",
                    s.axis.name(),
                    self.preset.name()
                ),
            ));
        }
        if s.axis == Axis::N && s.values.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
            return Err(CliError::config(
                "sweep.values",
                "N values must be positive integers".into(),
            ));
        }
        if self.bounds.is_empty() && self.mc.is_none() {
            return Err(CliError::config(
                "bounds",
                "nothing requested: give at least one bound or --mc".into(),
            ));
        }
        if self.preset.is_vector() {
            if let Some(k) = self.bounds.iter().find(|k| k.scalar_only()) {
                return Err(CliError::config(
                    "bounds",
                    format!("{} is only defined for scalar parameters", k.name()),
                ));
            }
        }
        if let Some(mc) = &self.mc {
            mc.validate()
                .map_err(|e| CliError::config("mc", e.to_string()))?;
        }
        self.quad()
            .validate()
            .map_err(|e| CliError::config("quadrature", e.to_string()))?;
        self.diff
            .validate()
            .map_err(|e| CliError::config("diff", e.to_string()))?;
        if !(self.grid_delta > 0.0 && self.grid_delta.is_finite()) {
            return Err(CliError::config(
                "grid_delta",
                format!("must be positive, got {}", self.grid_delta),
            ));
        }
        // every sweep point must describe a valid model
        for &v in &s.values {
            self.model_at(v)?;
        }
        Ok(())
    }

    /// Build the model for one sweep value.
    pub fn model_at(&self, v: f64) -> CliResult<ModelInstance> {
        let o = &self.params;
        let axis = self.sweep.axis;
        let pick = |ax: Axis, base: Option<f64>, default: f64| {
            if axis == ax {
                v
            } else {
                base.unwrap_or(default)
            }
        };
        let bad = |e: bayes_bounds::Error| {
            CliError::config("params", format!("at {}={v}: {e}", axis.name()))
        };
        Ok(match self.preset {
            Preset::VarianceBeta => {
                let d = VarianceBetaParams::default();
                let p = VarianceBetaParams {
                    a: pick(Axis::A, o.a, d.a),
                    n: pick(Axis::N, o.n.map(|x| x as f64), d.n as f64) as usize,
                };
                ModelInstance::VarianceBeta(VarianceBeta::new(p).map_err(bad)?)
            }
            Preset::Doa => {
                let mut p = DoaParams::preset(pick(Axis::Snr, o.snr_db, 0.0));
                p.n_s = pick(Axis::N, o.n.map(|x| x as f64), p.n_s as f64) as usize;
                if let Some(n_a) = o.n_a {
                    p.n_a = n_a;
                }
                if let Some(s) = o.s_deg {
                    p.s = s.to_radians();
                }
                if let Some(k) = o.kappa {
                    p.kappa = k;
                }
                ModelInstance::Doa(Doa::new(p).map_err(bad)?)
            }
            Preset::MeanVar => {
                let d = MeanVarParams::default();
                let p = MeanVarParams {
                    a: pick(Axis::A, o.a, d.a),
                    n: pick(Axis::N, o.n.map(|x| x as f64), d.n as f64) as usize,
                    sigma_mu2: pick(Axis::SigmaMu2, o.sigma_mu2, d.sigma_mu2),
                };
                ModelInstance::MeanVar(MeanVar::new(p).map_err(bad)?)
            }
        })
    }
}

pub enum ModelInstance {
    VarianceBeta(VarianceBeta),
    Doa(Doa),
    MeanVar(MeanVar),
}
