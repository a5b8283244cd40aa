//! JSON run configuration.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::functionals::ExponentVariant;
use crate::grid::Grid;
use crate::history::{HistoryFamily, PrescribedHistory};
use crate::kernel::{ConvexModulus, KernelFamily, MemoryKernel};
use crate::mms::MmsPlan;
use crate::solver::{Manufactured, RunOptions, SolverConfig, SourceMode};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "N")]
    pub interior: usize,
}

/// Sine-mode amplitudes: `y(x) = sum_k c_k sin(k pi x / L)`, `k = 1, 2, ...`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InitialSpec {
    #[serde(default)]
    pub y0_modes: Vec<f64>,
    #[serde(default)]
    pub y1_modes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OutputSpec {
    #[serde(default)]
    pub trace_path: Option<String>,
    #[serde(default)]
    pub report_path: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    #[serde(default = "default_eps2")]
    pub eps2: f64,
    /// fixed `eps1`; fitted from the trace when absent
    #[serde(default)]
    pub eps1: Option<f64>,
    #[serde(default = "default_variant")]
    pub exponent_variant: ExponentVariant,
    #[serde(default = "one")]
    pub c_nu: f64,
    #[serde(default = "one")]
    pub c_embed: f64,
    /// `nu` for the diagnostic constants; `(1 - l) / 2` when absent
    #[serde(default)]
    pub nu: Option<f64>,
}

fn default_eps2() -> f64 {
    1e-3
}

fn default_variant() -> ExponentVariant {
    ExponentVariant::HalfPminus2
}

fn one() -> f64 {
    1.0
}

impl Default for FitSpec {
    fn default() -> Self {
        Self { eps2: default_eps2(), eps1: None, exponent_variant: default_variant(), c_nu: 1.0, c_embed: 1.0, nu: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifySpec {
    #[serde(default = "yes")]
    pub hyp1: bool,
    #[serde(default = "yes")]
    pub condition_h: bool,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub s_max: Option<f64>,
}

fn yes() -> bool {
    true
}

fn default_samples() -> usize {
    1024
}

impl Default for CertifySpec {
    fn default() -> Self {
        Self { hyp1: true, condition_h: true, samples: default_samples(), s_max: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsSpec {
    pub manufactured: Manufactured,
    #[serde(default)]
    pub plan: MmsPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kernels: Vec<KernelFamily>,
    pub p: Vec<f64>,
    /// single-mode initial amplitudes
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InputSpec {
    /// existing trace to analyse instead of simulating
    #[serde(default)]
    pub trace_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub kernel: Option<KernelFamily>,
    #[serde(default)]
    pub modulus: Option<ConvexModulus>,
    #[serde(default)]
    pub history: Option<HistoryFamily>,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub run: RunOptions,
    #[serde(default)]
    pub outputs: OutputSpec,
    #[serde(default)]
    pub inputs: InputSpec,
    #[serde(default)]
    pub fit: FitSpec,
    #[serde(default)]
    pub certify: CertifySpec,
    #[serde(default)]
    pub mms: Option<MmsSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

/// Sets `path` (dot separated) in `root` to `raw`, read as JSON when it parses and as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override path `{path}` crosses a non-object")))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::Config(format!("empty override path in `{assignment}`")))
}

impl RunConfig {
    pub fn from_value(mut value: Value, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn from_str(text: &str, overrides: &[String]) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(value, overrides)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_str(&text, overrides)
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = self.grid.ok_or_else(|| Error::Config("missing `grid` section".into()))?;
        Grid::new(g.length, g.interior)
    }

    pub fn kernel(&self) -> Result<MemoryKernel> {
        let fam = self.kernel.clone().ok_or_else(|| Error::Config("missing `kernel` section".into()))?;
        MemoryKernel::new(fam)
    }

    pub fn modulus(&self) -> Result<ConvexModulus> {
        let h = self.modulus.ok_or_else(|| Error::Config("missing `modulus` section".into()))?;
        h.validate()?;
        Ok(h)
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        self.solver.ok_or_else(|| Error::Config("missing `solver` section".into()))
    }

    /// Prescribed history and initial velocity. The history profile is `y(., 0)`,
    /// so continuity at `t = 0` holds by construction.
    pub fn initial_data(&self, grid: &Grid) -> Result<(PrescribedHistory, Vec<f64>)> {
        let solver = self.solver()?;
        if let SourceMode::Manufactured(m) = solver.source_mode {
            return Ok((m.history(grid)?, m.velocity(grid, 0.0)));
        }
        let family = self.history.unwrap_or(HistoryFamily::Stationary);
        let y0 = modes(grid, &self.initial.y0_modes);
        let y1 = modes(grid, &self.initial.y1_modes);
        match family {
            HistoryFamily::Zero if y0.iter().any(|v| *v != 0.0) => {
                Err(Error::Config("zero history requires y(., 0) = 0".into()))
            }
            HistoryFamily::Manufactured { .. } => {
                Err(Error::Config("manufactured history needs a manufactured source mode".into()))
            }
            _ => Ok((PrescribedHistory::new(grid, family, y0)?, y1)),
        }
    }
}

pub fn modes(grid: &Grid, amps: &[f64]) -> Vec<f64> {
    let l = grid.length();
    grid.sample(|x| amps.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * PI * x / l).sin()).sum())
}
