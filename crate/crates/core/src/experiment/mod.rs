//! Experiment orchestration: JSON configuration, validation and the runners
//! that turn a configuration into an in-memory bundle of result files.

mod figures;
mod runners;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::circuits::{named, CircuitParams, Template};
use crate::clock::{ClockProtocol, LaserNoiseSpec, NoiseExponent};
use crate::error::{Error, Result};
use crate::finite_range::{GeometrySpec, DEFAULT_ATOM_CAP};
use crate::io::{sha256_hex, Bundle};

pub use figures::{FigureName, FigureSpec};
pub use runners::{clock_sigma, optimize_point, sweep_point, Backend, OptimizedPoint};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest collective-spin size accepted by the optimizing modes.
pub const MAX_COLLECTIVE_ATOMS: usize = 512;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Top-level configuration; the `mode` key selects the variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub mode: Mode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    Optimize(OptimizeSpec),
    Sweep(SweepSpec),
    Clock(ClockSpec),
    Wigner(WignerSpec),
    Bounds(BoundsSpec),
    Poi(PoiSpec),
    Figure(FigureSpec),
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Optimize(_) => "optimize",
            Mode::Sweep(_) => "sweep",
            Mode::Clock(_) => "clock",
            Mode::Wigner(_) => "wigner",
            Mode::Bounds(_) => "bounds",
            Mode::Poi(_) => "poi",
            Mode::Figure(_) => "figure",
        }
    }
}

/// Local dephasing strength, absolute or relative to the prior width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dephasing {
    Absolute {
        #[serde(rename = "gamma_T")]
        gamma_t: f64,
    },
    Relative {
        #[serde(rename = "gamma_T_over_delta_phi")]
        ratio: f64,
    },
}

impl Dephasing {
    pub fn gamma_t(&self, delta_phi: f64) -> f64 {
        match *self {
            Dephasing::Absolute { gamma_t } => gamma_t,
            Dephasing::Relative { ratio } => ratio * delta_phi,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            Dephasing::Absolute { gamma_t } => gamma_t,
            Dephasing::Relative { ratio } => ratio,
        };
        if !v.is_finite() {
            return Err(Error::NonFinite("dephasing"));
        }
        if v < 0.0 {
            return Err(Error::NegativeExposure(v));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSpec {
    #[serde(rename = "N", default)]
    pub n: Option<usize>,
    pub template: Template,
    pub delta_phi: f64,
    #[serde(default)]
    pub noise: Option<Dephasing>,
    #[serde(default)]
    pub geometry: Option<GeometrySpec>,
    #[serde(default)]
    pub n_starts: Option<usize>,
    #[serde(default)]
    pub angle_budget: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(rename = "N", default)]
    pub n: Option<usize>,
    pub templates: Vec<Template>,
    pub delta_phi: Vec<f64>,
    #[serde(default)]
    pub noise: Option<Dephasing>,
    #[serde(default)]
    pub geometry: Option<GeometrySpec>,
    #[serde(default)]
    pub n_starts: Option<usize>,
    #[serde(default)]
    pub angle_budget: Option<f64>,
}

fn default_alpha() -> NoiseExponent {
    NoiseExponent::Flicker
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSpec {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "default_alpha")]
    pub alpha: NoiseExponent,
    /// Grid of `b_α T`.
    #[serde(rename = "bT")]
    pub bt: Vec<f64>,
    #[serde(default)]
    pub servo: Option<ServoSpec>,
}

fn default_gain() -> f64 {
    0.1
}

fn default_cycles() -> usize {
    100_000
}

fn default_runs() -> usize {
    8
}

fn default_protocol() -> ClockProtocol {
    ClockProtocol::Css
}

/// Closed-loop simulation added to a clock sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoSpec {
    #[serde(default = "default_protocol")]
    pub protocol: ClockProtocol,
    #[serde(default = "default_gain")]
    pub gain: f64,
    #[serde(default = "default_cycles")]
    pub n_cycles: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Laser spectrum; its `alpha` must match the sweep. Defaults to
    /// `b_α = 1/s` and `ω_A = 1 rad/s`, which leaves `σ` unchanged.
    #[serde(default)]
    pub laser: Option<LaserNoiseSpec>,
}

/// A probe given by name or by explicit circuit angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProtocolSpec {
    Named(NamedProtocol),
    Params(CircuitParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedProtocol {
    Css,
    Ghz,
}

impl ProtocolSpec {
    pub fn params(&self, n: usize) -> CircuitParams {
        match self {
            ProtocolSpec::Named(NamedProtocol::Css) => named::css(),
            ProtocolSpec::Named(NamedProtocol::Ghz) => named::ghz(n),
            ProtocolSpec::Params(p) => p.clone(),
        }
    }
}

fn default_wigner_grid() -> [usize; 2] {
    [64, 128]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerSpec {
    #[serde(rename = "N")]
    pub n: usize,
    pub protocol: ProtocolSpec,
    /// Polar and azimuthal grid sizes.
    #[serde(default = "default_wigner_grid")]
    pub grid: [usize; 2],
}

fn default_bound_templates() -> Vec<Template> {
    vec![Template::new(0, 0)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    #[serde(rename = "N")]
    pub n: usize,
    pub delta_phi: Vec<f64>,
    #[serde(default = "default_bound_templates")]
    pub templates: Vec<Template>,
    #[serde(default)]
    pub n_starts: Option<usize>,
}

fn default_poi_iters() -> usize {
    200
}

fn default_poi_tol() -> f64 {
    1e-12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoiSpec {
    #[serde(rename = "N")]
    pub n: usize,
    pub delta_phi: Vec<f64>,
    #[serde(default = "default_poi_iters")]
    pub max_iters: usize,
    #[serde(default = "default_poi_tol")]
    pub tol: f64,
}

pub(crate) fn check_atoms(n: usize, max: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidAtomNumber("N must be at least 1".into()));
    }
    if n > max {
        return Err(Error::MemoryCap(format!("N = {n} exceeds the limit of {max}")));
    }
    Ok(())
}

pub(crate) fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("'{name}' grid is empty")));
    }
    if let Some(x) = grid.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::Config(format!("'{name}' values must be positive and finite, got {x}")));
    }
    Ok(())
}

fn check_templates(templates: &[Template]) -> Result<()> {
    if templates.is_empty() {
        return Err(Error::Config("no templates given".into()));
    }
    Ok(())
}

fn check_starts(n_starts: Option<usize>) -> Result<()> {
    if n_starts == Some(0) {
        return Err(Error::Config("n_starts must be at least 1".into()));
    }
    Ok(())
}

/// Particle number of a collective or finite-range configuration.
fn resolve_atoms(n: Option<usize>, geometry: &Option<GeometrySpec>, noise: &Option<Dephasing>) -> Result<usize> {
    match geometry {
        Some(g) => {
            if noise.is_some() {
                return Err(Error::Config("dephasing is not supported with a finite-range geometry".into()));
            }
            let atoms = g.build()?.atoms();
            check_atoms(atoms, DEFAULT_ATOM_CAP)?;
            if let Some(n) = n.filter(|&n| n != atoms) {
                return Err(Error::Config(format!("N = {n} but the geometry holds {atoms} atoms")));
            }
            Ok(atoms)
        }
        None => {
            let n = n.ok_or_else(|| Error::Config("'N' is required without a geometry".into()))?;
            check_atoms(n, MAX_COLLECTIVE_ATOMS)?;
            if let Some(d) = noise {
                d.validate()?;
            }
            Ok(n)
        }
    }
}

impl OptimizeSpec {
    pub fn atoms(&self) -> Result<usize> {
        resolve_atoms(self.n, &self.geometry, &self.noise)
    }
}

impl SweepSpec {
    pub fn atoms(&self) -> Result<usize> {
        resolve_atoms(self.n, &self.geometry, &self.noise)
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        // a manifest carries the configuration that produced it
        let value = match value.get("config") {
            Some(inner) if value.get("files").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every mode-specific requirement before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        match &self.mode {
            Mode::Optimize(s) => {
                s.atoms()?;
                check_grid("delta_phi", &[s.delta_phi])?;
                check_starts(s.n_starts)
            }
            Mode::Sweep(s) => {
                check_grid("delta_phi", &s.delta_phi)?;
                check_templates(&s.templates)?;
                s.atoms()?;
                check_starts(s.n_starts)
            }
            Mode::Clock(s) => {
                check_atoms(s.n, usize::MAX)?;
                check_grid("bT", &s.bt)?;
                if let Some(servo) = &s.servo {
                    check_atoms(s.n, MAX_COLLECTIVE_ATOMS)?;
                    if let Some(l) = &servo.laser {
                        if l.alpha != s.alpha {
                            return Err(Error::Config("servo laser alpha differs from the sweep alpha".into()));
                        }
                        if !(l.b_alpha > 0.0) {
                            return Err(Error::Config("servo laser needs a positive b_alpha".into()));
                        }
                    }
                    for (i, _) in s.bt.iter().enumerate() {
                        runners::servo_config(s, servo, i, self.seed)?.validate()?;
                    }
                }
                Ok(())
            }
            Mode::Wigner(s) => {
                check_atoms(s.n, MAX_COLLECTIVE_ATOMS)?;
                if s.grid[0] < 2 || s.grid[1] < 1 {
                    return Err(Error::Config("wigner grid needs at least 2 × 1 points".into()));
                }
                s.protocol.params(s.n).validate()
            }
            Mode::Bounds(s) => {
                check_atoms(s.n, MAX_COLLECTIVE_ATOMS)?;
                check_grid("delta_phi", &s.delta_phi)?;
                check_templates(&s.templates)?;
                check_starts(s.n_starts)
            }
            Mode::Poi(s) => {
                check_atoms(s.n, MAX_COLLECTIVE_ATOMS)?;
                check_grid("delta_phi", &s.delta_phi)
            }
            Mode::Figure(s) => s.validate(),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(&serde_json::to_vec(self)?))
    }

    /// Validates and runs, returning every output file in memory.
    pub fn run(&self) -> Result<Bundle> {
        self.validate()?;
        let hash = self.hash()?;
        let ctx = runners::Context {
            seed: self.seed,
            hash: &hash,
        };
        match &self.mode {
            Mode::Optimize(s) => runners::run_optimize(&ctx, s),
            Mode::Sweep(s) => runners::run_sweep(&ctx, s),
            Mode::Clock(s) => runners::run_clock(&ctx, s),
            Mode::Wigner(s) => runners::run_wigner(&ctx, s),
            Mode::Bounds(s) => runners::run_bounds(&ctx, s),
            Mode::Poi(s) => runners::run_poi(&ctx, s),
            Mode::Figure(s) => figures::figure_bundle(&ctx, s),
        }
    }
}

impl fmt::Display for FigureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureName::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::UnsupportedFigure(s.to_string()))
    }
}
