//! Scenario files (TOML, versioned schema, unknown keys rejected).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dispersion::{choose_exponents, make_preset, DispersionSymbol, ExponentChoice};
use crate::error::{Error, Result};
use crate::grid::{Grid, CONFINEMENT_TOL};
use crate::nonlinearity::{CubicSymbol, SeparableTerm};
use crate::scattering::{DRIFT_TOL, T_MIN};
use crate::solver::{Controls, DataKind};
use crate::wavepacket::ChiKind;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub symbol: SymbolSpec,
    #[serde(default)]
    pub cubic: CubicSpec,
    pub data: DataSpec,
    pub grid: GridSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub exponents: ExponentSpec,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckSpec>,
}

/// A preset by name, or a tabulated symbol from a CSV file with columns `xi,a,a1,a2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CubicSpec {
    #[default]
    Zero,
    Constant {
        q0: f64,
    },
    /// Real symbol given as an expression in `xi1, xi2, xi3`.
    Dense {
        expr: String,
    },
    /// Sum of products `ν₁(ξ₁)ν₂(ξ₂)ν₃(ξ₃)ν₄(ξ)`, each factor an expression in `xi`.
    Separable {
        terms: Vec<[String; 4]>,
        #[serde(default = "yes")]
        real_on_diagonal: bool,
    },
}

fn yes() -> bool {
    true
}

/// Initial data: `shape` is scaled so that `‖u₀‖_X = eps`, except for
/// `scattering_profile`, where `eps = sup|W|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub eps: f64,
    pub shape: DataShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataShape {
    Gaussian {
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        k0: f64,
    },
    FrequencyLocalizedBump {
        lo: f64,
        hi: f64,
        #[serde(default)]
        center: f64,
    },
    PacketSuperposition {
        packets: Vec<[f64; 4]>,
    },
    /// `W(v) = eps·ψ((2v−lo−hi)/(hi−lo))/ψ(0)`, realized at `t = 1` by the modified
    /// wave operator started at `t_start`.
    ScatteringProfile {
        lo: f64,
        hi: f64,
        t_start: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl DataShape {
    pub fn data_kind(&self) -> Option<DataKind> {
        match self.clone() {
            DataShape::Gaussian { center, width, k0 } => Some(DataKind::Gaussian { center, width, k0 }),
            DataShape::FrequencyLocalizedBump { lo, hi, center } => Some(DataKind::FrequencyLocalizedBump { lo, hi, center }),
            DataShape::PacketSuperposition { packets } => Some(DataKind::PacketSuperposition { packets }),
            DataShape::ScatteringProfile { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub lx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    /// Time at which the data is imposed (`0` or `1`).
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_tol")]
    pub confinement_tol: f64,
}

fn default_rho() -> f64 {
    1.15
}

fn default_tol() -> f64 {
    CONFINEMENT_TOL
}

impl TimeSpec {
    pub fn controls(&self) -> Controls {
        Controls {
            dt: self.dt,
            rho: self.rho,
            confinement_tol: self.confinement_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExponentSpec {
    Auto {
        #[serde(default = "default_delta")]
        delta: f64,
    },
    Explicit {
        s0: f64,
        s1: f64,
        #[serde(default = "default_delta")]
        delta: f64,
    },
}

fn default_delta() -> f64 {
    0.1
}

impl Default for ExponentSpec {
    fn default() -> ExponentSpec {
        ExponentSpec::Auto { delta: default_delta() }
    }
}

impl ExponentSpec {
    pub fn resolve(&self, sigma: f64) -> ExponentChoice {
        match *self {
            ExponentSpec::Auto { delta } => choose_exponents(sigma, delta),
            ExponentSpec::Explicit { s0, s1, delta } => ExponentChoice { s0, s1, delta },
        }
    }
}

/// Uniform velocity grid `v_min..=v_max` with `nv` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityGrid {
    pub v_min: f64,
    pub v_max: f64,
    pub nv: usize,
}

impl VelocityGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.nv == 1 {
            return vec![self.v_min];
        }
        let h = (self.v_max - self.v_min) / (self.nv - 1) as f64;
        (0..self.nv).map(|k| self.v_min + h * k as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    pub velocities: VelocityGrid,
    #[serde(default)]
    pub chi: ChiKind,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_drift_tol")]
    pub drift_tol: f64,
    /// Frequency interval whose velocities form the core of the phase checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core: Option<[f64; 2]>,
    /// Window of the amplitude and phase statistics.
    #[serde(default = "default_phase_window")]
    pub phase_window: [f64; 2],
}

fn default_t_min() -> f64 {
    T_MIN
}

fn default_drift_tol() -> f64 {
    DRIFT_TOL
}

fn default_phase_window() -> [f64; 2] {
    [100.0, 1000.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    #[serde(default = "yes")]
    pub norms: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packets: Option<PacketSpec>,
    /// Velocity grid used to reconstruct `u` from `γ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstruction: Option<VelocityGrid>,
    /// Track `‖tC(u,ū,u)‖` against `‖Lu‖` with this dyadic ratio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction_mu: Option<f64>,
    /// Frequency band of the Klainerman–Sobolev ratio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks_band: Option<[f64; 2]>,
    #[serde(default)]
    pub snapshots: bool,
}

impl Default for Diagnostics {
    fn default() -> Diagnostics {
        Diagnostics {
            norms: true,
            packets: None,
            reconstruction: None,
            correction_mu: None,
            ks_band: None,
            snapshots: false,
        }
    }
}

/// One pass/fail threshold on a recorded series or scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub name: String,
    pub kind: CheckKind,
    /// Series (for `slope` and `series_max`) or scalar metric (for `value`).
    pub quantity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Log-log slope of a series over the window.
    Slope,
    /// Largest value of a series over the window.
    SeriesMax,
    /// A scalar metric of the run.
    Value,
}

impl Scenario {
    pub fn from_toml(src: &str) -> Result<Scenario> {
        let sc: Scenario = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: &Path) -> Result<Scenario> {
        let src = std::fs::read_to_string(path)?;
        Scenario::from_toml(&src).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scenario '{}': {m}", self.name)));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name must be a nonempty file-name component".into());
        }
        match (&self.symbol.preset, &self.symbol.table) {
            (Some(_), None) => {
                if self.symbol.sigma.is_some() {
                    return bad("sigma is fixed by the preset".into());
                }
            }
            (None, Some(_)) => {
                if self.symbol.sigma.is_none() || !self.symbol.params.is_empty() {
                    return bad("a tabulated symbol needs sigma and no params".into());
                }
            }
            _ => return bad("give exactly one of symbol.preset and symbol.table".into()),
        }
        if !self.grid.n.is_power_of_two() || self.grid.n < 8 {
            return bad(format!("grid.n = {} must be a power of two >= 8", self.grid.n));
        }
        if !(self.grid.lx > 0.0) {
            return bad(format!("grid.lx = {} must be positive", self.grid.lx));
        }
        let t = &self.time;
        if !(t.t0 >= 0.0 && t.t_end > t.t0.max(1.0)) {
            return bad(format!("need 0 <= t0 and t_end > max(t0, 1), got t0 = {}, t_end = {}", t.t0, t.t_end));
        }
        if !(t.dt > 0.0) || !(t.rho > 1.0) || !(t.confinement_tol > 0.0) {
            return bad("time.dt and time.confinement_tol must be positive and time.rho > 1".into());
        }
        if !(self.data.eps >= 0.0) {
            return bad(format!("data.eps = {} must be nonnegative", self.data.eps));
        }
        if let DataShape::ScatteringProfile { lo, hi, t_start } = self.data.shape {
            if !(hi > lo) || !(t_start > 1.0) || t.t0 != 1.0 {
                return bad("scattering_profile needs hi > lo, t_start > 1 and time.t0 = 1".into());
            }
            if self.diagnostics.packets.is_none() {
                return bad("scattering_profile data needs diagnostics.packets to recover W".into());
            }
        }
        if let Some(p) = &self.diagnostics.packets {
            if p.velocities.nv < 2 || !(p.velocities.v_max > p.velocities.v_min) {
                return bad("diagnostics.packets.velocities needs nv >= 2 and v_max > v_min".into());
            }
        }
        if let Some(r) = &self.diagnostics.reconstruction {
            if r.nv < 4 || !(r.v_max > r.v_min) {
                return bad("diagnostics.reconstruction needs nv >= 4 and v_max > v_min".into());
            }
        }
        for c in &self.checks {
            if c.min.is_none() && c.max.is_none() {
                return bad(format!("check '{}' sets neither min nor max", c.name));
            }
            if c.kind != CheckKind::Value && c.window.is_none() {
                return bad(format!("check '{}' needs a window", c.name));
            }
        }
        Ok(())
    }

    pub fn build_symbol(&self) -> Result<DispersionSymbol> {
        match (&self.symbol.preset, &self.symbol.table) {
            (Some(name), _) => make_preset(name, &self.symbol.params),
            (None, Some(path)) => {
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("tabulated");
                DispersionSymbol::from_table_file(name, self.symbol.sigma.unwrap_or(0.0), path)
            }
            (None, None) => Err(Error::Config("no symbol given".into())),
        }
    }

    pub fn build_cubic(&self) -> Result<CubicSymbol> {
        match &self.cubic {
            CubicSpec::Zero => Ok(CubicSymbol::zero()),
            CubicSpec::Constant { q0 } => Ok(CubicSymbol::constant(*q0)),
            CubicSpec::Dense { expr } => CubicSymbol::dense_expr(expr),
            CubicSpec::Separable { terms, real_on_diagonal } => {
                let terms = terms
                    .iter()
                    .map(|t| SeparableTerm::from_exprs([&t[0], &t[1], &t[2], &t[3]]))
                    .collect::<Result<Vec<_>>>()?;
                Ok(CubicSymbol::separable(terms, *real_on_diagonal))
            }
        }
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::new(self.grid.n, self.grid.lx)
    }
}
