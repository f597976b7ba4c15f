//! Configuration and execution of the non-campaign check suites
//! (`linear-check`, `packet-test`, `division-check`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dispersim::campaign::CheckResult;
use dispersim::config::CheckKind;
use dispersim::stationary::stationary_phase_compare;
use dispersim::suites::{division_suite, fast_path_suite, gaussian_exactness, ks_suite, linear_decay, packet_suite};
use dispersim::wavepacket::ChiKind;
use dispersim::{make_preset, DispersionSymbol, Grid};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exactness: Option<Exactness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<Decay>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<Stationary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector_field: Option<VectorField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packets: Option<Packets>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub division: Option<Division>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fast_path: Option<FastPath>,
}

/// Free Gaussian under the integrator against its closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exactness {
    pub n: usize,
    pub lx: f64,
    pub t_end: f64,
    pub dt: f64,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decay {
    pub symbols: Vec<String>,
    pub n: usize,
    pub lx: f64,
    pub width: f64,
    /// Per-symbol width overrides.
    #[serde(default)]
    pub widths: BTreeMap<String, f64>,
    pub window: [f64; 2],
    pub slope: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stationary {
    pub symbols: Vec<String>,
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    /// Time at which the relative error is bounded by `max_error`.
    pub t_check: f64,
    pub max_error: f64,
    pub max_slope: f64,
    /// Bound at every time for quadratic symbols, where the formula is exact.
    pub exact_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorField {
    pub symbols: Vec<String>,
    /// `(n, lx)` pairs; the first is the reference.
    pub grids: Vec<(usize, f64)>,
    pub t: Vec<f64>,
    pub width: f64,
    pub band: [f64; 2],
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Packets {
    pub symbols: Vec<String>,
    pub n: usize,
    pub lx: f64,
    pub v: f64,
    pub t: Vec<f64>,
    #[serde(default)]
    pub chi: ChiKind,
    pub slope: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Division {
    pub symbols: Vec<String>,
    pub samples: usize,
    pub range: f64,
    /// Minimal `|ξ₁−ξ₂|`, `|ξ₃−ξ₂|` for the off-diagonal comparison.
    pub gap: f64,
    pub max_quotient_gap: f64,
    pub max_diagonal: f64,
    pub max_identity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FastPath {
    pub n: usize,
    pub lx: f64,
    pub seeds: u64,
    pub max_gap: f64,
}

/// Which sections a subcommand executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteKind {
    Linear,
    Packets,
    Division,
}

impl SuiteConfig {
    pub fn from_file(path: &Path) -> Result<SuiteConfig> {
        let src = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: SuiteConfig = toml::from_str(&src).with_context(|| format!("parsing {}", path.display()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!("{}: schema_version {} is not supported (expected {SCHEMA_VERSION})", path.display(), cfg.schema_version);
        }
        if cfg.name.is_empty() || cfg.name.contains(['/', '\\']) {
            bail!("{}: name must be a non-empty path component", path.display());
        }
        Ok(cfg)
    }

    fn has_sections(&self, kind: SuiteKind) -> bool {
        match kind {
            SuiteKind::Linear => {
                self.exactness.is_some() || self.decay.is_some() || self.stationary.is_some() || self.vector_field.is_some()
            }
            SuiteKind::Packets => self.packets.is_some(),
            SuiteKind::Division => self.division.is_some() || self.fast_path.is_some(),
        }
    }
}

fn presets(names: &[String]) -> Result<Vec<DispersionSymbol>> {
    names.iter().map(|n| make_preset(n, &[]).map_err(Into::into)).collect()
}

fn check(name: String, kind: CheckKind, quantity: &str, value: f64, min: Option<f64>, max: Option<f64>) -> CheckResult {
    let passed = value.is_finite() && min.is_none_or(|m| value >= m) && max.is_none_or(|m| value <= m);
    CheckResult {
        name,
        kind,
        quantity: quantity.to_string(),
        value: Some(value),
        min,
        max,
        passed,
        error: None,
    }
}

/// Results of one suite run: checks plus per-section detail for the summary.
#[derive(Debug, Default, Serialize)]
pub struct SuiteOutcome {
    pub checks: Vec<CheckResult>,
    pub details: BTreeMap<String, serde_json::Value>,
    pub csv: BTreeMap<String, String>,
}

pub fn run_suite(cfg: &SuiteConfig, kind: SuiteKind) -> Result<SuiteOutcome> {
    if !cfg.has_sections(kind) {
        bail!("config '{}' has no sections for this subcommand", cfg.name);
    }
    let mut out = SuiteOutcome::default();
    match kind {
        SuiteKind::Linear => linear(cfg, &mut out)?,
        SuiteKind::Packets => packets(cfg, &mut out)?,
        SuiteKind::Division => division(cfg, &mut out)?,
    }
    Ok(out)
}

fn linear(cfg: &SuiteConfig, out: &mut SuiteOutcome) -> Result<()> {
    if let Some(e) = &cfg.exactness {
        let nls = make_preset("nls", &[])?;
        let err = gaussian_exactness(&nls, e.n, e.lx, e.t_end, e.dt)?;
        out.checks.push(check("linear_exactness".into(), CheckKind::Value, "max_error", err, None, Some(e.max_error)));
    }
    if let Some(d) = &cfg.decay {
        let mut csv = String::from("symbol,width,slope,intercept,r2,boundary_mass\n");
        for sym in presets(&d.symbols)? {
            let width = d.widths.get(sym.name()).copied().unwrap_or(d.width);
            let rep = linear_decay(&sym, d.n, d.lx, width, (d.window[0], d.window[1]))?;
            csv.push_str(&format!(
                "{},{width},{:.12e},{:.12e},{:.12e},{:.3e}\n",
                sym.name(),
                rep.fit.slope,
                rep.fit.intercept,
                rep.fit.r2,
                rep.boundary_mass
            ));
            out.checks.push(check(
                format!("dispersive_decay[{}]", sym.name()),
                CheckKind::Slope,
                "sup",
                rep.fit.slope,
                Some(d.slope - d.tol),
                Some(d.slope + d.tol),
            ));
        }
        out.csv.insert("decay.csv".into(), csv);
    }
    if let Some(s) = &cfg.stationary {
        let mut csv = String::new();
        let mut fits = BTreeMap::new();
        for sym in presets(&s.symbols)? {
            let rep = stationary_phase_compare(&sym, &s.t, &s.v)?;
            let body = rep.to_csv();
            let mut lines = body.lines();
            if csv.is_empty() {
                csv.push_str("symbol,");
                csv.push_str(lines.next().unwrap_or_default());
                csv.push('\n');
            } else {
                lines.next();
            }
            for l in lines {
                csv.push_str(&format!("{},{l}\n", sym.name()));
            }
            let inside: Vec<_> = rep.rows.iter().filter(|r| r.in_cone).collect();
            if sym.is_quadratic() {
                let worst = inside.iter().map(|r| r.error).fold(0.0, f64::max);
                out.checks.push(check(
                    format!("stationary_phase_exact[{}]", sym.name()),
                    CheckKind::Value,
                    "relative_error_max",
                    worst,
                    None,
                    Some(s.exact_tol),
                ));
                continue;
            }
            let at = inside
                .iter()
                .filter(|r| (r.t - s.t_check).abs() <= 1e-9 * s.t_check)
                .map(|r| r.error)
                .fold(f64::NAN, f64::max);
            out.checks.push(check(
                format!("stationary_phase_error[{}]", sym.name()),
                CheckKind::Value,
                "relative_error_at_t_check",
                at,
                None,
                Some(s.max_error),
            ));
            for f in &rep.fits {
                out.checks.push(check(
                    format!("stationary_phase_decay[{}]/{}", sym.name(), f.quantity),
                    CheckKind::Slope,
                    "relative_error",
                    f.slope,
                    None,
                    Some(s.max_slope),
                ));
            }
            fits.insert(sym.name().to_string(), serde_json::to_value(&rep.fits)?);
        }
        out.csv.insert("stationary.csv".into(), csv);
        out.details.insert("stationary_fits".into(), serde_json::to_value(fits)?);
    }
    if let Some(v) = &cfg.vector_field {
        let rep = ks_suite(&presets(&v.symbols)?, &v.grids, &v.t, v.width, (v.band[0], v.band[1]))?;
        let mut csv = String::from("symbol,n,t,ratio,leak\n");
        for s in &rep.samples {
            csv.push_str(&format!("{},{},{:.12e},{:.12e},{:.3e}\n", s.symbol, s.n, s.t, s.ratio, s.leak));
        }
        out.csv.insert("vector_field.csv".into(), csv);
        out.details.insert("vector_field_constants".into(), serde_json::to_value(&rep.constants)?);
        out.checks.push(check(
            "vector_field_bound".into(),
            CheckKind::Value,
            "ratio_deviation_max",
            rep.max_deviation,
            None,
            Some(v.max_deviation),
        ));
    }
    Ok(())
}

fn packets(cfg: &SuiteConfig, out: &mut SuiteOutcome) -> Result<()> {
    let p = cfg.packets.as_ref().expect("checked by has_sections");
    let grid = Grid::new(p.n, p.lx)?;
    let mut csv = String::from("symbol,t,v,raw,structured,packet_norm,richardson\n");
    for sym in presets(&p.symbols)? {
        let rep = packet_suite(&sym, &grid, p.v, &p.t, p.chi)?;
        for r in &rep.rows {
            csv.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.3e}\n",
                sym.name(),
                r.t,
                r.v,
                r.raw,
                r.structured,
                r.packet_norm,
                r.richardson
            ));
        }
        out.checks.push(check(
            format!("packet_residual_scaling[{}]", sym.name()),
            CheckKind::Slope,
            "raw_over_packet_norm",
            rep.raw_fit.slope,
            Some(p.slope - p.tol),
            Some(p.slope + p.tol),
        ));
        let worst = rep.rows.iter().map(|r| r.structured / r.raw).fold(0.0, f64::max);
        out.checks.push(check(
            format!("packet_structured_below_raw[{}]", sym.name()),
            CheckKind::Value,
            "structured_over_raw_max",
            worst,
            None,
            Some(1.0 - f64::EPSILON),
        ));
    }
    out.csv.insert("packets.csv".into(), csv);
    Ok(())
}

fn division(cfg: &SuiteConfig, out: &mut SuiteOutcome) -> Result<()> {
    if let Some(d) = &cfg.division {
        let mut reports = BTreeMap::new();
        for sym in presets(&d.symbols)? {
            let r = division_suite(&sym, d.samples, d.range, d.gap, cfg.seed);
            let name = sym.name();
            out.checks.push(check(
                format!("division_factorized[{name}]"),
                CheckKind::Value,
                "factorized_vs_quotient",
                r.factorized_vs_quotient,
                None,
                Some(d.max_quotient_gap),
            ));
            out.checks.push(check(
                format!("division_diagonal[{name}]"),
                CheckKind::Value,
                "diagonal",
                r.diagonal,
                None,
                Some(d.max_diagonal),
            ));
            out.checks.push(check(
                format!("division_identity[{name}]"),
                CheckKind::Value,
                "identity",
                r.identity,
                None,
                Some(d.max_identity),
            ));
            reports.insert(name.to_string(), serde_json::to_value(r)?);
        }
        out.details.insert("division".into(), serde_json::to_value(reports)?);
    }
    if let Some(f) = &cfg.fast_path {
        let gap = fast_path_suite(f.n, f.lx, cfg.seed..cfg.seed + f.seeds)?;
        out.checks.push(check("fast_path_equivalence".into(), CheckKind::Value, "relative_gap_max", gap, None, Some(f.max_gap)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shipped(name: &str) -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
    }

    #[test]
    fn shipped_suites_parse() {
        let linear = SuiteConfig::from_file(&shipped("linear_suite.toml")).unwrap();
        assert!(linear.has_sections(SuiteKind::Linear) && !linear.has_sections(SuiteKind::Packets));
        assert_eq!(linear.decay.unwrap().widths.get("kdv_like"), Some(&2.0));
        let packets = SuiteConfig::from_file(&shipped("packets.toml")).unwrap();
        assert_eq!(packets.packets.unwrap().chi, ChiKind::Gaussian);
        assert!(SuiteConfig::from_file(&shipped("division.toml")).unwrap().has_sections(SuiteKind::Division));
    }

    #[test]
    fn unknown_keys_and_versions_are_rejected() {
        let dir = std::env::temp_dir().join(format!("dispersim-suite-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let bad = dir.join("bad.toml");
        std::fs::write(&bad, "schema_version = 1\nname = \"a\"\n[fast_path]\nn = 8\nlx = 1.0\nseeds = 1\nmax_gap = 1.0\nextra = 2\n").unwrap();
        assert!(format!("{:#}", SuiteConfig::from_file(&bad).unwrap_err()).contains("extra"));
        std::fs::write(&bad, "schema_version = 2\nname = \"a\"\n").unwrap();
        assert!(SuiteConfig::from_file(&bad).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn fast_path_section_runs() {
        let cfg = SuiteConfig {
            schema_version: 1,
            name: "t".into(),
            seed: 3,
            output_dir: None,
            exactness: None,
            decay: None,
            stationary: None,
            vector_field: None,
            packets: None,
            division: None,
            fast_path: Some(FastPath { n: 32, lx: 9.0, seeds: 2, max_gap: 1e-11 }),
        };
        let out = run_suite(&cfg, SuiteKind::Division).unwrap();
        assert_eq!(out.checks.len(), 1);
        assert!(out.checks[0].passed);
        assert!(run_suite(&cfg, SuiteKind::Linear).is_err());
    }
}
