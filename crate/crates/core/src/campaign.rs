//! Execution of a [`Scenario`]: evolution, diagnostics at output times, fits,
//! threshold checks and artifacts.
//!
//! Artifacts (all CSV files start with a header line):
//!
//! | file | columns |
//! |---|---|
//! | `norms.csv` | `t,l2,sup,hs0,lhs1,x_norm,boundary_mass,lu_l2,tc_l2,ks_ratio` |
//! | `profile.csv` | `t,v,re_gamma,im_gamma,abs_gamma,valid` |
//! | `residual.csv` | `t,f_sup` |
//! | `reconstruction.csv` | `t,r_l2,r_linf` |
//! | `phase.csv` | `v,core,samples,abs_mean,amp_rsd,drift_endpoint,drift_fit,drift_predicted,corrected_drift` |
//! | `w.csv` | `v,xi_v,re_W,im_W,abs_W` |
//! | `snapshots/snap_NNNN.csv` | `x,re_u,im_u` with a `.json` sidecar |
//!
//! plus `profile.json`, `w.json` and `summary.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{CheckKind, CheckSpec, DataShape, Scenario};
use crate::dispersion::DispersionSymbol;
use crate::error::{Error, Result};
use crate::fit::{fit_exponent, FitReport};
use crate::grid::{Grid, State, C64};
use crate::nonlinearity::{apply_correction, CubicSymbol};
use crate::scattering::{
    asymptotic_residual, coefficient_table, extract_w_unchecked, modified_wave_operator, phase_statistics,
    resolve_sign, PhaseRow, ResidualSeries, ScatteringProfile, SignResolution,
};
use crate::solver::{bump, evolve, make_data};
use crate::vectorfield::{apply_l_unchecked, build_dyadic, klainerman_sobolev_check, x_norm_with};
use crate::wavepacket::{reconstruct, test_profile_with, PhaseField, ProfileRecord};

/// Norms at one output time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub t: f64,
    pub l2: f64,
    pub sup: f64,
    pub hs0: f64,
    pub lhs1: f64,
    pub x_norm: f64,
    pub boundary_mass: f64,
    pub lu_l2: f64,
    pub tc_l2: Option<f64>,
    pub ks_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionRow {
    pub t: f64,
    pub r_l2: f64,
    pub r_linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: CheckKind,
    pub quantity: String,
    pub value: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub scenario: String,
    pub build: String,
    pub seed: u64,
    pub symbol: String,
    pub cubic: String,
    pub norms: Vec<NormRow>,
    pub profile: Option<ProfileRecord>,
    pub residual: Option<ResidualSeries>,
    pub reconstruction: Vec<ReconstructionRow>,
    pub scattering: Option<ScatteringProfile>,
    pub sign: Option<SignResolution>,
    pub phase: Vec<PhaseRow>,
    /// `sup_v |W_recovered − W_input| / eps` for scattering-profile data.
    pub roundtrip_error: Option<f64>,
    /// Scalar metrics at the end of the run, keyed by [`METRICS`] names.
    pub metrics: BTreeMap<String, f64>,
    pub fits: Vec<FitReport>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
    pub runtime_s: f64,
}

impl RunOutcome {
    /// A named time series.
    pub fn series(&self, name: &str) -> Option<(Vec<f64>, Vec<f64>)> {
        let from_norms = |f: &dyn Fn(&NormRow) -> Option<f64>| -> (Vec<f64>, Vec<f64>) {
            self.norms.iter().filter_map(|r| f(r).map(|v| (r.t, v))).unzip()
        };
        let l2_0 = self.norms.first().map_or(0.0, |r| r.l2);
        let out = match name {
            "l2" => from_norms(&|r| Some(r.l2)),
            "sup" => from_norms(&|r| Some(r.sup)),
            "hs0" => from_norms(&|r| Some(r.hs0)),
            "lhs1" => from_norms(&|r| Some(r.lhs1)),
            "x_norm" => from_norms(&|r| Some(r.x_norm)),
            "boundary_mass" => from_norms(&|r| Some(r.boundary_mass)),
            "lu_l2" => from_norms(&|r| Some(r.lu_l2)),
            "l2_drift" => from_norms(&|r| Some((r.l2 - l2_0).abs() / l2_0.max(f64::MIN_POSITIVE))),
            "tc_ratio" => from_norms(&|r| r.tc_l2.map(|c| c / r.lu_l2.max(f64::MIN_POSITIVE))),
            "ks_ratio" => from_norms(&|r| r.ks_ratio),
            "f_sup" => {
                let res = self.residual.as_ref()?;
                res.t.iter().zip(&res.sup).filter(|(_, &s)| s > 0.0).map(|(&t, &s)| (t, s)).unzip()
            }
            "r_l2" => self.reconstruction.iter().map(|r| (r.t, r.r_l2)).unzip(),
            "r_linf" => self.reconstruction.iter().map(|r| (r.t, r.r_linf)).unzip(),
            _ => return None,
        };
        Some(out)
    }

    /// A named scalar metric.
    pub fn scalar(&self, name: &str) -> Option<f64> {
        let core = || self.phase.iter().filter(|p| p.core);
        let max = |it: &mut dyn Iterator<Item = f64>| it.fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
        match name {
            "amp_rsd_max" => max(&mut core().map(|p| p.amp_rsd)),
            "corrected_phase_drift_max" => max(&mut core().map(|p| p.corrected_drift)),
            "phase_drift_mismatch_max" => max(&mut core().map(|p| p.mismatch())),
            "w_drift_max" => self.scattering.as_ref().map(|w| w.max_drift()),
            "roundtrip_error" => self.roundtrip_error,
            "l2_drift_max" => {
                let (_, d) = self.series("l2_drift")?;
                max(&mut d.into_iter())
            }
            "s_dir" => self.sign.map(|s| s.s_dir),
            "sign_resolved" => self.sign.map(|s| f64::from(u8::from(s.resolved))),
            _ => None,
        }
        .or_else(|| self.metrics.get(name).copied())
    }

    /// Reloads the series and metrics of a finished run from its artifact directory.
    pub fn load(dir: &Path) -> Result<RunOutcome> {
        let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json"))?)?;
        let text = |k: &str| summary[k].as_str().unwrap_or_default().to_string();
        let norms = read_csv(&dir.join("norms.csv"), 10)?
            .into_iter()
            .map(|r| NormRow {
                t: r[0].unwrap_or(f64::NAN),
                l2: r[1].unwrap_or(f64::NAN),
                sup: r[2].unwrap_or(f64::NAN),
                hs0: r[3].unwrap_or(f64::NAN),
                lhs1: r[4].unwrap_or(f64::NAN),
                x_norm: r[5].unwrap_or(f64::NAN),
                boundary_mass: r[6].unwrap_or(f64::NAN),
                lu_l2: r[7].unwrap_or(f64::NAN),
                tc_l2: r[8],
                ks_ratio: r[9],
            })
            .collect();
        let residual = match dir.join("residual.csv") {
            p if p.exists() => {
                let rows = read_csv(&p, 2)?;
                Some(ResidualSeries {
                    t: rows.iter().map(|r| r[0].unwrap_or(f64::NAN)).collect(),
                    v: Vec::new(),
                    f: Vec::new(),
                    sup: rows.iter().map(|r| r[1].unwrap_or(f64::NAN)).collect(),
                })
            }
            _ => None,
        };
        let reconstruction = match dir.join("reconstruction.csv") {
            p if p.exists() => read_csv(&p, 3)?
                .into_iter()
                .map(|r| ReconstructionRow {
                    t: r[0].unwrap_or(f64::NAN),
                    r_l2: r[1].unwrap_or(f64::NAN),
                    r_linf: r[2].unwrap_or(f64::NAN),
                })
                .collect(),
            _ => Vec::new(),
        };
        Ok(RunOutcome {
            scenario: text("scenario"),
            build: text("build"),
            seed: summary["seed"].as_u64().unwrap_or(0),
            symbol: text("symbol"),
            cubic: text("cubic"),
            norms,
            profile: None,
            residual,
            reconstruction,
            scattering: None,
            sign: None,
            phase: Vec::new(),
            roundtrip_error: None,
            metrics: serde_json::from_value(summary["metrics"].clone()).unwrap_or_default(),
            fits: Vec::new(),
            checks: Vec::new(),
            passed: false,
            runtime_s: summary["runtime_s"].as_f64().unwrap_or(0.0),
        })
    }
}

/// Names accepted by [`RunOutcome::scalar`].
pub const METRICS: [&str; 8] = [
    "amp_rsd_max",
    "corrected_phase_drift_max",
    "phase_drift_mismatch_max",
    "w_drift_max",
    "roundtrip_error",
    "l2_drift_max",
    "s_dir",
    "sign_resolved",
];

fn read_csv(path: &Path, cols: usize) -> Result<Vec<Vec<Option<f64>>>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Config(format!(
                "{}:{}: expected {cols} columns, found {}",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        let row = fields
            .iter()
            .map(|f| {
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>()
                        .map(Some)
                        .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), i + 1)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Re-evaluates the checks of `sc` against the artifacts of an earlier run.
pub fn refit(sc: &Scenario, out_dir: &Path) -> Result<RunOutcome> {
    let mut out = RunOutcome::load(&out_dir.join(&sc.name))?;
    finish_checks(sc, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Parent directory of the scenario's artifact directory; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Build identity embedded in the summary.
    pub build: String,
}

struct Model {
    sym: DispersionSymbol,
    q: CubicSymbol,
    grid: Arc<Grid>,
}

fn core_mask(sc: &Scenario, model: &Model, v: &[f64], w: Option<&ScatteringProfile>) -> Vec<bool> {
    let packets = sc.diagnostics.packets.as_ref();
    match packets.and_then(|p| p.core) {
        Some([lo, hi]) => v
            .iter()
            .map(|&v| model.sym.invert_group_velocity(v).is_ok_and(|xi| xi >= lo && xi <= hi))
            .collect(),
        None => {
            let w = match w {
                Some(w) => w,
                None => return vec![true; v.len()],
            };
            let top = w.sup();
            w.w.iter().map(|z| z.norm() >= 0.5 * top).collect()
        }
    }
}

/// `W(v) = eps·ψ(y)/ψ(0)` on `[lo, hi]`.
fn profile_input(eps: f64, lo: f64, hi: f64, v: f64) -> C64 {
    C64::new(eps * bump((2.0 * v - lo - hi) / (hi - lo)) / bump(0.0), 0.0)
}

fn initial_state(sc: &Scenario, model: &Model) -> Result<State> {
    let exps = sc.exponents.resolve(model.sym.sigma());
    let controls = sc.time.controls();
    match sc.data.shape {
        DataShape::ScatteringProfile { lo, hi, t_start } => {
            let nv = 801;
            let v: Vec<f64> = (0..nv).map(|k| lo + (hi - lo) * k as f64 / (nv - 1) as f64).collect();
            let coeff = coefficient_table(&model.q, &model.sym, &model.grid, &v)?;
            let w = ScatteringProfile {
                xi_v: v.iter().map(|&x| model.sym.invert_group_velocity(x).unwrap_or(f64::NAN)).collect(),
                w: v.iter().map(|&x| profile_input(sc.data.eps, lo, hi, x)).collect(),
                s_dir: 1.0,
                t_ref: vec![t_start; nv],
                drift: vec![0.0; nv],
                coeff,
                v,
            };
            modified_wave_operator(&w, &model.sym, &model.q, t_start, &model.grid, &controls)
        }
        ref shape => {
            let kind = shape.data_kind().expect("non-profile data");
            let (s0, _) = make_data(&kind, sc.data.eps, &model.grid, &model.sym, &exps)?;
            let s0 = State::from_spectrum(model.grid.clone(), sc.time.t0, s0.into_spectrum())?;
            if sc.time.t0 >= 1.0 {
                Ok(s0)
            } else {
                evolve(&s0, 1.0, &controls, &model.sym, &model.q, |_| Ok(()))
            }
        }
    }
}

/// Runs one scenario; artifacts are written (also on failure) when `opts.out_dir` is set.
pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> Result<RunOutcome> {
    sc.validate()?;
    let clock = Instant::now();
    let model = Model {
        sym: sc.build_symbol()?,
        q: sc.build_cubic()?,
        grid: Arc::new(sc.build_grid()?),
    };
    let dir = opts.out_dir.as_ref().map(|d| d.join(&sc.name));
    if let Some(d) = &dir {
        fs::create_dir_all(d)?;
        fs::write(d.join("scenario.toml"), sc.to_toml()?)?;
        if sc.diagnostics.snapshots {
            fs::create_dir_all(d.join("snapshots"))?;
        }
    }
    let mut out = RunOutcome {
        scenario: sc.name.clone(),
        build: opts.build.clone(),
        seed: sc.seed,
        symbol: model.sym.name().to_string(),
        cubic: model.q.label().to_string(),
        norms: Vec::new(),
        profile: None,
        residual: None,
        reconstruction: Vec::new(),
        scattering: None,
        sign: None,
        phase: Vec::new(),
        roundtrip_error: None,
        metrics: BTreeMap::new(),
        fits: Vec::new(),
        checks: Vec::new(),
        passed: false,
        runtime_s: 0.0,
    };
    let result = evolve_and_observe(sc, &model, dir.as_deref(), &mut out).and_then(|_| analyse(sc, &model, &mut out));
    out.runtime_s = clock.elapsed().as_secs_f64();
    if let Some(d) = &dir {
        write_artifacts(d, &out, result.as_ref().err())?;
    }
    result.map(|_| out)
}

fn evolve_and_observe(sc: &Scenario, model: &Model, dir: Option<&Path>, out: &mut RunOutcome) -> Result<()> {
    let exps = sc.exponents.resolve(model.sym.sigma());
    let start = initial_state(sc, model)?;
    let diag = &sc.diagnostics;
    let part = diag.correction_mu.map(|mu| build_dyadic(&model.grid, mu)).transpose()?;
    let packet_v = diag.packets.map(|p| p.velocities.points());
    let recon_v = diag.reconstruction.map(|r| r.points());
    let mut record = diag.packets.map(|p| ProfileRecord::new(p.chi, packet_v.clone().unwrap_or_default()));
    let chi = diag.packets.map(|p| p.chi).unwrap_or_default();
    let mut snap = 0usize;
    let controls = sc.time.controls();
    let observe = |s: &State| -> Result<()> {
        if diag.norms {
            let lu = apply_l_unchecked(s, &model.sym);
            let xn = x_norm_with(s, &lu, &exps);
            let tc_l2 = match &part {
                Some(p) => {
                    let c = apply_correction(&model.sym, &model.q, s.grid(), s.spectrum(), s.t, p)?;
                    Some(c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
                }
                None => None,
            };
            let ks_ratio = match diag.ks_band {
                Some([lo, hi]) => Some(klainerman_sobolev_check(s, &model.sym, (lo, hi))?.ratio),
                None => None,
            };
            out.norms.push(NormRow {
                t: s.t,
                l2: s.l2(),
                sup: s.sup(),
                hs0: xn.hs0,
                lhs1: xn.lhs1,
                x_norm: xn.x,
                boundary_mass: s.boundary_mass(),
                lu_l2: s.grid().l2(&lu),
                tc_l2,
                ks_ratio,
            });
        }
        let field = (record.is_some() || recon_v.is_some()).then(|| PhaseField::new(&model.sym, s.grid(), s.t));
        if let (Some(rec), Some(v), Some(f)) = (record.as_mut(), packet_v.as_ref(), field.as_ref()) {
            rec.push(test_profile_with(s, &model.sym, f, v, chi)?)?;
        }
        if let (Some(v), Some(f)) = (recon_v.as_ref(), field.as_ref()) {
            let row = test_profile_with(s, &model.sym, f, v, chi)?;
            let rec = reconstruct(&row, &model.sym, s.grid(), s.t, Some(s))?;
            out.reconstruction.push(ReconstructionRow {
                t: s.t,
                r_l2: rec.residual_l2.unwrap_or(f64::NAN),
                r_linf: rec.residual_linf.unwrap_or(f64::NAN),
            });
        }
        if let (true, Some(d)) = (diag.snapshots, dir) {
            write_snapshot(&d.join("snapshots"), snap, s)?;
        }
        snap += 1;
        Ok(())
    };
    let result = evolve(&start, sc.time.t_end, &controls, &model.sym, &model.q, observe);
    out.profile = record;
    result.map(|_| ())
}

fn analyse(sc: &Scenario, model: &Model, out: &mut RunOutcome) -> Result<()> {
    if let (Some(p), Some(record)) = (sc.diagnostics.packets, out.profile.as_ref()) {
        let coeff = coefficient_table(&model.q, &model.sym, &model.grid, &record.v)?;
        let core = core_mask(sc, model, &record.v, None);
        let sign = resolve_sign(record, &coeff, p.t_min, &core);
        let w = extract_w_unchecked(record, &model.sym, &coeff, sign.s_dir, p.t_min)?;
        let core = if p.core.is_some() { core } else { core_mask(sc, model, &record.v, Some(&w)) };
        out.phase = phase_statistics(record, &coeff, sign.s_dir, (p.phase_window[0], p.phase_window[1]), &core);
        out.residual = Some(asymptotic_residual(record, &coeff, sign.s_dir)?);
        if let DataShape::ScatteringProfile { lo, hi, .. } = sc.data.shape {
            let err = w
                .v
                .iter()
                .zip(&w.w)
                .zip(&w.t_ref)
                .filter(|(_, t)| t.is_finite())
                .map(|((&v, &wr), _)| (wr - profile_input(sc.data.eps, lo, hi, v)).norm())
                .fold(0.0, f64::max);
            out.roundtrip_error = Some(err / sc.data.eps.max(f64::MIN_POSITIVE));
        }
        out.sign = Some(sign);
        out.scattering = Some(w);
    }
    out.metrics = METRICS.iter().filter_map(|&m| out.scalar(m).map(|v| (m.to_string(), v))).collect();
    finish_checks(sc, out);
    Ok(())
}

fn finish_checks(sc: &Scenario, out: &mut RunOutcome) {
    out.checks = sc.checks.iter().map(|c| evaluate(c, out)).collect();
    out.fits = out
        .checks
        .iter()
        .zip(&sc.checks)
        .filter(|(r, _)| r.kind == CheckKind::Slope && r.error.is_none())
        .filter_map(|(_, c)| {
            let (t, v) = out.series(&c.quantity)?;
            let w = c.window?;
            fit_exponent(&c.quantity, &t, &v, (w[0], w[1])).ok()
        })
        .collect();
    out.passed = out.checks.iter().all(|c| c.passed);
}

fn evaluate(c: &CheckSpec, out: &RunOutcome) -> CheckResult {
    let value: Result<f64> = match c.kind {
        CheckKind::Slope | CheckKind::SeriesMax => match (out.series(&c.quantity), c.window) {
            (Some((t, v)), Some([lo, hi])) => {
                if c.kind == CheckKind::Slope {
                    fit_exponent(&c.quantity, &t, &v, (lo, hi)).map(|f| f.slope)
                } else {
                    t.iter()
                        .zip(&v)
                        .filter(|(&tt, _)| tt >= lo * (1.0 - 1e-9) && tt <= hi * (1.0 + 1e-9))
                        .map(|(_, &x)| x)
                        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
                        .ok_or_else(|| Error::InsufficientSamples(format!("{}: no samples in window", c.quantity)))
                }
            }
            _ => Err(Error::Config(format!("unknown or unrecorded series '{}'", c.quantity))),
        },
        CheckKind::Value => out
            .scalar(&c.quantity)
            .ok_or_else(|| Error::Config(format!("unknown or unrecorded metric '{}'", c.quantity))),
    };
    let (value, error) = match value {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let passed = value.is_some_and(|v| v.is_finite() && c.min.is_none_or(|m| v >= m) && c.max.is_none_or(|m| v <= m));
    CheckResult {
        name: c.name.clone(),
        kind: c.kind,
        quantity: c.quantity.clone(),
        value,
        min: c.min,
        max: c.max,
        passed,
        error,
    }
}

fn write_snapshot(dir: &Path, k: usize, s: &State) -> Result<()> {
    let mut csv = String::from("x,re_u,im_u\n");
    for (x, u) in s.grid().x().iter().zip(s.values()) {
        csv.push_str(&format!("{:.12e},{:.12e},{:.12e}\n", x, u.re, u.im));
    }
    fs::write(dir.join(format!("snap_{k:04}.csv")), csv)?;
    let meta = serde_json::json!({
        "t": s.t,
        "n": s.grid().n(),
        "lx": s.grid().lx(),
        "l2": s.l2(),
        "sup": s.sup(),
        "boundary_mass": s.boundary_mass(),
    });
    fs::write(dir.join(format!("snap_{k:04}.json")), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v:.12e}"))
}

fn write_artifacts(dir: &Path, out: &RunOutcome, failure: Option<&Error>) -> Result<()> {
    let mut norms = String::from("t,l2,sup,hs0,lhs1,x_norm,boundary_mass,lu_l2,tc_l2,ks_ratio\n");
    for r in &out.norms {
        norms.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}\n",
            r.t,
            r.l2,
            r.sup,
            r.hs0,
            r.lhs1,
            r.x_norm,
            r.boundary_mass,
            r.lu_l2,
            opt(r.tc_l2),
            opt(r.ks_ratio)
        ));
    }
    fs::write(dir.join("norms.csv"), norms)?;
    if let Some(p) = &out.profile {
        fs::write(dir.join("profile.csv"), p.to_csv())?;
        let meta = serde_json::json!({ "chi": p.chi, "v": p.v, "t": p.times() });
        fs::write(dir.join("profile.json"), serde_json::to_string_pretty(&meta)?)?;
    }
    if let Some(r) = &out.residual {
        let mut csv = String::from("t,f_sup\n");
        for (t, s) in r.t.iter().zip(&r.sup) {
            csv.push_str(&format!("{t:.12e},{s:.12e}\n"));
        }
        fs::write(dir.join("residual.csv"), csv)?;
    }
    if !out.reconstruction.is_empty() {
        let mut csv = String::from("t,r_l2,r_linf\n");
        for r in &out.reconstruction {
            csv.push_str(&format!("{:.12e},{:.12e},{:.12e}\n", r.t, r.r_l2, r.r_linf));
        }
        fs::write(dir.join("reconstruction.csv"), csv)?;
    }
    if !out.phase.is_empty() {
        let mut csv = String::from("v,core,samples,abs_mean,amp_rsd,drift_endpoint,drift_fit,drift_predicted,corrected_drift\n");
        for p in &out.phase {
            csv.push_str(&format!(
                "{:.12e},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                p.v,
                u8::from(p.core),
                p.samples,
                p.abs_mean,
                p.amp_rsd,
                p.drift_endpoint,
                p.drift_fit,
                p.drift_predicted,
                p.corrected_drift
            ));
        }
        fs::write(dir.join("phase.csv"), csv)?;
    }
    if let Some(w) = &out.scattering {
        fs::write(dir.join("w.csv"), w.to_csv())?;
        let t_ref: Vec<f64> = w.t_ref.iter().copied().filter(|t| t.is_finite()).collect();
        let meta = serde_json::json!({
            "coeff": w.coeff,
            "s_dir": w.s_dir,
            "sign": out.sign,
            "t_range": [t_ref.iter().copied().fold(f64::INFINITY, f64::min), t_ref.iter().copied().fold(0.0, f64::max)],
            "drift": w.drift.iter().map(|d| if d.is_finite() { Some(*d) } else { None }).collect::<Vec<_>>(),
            "max_drift": w.max_drift(),
        });
        fs::write(dir.join("w.json"), serde_json::to_string_pretty(&meta)?)?;
    }
    let summary = serde_json::json!({
        "scenario": out.scenario,
        "build": out.build,
        "seed": out.seed,
        "symbol": out.symbol,
        "cubic": out.cubic,
        "passed": out.passed && failure.is_none(),
        "failure": failure.map(|e| e.to_string()),
        "runtime_s": out.runtime_s,
        "samples": out.norms.len(),
        "sign": out.sign,
        "roundtrip_error": out.roundtrip_error,
        "metrics": out.metrics,
        "checks": out.checks,
        "fits": out.fits.iter().map(|f| serde_json::json!({
            "quantity": f.quantity,
            "window": [f.window.0, f.window.1],
            "slope": f.slope,
            "intercept": f.intercept,
            "r2": f.r2,
            "points": f.points(),
        })).collect::<Vec<_>>(),
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}
