//! The asymptotic equation `iγₜ = s·t⁻¹μ(ξ_v)γ|γ|²`, the scattering profile `W`
//! and the modified wave operator.
//!
//! `s ∈ {+1, −1}` is the phase-sign convention (`s_dir`). With `i∂ₜu − A(D)u = Q`
//! and `Q(e^{iξx}) = μ(ξ)e^{iξx}` the dynamics select `s = +1`; campaigns still
//! resolve it from the data with [`resolve_sign`].

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dispersion::DispersionSymbol;
use crate::error::{Error, Result};
use crate::grid::{Grid, State, C64};
use crate::nonlinearity::{calibrate_diagonal, CubicSymbol};
use crate::solver::{evolve, Controls};
use crate::wavepacket::{interpolate_uniform, PhaseField, ProfileRecord};

/// Default earliest time used for extraction.
pub const T_MIN: f64 = 100.0;

/// Default tolerated relative `W` drift per doubling of `t`.
pub const DRIFT_TOL: f64 = 0.02;

/// Norm growth that flags an unstable backward run.
pub const BACKWARD_GROWTH_LIMIT: f64 = 10.0;

/// `μ(ξ)` by linear interpolation between the two neighboring retained grid frequencies.
pub fn coefficient_at(q: &CubicSymbol, grid: &Grid, xi: f64) -> Result<f64> {
    let k = xi / grid.dxi();
    let (k0, w) = (k.floor(), k - k.floor());
    let m0 = calibrate_diagonal(q, grid, k0 * grid.dxi())?;
    if w < 1e-12 {
        return Ok(m0);
    }
    let m1 = calibrate_diagonal(q, grid, (k0 + 1.0) * grid.dxi())?;
    Ok((1.0 - w) * m0 + w * m1)
}

/// `μ(ξ_v)` for every `v` of the grid.
pub fn coefficient_table(q: &CubicSymbol, sym: &DispersionSymbol, grid: &Grid, v_grid: &[f64]) -> Result<Vec<f64>> {
    if let crate::nonlinearity::CubicKind::Constant(q0) = q.kind {
        return Ok(vec![q0; v_grid.len()]);
    }
    v_grid
        .iter()
        .map(|&v| coefficient_at(q, grid, sym.invert_group_velocity(v)?))
        .collect()
}

/// Profile values along rays together with their diagonal coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticState {
    pub t: f64,
    pub v: Vec<f64>,
    pub gamma: Vec<C64>,
    pub coeff: Vec<f64>,
}

/// Closed-form flow `γ ← γ·exp(−i·s·μ|γ|²·ln(t_target/t))`.
pub fn integrate_asymptotic(state: &AsymptoticState, t_target: f64, s_dir: f64) -> Result<AsymptoticState> {
    if !(state.t >= 1.0 && t_target >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "asymptotic flow needs t >= 1, got {} -> {t_target}",
            state.t
        )));
    }
    let ds = (t_target / state.t).ln();
    let gamma = state
        .gamma
        .iter()
        .zip(&state.coeff)
        .map(|(g, &mu)| g * C64::from_polar(1.0, -s_dir * mu * g.norm_sqr() * ds))
        .collect();
    Ok(AsymptoticState {
        t: t_target,
        v: state.v.clone(),
        gamma,
        coeff: state.coeff.clone(),
    })
}

/// `f(t,v) = γ̇ + i·s·μ·t⁻¹γ|γ|²` at the sample times of a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    /// `f[row][v]`, `None` where fewer than three valid neighbors exist.
    pub f: Vec<Vec<Option<C64>>>,
    /// `sup_v |f|` per row over the entries that exist.
    pub sup: Vec<f64>,
}

/// Derivative at `s[c]` of the least-squares quadratic through `(s, y)`.
fn quadratic_slope(s: &[f64], y: &[C64], c: f64) -> Option<C64> {
    let n = s.len();
    if n < 3 {
        return None;
    }
    // Normal equations for y ≈ c0 + c1·d + c2·d², d = s − c.
    let mut m = [[0.0; 3]; 3];
    let mut r = [C64::new(0.0, 0.0); 3];
    for (&si, &yi) in s.iter().zip(y) {
        let d = si - c;
        let p = [1.0, d, d * d];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += p[a] * p[b];
            }
            r[a] += yi * p[a];
        }
    }
    let re = solve3(m, [r[0].re, r[1].re, r[2].re])?;
    let im = solve3(m, [r[0].im, r[1].im, r[2].im])?;
    Some(C64::new(re[1], im[1]))
}

/// Residual of the asymptotic equation with `γ̇` from 5-point quadratic fits in `ln t`.
pub fn asymptotic_residual(record: &ProfileRecord, coeff: &[f64], s_dir: f64) -> Result<ResidualSeries> {
    let rows = &record.rows;
    if rows.len() < 3 {
        return Err(Error::InsufficientSamples(format!(
            "asymptotic residual needs at least 3 time samples, got {}",
            rows.len()
        )));
    }
    if coeff.len() != record.v.len() {
        return Err(Error::GridMismatch("one coefficient per velocity expected".into()));
    }
    let s: Vec<f64> = rows.iter().map(|r| r.t.ln()).collect();
    let mut f = Vec::with_capacity(rows.len());
    let mut sup = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let lo = i.saturating_sub(2).min(rows.len().saturating_sub(5));
        let hi = (lo + 5).min(rows.len());
        let mut line = Vec::with_capacity(record.v.len());
        let mut top = 0.0_f64;
        for (j, &mu) in coeff.iter().enumerate() {
            let idx: Vec<usize> = (lo..hi).filter(|&k| rows[k].valid[j]).collect();
            let value = if row.valid[j] && idx.len() >= 3 {
                let ss: Vec<f64> = idx.iter().map(|&k| s[k]).collect();
                let ys: Vec<C64> = idx.iter().map(|&k| rows[k].gamma[j]).collect();
                quadratic_slope(&ss, &ys, s[i]).map(|ds| {
                    let g = row.gamma[j];
                    ds / row.t + C64::new(0.0, s_dir * mu / row.t) * g * g.norm_sqr()
                })
            } else {
                None
            };
            if let Some(z) = value {
                top = top.max(z.norm());
            }
            line.push(value);
        }
        f.push(line);
        sup.push(top);
    }
    Ok(ResidualSeries {
        t: rows.iter().map(|r| r.t).collect(),
        v: record.v.clone(),
        f,
        sup,
    })
}

/// The extracted scattering profile `W(v)` with its stabilization diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringProfile {
    pub v: Vec<f64>,
    pub xi_v: Vec<f64>,
    pub w: Vec<C64>,
    pub coeff: Vec<f64>,
    pub s_dir: f64,
    /// Extraction time per `v` (`NaN` where no valid sample reached `t_min`).
    pub t_ref: Vec<f64>,
    /// `|W(t_ref) − W(t_ref/2)| / sup|W|` per `v`.
    pub drift: Vec<f64>,
}

impl ScatteringProfile {
    pub fn sup(&self) -> f64 {
        self.w.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_drift(&self) -> f64 {
        self.drift.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max)
    }

    /// CSV with header `v,xi_v,re_W,im_W,abs_W`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("v,xi_v,re_W,im_W,abs_W\n");
        for ((v, xi), w) in self.v.iter().zip(&self.xi_v).zip(&self.w) {
            out.push_str(&format!("{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n", v, xi, w.re, w.im, w.norm()));
        }
        out
    }
}

/// `W = γ·exp(+i·s·μ|γ|²·ln t)`.
pub fn undo_phase(gamma: C64, mu: f64, t: f64, s_dir: f64) -> C64 {
    gamma * C64::from_polar(1.0, s_dir * mu * gamma.norm_sqr() * t.ln())
}

/// Extraction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub t_min: f64,
    pub drift_tol: f64,
}

impl Default for ExtractOptions {
    fn default() -> ExtractOptions {
        ExtractOptions {
            t_min: T_MIN,
            drift_tol: DRIFT_TOL,
        }
    }
}

/// `W` from the latest valid sample at or after `t_min`, without the drift check.
pub fn extract_w_unchecked(
    record: &ProfileRecord,
    sym: &DispersionSymbol,
    coeff: &[f64],
    s_dir: f64,
    t_min: f64,
) -> Result<ScatteringProfile> {
    if coeff.len() != record.v.len() {
        return Err(Error::GridMismatch("one coefficient per velocity expected".into()));
    }
    let nv = record.v.len();
    let mut w = vec![C64::new(0.0, 0.0); nv];
    let mut t_ref = vec![f64::NAN; nv];
    let mut earlier = vec![None; nv];
    for j in 0..nv {
        let samples: Vec<(f64, C64)> = record
            .rows
            .iter()
            .filter(|r| r.valid[j] && r.t >= t_min * (1.0 - 1e-12))
            .map(|r| (r.t, r.gamma[j]))
            .collect();
        if let Some(&(t, g)) = samples.last() {
            w[j] = undo_phase(g, coeff[j], t, s_dir);
            t_ref[j] = t;
            earlier[j] = samples
                .iter()
                .rev()
                .find(|(tt, _)| *tt <= 0.5 * t * (1.0 + 1e-9))
                .map(|&(tt, gg)| undo_phase(gg, coeff[j], tt, s_dir));
        }
    }
    if t_ref.iter().all(|t| t.is_nan()) {
        return Err(Error::InsufficientSamples(format!("no valid profile sample at t >= {t_min}")));
    }
    let scale = w.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let drift = w
        .iter()
        .zip(&earlier)
        .map(|(a, b)| b.map_or(f64::NAN, |b| (a - b).norm() / scale))
        .collect();
    let xi_v = record
        .v
        .iter()
        .map(|&v| sym.invert_group_velocity(v).unwrap_or(f64::NAN))
        .collect();
    Ok(ScatteringProfile {
        v: record.v.clone(),
        xi_v,
        w,
        coeff: coeff.to_vec(),
        s_dir,
        t_ref,
        drift,
    })
}

/// [`extract_w_unchecked`] followed by the per-doubling drift check.
pub fn extract_w(
    record: &ProfileRecord,
    sym: &DispersionSymbol,
    coeff: &[f64],
    s_dir: f64,
    opts: &ExtractOptions,
) -> Result<ScatteringProfile> {
    let profile = extract_w_unchecked(record, sym, coeff, s_dir, opts.t_min)?;
    let drift = profile.max_drift();
    if drift > opts.drift_tol {
        return Err(Error::Drift { drift, tol: opts.drift_tol });
    }
    Ok(profile)
}

/// Unwrapped `arg γ` along a sequence of samples.
pub fn unwrapped_phase(gamma: &[C64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(gamma.len());
    for g in gamma {
        let p = g.arg();
        match out.last() {
            Some(&prev) => {
                let d = (p - prev + PI).rem_euclid(2.0 * PI) - PI;
                out.push(prev + d);
            }
            None => out.push(p),
        }
    }
    out
}

fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(&m);
    if !(det.abs() > 1e-300) {
        return None;
    }
    let mut x = [0.0; 3];
    for (c, xc) in x.iter_mut().enumerate() {
        let mut mc = m;
        for a in 0..3 {
            mc[a][c] = r[a];
        }
        *xc = det3(&mc) / det;
    }
    Some(x)
}

/// Rate `β` of `arg γ ≈ α + β ln t + c/t` by least squares.
///
/// The `1/t` term absorbs the next-order correction of the linear flow, which
/// otherwise biases the logarithmic rate over moderate time windows.
pub fn log_phase_rate(t: &[f64], phase: &[f64]) -> Option<f64> {
    if t.len() < 4 || t.len() != phase.len() {
        return None;
    }
    let mut m = [[0.0; 3]; 3];
    let mut r = [0.0; 3];
    for (&tt, &p) in t.iter().zip(phase) {
        let b = [1.0, tt.ln(), 1.0 / tt];
        for a in 0..3 {
            for c in 0..3 {
                m[a][c] += b[a] * b[c];
            }
            r[a] += b[a] * p;
        }
    }
    solve3(m, r).map(|x| x[1])
}

/// Outcome of the sign resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignResolution {
    pub s_dir: f64,
    /// `max_v |β_v + s·μ_v|γ_v|²|` for `s = +1` and `s = −1`.
    pub rate_plus: f64,
    pub rate_minus: f64,
    /// False when the two conventions are indistinguishable on this record.
    pub resolved: bool,
}

/// Picks the global sign for which the phase rate of `γ` over `t ≥ t_min` is
/// best explained by `−s·μ|γ|²`, using the velocities flagged in `core`.
pub fn resolve_sign(record: &ProfileRecord, coeff: &[f64], t_min: f64, core: &[bool]) -> SignResolution {
    let (mut plus, mut minus) = (0.0_f64, 0.0_f64);
    let mut used = 0;
    for j in 0..record.v.len() {
        if !core.get(j).copied().unwrap_or(false) {
            continue;
        }
        let rows: Vec<_> = record.rows.iter().filter(|r| r.t >= t_min * (1.0 - 1e-12) && r.valid[j]).collect();
        let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
        let g: Vec<C64> = rows.iter().map(|r| r.gamma[j]).collect();
        let Some(beta) = log_phase_rate(&t, &unwrapped_phase(&g)) else {
            continue;
        };
        let amp2 = g.iter().map(|z| z.norm_sqr()).sum::<f64>() / g.len() as f64;
        plus = plus.max((beta + coeff[j] * amp2).abs());
        minus = minus.max((beta - coeff[j] * amp2).abs());
        used += 1;
    }
    let s_dir = if plus <= minus { 1.0 } else { -1.0 };
    let (lo, hi) = (plus.min(minus), plus.max(minus));
    SignResolution {
        s_dir,
        rate_plus: plus,
        rate_minus: minus,
        resolved: used > 0 && hi > 2.0 * lo,
    }
}

/// Amplitude and phase statistics of `γ(·, v)` over a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub v: f64,
    pub core: bool,
    pub samples: usize,
    pub abs_mean: f64,
    /// Relative standard deviation of `|γ|`.
    pub amp_rsd: f64,
    /// `arg γ(t_last) − arg γ(t_first)`.
    pub drift_endpoint: f64,
    /// `β·ln(t_last/t_first)` from [`log_phase_rate`].
    pub drift_fit: f64,
    /// `−s·μ·mean|γ|²·ln(t_last/t_first)`.
    pub drift_predicted: f64,
    /// `max_t |arg W(t) − arg W(t_first)|` with `W = γ e^{isμ|γ|² ln t}`.
    pub corrected_drift: f64,
}

impl PhaseRow {
    pub fn mismatch(&self) -> f64 {
        (self.drift_fit - self.drift_predicted).abs() / self.drift_predicted.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn phase_statistics(
    record: &ProfileRecord,
    coeff: &[f64],
    s_dir: f64,
    window: (f64, f64),
    core: &[bool],
) -> Vec<PhaseRow> {
    let mut out = Vec::with_capacity(record.v.len());
    for (j, &v) in record.v.iter().enumerate() {
        let rows: Vec<_> = record.window(window.0, window.1).filter(|r| r.valid[j]).collect();
        if rows.len() < 2 {
            continue;
        }
        let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
        let g: Vec<C64> = rows.iter().map(|r| r.gamma[j]).collect();
        let amps: Vec<f64> = g.iter().map(|z| z.norm()).collect();
        let n = amps.len() as f64;
        let mean = amps.iter().sum::<f64>() / n;
        let sd = (amps.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
        let amp2 = amps.iter().map(|a| a * a).sum::<f64>() / n;
        let phase = unwrapped_phase(&g);
        let span = (t[t.len() - 1] / t[0]).ln();
        let w: Vec<C64> = g.iter().zip(&t).map(|(z, &tt)| undo_phase(*z, coeff[j], tt, s_dir)).collect();
        let wp = unwrapped_phase(&w);
        out.push(PhaseRow {
            v,
            core: core.get(j).copied().unwrap_or(false),
            samples: rows.len(),
            abs_mean: mean,
            amp_rsd: if mean > 0.0 { sd / mean } else { 0.0 },
            drift_endpoint: phase[phase.len() - 1] - phase[0],
            drift_fit: log_phase_rate(&t, &phase).map_or(f64::NAN, |b| b * span),
            drift_predicted: -s_dir * coeff[j] * amp2 * span,
            corrected_drift: wp.iter().map(|p| (p - wp[0]).abs()).fold(0.0, f64::max),
        });
    }
    out
}

/// `t^{−1/2}W(x/t)e^{−i·s·μ|W|²ln t}e^{itφ(x/t)}`, zero outside `tV` and outside the `v` grid.
pub fn asymptotic_solution(w: &ScatteringProfile, sym: &DispersionSymbol, grid: &Grid, t: f64) -> Result<Vec<C64>> {
    if !(t >= 1.0) {
        return Err(Error::InvalidParameter(format!("asymptotic solution needs t >= 1, got {t}")));
    }
    let mask = vec![true; w.v.len()];
    let coeff: Vec<C64> = w.coeff.iter().map(|&c| C64::new(c, 0.0)).collect();
    let field = PhaseField::new(sym, grid, t);
    let scale = t.powf(-0.5);
    Ok(grid
        .x()
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let v = x / t;
            match (field.phase[j], interpolate_uniform(&w.v, &w.w, &mask, v)) {
                (Some((p, _)), Some(wv)) => {
                    let mu = interpolate_uniform(&w.v, &coeff, &mask, v).map_or(0.0, |c| c.re);
                    wv * C64::from_polar(scale, p - w.s_dir * mu * wv.norm_sqr() * t.ln())
                }
                _ => C64::new(0.0, 0.0),
            }
        })
        .collect())
}

/// Data at `t = 1` whose solution follows `W` from `t_start` on.
pub fn modified_wave_operator(
    w: &ScatteringProfile,
    sym: &DispersionSymbol,
    q: &CubicSymbol,
    t_start: f64,
    grid: &Arc<Grid>,
    controls: &Controls,
) -> Result<State> {
    if !(t_start > 1.0) {
        return Err(Error::InvalidParameter(format!("T_start must exceed 1, got {t_start}")));
    }
    let values = asymptotic_solution(w, sym, grid, t_start)?;
    let start = State::from_values(grid.clone(), t_start, values)?;
    let input = start.l2();
    if input == 0.0 {
        return Ok(State::zero(grid.clone(), 1.0));
    }
    evolve(&start, 1.0, controls, sym, q, |s| {
        let factor = s.l2() / input;
        if factor > BACKWARD_GROWTH_LIMIT {
            Err(Error::BackwardGrowth { factor })
        } else {
            Ok(())
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::make_preset;
    use crate::wavepacket::{test_profile, ChiKind, ProfileRow};

    fn astate(t: f64) -> AsymptoticState {
        AsymptoticState {
            t,
            v: vec![-0.5, 0.0, 0.5],
            gamma: vec![C64::new(1.0, 0.0), C64::new(0.3, 0.4), C64::new(-0.2, 0.1)],
            coeff: vec![1.0, 2.0, -0.5],
        }
    }

    #[test]
    fn closed_form_flow() {
        let a = astate(3.0);
        let b = integrate_asymptotic(&a, 3.0 * std::f64::consts::E, 1.0).unwrap();
        assert!((b.gamma[0] - C64::from_polar(1.0, -1.0)).norm() < 1e-14);
        for (x, y) in a.gamma.iter().zip(&b.gamma) {
            assert!((x.norm() - y.norm()).abs() < 1e-15);
        }
        let back = integrate_asymptotic(&b, 3.0, 1.0).unwrap();
        for (x, y) in a.gamma.iter().zip(&back.gamma) {
            assert!((x - y).norm() < 1e-14);
        }
        let mut z = a.clone();
        z.coeff = vec![0.0; 3];
        assert_eq!(integrate_asymptotic(&z, 50.0, -1.0).unwrap().gamma, z.gamma);
        assert!(integrate_asymptotic(&a, 0.5, 1.0).is_err());
    }

    fn synthetic_record(s_dir: f64, w: &[C64], coeff: &[f64]) -> ProfileRecord {
        let v = vec![-0.5, 0.0, 0.5];
        let mut rec = ProfileRecord::new(ChiKind::Bump, v.clone());
        for k in 0..40 {
            let t = 10.0 * 1.15_f64.powi(k);
            let st = AsymptoticState { t: 1.0, v: v.clone(), gamma: w.to_vec(), coeff: coeff.to_vec() };
            let g = integrate_asymptotic(&st, t, s_dir).unwrap();
            rec.push(ProfileRow { t, v: v.clone(), gamma: g.gamma, valid: vec![true; 3] }).unwrap();
        }
        rec
    }

    #[test]
    fn extraction_inverts_the_flow() {
        let nls = make_preset("nls", &[]).unwrap();
        let w = [C64::new(0.2, 0.1), C64::new(0.0, 0.3), C64::new(0.1, 0.0)];
        let coeff = [1.0, 1.0, 2.0];
        for s in [1.0, -1.0] {
            let rec = synthetic_record(s, &w, &coeff);
            let p = extract_w(&rec, &nls, &coeff, s, &ExtractOptions::default()).unwrap();
            for (a, b) in p.w.iter().zip(&w) {
                assert!((a - b).norm() < 1e-10);
            }
            assert!(p.max_drift() < 1e-12);
            let r = resolve_sign(&rec, &coeff, T_MIN, &[true; 3]);
            assert_eq!(r.s_dir, s);
            assert!(r.resolved);
            assert!(extract_w(&rec, &nls, &coeff, -s, &ExtractOptions::default()).is_err());
        }
        let rec = synthetic_record(1.0, &w, &coeff);
        let p = extract_w(&rec, &nls, &[0.0; 3], 1.0, &ExtractOptions { t_min: T_MIN, drift_tol: 10.0 }).unwrap();
        let last = rec.rows.last().unwrap();
        assert_eq!(p.w, last.gamma);
    }

    #[test]
    fn residual_vanishes_on_exact_flow() {
        let w = [C64::new(0.5, 0.1), C64::new(0.0, 0.7), C64::new(0.4, 0.0)];
        let coeff = [1.0, -1.0, 2.0];
        let rec = synthetic_record(1.0, &w, &coeff);
        let f = asymptotic_residual(&rec, &coeff, 1.0).unwrap();
        let wrong = asymptotic_residual(&rec, &coeff, -1.0).unwrap();
        for (k, t) in f.t.iter().enumerate() {
            let scale = 1.0 / t;
            assert!(f.sup[k] < 5e-3 * scale, "{t}: {}", f.sup[k]);
            assert!(wrong.sup[k] > 0.1 * scale);
        }
        let mut short = rec.clone();
        short.rows.truncate(2);
        assert!(asymptotic_residual(&short, &coeff, 1.0).is_err());
    }

    #[test]
    fn phase_rate_ignores_the_inverse_time_term() {
        let t: Vec<f64> = (0..17).map(|k| 100.0 * 10f64.powf(k as f64 / 16.0)).collect();
        let g: Vec<C64> = t.iter().map(|&t| C64::from_polar(0.1, 0.3 - 0.02 * t.ln() + 1.5 / t + 7.0)).collect();
        let p = unwrapped_phase(&g);
        assert!(p.windows(2).all(|w| (w[1] - w[0]).abs() < 0.1));
        assert!((log_phase_rate(&t, &p).unwrap() + 0.02).abs() < 1e-10);
        assert!(log_phase_rate(&t[..3], &p[..3]).is_none());
    }

    #[test]
    fn phase_statistics_on_the_exact_flow() {
        let w = [C64::new(0.2, 0.1), C64::new(0.0, 0.3), C64::new(0.1, 0.0)];
        let coeff = [1.0, 1.0, 2.0];
        let rec = synthetic_record(1.0, &w, &coeff);
        let rows = phase_statistics(&rec, &coeff, 1.0, (100.0, 1000.0), &[true, false, true]);
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert!(r.amp_rsd < 1e-14);
            assert!(r.corrected_drift < 1e-12);
            assert!(r.mismatch() < 1e-9, "{r:?}");
            assert!((r.drift_endpoint - r.drift_predicted).abs() < 1e-12);
        }
        assert!(!rows[1].core);
    }

    #[test]
    fn quadratic_fit_is_exact_on_parabolas() {
        let s = [0.0, 0.3, 0.5, 0.9, 1.4];
        let y: Vec<C64> = s.iter().map(|&x| C64::new(1.0 + 2.0 * x - x * x, 3.0 * x * x)).collect();
        let d = quadratic_slope(&s, &y, 0.5).unwrap();
        assert!((d - C64::new(1.0, 3.0)).norm() < 1e-12);
    }

    #[test]
    fn asymptotic_solution_has_t_independent_mass_and_tests_back() {
        let nls = make_preset("nls", &[]).unwrap();
        let grid = Arc::new(Grid::new(8192, 1200.0).unwrap());
        let v: Vec<f64> = (0..121).map(|k| -1.2 + 0.02 * k as f64).collect();
        let w: Vec<C64> = v.iter().map(|&x| C64::new(0.1 * crate::solver::bump(x), 0.0)).collect();
        let prof = ScatteringProfile {
            xi_v: v.clone(),
            coeff: vec![1.0; v.len()],
            t_ref: vec![1.0; v.len()],
            drift: vec![0.0; v.len()],
            s_dir: 1.0,
            w,
            v,
        };
        let zero = ScatteringProfile { w: vec![C64::new(0.0, 0.0); prof.v.len()], ..prof.clone() };
        assert!(asymptotic_solution(&zero, &nls, &grid, 50.0).unwrap().iter().all(|z| z.norm() == 0.0));
        let target: f64 = (0..prof.v.len()).map(|k| prof.w[k].norm_sqr()).sum::<f64>() * 0.02;
        for &t in &[50.0, 200.0] {
            let u = asymptotic_solution(&prof, &nls, &grid, t).unwrap();
            assert!((grid.l2_sq(&u) - target).abs() < 1e-3 * target, "{t}");
            let s = State::from_values(grid.clone(), t, u).unwrap();
            let vv = vec![-0.5, 0.0, 0.3];
            let row = test_profile(&s, &nls, &vv, ChiKind::Bump).unwrap();
            for (k, &x) in vv.iter().enumerate() {
                let expect = undo_phase(C64::new(0.1 * crate::solver::bump(x), 0.0), 1.0, t, -1.0);
                assert!((row.gamma[k] - expect).norm() < 0.05 / t, "{t} {x}: {} {}", row.gamma[k], expect);
            }
        }
    }

    #[test]
    fn wave_operator_of_zero_is_zero() {
        let nls = make_preset("nls", &[]).unwrap();
        let grid = Arc::new(Grid::new(256, 100.0).unwrap());
        let prof = ScatteringProfile {
            v: vec![-1.0, 0.0, 1.0],
            xi_v: vec![-1.0, 0.0, 1.0],
            w: vec![C64::new(0.0, 0.0); 3],
            coeff: vec![1.0; 3],
            s_dir: 1.0,
            t_ref: vec![1.0; 3],
            drift: vec![0.0; 3],
        };
        let s = modified_wave_operator(&prof, &nls, &CubicSymbol::constant(1.0), 10.0, &grid, &Controls::default()).unwrap();
        assert_eq!(s.t, 1.0);
        assert_eq!(s.l2(), 0.0);
    }

    #[test]
    fn constant_coefficients_are_calibrated() {
        let grid = Grid::new(64, 20.0).unwrap();
        let q = CubicSymbol::dense_expr("2 + 0*xi1").unwrap();
        let m = coefficient_at(&q, &grid, 0.37).unwrap();
        assert!((m - 2.0).abs() < 1e-12);
        let nls = make_preset("nls", &[]).unwrap();
        let t = coefficient_table(&CubicSymbol::constant(-1.5), &nls, &grid, &[0.0, 1.0]).unwrap();
        assert_eq!(t, vec![-1.5, -1.5]);
    }
}
