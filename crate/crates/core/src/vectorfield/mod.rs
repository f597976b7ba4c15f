//! The vector field `L = x − tA′(D)`, its companion `L̃`, the `X` norm and the
//! linear vector-field inequalities as numeric diagnostics.

mod dyadic;

pub use dyadic::{build_dyadic, build_velocity_partition, lambda0, Block, DyadicPartition, SpatialCutoffs, VelocityPartition};

use serde::{Deserialize, Serialize};

use crate::dispersion::{DispersionSymbol, ExponentChoice};
use crate::error::{Error, Result};
use crate::grid::{State, C64, CONFINEMENT_TOL};

/// `Lu = x·u − t·A′(D)u` on the centered coordinate.
pub fn apply_l(state: &State, sym: &DispersionSymbol) -> Result<Vec<C64>> {
    state.check_confined(CONFINEMENT_TOL)?;
    Ok(apply_l_unchecked(state, sym))
}

/// [`apply_l`] without the confinement guard, for callers that check it themselves.
pub fn apply_l_unchecked(state: &State, sym: &DispersionSymbol) -> Vec<C64> {
    let grid = state.grid();
    let mut b: Vec<C64> = state
        .spectrum()
        .iter()
        .zip(grid.xi())
        .map(|(z, &k)| z * (state.t * sym.a1(k)))
        .collect();
    grid.to_values_in_place(&mut b);
    state
        .values()
        .iter()
        .zip(grid.x())
        .zip(&b)
        .map(|((u, &x), tb)| u * x - tb)
        .collect()
}

/// `L̃u = t(∂ₓu − iφ′(x/t)u)` on nodes with `x/t` inside `V`, zero elsewhere.
pub fn apply_ltilde(state: &State, sym: &DispersionSymbol) -> Result<(Vec<C64>, Vec<bool>)> {
    let t = state.t;
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("L~ needs t > 0, got {t}")));
    }
    let grid = state.grid();
    let du = grid.derivative(state.values());
    let mut mask = vec![false; grid.n()];
    let mut out = vec![C64::new(0.0, 0.0); grid.n()];
    let mut inside_mass = 0.0;
    for (j, &x) in grid.x().iter().enumerate() {
        if let Ok(xi) = sym.invert_group_velocity(x / t) {
            mask[j] = true;
            let u = state.values()[j];
            inside_mass += u.norm_sqr();
            out[j] = (du[j] - C64::new(0.0, xi) * u) * t;
        }
    }
    let total: f64 = state.values().iter().map(|z| z.norm_sqr()).sum();
    if !mask.iter().any(|&m| m) || (total > 0.0 && inside_mass <= 1e-30 * total) {
        return Err(Error::InvalidParameter(format!(
            "no mass inside the velocity cone t·V at t = {t}; L~ is undefined there"
        )));
    }
    Ok((out, mask))
}

/// `(‖u‖_{H^{s0}}, ‖Lu‖_{H^{s1}}, ‖u‖_X)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XNorm {
    pub hs0: f64,
    pub lhs1: f64,
    pub x: f64,
}

fn weighted_norm(spectrum: &[C64], xi: &[f64], s: f64) -> f64 {
    spectrum
        .iter()
        .zip(xi)
        .map(|(z, &k)| (1.0 + k * k).powf(s) * z.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

pub fn x_norm(state: &State, sym: &DispersionSymbol, exps: &ExponentChoice) -> Result<XNorm> {
    let lu = apply_l(state, sym)?;
    Ok(x_norm_with(state, &lu, exps))
}

/// [`x_norm`] reusing a precomputed `Lu`.
pub fn x_norm_with(state: &State, lu: &[C64], exps: &ExponentChoice) -> XNorm {
    let grid = state.grid();
    let hs0 = weighted_norm(state.spectrum(), grid.xi(), exps.s0);
    let lhs1 = weighted_norm(&grid.to_spectrum(lu), grid.xi(), exps.s1);
    XNorm {
        hs0,
        lhs1,
        x: (hs0 * hs0 + lhs1 * lhs1).sqrt(),
    }
}

/// One evaluation of `‖u‖²_{L∞} ≲ (tR)^{−1}(‖u‖‖Lu‖ + M‖u‖²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// `inf a″` over the band.
    pub r: f64,
    /// `sup |a‴| / R` over the band.
    pub m: f64,
    /// Fraction of spectral mass outside the band.
    pub leak: f64,
}

fn band_constants(sym: &DispersionSymbol, lo: f64, hi: f64) -> (f64, f64) {
    let (r, sup3) = sym.curvature_bounds(lo, hi);
    (r, sup3 / r)
}

fn mass_outside(state: &State, lo: f64, hi: f64) -> f64 {
    let total: f64 = state.spectrum().iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let out: f64 = state
        .spectrum()
        .iter()
        .zip(state.grid().xi())
        .filter(|(_, &k)| k < lo || k > hi)
        .map(|(z, _)| z.norm_sqr())
        .sum();
    out / total
}

pub fn klainerman_sobolev_check(state: &State, sym: &DispersionSymbol, band: (f64, f64)) -> Result<KsReport> {
    let (lo, hi) = band;
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!("empty band [{lo}, {hi}]")));
    }
    let (r, m) = band_constants(sym, lo, hi);
    let lu = apply_l(state, sym)?;
    let grid = state.grid();
    let nu = state.l2();
    let nlu = grid.l2(&lu);
    let sup = state.sup();
    let lhs = sup * sup;
    let rhs = (nu * nlu + m * nu * nu) / (state.t * r);
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(KsReport {
        t: state.t,
        lhs,
        rhs,
        ratio,
        r,
        m,
        leak: mass_outside(state, lo, hi),
    })
}

/// The elliptic tail bound beyond `x₀ + √(Rt)`, `x₀ = t·a′(ξ₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub t: f64,
    pub x0: f64,
    pub sup_ratio: f64,
}

pub fn elliptic_tail_check(state: &State, sym: &DispersionSymbol, xi0: f64) -> Result<TailReport> {
    let grid = state.grid();
    let t = state.t;
    let leak = mass_outside(state, f64::NEG_INFINITY, xi0);
    if leak > 1e-8 {
        return Err(Error::InvalidParameter(format!(
            "state not localized below xi0 = {xi0}: {leak:e} of the mass lies above"
        )));
    }
    let xi_lo = grid
        .xi()
        .iter()
        .zip(state.spectrum())
        .filter(|(_, z)| z.norm() > 0.0)
        .map(|(&k, _)| k)
        .fold(xi0, f64::min);
    let (r, m) = band_constants(sym, xi_lo.min(xi0 - grid.dxi()), xi0);
    let lu = apply_l(state, sym)?;
    let denom = (grid.l2(&lu) + m * state.l2()).powi(2);
    let x0 = t * sym.a1(xi0);
    let cut = x0 + (r * t).sqrt();
    let sup_ratio = if denom == 0.0 {
        0.0
    } else {
        grid.x()
            .iter()
            .zip(state.values())
            .filter(|(&x, _)| x > cut)
            .map(|(&x, u)| u.norm_sqr() * (x - x0) * r * t / denom)
            .fold(0.0, f64::max)
    };
    Ok(TailReport { t, x0, sup_ratio })
}
