//! Band-limited fundamental solution against its stationary-phase approximation.
//!
//! `K(t,x) = (1/2π) ∫ ψ(ξ) e^{i(xξ − t a(ξ))} dξ` with a smooth plateau cutoff `ψ`.
//! For `x = vt` with `v ∈ V` and `ψ(ξ_v) = 1` the leading term is
//! `(2πt a″(ξ_v))^{−1/2} e^{itφ(v)} e^{−iπ/4}`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dispersion::DispersionSymbol;
use crate::error::{Error, Result};
use crate::fit::{fit_exponent, FitReport};
use crate::grid::C64;

/// Plateau `|ξ − center| ≤ half` with Gevrey tapers of width `taper` on both sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub center: f64,
    pub half: f64,
    pub taper: f64,
}

fn smooth_step(y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if y >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / y).exp();
    let b = (-1.0 / (1.0 - y)).exp();
    a / (a + b)
}

impl Band {
    pub fn weight(&self, xi: f64) -> f64 {
        let d = (xi - self.center).abs() - self.half;
        1.0 - smooth_step(d / self.taper)
    }

    pub fn support(&self) -> (f64, f64) {
        let r = self.half + self.taper;
        (self.center - r, self.center + r)
    }

    /// A band whose plateau contains every `ξ_v` with room to spare.
    pub fn covering(xis: &[f64]) -> Band {
        let reach = xis.iter().map(|x| x.abs()).fold(0.0, f64::max);
        Band {
            center: 0.0,
            half: (2.0 * reach).max(3.0),
            taper: 4.0,
        }
    }
}

/// Trapezoid rule on the band support, doubled until the relative change is below `tol`.
pub fn band_limited_kernel(sym: &DispersionSymbol, band: &Band, t: f64, x: f64, tol: f64) -> Result<C64> {
    let (lo, hi) = band.support();
    let integrand = |xi: f64| C64::from_polar(band.weight(xi), x * xi - t * sym.a(xi));
    // Start from a resolution that samples the largest local frequency twice per period.
    let slope = (x.abs() + t * sym.a1(lo).abs().max(sym.a1(hi).abs())).max(1.0);
    let mut n = (((hi - lo) * slope / PI).ceil() as usize).next_power_of_two().max(1024);
    let sum = |n: usize| -> C64 {
        let h = (hi - lo) / n as f64;
        (1..n).map(|k| integrand(lo + k as f64 * h)).sum::<C64>() * h
    };
    let mut prev = sum(n);
    while n < 1 << 24 {
        // Midpoints of the current rule reuse all previous nodes.
        let h = (hi - lo) / n as f64;
        let mid: C64 = (0..n).map(|k| integrand(lo + (k as f64 + 0.5) * h)).sum::<C64>() * h;
        let next = (prev + mid) * 0.5;
        n *= 2;
        let scale = next.norm().max(1e-300);
        if (next - prev).norm() <= tol * scale || (next - prev).norm() < 1e-15 {
            return Ok(next / (2.0 * PI));
        }
        prev = next;
    }
    Err(Error::Quadrature(format!("trapezoid did not converge at t = {t}, x = {x}")))
}

/// Leading stationary-phase term, `None` outside `V`.
pub fn stationary_phase_formula(sym: &DispersionSymbol, t: f64, v: f64) -> Option<C64> {
    let lp = sym.legendre_phase(v).ok()?;
    let a2 = 1.0 / lp.d2phi;
    Some(C64::from_polar((2.0 * PI * t * a2).powf(-0.5), t * lp.phi - PI / 4.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryRow {
    pub t: f64,
    pub v: f64,
    pub in_cone: bool,
    pub direct: C64,
    /// Leading term; zero outside `V`.
    pub formula: C64,
    /// `|direct − formula| / |formula|` inside `V`, `|direct|` outside.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    pub symbol: String,
    pub band: Band,
    pub rows: Vec<StationaryRow>,
    /// Decay fit of the relative error per in-cone `v`.
    pub fits: Vec<FitReport>,
}

impl StationaryReport {
    /// CSV with header `t,v,in_cone,re_direct,im_direct,re_formula,im_formula,error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,v,in_cone,re_direct,im_direct,re_formula,im_formula,error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                r.t,
                r.v,
                u8::from(r.in_cone),
                r.direct.re,
                r.direct.im,
                r.formula.re,
                r.formula.im,
                r.error
            ));
        }
        out
    }
}

/// Quadrature of the band-limited kernel along rays against the leading term.
pub fn stationary_phase_compare(sym: &DispersionSymbol, t_list: &[f64], v_list: &[f64]) -> Result<StationaryReport> {
    let range = sym.v_range();
    let xis: Vec<f64> = v_list
        .iter()
        .filter(|&&v| range.contains_inner(v))
        .map(|&v| sym.invert_group_velocity(v))
        .collect::<Result<_>>()?;
    let band = Band::covering(&xis);
    let mut rows = Vec::with_capacity(t_list.len() * v_list.len());
    for &v in v_list {
        let in_cone = range.contains_inner(v);
        for &t in t_list {
            let direct = band_limited_kernel(sym, &band, t, v * t, 1e-10)?;
            let (formula, error) = match stationary_phase_formula(sym, t, v).filter(|_| in_cone) {
                Some(f) => (f, (direct - f).norm() / f.norm()),
                None => (C64::new(0.0, 0.0), direct.norm()),
            };
            rows.push(StationaryRow { t, v, in_cone, direct, formula, error });
        }
    }
    let mut fits = Vec::new();
    if t_list.len() >= 5 {
        let (lo, hi) = t_list.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &t| (a.min(t), b.max(t)));
        for &v in v_list.iter().filter(|&&v| range.contains_inner(v)) {
            let (ts, es): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.v == v).map(|r| (r.t, r.error)).unzip();
            fits.push(fit_exponent(&format!("stationary_phase_error(v={v})"), &ts, &es, (lo, hi))?);
        }
    }
    Ok(StationaryReport {
        symbol: sym.name().to_string(),
        band,
        rows,
        fits,
    })
}
