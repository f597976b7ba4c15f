//! Testing wave packets `𝐮_v`, the profile `γ(t,v) = ⟨u, 𝐮_v⟩` and reconstruction.
//!
//! `𝐮_v = a″(ξ_v)^{−1/2} χ(y) e^{itφ(x/t)}` with `y = (x − vt)/δx`, `δx = t^{1/2} a″(ξ_v)^{1/2}`.
//! The pairing conjugates the packet, so `u = t^{−1/2} c e^{itφ(x/t)}` gives `γ = c`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dispersion::DispersionSymbol;
use crate::error::{Error, Result};
use crate::grid::{Grid, State, C64, CONFINEMENT_TOL};
use crate::vectorfield::apply_l_unchecked;

/// Envelope `χ` of the packet, normalized to unit integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChiKind {
    /// `c·e^{−1/(1−y²)}` on `[−1, 1]`.
    #[default]
    Bump,
    /// `(2π)^{−1/2} e^{−y²/2}`, truncated at `|y| = 8`.
    Gaussian,
}

fn bump_norm() -> f64 {
    static NORM: OnceLock<f64> = OnceLock::new();
    *NORM.get_or_init(|| {
        // Composite Simpson on a fine grid; the integrand is flat at ±1.
        let n = 200_000;
        let h = 2.0 / n as f64;
        let f = |y: f64| crate::solver::bump(y);
        let mut s = f(-1.0) + f(1.0);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(-1.0 + k as f64 * h);
        }
        s * h / 3.0
    })
}

impl ChiKind {
    pub fn support(self) -> f64 {
        match self {
            ChiKind::Bump => 1.0,
            ChiKind::Gaussian => 8.0,
        }
    }

    /// `(χ(y), χ′(y))`.
    pub fn eval(self, y: f64) -> (f64, f64) {
        match self {
            ChiKind::Bump => {
                if y.abs() >= 1.0 {
                    return (0.0, 0.0);
                }
                let d = 1.0 - y * y;
                let c = (-1.0 / d).exp() / bump_norm();
                (c, c * (-2.0 * y / (d * d)))
            }
            ChiKind::Gaussian => {
                if y.abs() >= 8.0 {
                    return (0.0, 0.0);
                }
                let c = (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt();
                (c, -y * c)
            }
        }
    }
}

/// `tφ(x_j/t)` and `ξ_{x_j/t}` per node, or `None` outside `tV`.
#[derive(Debug, Clone)]
pub struct PhaseField {
    pub t: f64,
    pub phase: Vec<Option<(f64, f64)>>,
}

impl PhaseField {
    pub fn new(sym: &DispersionSymbol, grid: &Grid, t: f64) -> PhaseField {
        let phase = grid
            .x()
            .iter()
            .map(|&x| sym.legendre_phase(x / t).ok().map(|lp| (t * lp.phi, lp.xi)))
            .collect();
        PhaseField { t, phase }
    }

    /// `e^{itφ(x_j/t)}` or zero outside `tV`.
    pub fn carrier(&self, j: usize) -> C64 {
        self.phase[j].map_or(C64::new(0.0, 0.0), |(p, _)| C64::from_polar(1.0, p))
    }
}

/// Cached dispersion data of the packet at velocity `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketGeometry {
    pub v: f64,
    pub t: f64,
    pub xi_v: f64,
    pub phi: f64,
    pub a2: f64,
    pub delta_x: f64,
}

impl PacketGeometry {
    pub fn new(sym: &DispersionSymbol, t: f64, v: f64) -> Result<PacketGeometry> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("packets need t > 0, got {t}")));
        }
        let lp = sym.legendre_phase(v)?;
        let a2 = 1.0 / lp.d2phi;
        Ok(PacketGeometry {
            v,
            t,
            xi_v: lp.xi,
            phi: lp.phi,
            a2,
            delta_x: (t * a2).sqrt(),
        })
    }

    /// Node index range `[lo, hi)` covering `|y| < support`.
    fn node_range(&self, grid: &Grid, support: f64) -> Result<(usize, usize)> {
        let (xa, xb) = (self.v * self.t - support * self.delta_x, self.v * self.t + support * self.delta_x);
        let limit = 0.5 * crate::grid::BOUNDARY_FRACTION * grid.lx();
        if xa <= -limit || xb >= limit {
            return Err(Error::InvalidParameter(format!(
                "packet support [{xa:.3}, {xb:.3}] escapes the confinement window |x| < {limit:.3}"
            )));
        }
        let x0 = grid.x()[0];
        let lo = (((xa - x0) / grid.dx()).floor().max(0.0)) as usize;
        let hi = ((((xb - x0) / grid.dx()).ceil() + 1.0) as usize).min(grid.n());
        Ok((lo, hi))
    }
}

/// A packet stored on the contiguous node range where its envelope is nonzero.
#[derive(Debug, Clone)]
pub struct WavePacket {
    pub geom: PacketGeometry,
    pub chi: ChiKind,
    pub start: usize,
    pub values: Vec<C64>,
}

impl WavePacket {
    /// Dense nodal values on the whole grid.
    pub fn to_field(&self, n: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); n];
        out[self.start..self.start + self.values.len()].copy_from_slice(&self.values);
        out
    }

    /// `⟨u, 𝐮_v⟩ = ∫ u·conj(𝐮_v) dx`.
    pub fn pair(&self, grid: &Grid, u: &[C64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (k, p) in self.values.iter().enumerate() {
            acc += u[self.start + k] * p.conj();
        }
        acc * grid.dx()
    }
}

/// Builds `g(y)·e^{itφ(x/t)}` on the packet support, with the envelope forced to
/// zero where `x/t ∉ V`.
fn modulated(
    grid: &Grid,
    field: &PhaseField,
    geom: &PacketGeometry,
    chi: ChiKind,
    envelope: impl Fn(f64, f64, f64) -> C64,
) -> Result<(usize, Vec<C64>)> {
    let (lo, hi) = geom.node_range(grid, chi.support())?;
    let values = (lo..hi)
        .map(|j| {
            let y = (grid.x()[j] - geom.v * geom.t) / geom.delta_x;
            let (c, dc) = chi.eval(y);
            if c == 0.0 && dc == 0.0 {
                return C64::new(0.0, 0.0);
            }
            envelope(y, c, dc) * field.carrier(j)
        })
        .collect();
    Ok((lo, values))
}

pub fn build_packet_with(
    sym: &DispersionSymbol,
    grid: &Grid,
    field: &PhaseField,
    v: f64,
    chi: ChiKind,
) -> Result<WavePacket> {
    let geom = PacketGeometry::new(sym, field.t, v)?;
    let amp = geom.a2.powf(-0.5);
    let (start, values) = modulated(grid, field, &geom, chi, |_, c, _| C64::new(amp * c, 0.0))?;
    Ok(WavePacket { geom, chi, start, values })
}

pub fn build_packet(sym: &DispersionSymbol, grid: &Grid, t: f64, v: f64, chi: ChiKind) -> Result<WavePacket> {
    if t < 1.0 {
        return Err(Error::InvalidParameter(format!("packets are built for t >= 1, got {t}")));
    }
    let field = PhaseField::new(sym, grid, t);
    build_packet_with(sym, grid, &field, v, chi)
}

/// `𝐮^I_v = −(i/(2a″))(χ′(y) + iyχ(y)) e^{itφ(x/t)}`.
fn packet_first_corrector(grid: &Grid, field: &PhaseField, geom: &PacketGeometry, chi: ChiKind) -> Result<Vec<C64>> {
    let scale = 1.0 / (2.0 * geom.a2);
    let (start, vals) = modulated(grid, field, geom, chi, |y, c, dc| C64::new(0.0, -scale) * C64::new(dc, y * c))?;
    let mut out = vec![C64::new(0.0, 0.0); grid.n()];
    out[start..start + vals.len()].copy_from_slice(&vals);
    Ok(out)
}

/// `𝐮^{II}_v = i a″^{−3/2} χ(y) e^{itφ(x/t)}`.
fn packet_second_corrector(grid: &Grid, field: &PhaseField, geom: &PacketGeometry, chi: ChiKind) -> Result<WavePacket> {
    let amp = geom.a2.powf(-1.5);
    let (start, values) = modulated(grid, field, geom, chi, |_, c, _| C64::new(0.0, amp * c))?;
    Ok(WavePacket { geom: *geom, chi, start, values })
}

/// Threshold time of the domain `D` for `σ < −2`: valid iff `t ≥ (λ²a″(λ))^{−1}`,
/// with `λ = max(1, |ξ_v|)`.
pub fn domain_threshold(sym: &DispersionSymbol, xi_v: f64) -> f64 {
    if sym.sigma() >= -2.0 {
        return 0.0;
    }
    let lam = xi_v.abs().max(1.0);
    1.0 / (lam * lam * sym.a2(lam))
}

/// One time slice of the profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub t: f64,
    pub v: Vec<f64>,
    pub gamma: Vec<C64>,
    pub valid: Vec<bool>,
}

pub fn test_profile_with(
    state: &State,
    sym: &DispersionSymbol,
    field: &PhaseField,
    v_grid: &[f64],
    chi: ChiKind,
) -> Result<ProfileRow> {
    let grid = state.grid();
    let mut gamma = Vec::with_capacity(v_grid.len());
    let mut valid = Vec::with_capacity(v_grid.len());
    for &v in v_grid {
        let ok = sym
            .invert_group_velocity(v)
            .map(|xi| state.t >= domain_threshold(sym, xi))
            .unwrap_or(false);
        let packet = if ok { build_packet_with(sym, grid, field, v, chi).ok() } else { None };
        match packet {
            Some(p) => {
                gamma.push(p.pair(grid, state.values()));
                valid.push(true);
            }
            None => {
                gamma.push(C64::new(0.0, 0.0));
                valid.push(false);
            }
        }
    }
    Ok(ProfileRow {
        t: state.t,
        v: v_grid.to_vec(),
        gamma,
        valid,
    })
}

/// `γ(t,v) = ⟨u, 𝐮_v⟩` on a velocity grid.
pub fn test_profile(state: &State, sym: &DispersionSymbol, v_grid: &[f64], chi: ChiKind) -> Result<ProfileRow> {
    let field = PhaseField::new(sym, state.grid(), state.t);
    test_profile_with(state, sym, &field, v_grid, chi)
}

/// Profile samples on a `(t, v)` grid with validity mask.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub chi: ChiKind,
    pub v: Vec<f64>,
    pub rows: Vec<ProfileRow>,
}

impl ProfileRecord {
    pub fn new(chi: ChiKind, v: Vec<f64>) -> ProfileRecord {
        ProfileRecord { chi, v, rows: Vec::new() }
    }

    pub fn push(&mut self, row: ProfileRow) -> Result<()> {
        if row.v != self.v {
            return Err(Error::GridMismatch("profile row uses a different velocity grid".into()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// Rows with `t` in `[lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> impl Iterator<Item = &ProfileRow> {
        self.rows.iter().filter(move |r| r.t >= lo * (1.0 - 1e-12) && r.t <= hi * (1.0 + 1e-12))
    }

    /// CSV with header `t,v,re_gamma,im_gamma,abs_gamma,valid`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,v,re_gamma,im_gamma,abs_gamma,valid\n");
        for row in &self.rows {
            for ((v, g), ok) in row.v.iter().zip(&row.gamma).zip(&row.valid) {
                out.push_str(&format!(
                    "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
                    row.t,
                    v,
                    g.re,
                    g.im,
                    g.norm(),
                    u8::from(*ok)
                ));
            }
        }
        out
    }
}

/// Raw and structured residual norms of the packet equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub t: f64,
    pub v: f64,
    pub raw: f64,
    pub structured: f64,
    pub packet_norm: f64,
    /// Relative change of the time derivative under one Richardson halving.
    pub richardson: f64,
}

/// `‖(i∂ₜ − A(D))𝐮_v‖` and `‖(i∂ₜ − A(D))𝐮_v − t^{−3/2}L𝐮^I_v‖`.
pub fn packet_residual(sym: &DispersionSymbol, grid: &Grid, t: f64, v: f64, chi: ChiKind) -> Result<ResidualReport> {
    let n = grid.n();
    let field_at = |tt: f64| PhaseField::new(sym, grid, tt);
    let packet_at = |tt: f64| -> Result<Vec<C64>> { Ok(build_packet(sym, grid, tt, v, chi)?.to_field(n)) };
    let h = 1e-3 * t;
    let diff = |h: f64| -> Result<Vec<C64>> {
        let (p, m) = (packet_at(t + h)?, packet_at(t - h)?);
        Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect())
    };
    let d1 = diff(h)?;
    let d2 = diff(0.5 * h)?;
    let dt: Vec<C64> = d1.iter().zip(&d2).map(|(a, b)| (b * 4.0 - a) / 3.0).collect();
    let change = grid.l2(&d1.iter().zip(&d2).map(|(a, b)| a - b).collect::<Vec<_>>()) / grid.l2(&d2).max(f64::MIN_POSITIVE);
    let field = field_at(t);
    let packet = build_packet_with(sym, grid, &field, v, chi)?;
    let u = packet.to_field(n);
    let au = grid.apply_multiplier(&u, |k| C64::new(sym.a(k), 0.0));
    let raw_field: Vec<C64> = dt.iter().zip(&au).map(|(d, a)| C64::new(-d.im, d.re) - a).collect();
    let ui = packet_first_corrector(grid, &field, &packet.geom, chi)?;
    let ui_state = State::from_values(std::sync::Arc::new(grid.clone()), t, ui)?;
    let lui = apply_l_unchecked(&ui_state, sym);
    let w = t.powf(-1.5);
    let structured: Vec<C64> = raw_field.iter().zip(&lui).map(|(r, l)| r - l * w).collect();
    Ok(ResidualReport {
        t,
        v,
        raw: grid.l2(&raw_field),
        structured: grid.l2(&structured),
        packet_norm: grid.l2(&u),
        richardson: change,
    })
}

/// `∂_vγ` by centered differences and via `⟨Lu, 𝐮^{II}_v⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvRow {
    pub t: f64,
    pub v: Vec<f64>,
    pub finite_difference: Vec<C64>,
    pub vector_field: Vec<C64>,
}

pub fn dv_profile(state: &State, sym: &DispersionSymbol, v_grid: &[f64], chi: ChiKind) -> Result<DvRow> {
    state.check_confined(CONFINEMENT_TOL)?;
    let grid = state.grid();
    let field = PhaseField::new(sym, grid, state.t);
    let lu = apply_l_unchecked(state, sym);
    let mut fd = Vec::with_capacity(v_grid.len());
    let mut vf = Vec::with_capacity(v_grid.len());
    for &v in v_grid {
        let geom = PacketGeometry::new(sym, state.t, v)?;
        let h = 1e-2 * geom.delta_x / state.t;
        let g = |vv: f64| -> Result<C64> { Ok(build_packet_with(sym, grid, &field, vv, chi)?.pair(grid, state.values())) };
        fd.push((g(v + h)? - g(v - h)?) / (2.0 * h));
        vf.push(packet_second_corrector(grid, &field, &geom, chi)?.pair(grid, &lu));
    }
    Ok(DvRow {
        t: state.t,
        v: v_grid.to_vec(),
        finite_difference: fd,
        vector_field: vf,
    })
}

/// Cubic (Catmull–Rom) interpolation on a uniform grid, exact for quadratics; `None` outside it.
pub fn interpolate_uniform(xs: &[f64], ys: &[C64], mask: &[bool], x: f64) -> Option<C64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let h = (xs[n - 1] - xs[0]) / (n - 1) as f64;
    let s = (x - xs[0]) / h;
    if s < 0.0 || s > (n - 1) as f64 {
        return None;
    }
    let i = (s.floor() as usize).min(n - 2);
    let f = s - i as f64;
    if !(mask[i] && mask[i + 1]) {
        return None;
    }
    let p1 = ys[i];
    let p2 = ys[i + 1];
    let ok = |k: usize| k < n && mask[k];
    let p0 = if i > 0 && ok(i - 1) {
        ys[i - 1]
    } else if ok(i + 2) {
        p1 * 3.0 - p2 * 3.0 + ys[i + 2]
    } else {
        p1 * 2.0 - p2
    };
    let p3 = if ok(i + 2) {
        ys[i + 2]
    } else if i > 0 && ok(i - 1) {
        p2 * 3.0 - p1 * 3.0 + ys[i - 1]
    } else {
        p2 * 2.0 - p1
    };
    let (f2, f3) = (f * f, f * f * f);
    Some(
        (p1 * 2.0
            + (p2 - p0) * f
            + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * f2
            + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * f3)
            * 0.5,
    )
}

/// Reconstruction `t^{−1/2}γ(t,x/t)e^{itφ(x/t)}` and, when a state is given, the remainder norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub field: Vec<C64>,
    pub residual_l2: Option<f64>,
    pub residual_linf: Option<f64>,
}

pub fn reconstruct(row: &ProfileRow, sym: &DispersionSymbol, grid: &Grid, t: f64, state: Option<&State>) -> Result<Reconstruction> {
    if (row.t - t).abs() > 1e-9 * t.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!("profile row at t = {} used at t = {t}", row.t)));
    }
    let field = PhaseField::new(sym, grid, t);
    let scale = t.powf(-0.5);
    let values: Vec<C64> = grid
        .x()
        .iter()
        .enumerate()
        .map(|(j, &x)| match field.phase[j] {
            Some((p, _)) => interpolate_uniform(&row.v, &row.gamma, &row.valid, x / t)
                .map_or(C64::new(0.0, 0.0), |g| g * C64::from_polar(scale, p)),
            None => C64::new(0.0, 0.0),
        })
        .collect();
    let (l2, linf) = match state {
        Some(s) => {
            if (s.t - t).abs() > 1e-9 * t.abs().max(1.0) {
                return Err(Error::InvalidParameter(format!("state at t = {} used at t = {t}", s.t)));
            }
            grid.check_len(s.values().len())?;
            let r: Vec<C64> = s.values().iter().zip(&values).map(|(a, b)| a - b).collect();
            (Some(grid.l2(&r)), Some(r.iter().map(|z| z.norm()).fold(0.0, f64::max)))
        }
        None => (None, None),
    };
    Ok(Reconstruction {
        field: values,
        residual_l2: l2,
        residual_linf: linf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::make_preset;
    use std::sync::Arc;

    fn nls() -> DispersionSymbol {
        make_preset("nls", &[]).unwrap()
    }

    #[test]
    fn envelopes_have_unit_integral() {
        for chi in [ChiKind::Bump, ChiKind::Gaussian] {
            let n = 400_000;
            let s = chi.support();
            let h = 2.0 * s / n as f64;
            let total: f64 = (0..n).map(|k| chi.eval(-s + (k as f64 + 0.5) * h).0).sum::<f64>() * h;
            assert!((total - 1.0).abs() < 1e-10, "{chi:?}: {total}");
        }
        // χ′ against a centered difference.
        let (y, h) = (0.3, 1e-6);
        let fd = (ChiKind::Bump.eval(y + h).0 - ChiKind::Bump.eval(y - h).0) / (2.0 * h);
        assert!((fd - ChiKind::Bump.eval(y).1).abs() < 1e-6);
    }

    #[test]
    fn nls_packet_at_zero_velocity() {
        let g = Grid::new(4096, 400.0).unwrap();
        let t = 16.0;
        let p = build_packet(&nls(), &g, t, 0.0, ChiKind::Bump).unwrap();
        let full = p.to_field(g.n());
        for (j, &x) in g.x().iter().enumerate() {
            let expect = C64::from_polar(ChiKind::Bump.eval(x / t.sqrt()).0, x * x / (2.0 * t));
            assert!((full[j] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn amplitude_and_l1_mass() {
        let kg = make_preset("klein_gordon", &[]).unwrap();
        let g = Grid::new(16384, 800.0).unwrap();
        let t = 25.0;
        for &v in &[-0.5, 0.0, 0.6] {
            let p = build_packet(&kg, &g, t, v, ChiKind::Bump).unwrap();
            let sup = p.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let sup_chi = ChiKind::Bump.eval(0.0).0;
            assert!((sup - p.geom.a2.powf(-0.5) * sup_chi).abs() < 1e-3 * sup);
            let l1: f64 = p.values.iter().map(|z| z.norm()).sum::<f64>() * g.dx();
            assert!((l1 - t.sqrt()).abs() < 1e-6 * t.sqrt(), "{v}: {l1}");
        }
    }

    #[test]
    fn support_outside_the_window_is_rejected() {
        let g = Grid::new(1024, 100.0).unwrap();
        assert!(build_packet(&nls(), &g, 40.0, 1.0, ChiKind::Bump).is_err());
        let kg = make_preset("klein_gordon", &[]).unwrap();
        assert!(build_packet(&kg, &g, 10.0, 0.9999, ChiKind::Bump).is_err());
    }

    #[test]
    fn normalization_is_exact_for_modulated_constants() {
        let kg = make_preset("klein_gordon", &[]).unwrap();
        let g = Arc::new(Grid::new(16384, 1000.0).unwrap());
        let t = 50.0;
        let field = PhaseField::new(&kg, &g, t);
        let c = C64::new(0.3, -0.4);
        let vals = (0..g.n())
            .map(|j| {
                let x: f64 = g.x()[j];
                let env = if x.abs() < 0.8 * t { 1.0 } else { 0.0 };
                field.carrier(j) * c * (env / t.sqrt())
            })
            .collect();
        let s = State::from_values(g.clone(), t, vals).unwrap();
        let row = test_profile(&s, &kg, &[-0.3, 0.0, 0.4], ChiKind::Bump).unwrap();
        for gam in &row.gamma {
            assert!((gam - c).norm() < 1e-6, "{gam}");
        }
    }

    #[test]
    fn packets_are_frequency_localized() {
        let g = Grid::new(16384, 2000.0).unwrap();
        for name in ["nls", "klein_gordon"] {
            let sym = make_preset(name, &[]).unwrap();
            let t = 20.0;
            let p = build_packet(&sym, &g, t, 0.4, ChiKind::Bump).unwrap();
            let spec = g.to_spectrum(&p.to_field(g.n()));
            let total: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
            let w = 10.0 / (t * p.geom.a2).sqrt();
            let inside: f64 = spec
                .iter()
                .zip(g.xi())
                .filter(|(_, &k)| (k - p.geom.xi_v).abs() <= w)
                .map(|(z, _)| z.norm_sqr())
                .sum();
            assert!(inside / total >= 0.99, "{name}: {}", inside / total);
        }
    }

    #[test]
    fn zero_state_gives_zero_profile() {
        let g = Arc::new(Grid::new(1024, 200.0).unwrap());
        let row = test_profile(&State::zero(g.clone(), 10.0), &nls(), &[0.0, 0.5], ChiKind::Bump).unwrap();
        assert!(row.gamma.iter().all(|z| z.norm() == 0.0));
        let dv = dv_profile(&State::zero(g, 10.0), &nls(), &[0.0, 0.5], ChiKind::Bump).unwrap();
        assert!(dv.finite_difference.iter().chain(&dv.vector_field).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn nls_structured_residual_vanishes() {
        let g = Grid::new(8192, 800.0).unwrap();
        for &t in &[10.0, 40.0] {
            let r = packet_residual(&nls(), &g, t, 0.5, ChiKind::Gaussian).unwrap();
            assert!(r.structured < 1e-9 * r.raw, "{t}: {r:?}");
        }
        // The bump has steep flanks and is only resolved to a few digits here.
        let r = packet_residual(&nls(), &g, 10.0, 0.5, ChiKind::Bump).unwrap();
        assert!(r.structured < 0.05 * r.raw, "{r:?}");
        let a = packet_residual(&nls(), &g, 10.0, 0.0, ChiKind::Gaussian).unwrap();
        let b = packet_residual(&nls(), &g, 40.0, 0.0, ChiKind::Gaussian).unwrap();
        let ratio = (b.raw / b.packet_norm) / (a.raw / a.packet_norm);
        assert!((ratio - 0.25).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn dv_routes_agree_on_a_modulated_gaussian() {
        let g = Arc::new(Grid::new(16384, 1600.0).unwrap());
        let t = 40.0;
        let field = PhaseField::new(&nls(), &g, t);
        let prof = |v: f64| C64::from_polar((-(v - 0.3) * (v - 0.3) / 0.5).exp(), 0.4 * v);
        let vals = (0..g.n())
            .map(|j| field.carrier(j) * prof(g.x()[j] / t) * t.powf(-0.5))
            .collect();
        let s = State::from_values(g.clone(), t, vals).unwrap();
        let dv = dv_profile(&s, &nls(), &[0.0, 0.3, 0.8], ChiKind::Bump).unwrap();
        for (a, b) in dv.finite_difference.iter().zip(&dv.vector_field) {
            assert!((a - b).norm() < 0.01 * a.norm().max(0.1), "{a} vs {b}");
        }
    }

    #[test]
    fn reconstruction_inverts_the_ansatz() {
        let g = Arc::new(Grid::new(8192, 800.0).unwrap());
        let t = 30.0;
        let v: Vec<f64> = (0..201).map(|k| -2.0 + 0.02 * k as f64).collect();
        let gamma: Vec<C64> = v.iter().map(|&v| C64::new((-v * v * 4.0).exp(), 0.0)).collect();
        let row = ProfileRow { t, v: v.clone(), gamma, valid: vec![true; v.len()] };
        let rec = reconstruct(&row, &nls(), &g, t, None).unwrap();
        let s = State::from_values(g.clone(), t, rec.field.clone()).unwrap();
        let again = reconstruct(&row, &nls(), &g, t, Some(&s)).unwrap();
        assert!(again.residual_linf.unwrap() < 1e-15);
        assert!(reconstruct(&row, &nls(), &g, 2.0 * t, None).is_err());
    }

    #[test]
    fn interpolation_reproduces_quadratics() {
        let xs: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let f = |x: f64| C64::new(x * x - 0.5 * x, 2.0 * x);
        let ys: Vec<C64> = xs.iter().map(|&x| f(x)).collect();
        let mask = vec![true; xs.len()];
        for &x in &[0.05, 0.37, 0.99] {
            assert!((interpolate_uniform(&xs, &ys, &mask, x).unwrap() - f(x)).norm() < 1e-12);
        }
        assert!(interpolate_uniform(&xs, &ys, &mask, 1.2).is_none());
    }
}
