//! Exact linear propagation and integrating-factor RK4 for `i∂ₜu − A(D)u = Q(u,ū,u)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dispersion::{DispersionSymbol, ExponentChoice};
use crate::error::{Error, Result};
use crate::grid::{Grid, State, C64, CONFINEMENT_TOL};
use crate::nonlinearity::{apply_cubic, CubicSymbol};
use crate::vectorfield::{x_norm, XNorm};

/// `û ← e^{−ia(ξ)Δt} û`.
pub fn linear_propagate(state: &State, dt: f64, sym: &DispersionSymbol) -> State {
    let grid = state.grid_arc().clone();
    let spectrum = state
        .spectrum()
        .iter()
        .zip(grid.xi())
        .map(|(z, &k)| z * C64::from_polar(1.0, -sym.a(k) * dt))
        .collect();
    State::from_spectrum(grid, state.t + dt, spectrum).expect("grid-consistent spectrum")
}

/// Lawson RK4 with precomputed propagators for one fixed step.
pub struct Stepper<'a> {
    grid: &'a Grid,
    q: &'a CubicSymbol,
    dt: f64,
    e_full: Vec<C64>,
    e_half: Vec<C64>,
}

impl<'a> Stepper<'a> {
    pub fn new(grid: &'a Grid, sym: &DispersionSymbol, q: &'a CubicSymbol, dt: f64) -> Stepper<'a> {
        let a: Vec<f64> = grid.xi().iter().map(|&k| sym.a(k)).collect();
        Stepper {
            grid,
            q,
            dt,
            e_full: a.iter().map(|&ak| C64::from_polar(1.0, -ak * dt)).collect(),
            e_half: a.iter().map(|&ak| C64::from_polar(1.0, -0.5 * ak * dt)).collect(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn rhs(&self, s: &[C64]) -> Result<Vec<C64>> {
        let mut out = apply_cubic(self.q, self.grid, s)?;
        for z in out.iter_mut() {
            *z = C64::new(z.im, -z.re);
        }
        Ok(out)
    }

    /// Advances the spectrum in place by `dt`.
    pub fn step(&self, s: &mut [C64]) -> Result<()> {
        let h = self.dt;
        if self.q.is_zero() {
            s.iter_mut().zip(&self.e_full).for_each(|(z, e)| *z *= e);
            return Ok(());
        }
        let (ef, eh) = (&self.e_full, &self.e_half);
        let k1 = self.rhs(s)?;
        let a: Vec<C64> = (0..s.len()).map(|i| eh[i] * (s[i] + k1[i] * (0.5 * h))).collect();
        let k2 = self.rhs(&a)?;
        let b: Vec<C64> = (0..s.len()).map(|i| eh[i] * s[i] + k2[i] * (0.5 * h)).collect();
        let k3 = self.rhs(&b)?;
        let c: Vec<C64> = (0..s.len()).map(|i| ef[i] * s[i] + eh[i] * k3[i] * h).collect();
        let k4 = self.rhs(&c)?;
        for i in 0..s.len() {
            s[i] = ef[i] * s[i] + (ef[i] * k1[i] + eh[i] * (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
        Ok(())
    }
}

/// One integrating-factor RK4 step.
pub fn step_nonlinear(state: &State, dt: f64, sym: &DispersionSymbol, q: &CubicSymbol) -> Result<State> {
    let mut s = state.spectrum().to_vec();
    Stepper::new(state.grid(), sym, q, dt).step(&mut s)?;
    check_finite(&s, state.t + dt)?;
    State::from_spectrum(state.grid_arc().clone(), state.t + dt, s)
}

fn check_finite(s: &[C64], t: f64) -> Result<()> {
    if s.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Instability { t })
    }
}

/// Time-stepping controls of [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    /// Maximal step magnitude; the sign is taken from the direction of travel.
    pub dt: f64,
    /// Geometric ratio of output times.
    pub rho: f64,
    /// Boundary-mass tolerance checked at every output time.
    pub confinement_tol: f64,
}

impl Default for Controls {
    fn default() -> Controls {
        Controls {
            dt: 0.01,
            rho: 1.15,
            confinement_tol: CONFINEMENT_TOL,
        }
    }
}

/// Output times `t₀ρ^k` between `t0` and `t_end` (inclusive, either direction).
pub fn snapshot_times(t0: f64, t_end: f64, rho: f64) -> Vec<f64> {
    assert!(rho > 1.0, "snapshot ratio must exceed 1");
    let mut out = Vec::new();
    let forward = t_end >= t0;
    let tol = 1e-9 * t0.abs().max(t_end.abs()).max(1.0);
    let mut k = 0;
    loop {
        let t = if forward { t0 * rho.powi(k) } else { t0 * rho.powi(-k) };
        let inside = if forward { t <= t_end + tol } else { t >= t_end - tol };
        if !inside || (t0 <= 0.0 && k > 0) {
            break;
        }
        out.push(t);
        k += 1;
    }
    out
}

/// Evolves to `t_target`, calling `observe` at every output time `t₀ρ^k` and at `t_target`.
///
/// Steps between consecutive output times are equal and at most `controls.dt`,
/// so every output time is hit exactly.
pub fn evolve<F>(
    state: &State,
    t_target: f64,
    controls: &Controls,
    sym: &DispersionSymbol,
    q: &CubicSymbol,
    mut observe: F,
) -> Result<State>
where
    F: FnMut(&State) -> Result<()>,
{
    if t_target == state.t {
        return Err(Error::InvalidParameter("evolve needs t_target != t".into()));
    }
    if !(controls.dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {}", controls.dt)));
    }
    let grid = state.grid_arc().clone();
    let mut times = if state.t > 0.0 {
        snapshot_times(state.t, t_target, controls.rho)
    } else {
        vec![state.t]
    };
    if times.last().map_or(true, |&t| (t - t_target).abs() > 1e-9 * t_target.abs().max(1.0)) {
        times.push(t_target);
    } else if let Some(last) = times.last_mut() {
        *last = t_target;
    }
    let mut s = state.spectrum().to_vec();
    grid.apply_mask(&mut s);
    let first = State::from_spectrum(grid.clone(), state.t, s.clone())?;
    first.check_confined(controls.confinement_tol)?;
    observe(&first)?;
    let mut t = state.t;
    let mut cached: Option<(i64, Stepper)> = None;
    let mut current = first;
    for &t_next in times.iter().skip(1) {
        let span = t_next - t;
        let n = ((span.abs() / controls.dt) - 1e-9).ceil().max(1.0) as i64;
        let h = span / n as f64;
        // Reuse the propagators when consecutive intervals share the step.
        let key = (h * 1e12).round() as i64;
        if cached.as_ref().map_or(true, |(k, _)| *k != key) {
            cached = Some((key, Stepper::new(&grid, sym, q, h)));
        }
        let stepper = &cached.as_ref().unwrap().1;
        for j in 0..n {
            stepper.step(&mut s)?;
            check_finite(&s, t + (j + 1) as f64 * h)?;
        }
        t = t_next;
        current = State::from_spectrum(grid.clone(), t, s.clone())?;
        current.check_confined(controls.confinement_tol)?;
        observe(&current)?;
    }
    Ok(current)
}

/// Initial data families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataKind {
    /// `e^{−(x−x₀)²/(2w²)} e^{ik₀x}`.
    Gaussian {
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        k0: f64,
    },
    /// Spectrum `ψ((2ξ−lo−hi)/(hi−lo)) e^{−iξx₀}` with the C∞ bump `ψ(y) = e^{−1/(1−y²)}`.
    FrequencyLocalizedBump {
        lo: f64,
        hi: f64,
        #[serde(default)]
        center: f64,
    },
    /// Sum of modulated Gaussians `(x₀, k₀, w, amplitude)`.
    PacketSuperposition { packets: Vec<[f64; 4]> },
}

fn one() -> f64 {
    1.0
}

/// C∞ bump `e^{−1/(1−y²)}` on `(−1, 1)`.
pub fn bump(y: f64) -> f64 {
    if y.abs() < 1.0 {
        (-1.0 / (1.0 - y * y)).exp()
    } else {
        0.0
    }
}

/// Data of the requested kind at `t = 0`, scaled so that `‖u₀‖_X = ε`.
pub fn make_data(
    kind: &DataKind,
    eps: f64,
    grid: &Arc<Grid>,
    sym: &DispersionSymbol,
    exps: &ExponentChoice,
) -> Result<(State, XNorm)> {
    if eps == 0.0 {
        let z = State::zero(grid.clone(), 0.0);
        return Ok((z, XNorm { hs0: 0.0, lhs1: 0.0, x: 0.0 }));
    }
    let mut spectrum = match kind {
        DataKind::Gaussian { center, width, k0 } => {
            if !(*width > 0.0) {
                return Err(Error::InvalidParameter(format!("gaussian width must be positive, got {width}")));
            }
            let v: Vec<C64> = grid
                .x()
                .iter()
                .map(|&x| C64::from_polar((-(x - center) * (x - center) / (2.0 * width * width)).exp(), k0 * x))
                .collect();
            grid.to_spectrum(&v)
        }
        DataKind::FrequencyLocalizedBump { lo, hi, center } => {
            if !(hi > lo) {
                return Err(Error::InvalidParameter(format!("empty band [{lo}, {hi}]")));
            }
            let top = grid.xi_max_retained();
            if lo.abs().max(hi.abs()) > top || hi - lo < 4.0 * grid.dxi() {
                return Err(Error::InvalidParameter(format!(
                    "band [{lo}, {hi}] not resolved: retained |xi| <= {top}, step {}",
                    grid.dxi()
                )));
            }
            grid.xi()
                .iter()
                .map(|&k| C64::from_polar(bump((2.0 * k - lo - hi) / (hi - lo)), -k * center))
                .collect()
        }
        DataKind::PacketSuperposition { packets } => {
            let v: Vec<C64> = grid
                .x()
                .iter()
                .map(|&x| {
                    packets
                        .iter()
                        .map(|&[x0, k0, w, amp]| C64::from_polar(amp * (-(x - x0) * (x - x0) / (2.0 * w * w)).exp(), k0 * x))
                        .sum()
                })
                .collect();
            grid.to_spectrum(&v)
        }
    };
    grid.apply_mask(&mut spectrum);
    let raw = State::from_spectrum(grid.clone(), 0.0, spectrum)?;
    let norm = x_norm(&raw, sym, exps)?;
    if !(norm.x > 0.0) {
        return Err(Error::InvalidParameter("requested data vanishes on this grid".into()));
    }
    let scale = eps / norm.x;
    let scaled: Vec<C64> = raw.spectrum().iter().map(|z| z * scale).collect();
    let state = State::from_spectrum(grid.clone(), 0.0, scaled)?;
    let norm = x_norm(&state, sym, exps)?;
    Ok((state, norm))
}
