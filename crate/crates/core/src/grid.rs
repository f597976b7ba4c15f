//! Periodic grid, spectral transforms and solution snapshots.
//!
//! Nodes are `x_j = x₀ + j·dx` with `x₀ = −L/2 + dx`, so the coordinate is the
//! centered sawtooth on `(−L/2, L/2]`. Spectral coefficients are the
//! L²-unitary Fourier coefficients
//! `s_k = L^{−1/2} ∫ u(x) e^{−iξ_k x} dx`, which makes Parseval read
//! `dx·Σ|u_j|² = Σ|s_k|²`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Fraction of the half-length beyond which mass counts as boundary mass.
pub const BOUNDARY_FRACTION: f64 = 0.9;

/// Default tolerance for the boundary-mass fraction.
pub const CONFINEMENT_TOL: f64 = 1e-8;

#[derive(Clone)]
pub struct Grid {
    n: usize,
    lx: f64,
    dx: f64,
    x: Vec<f64>,
    xi: Vec<f64>,
    mask: Vec<bool>,
    /// `e^{−iξ_k x₀}·√L/N`, applied after the forward FFT.
    fwd_twiddle: Vec<C64>,
    /// `e^{iξ_k x₀}/√L`, applied before the inverse FFT.
    inv_twiddle: Vec<C64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).field("lx", &self.lx).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.lx == other.lx
    }
}

impl Grid {
    /// Builds a grid with `n` nodes (a power of two, at least 8) on a period `lx`.
    pub fn new(n: usize, lx: f64) -> Result<Grid> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("N must be a power of two >= 8, got {n}")));
        }
        if !(lx.is_finite() && lx > 0.0) {
            return Err(Error::InvalidParameter(format!("L_x must be positive, got {lx}")));
        }
        let dx = lx / n as f64;
        let x0 = -0.5 * lx + dx;
        let x = (0..n).map(|j| x0 + j as f64 * dx).collect();
        let xi: Vec<f64> = (0..n).map(|k| 2.0 * PI * signed_index(k, n) as f64 / lx).collect();
        let mask = (0..n).map(|k| (signed_index(k, n).unsigned_abs() as usize) < n / 4).collect();
        let scale = lx.sqrt() / n as f64;
        let fwd_twiddle = xi.iter().map(|&k| C64::from_polar(scale, -k * x0)).collect();
        let inv_twiddle = xi.iter().map(|&k| C64::from_polar(1.0 / lx.sqrt(), k * x0)).collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        Ok(Grid {
            n,
            lx,
            dx,
            x,
            xi,
            mask,
            fwd_twiddle,
            inv_twiddle,
            fft,
            ifft,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.lx
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// `true` for retained (non-dealiased) frequencies `|k| < N/4`.
    pub fn dealias_mask(&self) -> &[bool] {
        &self.mask
    }

    /// Largest retained frequency magnitude.
    pub fn xi_max_retained(&self) -> f64 {
        self.dxi() * (self.n / 4 - 1) as f64
    }

    /// Signed wavenumber index of storage slot `k`.
    pub fn signed_index(&self, k: usize) -> i64 {
        signed_index(k, self.n)
    }

    /// Storage slot of a signed wavenumber index.
    pub fn slot(&self, ks: i64) -> usize {
        ks.rem_euclid(self.n as i64) as usize
    }

    /// Nearest storage slot to frequency `xi`.
    pub fn slot_of(&self, xi: f64) -> usize {
        self.slot((xi / self.dxi()).round() as i64)
    }

    /// Conversion factor from the unitary coefficients to the continuum transform
    /// `û(ξ) = (2π)^{−1/2} ∫ u e^{−ixξ} dx`.
    pub fn continuum_factor(&self) -> f64 {
        (self.lx / (2.0 * PI)).sqrt()
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len == self.n {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("expected {} samples, got {len}", self.n)))
        }
    }

    /// Raw unnormalized FFT in place.
    pub fn fft_raw(&self, buf: &mut [C64]) {
        self.fft.process(buf);
    }

    /// Raw unnormalized inverse FFT in place.
    pub fn ifft_raw(&self, buf: &mut [C64]) {
        self.ifft.process(buf);
    }

    pub fn to_spectrum_in_place(&self, buf: &mut [C64]) {
        self.fft.process(buf);
        for (b, w) in buf.iter_mut().zip(&self.fwd_twiddle) {
            *b *= w;
        }
    }

    pub fn to_values_in_place(&self, buf: &mut [C64]) {
        for (b, w) in buf.iter_mut().zip(&self.inv_twiddle) {
            *b *= w;
        }
        self.ifft.process(buf);
    }

    pub fn to_spectrum(&self, values: &[C64]) -> Vec<C64> {
        let mut buf = values.to_vec();
        self.to_spectrum_in_place(&mut buf);
        buf
    }

    pub fn to_values(&self, spectrum: &[C64]) -> Vec<C64> {
        let mut buf = spectrum.to_vec();
        self.to_values_in_place(&mut buf);
        buf
    }

    /// Zeroes the dealiased band.
    pub fn apply_mask(&self, spectrum: &mut [C64]) {
        for (s, &keep) in spectrum.iter_mut().zip(&self.mask) {
            if !keep {
                *s = C64::new(0.0, 0.0);
            }
        }
    }

    /// Applies the Fourier multiplier `m(ξ)` to nodal values.
    pub fn apply_multiplier(&self, values: &[C64], m: impl Fn(f64) -> C64) -> Vec<C64> {
        let mut buf = self.to_spectrum(values);
        for (b, &k) in buf.iter_mut().zip(&self.xi) {
            *b *= m(k);
        }
        self.to_values_in_place(&mut buf);
        buf
    }

    /// Spectral derivative `∂ₓu`.
    pub fn derivative(&self, values: &[C64]) -> Vec<C64> {
        self.apply_multiplier(values, |k| C64::new(0.0, k))
    }

    /// `∫|u|² dx` by the trapezoid rule (sequential sum, hence deterministic).
    pub fn l2_sq(&self, values: &[C64]) -> f64 {
        self.dx * values.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn l2(&self, values: &[C64]) -> f64 {
        self.l2_sq(values).sqrt()
    }

    /// `∫ f ḡ dx`.
    pub fn inner(&self, f: &[C64], g: &[C64]) -> C64 {
        f.iter().zip(g).map(|(a, b)| a * b.conj()).sum::<C64>() * self.dx
    }

    /// Fraction of `∫|u|²` carried by `|x| ≥ 0.45·L`.
    pub fn boundary_mass(&self, values: &[C64]) -> f64 {
        let cut = 0.5 * BOUNDARY_FRACTION * self.lx;
        let mut outer = 0.0;
        let mut total = 0.0;
        for (z, &x) in values.iter().zip(&self.x) {
            let m = z.norm_sqr();
            total += m;
            if x.abs() >= cut {
                outer += m;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            outer / total
        }
    }
}

fn signed_index(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// A solution snapshot with nodal values and spectrum kept consistent.
#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    grid: Arc<Grid>,
    values: Vec<C64>,
    spectrum: Vec<C64>,
}

impl State {
    pub fn from_values(grid: Arc<Grid>, t: f64, values: Vec<C64>) -> Result<State> {
        grid.check_len(values.len())?;
        let spectrum = grid.to_spectrum(&values);
        Ok(State {
            t,
            grid,
            values,
            spectrum,
        })
    }

    pub fn from_spectrum(grid: Arc<Grid>, t: f64, spectrum: Vec<C64>) -> Result<State> {
        grid.check_len(spectrum.len())?;
        let values = grid.to_values(&spectrum);
        Ok(State {
            t,
            grid,
            values,
            spectrum,
        })
    }

    pub fn zero(grid: Arc<Grid>, t: f64) -> State {
        let n = grid.n();
        State {
            t,
            grid,
            values: vec![C64::new(0.0, 0.0); n],
            spectrum: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn spectrum(&self) -> &[C64] {
        &self.spectrum
    }

    pub fn into_spectrum(self) -> Vec<C64> {
        self.spectrum
    }

    pub fn l2(&self) -> f64 {
        self.grid.l2(&self.values)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn boundary_mass(&self) -> f64 {
        self.grid.boundary_mass(&self.values)
    }

    /// Errors when the boundary mass exceeds `tol`.
    pub fn check_confined(&self, tol: f64) -> Result<()> {
        let fraction = self.boundary_mass();
        if fraction > tol {
            Err(Error::Confinement {
                t: self.t,
                fraction,
                tol,
            })
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(grid: &Grid, x0: f64, k0: f64) -> Vec<C64> {
        grid.x()
            .iter()
            .map(|&x| C64::from_polar((-(x - x0) * (x - x0) / 2.0).exp(), k0 * x))
            .collect()
    }

    #[test]
    fn nodes_are_centered() {
        let g = Grid::new(16, 8.0).unwrap();
        assert!((g.x()[0] + 3.5).abs() < 1e-15);
        assert!((g.x()[15] - 4.0).abs() < 1e-15);
        assert_eq!(g.signed_index(8), -8);
        assert_eq!(g.slot(-1), 15);
        assert_eq!(g.dealias_mask().iter().filter(|&&m| m).count(), 7);
    }

    #[test]
    fn round_trip_and_parseval() {
        let g = Grid::new(256, 40.0).unwrap();
        let u = gaussian(&g, 1.3, 2.0);
        let s = g.to_spectrum(&u);
        let back = g.to_values(&s);
        let err = u.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-13);
        let ps: f64 = s.iter().map(|z| z.norm_sqr()).sum();
        assert!((g.l2_sq(&u) - ps).abs() < 1e-12 * ps);
    }

    #[test]
    fn spectrum_matches_continuum_transform() {
        // û(ξ) = e^{−ξ²/2} for u = e^{−x²/2} under the (2π)^{−1/2} convention.
        let g = Grid::new(512, 60.0).unwrap();
        let u = gaussian(&g, 0.0, 0.0);
        let s = g.to_spectrum(&u);
        for k in 0..40 {
            let xi = g.xi()[k];
            let cont = s[k] * g.continuum_factor();
            assert!((cont - C64::new((-xi * xi / 2.0).exp(), 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn plane_wave_is_a_single_mode() {
        let g = Grid::new(64, 10.0).unwrap();
        let k = g.xi()[3];
        let u: Vec<C64> = g.x().iter().map(|&x| C64::from_polar(1.0, k * x)).collect();
        let s = g.to_spectrum(&u);
        assert!((s[3].norm() - g.lx().sqrt()).abs() < 1e-12);
        assert!(s.iter().enumerate().filter(|(i, _)| *i != 3).all(|(_, z)| z.norm() < 1e-12));
    }

    #[test]
    fn derivative_of_gaussian() {
        let g = Grid::new(256, 40.0).unwrap();
        let u = gaussian(&g, 0.0, 0.0);
        let du = g.derivative(&u);
        for (j, &x) in g.x().iter().enumerate() {
            assert!((du[j] - C64::new(-x * (-x * x / 2.0).exp(), 0.0)).norm() < 1e-11);
        }
    }

    #[test]
    fn boundary_mass_detects_wrapped_mass() {
        let g = Grid::new(256, 40.0).unwrap();
        assert!(g.boundary_mass(&gaussian(&g, 0.0, 0.0)) < 1e-30);
        assert!(g.boundary_mass(&gaussian(&g, 19.0, 0.0)) > 0.1);
        let s = State::from_values(Arc::new(g.clone()), 0.0, gaussian(&g, 19.0, 0.0)).unwrap();
        assert!(matches!(s.check_confined(CONFINEMENT_TOL), Err(Error::Confinement { .. })));
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let g = Arc::new(Grid::new(16, 1.0).unwrap());
        assert!(State::from_values(g, 0.0, vec![C64::new(0.0, 0.0); 8]).is_err());
        assert!(Grid::new(12, 1.0).is_err());
    }
}
