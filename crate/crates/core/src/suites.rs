//! Self-contained numerical checks that do not need a full nonlinear campaign:
//! exact linear flows, the vector-field Sobolev bound, the division symbol,
//! packet residuals and the fast cubic paths.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::DispersionSymbol;
use crate::error::{Error, Result};
use crate::fit::{fit_exponent, FitReport};
use crate::grid::{Grid, State, C64};
use crate::nonlinearity::{apply_cubic, apply_trilinear_dense, division_factors, normal_form_c, raw_quotient, CubicSymbol, SeparableTerm};
use crate::solver::{evolve, linear_propagate, snapshot_times, Controls};
use crate::vectorfield::klainerman_sobolev_check;
use crate::wavepacket::{packet_residual, ChiKind, ResidualReport};

fn gaussian(grid: &Arc<Grid>, width: f64) -> Result<State> {
    let v = grid.x().iter().map(|&x| C64::new((-x * x / (2.0 * width * width)).exp(), 0.0)).collect();
    State::from_values(grid.clone(), 0.0, v)
}

/// `(1+it)^{−1/2} e^{−x²/(2(1+it))}`: the free evolution of `e^{−x²/2}` under `a = ξ²/2`.
pub fn free_gaussian(t: f64, x: f64) -> C64 {
    let z = C64::new(1.0, t);
    (-(x * x) / (2.0 * z)).exp() / z.sqrt()
}

/// Largest max-norm error against [`free_gaussian`] over the output times of an
/// integrator run with `q = 0` on `[0, t_end]`.
pub fn gaussian_exactness(sym: &DispersionSymbol, n: usize, lx: f64, t_end: f64, dt: f64) -> Result<f64> {
    let grid = Arc::new(Grid::new(n, lx)?);
    let u0 = gaussian(&grid, 1.0)?;
    let controls = Controls { dt, rho: 1.25, confinement_tol: 1e-8 };
    let mut worst = 0.0_f64;
    let mut check = |s: &State| -> Result<()> {
        let err = s
            .values()
            .iter()
            .zip(s.grid().x())
            .map(|(u, &x)| (u - free_gaussian(s.t, x)).norm())
            .fold(0.0, f64::max);
        worst = worst.max(err);
        Ok(())
    };
    let first = evolve(&u0, 1.0, &controls, sym, &CubicSymbol::zero(), &mut check)?;
    evolve(&first, t_end, &controls, sym, &CubicSymbol::zero(), &mut check)?;
    Ok(worst)
}

/// Decay of `sup|u|` for the exact linear flow of a Gaussian of the given width.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearDecay {
    pub symbol: String,
    pub fit: FitReport,
    pub boundary_mass: f64,
}

pub fn linear_decay(sym: &DispersionSymbol, n: usize, lx: f64, width: f64, window: (f64, f64)) -> Result<LinearDecay> {
    let grid = Arc::new(Grid::new(n, lx)?);
    let mut u0 = gaussian(&grid, width)?;
    let mut s = u0.spectrum().to_vec();
    grid.apply_mask(&mut s);
    u0 = State::from_spectrum(grid.clone(), 0.0, s)?;
    let times = snapshot_times(1.0, window.1, 1.1);
    let mut sup = Vec::with_capacity(times.len());
    let mut boundary = 0.0_f64;
    for &t in &times {
        let st = linear_propagate(&u0, t, sym);
        boundary = boundary.max(st.boundary_mass());
        sup.push(st.sup());
    }
    Ok(LinearDecay {
        symbol: sym.name().to_string(),
        fit: fit_exponent("sup", &times, &sup, window)?,
        boundary_mass: boundary,
    })
}

/// One `‖u‖²_{L∞} / RHS` sample of the vector-field Sobolev bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KsSample {
    pub symbol: String,
    pub n: usize,
    pub t: f64,
    pub ratio: f64,
    pub leak: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KsSuite {
    pub samples: Vec<KsSample>,
    /// Per symbol: geometric mean of the ratios on the reference (first) grid.
    pub constants: Vec<(String, f64)>,
    /// `max |ratio/constant − 1|` over all samples.
    pub max_deviation: f64,
}

/// Linear Gaussian evolutions on grids `(n, lx)`, sampled at `t_list`.
///
/// The band constants `R` and `M` are symbol-dependent worst cases, so the
/// implied constant is fitted per symbol on `grids[0]`.
pub fn ks_suite(syms: &[DispersionSymbol], grids: &[(usize, f64)], t_list: &[f64], width: f64, band: (f64, f64)) -> Result<KsSuite> {
    let mut samples = Vec::new();
    let mut constants = Vec::new();
    let mut max_deviation = 0.0_f64;
    for sym in syms {
        let first = samples.len();
        for &(n, lx) in grids {
            let grid = Arc::new(Grid::new(n, lx)?);
            let u0 = gaussian(&grid, width)?;
            for &t in t_list {
                let rep = klainerman_sobolev_check(&linear_propagate(&u0, t, sym), sym, band)?;
                samples.push(KsSample {
                    symbol: sym.name().to_string(),
                    n,
                    t,
                    ratio: rep.ratio,
                    leak: rep.leak,
                });
            }
        }
        let mine = &samples[first..];
        if mine.is_empty() || mine.iter().any(|s| !(s.ratio > 0.0)) {
            return Err(Error::InvalidParameter(format!("{}: vector-field suite needs positive ratios", sym.name())));
        }
        let reference = &mine[..t_list.len()];
        let c = (reference.iter().map(|s| s.ratio.ln()).sum::<f64>() / reference.len() as f64).exp();
        max_deviation = mine.iter().map(|s| (s.ratio / c - 1.0).abs()).fold(max_deviation, f64::max);
        constants.push((sym.name().to_string(), c));
    }
    Ok(KsSuite { samples, constants, max_deviation })
}

/// Worst cases of the division symbol over random triples in `[−r, r]³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivisionReport {
    pub samples: usize,
    /// Relative gap between the factorized `c` and the raw quotient, off the diagonal.
    pub factorized_vs_quotient: f64,
    /// `|c(ξ,ξ,ξ) − a‴/a″|`, relative to `max(1, |a‴/a″|)`.
    pub diagonal: f64,
    /// `ℓ(x,ξ)q − tqc·(resonance) − q(ℓ(x,ξ₁) − ℓ(x,ξ₂) + ℓ(x,ξ₃))`, relative to `q(|x| + t·max|a′|)`.
    pub identity: f64,
}

/// Triples with both `|ξ₁−ξ₂|` and `|ξ₃−ξ₂|` at least `gap` count as off-diagonal.
pub fn division_suite(sym: &DispersionSymbol, samples: usize, r: f64, gap: f64, seed: u64) -> DivisionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = DivisionReport { samples, factorized_vs_quotient: 0.0, diagonal: 0.0, identity: 0.0 };
    let ell = |x: f64, t: f64, xi: f64| x - t * sym.a1(xi);
    for _ in 0..samples {
        let (x1, x2, x3): (f64, f64, f64) = (rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r));
        let (x, t, q) = (rng.gen_range(-50.0..50.0), rng.gen_range(1.0..100.0), rng.gen_range(-2.0..2.0));
        let xi = x1 - x2 + x3;
        let c = normal_form_c(sym, x1, x2, x3);
        if (x1 - x2).abs() >= gap && (x3 - x2).abs() >= gap {
            let f = division_factors(sym, x1, x2, x3).c();
            let raw = raw_quotient(sym, x1, x2, x3);
            rep.factorized_vs_quotient = rep.factorized_vs_quotient.max((f - raw).abs() / raw.abs().max(1.0));
        }
        let res = sym.a(x1) - sym.a(x2) + sym.a(x3) - sym.a(xi);
        let lhs = ell(x, t, xi) * q - t * q * c * res;
        let rhs = q * (ell(x, t, x1) - ell(x, t, x2) + ell(x, t, x3));
        let scale = q.abs().max(1e-300) * (x.abs() + t * [x1, x2, x3, xi].iter().map(|&k| sym.a1(k).abs()).fold(0.0, f64::max));
        rep.identity = rep.identity.max((lhs - rhs).abs() / scale);
        let d = rng.gen_range(-r..r);
        let expect = sym.a3(d) / sym.a2(d);
        rep.diagonal = rep.diagonal.max((normal_form_c(sym, d, d, d) - expect).abs() / expect.abs().max(1.0));
    }
    rep
}

/// Packet residuals along one ray.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PacketSuite {
    pub symbol: String,
    pub v: f64,
    pub rows: Vec<ResidualReport>,
    /// Fit of `raw/‖𝐮_v‖_{L²}`.
    pub raw_fit: FitReport,
    /// `structured < raw` at every sampled time.
    pub structured_below_raw: bool,
}

pub fn packet_suite(sym: &DispersionSymbol, grid: &Grid, v: f64, t_list: &[f64], chi: ChiKind) -> Result<PacketSuite> {
    let rows: Vec<ResidualReport> = t_list
        .par_iter()
        .map(|&t| packet_residual(sym, grid, t, v, chi))
        .collect::<Result<_>>()?;
    let (lo, hi) = t_list.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &t| (a.min(t), b.max(t)));
    let raw: Vec<f64> = rows.iter().map(|r| r.raw / r.packet_norm).collect();
    Ok(PacketSuite {
        symbol: sym.name().to_string(),
        v,
        raw_fit: fit_exponent("packet_raw_residual_rel", t_list, &raw, (lo, hi))?,
        structured_below_raw: rows.iter().all(|r| r.structured < r.raw),
        rows,
    })
}

fn random_spectrum(grid: &Grid, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s: Vec<C64> = (0..grid.n())
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    grid.apply_mask(&mut s);
    s
}

/// Largest relative gap between the dense triple sum and the pointwise
/// (constant) and separable paths over random states, one per seed.
pub fn fast_path_suite(n: usize, lx: f64, seeds: std::ops::Range<u64>) -> Result<f64> {
    let grid = Grid::new(n, lx)?;
    let constant = CubicSymbol::constant(1.0);
    let term = SeparableTerm::from_exprs(["exp(-xi^2/4)", "cos(xi)", "1/(1+xi^2)", "1+xi^2/8"])?;
    let separable = CubicSymbol::separable(vec![term], false);
    let mut worst = 0.0_f64;
    for seed in seeds {
        let s = random_spectrum(&grid, seed);
        for q in [&constant, &separable] {
            let fast = apply_cubic(q, &grid, &s)?;
            let dense = apply_trilinear_dense(&grid, &s, |a, b, c| q.eval(a, b, c))?;
            let scale = dense.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let gap = fast.iter().zip(&dense).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            worst = worst.max(gap / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::make_preset;
    use std::f64::consts::PI;

    #[test]
    fn free_gaussian_is_exact_at_zero() {
        assert!((free_gaussian(0.0, 0.7) - C64::new((-0.245_f64).exp(), 0.0)).norm() < 1e-15);
        // L² mass √π is conserved.
        let h = 0.01;
        let mass: f64 = (-4000..4000).map(|k| free_gaussian(3.0, k as f64 * h).norm_sqr() * h).sum();
        assert!((mass - PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn integrator_reproduces_free_gaussian() {
        let nls = make_preset("nls", &[]).unwrap();
        let err = gaussian_exactness(&nls, 1024, 200.0, 4.0, 0.1).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn nls_gaussian_decays_at_half_rate() {
        let nls = make_preset("nls", &[]).unwrap();
        let d = linear_decay(&nls, 4096, 2400.0, 1.0, (10.0, 200.0)).unwrap();
        assert!((d.fit.slope + 0.5).abs() < 0.01, "{}", d.fit.slope);
    }

    #[test]
    fn division_identity_holds_for_klein_gordon() {
        let kg = make_preset("klein_gordon", &[]).unwrap();
        let r = division_suite(&kg, 200, 3.0, 0.05, 1);
        assert!(r.identity < 1e-10 && r.diagonal < 1e-8 && r.factorized_vs_quotient < 1e-8, "{r:?}");
    }

    #[test]
    fn fast_paths_agree() {
        assert!(fast_path_suite(32, 9.0, 0..3).unwrap() < 1e-12);
    }
}
