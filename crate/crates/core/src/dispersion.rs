//! Dispersion symbols `a(ξ)`, the Legendre phase `φ` and group-velocity inversion.
//!
//! All symbols are stored in convex normalization (`a″ > 0`). A concave symbol
//! is handled by conjugating the solution, which maps `a(ξ)` to `−a(−ξ)`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance of the group-velocity inversion.
pub const TOL_NEWTON: f64 = 1e-12;

const MAX_NEWTON_ITER: usize = 200;

/// The open interval `V = a′(ℝ)` of admissible group velocities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityRange {
    pub lo: f64,
    pub hi: f64,
}

impl VelocityRange {
    pub const REAL_LINE: VelocityRange = VelocityRange {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Distance kept from `∂V` when inverting `a′`; zero for `V = ℝ`.
    pub fn margin(&self) -> f64 {
        if self.is_bounded() {
            1e-3 * self.width()
        } else {
            0.0
        }
    }

    /// Strict membership with the boundary margin applied.
    pub fn contains_inner(&self, v: f64) -> bool {
        let m = self.margin();
        v.is_finite() && v > self.lo + m && v < self.hi - m
    }
}

#[derive(Clone)]
enum Family {
    Nls { alpha: f64 },
    KleinGordon { mass: f64 },
    SqgLike,
    KdvLike,
    GravityLike,
    Tabulated(Arc<TabulatedSymbol>),
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Nls { alpha } => write!(f, "Nls {{ alpha: {alpha} }}"),
            Family::KleinGordon { mass } => write!(f, "KleinGordon {{ mass: {mass} }}"),
            Family::SqgLike => f.write_str("SqgLike"),
            Family::KdvLike => f.write_str("KdvLike"),
            Family::GravityLike => f.write_str("GravityLike"),
            Family::Tabulated(t) => write!(f, "Tabulated({} samples)", t.xi.len()),
        }
    }
}

/// A convex dispersion symbol with closed-form (or spline) derivatives.
#[derive(Debug, Clone)]
pub struct DispersionSymbol {
    family: Family,
    name: String,
    sigma: f64,
    v_range: VelocityRange,
}

/// `φ(v)` and its first two derivatives together with `ξ_v = φ′(v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendrePhase {
    pub xi: f64,
    pub phi: f64,
    pub dphi: f64,
    pub d2phi: f64,
}

pub const PRESET_NAMES: [&str; 5] = ["nls", "klein_gordon", "sqg_like", "kdv_like", "gravity_like"];

/// Builds one of the preset symbol families.
///
/// `params` is optional: `nls` accepts a curvature `α` (`a = αξ²/2`) and
/// `klein_gordon` a mass `m` (`a = √(m²+ξ²)`). The other families take none.
pub fn make_preset(name: &str, params: &[f64]) -> Result<DispersionSymbol> {
    let positive = |p: f64, what: &str| -> Result<f64> {
        if p.is_finite() && p > 0.0 {
            Ok(p)
        } else {
            Err(Error::InvalidParameter(format!("{name}: {what} must be positive, got {p}")))
        }
    };
    let no_params = || -> Result<()> {
        if params.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{name} takes no parameters")))
        }
    };
    if params.len() > 1 {
        return Err(Error::InvalidParameter(format!(
            "{name} takes at most one parameter, got {}",
            params.len()
        )));
    }
    let (family, sigma, v_range) = match name {
        "nls" => {
            let alpha = positive(params.first().copied().unwrap_or(1.0), "alpha")?;
            (Family::Nls { alpha }, 0.0, VelocityRange::REAL_LINE)
        }
        "klein_gordon" => {
            let mass = positive(params.first().copied().unwrap_or(1.0), "mass")?;
            (Family::KleinGordon { mass }, -3.0, VelocityRange { lo: -1.0, hi: 1.0 })
        }
        "sqg_like" => {
            no_params()?;
            (Family::SqgLike, -1.0, VelocityRange::REAL_LINE)
        }
        "kdv_like" => {
            no_params()?;
            (Family::KdvLike, 1.0, VelocityRange::REAL_LINE)
        }
        "gravity_like" => {
            no_params()?;
            (Family::GravityLike, -1.5, VelocityRange { lo: -1.0, hi: 1.0 })
        }
        other => return Err(Error::UnknownFamily(other.to_string())),
    };
    Ok(DispersionSymbol {
        family,
        name: name.to_string(),
        sigma,
        v_range,
    })
}

impl DispersionSymbol {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn v_range(&self) -> VelocityRange {
        self.v_range
    }

    /// True when `a‴ ≡ 0`, i.e. the quadratic (NLS) symbol.
    pub fn is_quadratic(&self) -> bool {
        matches!(self.family, Family::Nls { .. })
    }

    /// `[a, a′, a″, a‴]` at `xi`.
    pub fn derivatives(&self, xi: f64) -> [f64; 4] {
        match &self.family {
            Family::Nls { alpha } => [0.5 * alpha * xi * xi, alpha * xi, *alpha, 0.0],
            Family::KleinGordon { mass } => {
                let m2 = mass * mass;
                let a = (m2 + xi * xi).sqrt();
                let a3 = a * a * a;
                [a, xi / a, m2 / a3, -3.0 * m2 * xi / (a3 * a * a)]
            }
            Family::SqgLike => {
                let s = (1.0 + xi * xi).sqrt();
                [xi * xi.asinh() - s, xi.asinh(), 1.0 / s, -xi / (s * s * s)]
            }
            Family::KdvLike => {
                let s = 1.0 + xi * xi;
                let r = s.sqrt();
                [
                    s * r / 3.0,
                    xi * r,
                    2.0 * r - 1.0 / r,
                    xi * (2.0 / r + 1.0 / (s * r)),
                ]
            }
            Family::GravityLike => gravity_derivatives(xi),
            Family::Tabulated(t) => t.derivatives(xi),
        }
    }

    pub fn a(&self, xi: f64) -> f64 {
        self.derivatives(xi)[0]
    }

    pub fn a1(&self, xi: f64) -> f64 {
        self.derivatives(xi)[1]
    }

    pub fn a2(&self, xi: f64) -> f64 {
        self.derivatives(xi)[2]
    }

    pub fn a3(&self, xi: f64) -> f64 {
        self.derivatives(xi)[3]
    }

    fn closed_form_inverse(&self, v: f64) -> Option<f64> {
        match &self.family {
            Family::Nls { alpha } => Some(v / alpha),
            Family::KleinGordon { mass } => Some(mass * v / (1.0 - v * v).sqrt()),
            Family::SqgLike => Some(v.sinh()),
            Family::KdvLike => {
                let x2 = 0.5 * ((1.0 + 4.0 * v * v).sqrt() - 1.0);
                Some(v.signum() * x2.sqrt())
            }
            Family::GravityLike | Family::Tabulated(_) => None,
        }
    }

    /// Solves `a′(ξ) = v` by safeguarded Newton iteration.
    pub fn invert_group_velocity(&self, v: f64) -> Result<f64> {
        let range = self.v_range;
        if !range.contains_inner(v) {
            return Err(Error::VelocityOutsideRange {
                v,
                lo: range.lo,
                hi: range.hi,
                margin: range.margin(),
            });
        }
        let tol = TOL_NEWTON * v.abs().max(1.0);
        let guess = self.closed_form_inverse(v).filter(|x| x.is_finite()).unwrap_or(0.0);

        // a′ is strictly increasing, so a bracket always exists for v ∈ V.
        let mut step = 1.0_f64.max(guess.abs() * 1e-3);
        let (mut lo, mut hi) = (guess - step, guess + step);
        let mut expansions = 0;
        while self.a1(lo) > v {
            lo -= step;
            step *= 2.0;
            expansions += 1;
            if expansions > 2000 || !lo.is_finite() {
                return Err(Error::NoConvergence(v));
            }
        }
        step = 1.0_f64.max(guess.abs() * 1e-3);
        while self.a1(hi) < v {
            hi += step;
            step *= 2.0;
            expansions += 1;
            if expansions > 2000 || !hi.is_finite() {
                return Err(Error::NoConvergence(v));
            }
        }

        let mut x = guess.clamp(lo, hi);
        for _ in 0..MAX_NEWTON_ITER {
            let [_, d1, d2, _] = self.derivatives(x);
            let f = d1 - v;
            if f.abs() <= tol {
                return Ok(x);
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - f / d2;
            x = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * x.abs().max(1.0) {
                let f = self.a1(x) - v;
                if f.abs() <= 10.0 * tol {
                    return Ok(x);
                }
                break;
            }
        }
        Err(Error::NoConvergence(v))
    }

    /// `φ(v) = vξ_v − a(ξ_v)` with `φ′ = ξ_v` and `φ″ = 1/a″(ξ_v)`.
    pub fn legendre_phase(&self, v: f64) -> Result<LegendrePhase> {
        let xi = self.invert_group_velocity(v)?;
        let [a, _, a2, _] = self.derivatives(xi);
        Ok(LegendrePhase {
            xi,
            phi: v * xi - a,
            dphi: xi,
            d2phi: 1.0 / a2,
        })
    }

    /// `(inf a″, sup |a‴|)` sampled on `[lo, hi]`.
    pub fn curvature_bounds(&self, lo: f64, hi: f64) -> (f64, f64) {
        let n = 2001;
        let mut inf2 = f64::INFINITY;
        let mut sup3 = 0.0_f64;
        for k in 0..n {
            let xi = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            let d = self.derivatives(xi);
            inf2 = inf2.min(d[2]);
            sup3 = sup3.max(d[3].abs());
        }
        (inf2, sup3)
    }

    /// Loads a tabulated symbol from a CSV file with header `xi,a,a1,a2`.
    pub fn from_table_file(name: &str, sigma: f64, path: &Path) -> Result<DispersionSymbol> {
        let text = std::fs::read_to_string(path)?;
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("xi")) {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            if cols.len() != 4 {
                return Err(Error::Config(format!(
                    "{}:{}: expected 4 columns (xi,a,a1,a2), got {}",
                    path.display(),
                    lineno + 1,
                    cols.len()
                )));
            }
            samples.push([cols[0], cols[1], cols[2], cols[3]]);
        }
        DispersionSymbol::tabulated(name, sigma, &samples)
    }

    /// Builds a symbol from `(ξ, a, a′, a″)` samples by quintic Hermite interpolation.
    ///
    /// Outside the sampled range the symbol is continued by its second-order Taylor
    /// polynomial, so `V = ℝ`.
    pub fn tabulated(name: &str, sigma: f64, samples: &[[f64; 4]]) -> Result<DispersionSymbol> {
        let table = TabulatedSymbol::new(samples)?;
        Ok(DispersionSymbol {
            family: Family::Tabulated(Arc::new(table)),
            name: name.to_string(),
            sigma,
            v_range: VelocityRange::REAL_LINE,
        })
    }
}

fn gravity_derivatives(xi: f64) -> [f64; 4] {
    let s = 1.0 + xi * xi;
    let w = s.sqrt().sqrt();
    let d = w + w * w;
    let a = w * w - 2.0 * w + 2.0 * (1.0 + w).ln();
    let a1 = xi / d;
    let num = 0.5 * w + 1.0 / (w * w) + 0.5 / (w * w * w);
    let den = d * d;
    let a2 = num / den;
    let dnum = 0.5 - 2.0 / (w * w * w) - 1.5 / (w * w * w * w);
    let dden = 2.0 * d * (1.0 + 2.0 * w);
    let dw = xi / (2.0 * w * w * w);
    let a3 = (dnum * den - num * dden) / (den * den) * dw;
    [a, a1, a2, a3]
}

#[derive(Debug)]
struct TabulatedSymbol {
    xi: Vec<f64>,
    /// Polynomial coefficients in the local coordinate `τ ∈ [0,1]` per interval.
    coef: Vec<[f64; 6]>,
    left: [f64; 3],
    right: [f64; 3],
}

impl TabulatedSymbol {
    fn new(samples: &[[f64; 4]]) -> Result<TabulatedSymbol> {
        if samples.len() < 2 {
            return Err(Error::InvalidParameter("tabulated symbol needs at least 2 samples".into()));
        }
        for w in samples.windows(2) {
            if !(w[1][0] > w[0][0]) {
                return Err(Error::InvalidParameter("tabulated xi must be strictly increasing".into()));
            }
        }
        if samples.iter().any(|s| !(s[3] > 0.0) || s.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidParameter(
                "tabulated a'' must be positive; represent a concave symbol by -a(-xi)".into(),
            ));
        }
        let coef = samples
            .windows(2)
            .map(|w| {
                let h = w[1][0] - w[0][0];
                let (p0, m0, c0) = (w[0][1], w[0][2] * h, w[0][3] * h * h);
                let (p1, m1, c1) = (w[1][1], w[1][2] * h, w[1][3] * h * h);
                let (k0, k1, k2) = (p0, m0, 0.5 * c0);
                let big_a = p1 - (k0 + k1 + k2);
                let big_b = m1 - (k1 + 2.0 * k2);
                let big_c = c1 - 2.0 * k2;
                [
                    k0,
                    k1,
                    k2,
                    10.0 * big_a - 4.0 * big_b + 0.5 * big_c,
                    -15.0 * big_a + 7.0 * big_b - big_c,
                    6.0 * big_a - 3.0 * big_b + 0.5 * big_c,
                ]
            })
            .collect();
        let first = samples[0];
        let last = samples[samples.len() - 1];
        let table = TabulatedSymbol {
            xi: samples.iter().map(|s| s[0]).collect(),
            coef,
            left: [first[1], first[2], first[3]],
            right: [last[1], last[2], last[3]],
        };
        // The interpolant must stay convex between samples as well.
        let (lo, hi) = (first[0], last[0]);
        for k in 0..=4000 {
            let x = lo + (hi - lo) * k as f64 / 4000.0;
            if !(table.derivatives(x)[2] > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "tabulated symbol loses convexity near xi = {x}; refine the table"
                )));
            }
        }
        Ok(table)
    }

    fn derivatives(&self, x: f64) -> [f64; 4] {
        let n = self.xi.len();
        if x <= self.xi[0] {
            let d = x - self.xi[0];
            let [a, a1, a2] = self.left;
            return [a + a1 * d + 0.5 * a2 * d * d, a1 + a2 * d, a2, 0.0];
        }
        if x >= self.xi[n - 1] {
            let d = x - self.xi[n - 1];
            let [a, a1, a2] = self.right;
            return [a + a1 * d + 0.5 * a2 * d * d, a1 + a2 * d, a2, 0.0];
        }
        let i = match self.xi.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        let h = self.xi[i + 1] - self.xi[i];
        let t = (x - self.xi[i]) / h;
        let c = &self.coef[i];
        let p = ((((c[5] * t + c[4]) * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0];
        let p1 = (((5.0 * c[5] * t + 4.0 * c[4]) * t + 3.0 * c[3]) * t + 2.0 * c[2]) * t + c[1];
        let p2 = ((20.0 * c[5] * t + 12.0 * c[4]) * t + 6.0 * c[3]) * t + 2.0 * c[2];
        let p3 = (60.0 * c[5] * t + 24.0 * c[4]) * t + 6.0 * c[3];
        [p, p1 / h, p2 / (h * h), p3 / (h * h * h)]
    }
}

/// Sobolev exponents `(s0, s1)` of the space `X` and the margin `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentChoice {
    pub s0: f64,
    pub s1: f64,
    pub delta: f64,
}

impl ExponentChoice {
    /// The two necessary conditions `s0 + s1 ≥ −σ` and `s1 ≤ s0 + 1`.
    pub fn satisfies_necessary(&self, sigma: f64) -> bool {
        let eps = 1e-12;
        self.s0 + self.s1 >= -sigma - eps && self.s1 <= self.s0 + 1.0 + eps
    }
}

/// Exponent table indexed by the growth rate `σ` of `a″`.
pub fn choose_exponents(sigma: f64, delta: f64) -> ExponentChoice {
    let (s0, s1) = if sigma < -3.0 {
        (-sigma - 2.0, -sigma - 1.0)
    } else if sigma < -2.0 {
        (1.0 + delta, -sigma - 1.0)
    } else if sigma < -1.0 {
        (-sigma - 1.0 + delta, 1.0)
    } else if sigma <= 1.0 {
        (-(sigma + 1.0) / 2.0 + delta, -(sigma - 1.0) / 2.0)
    } else {
        (-1.0, 0.0)
    };
    ExponentChoice { s0, s1, delta }
}
