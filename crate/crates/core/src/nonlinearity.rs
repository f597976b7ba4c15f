//! The cubic form `Q(u,ū,u)`, its balanced/unbalanced split and the normal-form correction.
//!
//! With spectra in the unitary normalization of [`crate::grid`], the discrete form is
//!
//! ```text
//! Q̂_k = (1/L) Σ_{k₁−k₂+k₃=k} q(ξ_{k₁},ξ_{k₂},ξ_{k₃}) s_{k₁} conj(s_{k₂}) s_{k₃}
//! ```
//!
//! summed over retained (non-dealiased) modes, which for constant `q₀` is exactly
//! the retained spectrum of `q₀|u|²u`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dispersion::DispersionSymbol;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{Grid, C64};
use crate::vectorfield::DyadicPartition;

/// Largest grid on which the direct triple sum is allowed.
pub const DENSE_LIMIT: usize = 256;

/// Dyadic window of the balanced set: `max |mᵢ − mⱼ| ≤ 4`.
pub const BALANCED_WINDOW: i32 = 4;

pub type Factor = Arc<dyn Fn(f64) -> C64 + Send + Sync>;
pub type DenseFn = Arc<dyn Fn(f64, f64, f64) -> C64 + Send + Sync>;

/// One rank-one term `ν₁(ξ₁) ν₂(ξ₂) ν₃(ξ₃) ν₄(ξ)`.
#[derive(Clone)]
pub struct SeparableTerm {
    pub nu: [Factor; 4],
}

impl SeparableTerm {
    pub fn new(nu: [Factor; 4]) -> SeparableTerm {
        SeparableTerm { nu }
    }

    /// Builds the factors from expressions in the single variable `xi`.
    pub fn from_exprs(exprs: [&str; 4]) -> Result<SeparableTerm> {
        let mut nu: Vec<Factor> = Vec::with_capacity(4);
        for src in exprs {
            let e = Expr::parse(src)?;
            nu.push(Arc::new(move |x| C64::new(e.eval(x, 0.0, 0.0), 0.0)));
        }
        let [a, b, c, d]: [Factor; 4] = nu.try_into().ok().expect("four factors");
        Ok(SeparableTerm { nu: [a, b, c, d] })
    }
}

#[derive(Clone)]
pub enum CubicKind {
    Constant(f64),
    Separable(Vec<SeparableTerm>),
    Dense(DenseFn),
}

/// The trilinear symbol `q(ξ₁,ξ₂,ξ₃)`.
#[derive(Clone)]
pub struct CubicSymbol {
    pub kind: CubicKind,
    pub real_on_diagonal: bool,
    label: String,
}

impl fmt::Debug for CubicSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CubicSymbol")
            .field("label", &self.label)
            .field("real_on_diagonal", &self.real_on_diagonal)
            .finish()
    }
}

impl CubicSymbol {
    pub fn constant(q0: f64) -> CubicSymbol {
        CubicSymbol {
            kind: CubicKind::Constant(q0),
            real_on_diagonal: true,
            label: format!("constant({q0})"),
        }
    }

    pub fn zero() -> CubicSymbol {
        CubicSymbol::constant(0.0)
    }

    pub fn separable(terms: Vec<SeparableTerm>, real_on_diagonal: bool) -> CubicSymbol {
        let label = format!("separable(rank {})", terms.len());
        CubicSymbol {
            kind: CubicKind::Separable(terms),
            real_on_diagonal,
            label,
        }
    }

    pub fn dense(f: DenseFn, real_on_diagonal: bool, label: &str) -> CubicSymbol {
        CubicSymbol {
            kind: CubicKind::Dense(f),
            real_on_diagonal,
            label: label.to_string(),
        }
    }

    /// Dense real symbol given by an expression in `xi1, xi2, xi3`.
    pub fn dense_expr(src: &str) -> Result<CubicSymbol> {
        let e = Expr::parse(src)?;
        let label = format!("dense({src})");
        Ok(CubicSymbol::dense(
            Arc::new(move |a, b, c| C64::new(e.eval(a, b, c), 0.0)),
            true,
            &label,
        ))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, CubicKind::Constant(q) if q == 0.0)
    }

    pub fn eval(&self, x1: f64, x2: f64, x3: f64) -> C64 {
        match &self.kind {
            CubicKind::Constant(q0) => C64::new(*q0, 0.0),
            CubicKind::Separable(terms) => {
                let x = x1 - x2 + x3;
                terms.iter().map(|t| (t.nu[0])(x1) * (t.nu[1])(x2) * (t.nu[2])(x3) * (t.nu[3])(x)).sum()
            }
            CubicKind::Dense(f) => f(x1, x2, x3),
        }
    }

    /// Checks the diagonal reality flag and boundedness on a sampled cube `[−r, r]³`.
    pub fn validate(&self, r: f64) -> Result<f64> {
        let n = 24;
        let node = |k: usize| -r + 2.0 * r * k as f64 / (n - 1) as f64;
        let mut sup = 0.0_f64;
        for i in 0..n {
            let x = node(i);
            let d = self.eval(x, x, x);
            if self.real_on_diagonal && d.im.abs() > 1e-12 * d.norm().max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "q({x},{x},{x}) = {d} is not real although flagged real on the diagonal"
                )));
            }
            for j in 0..n {
                for k in 0..n {
                    sup = sup.max(self.eval(x, node(j), node(k)).norm());
                }
            }
        }
        if !sup.is_finite() {
            return Err(Error::InvalidParameter(format!("{} is unbounded on the sampled cube", self.label)));
        }
        Ok(sup)
    }
}

/// `q(ξ,ξ,ξ)`.
pub fn diagonal_coefficient(q: &CubicSymbol, xi: f64) -> C64 {
    q.eval(xi, xi, xi)
}

/// Evaluates `Q(u,ū,u)` in spectral form.
pub fn apply_cubic(q: &CubicSymbol, grid: &Grid, s: &[C64]) -> Result<Vec<C64>> {
    grid.check_len(s.len())?;
    let mut out = match &q.kind {
        CubicKind::Constant(q0) => {
            if *q0 == 0.0 {
                return Ok(vec![C64::new(0.0, 0.0); s.len()]);
            }
            let mut u = grid.to_values(s);
            for z in u.iter_mut() {
                *z *= *q0 * z.norm_sqr();
            }
            grid.to_spectrum_in_place(&mut u);
            u
        }
        CubicKind::Separable(terms) => {
            let mut acc = vec![C64::new(0.0, 0.0); s.len()];
            for term in terms {
                let weighted = |nu: &Factor, conj: bool| {
                    let mut b: Vec<C64> = s
                        .iter()
                        .zip(grid.xi())
                        .map(|(z, &k)| if conj { nu(k).conj() * z } else { nu(k) * z })
                        .collect();
                    grid.to_values_in_place(&mut b);
                    b
                };
                let f1 = weighted(&term.nu[0], false);
                let f2 = weighted(&term.nu[1], true);
                let mut w = weighted(&term.nu[2], false);
                for ((z, a), b) in w.iter_mut().zip(&f1).zip(&f2) {
                    *z *= a * b.conj();
                }
                grid.to_spectrum_in_place(&mut w);
                for ((o, z), &k) in acc.iter_mut().zip(&w).zip(grid.xi()) {
                    *o += (term.nu[3])(k) * z;
                }
            }
            acc
        }
        CubicKind::Dense(f) => return apply_trilinear_dense(grid, s, |a, b, c| f(a, b, c)),
    };
    grid.apply_mask(&mut out);
    Ok(out)
}

/// Direct triple sum with an arbitrary symbol over retained modes.
pub fn apply_trilinear_dense<F>(grid: &Grid, s: &[C64], g: F) -> Result<Vec<C64>>
where
    F: Fn(f64, f64, f64) -> C64 + Sync,
{
    grid.check_len(s.len())?;
    let n = grid.n();
    if n > DENSE_LIMIT {
        return Err(Error::DenseLimit { n, limit: DENSE_LIMIT });
    }
    let kmax = (n / 4) as i64 - 1;
    let dxi = grid.dxi();
    let at = |k: i64| s[grid.slot(k)];
    let norm = 1.0 / grid.lx();
    let out: Vec<C64> = (0..n)
        .into_par_iter()
        .map(|slot| {
            let k = grid.signed_index(slot);
            if k.abs() > kmax {
                return C64::new(0.0, 0.0);
            }
            let mut acc = C64::new(0.0, 0.0);
            for k1 in -kmax..=kmax {
                let s1 = at(k1);
                if s1 == C64::new(0.0, 0.0) {
                    continue;
                }
                // k₂ = k₁ + k₃ − k must stay retained.
                let lo = (-kmax).max(k - k1 - kmax);
                let hi = kmax.min(k - k1 + kmax);
                for k3 in lo..=hi {
                    let k2 = k1 + k3 - k;
                    let term = s1 * at(k2).conj() * at(k3);
                    if term != C64::new(0.0, 0.0) {
                        acc += g(k1 as f64 * dxi, k2 as f64 * dxi, k3 as f64 * dxi) * term;
                    }
                }
            }
            acc * norm
        })
        .collect();
    Ok(out)
}

/// The multiplier `μ(ξ)` with `Q(e^{iξx}) = μ(ξ)e^{iξx}` on the grid.
pub fn calibrate_diagonal(q: &CubicSymbol, grid: &Grid, xi: f64) -> Result<f64> {
    let slot = grid.slot_of(xi);
    if (grid.xi()[slot] - xi).abs() > 1e-9 * grid.dxi() || !grid.dealias_mask()[slot] {
        return Err(Error::InvalidParameter(format!("{xi} is not a retained grid frequency")));
    }
    let mut s = vec![C64::new(0.0, 0.0); grid.n()];
    s[slot] = C64::new(grid.lx().sqrt(), 0.0);
    let out = apply_cubic(q, grid, &s)?;
    let mu = out[slot] / s[slot];
    let total: f64 = out.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let off: f64 = out
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != slot)
        .map(|(_, z)| z.norm_sqr())
        .sum::<f64>()
        .sqrt();
    let defect = if total == 0.0 { 0.0 } else { off / total };
    if defect > 1e-10 || mu.im.abs() > 1e-10 * mu.norm().max(1.0) {
        return Err(Error::NotProportional { xi, defect: defect.max(mu.im.abs()) });
    }
    Ok(mu.re)
}

/// Restriction of a trilinear operator to balanced dyadic quadruples.
///
/// Uses `1[range(m) ≤ K] = Σ_w (1[m ⊂ [w, w+K]] − 1[m ⊂ [w+1, w+K]])`, so each
/// window costs two applications of `op` to window-projected inputs.
pub fn balanced_part<F>(grid: &Grid, s: &[C64], part: &DyadicPartition, op: F) -> Result<Vec<C64>>
where
    F: Fn(&[C64]) -> Result<Vec<C64>>,
{
    let n = grid.n();
    let mut out = vec![C64::new(0.0, 0.0); n];
    let project = |lo: i32, hi: i32, v: &[C64]| -> (Vec<C64>, Vec<f64>) {
        let w: Vec<f64> = grid.xi().iter().map(|&k| part.window_weight(k, lo, hi)).collect();
        (v.iter().zip(&w).map(|(z, &a)| z * a).collect(), w)
    };
    for w in -BALANCED_WINDOW..=part.m_max() {
        for (lo, hi, sign) in [(w, w + BALANCED_WINDOW, 1.0), (w + 1, w + BALANCED_WINDOW, -1.0)] {
            let (sp, weight) = project(lo, hi, s);
            if sp.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                continue;
            }
            let q = op(&sp)?;
            for ((o, z), a) in out.iter_mut().zip(&q).zip(&weight) {
                *o += z * (sign * a);
            }
        }
    }
    Ok(out)
}

/// `(Q_bal, Q_unbal)` with `Q_bal + Q_unbal = Q` by construction.
pub fn split_balanced(q: &CubicSymbol, grid: &Grid, s: &[C64], part: &DyadicPartition) -> Result<(Vec<C64>, Vec<C64>)> {
    let total = apply_cubic(q, grid, s)?;
    let bal = balanced_part(grid, s, part, |v| apply_cubic(q, grid, v))?;
    let unbal = total.iter().zip(&bal).map(|(a, b)| a - b).collect();
    Ok((bal, unbal))
}

const GL3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 0.555_555_555_555_555_6),
    (0.0, 0.888_888_888_888_888_9),
    (0.774_596_669_241_483_4, 0.555_555_555_555_555_6),
];

const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// `∫₀¹ f` with a Gauss–Legendre rule mapped from `[−1, 1]`.
fn gauss(rule: &[(f64, f64)], f: impl Fn(f64) -> f64) -> f64 {
    rule.iter().map(|&(x, w)| 0.5 * w * f(0.5 * (x + 1.0))).sum()
}

/// Relative width below which the raw quotient is replaced.
pub const NEAR_DIAG_WIDTH: f64 = 1e-3;

/// Factors of the resonance and its `a′`-analogue:
/// `a(ξ₁)−a(ξ₂)+a(ξ₃)−a(ξ) = (ξ−ξ₁)(ξ−ξ₃)·b` and the same with `a′` and `b₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivisionFactors {
    pub b: f64,
    pub b1: f64,
}

impl DivisionFactors {
    pub fn c(&self) -> f64 {
        self.b1 / self.b
    }
}

fn both_small_factors(sym: &DispersionSymbol, x2: f64, p: f64, r: f64) -> DivisionFactors {
    let mut g = 0.0;
    let mut g1 = 0.0;
    for &(s, ws) in &GL4 {
        for &(u, wu) in &GL4 {
            let d = sym.derivatives(x2 + 0.5 * (s + 1.0) * p + 0.5 * (u + 1.0) * r);
            g += 0.25 * ws * wu * d[2];
            g1 += 0.25 * ws * wu * d[3];
        }
    }
    DivisionFactors { b: -g, b1: -g1 }
}

/// Factorized route: exact inner integral via an `a′` (resp. `a″`) difference,
/// composite 8-point Gauss–Legendre outer integral on panels of length ≤ 0.5.
pub fn division_factors(sym: &DispersionSymbol, x1: f64, x2: f64, x3: f64) -> DivisionFactors {
    let xi = x1 - x2 + x3;
    let (p, r) = (x1 - x2, x3 - x2);
    let width = NEAR_DIAG_WIDTH * (1.0 + xi * xi).sqrt();
    if p.abs().max(r.abs()) < width {
        return both_small_factors(sym, x2, p, r);
    }
    let (small, large) = if p.abs() <= r.abs() { (p, r) } else { (r, p) };
    let panels = (small.abs() / 0.5).ceil().max(1.0) as usize;
    let mut g = 0.0;
    let mut g1 = 0.0;
    for j in 0..panels {
        let (s0, h) = (j as f64 / panels as f64, 1.0 / panels as f64);
        for &(x, w) in &GL8 {
            let s = s0 + 0.5 * h * (x + 1.0);
            let base = x2 + s * small;
            let (lo, hi) = (sym.derivatives(base), sym.derivatives(base + large));
            g += 0.5 * h * w * (hi[1] - lo[1]) / large;
            g1 += 0.5 * h * w * (hi[2] - lo[2]) / large;
        }
    }
    DivisionFactors { b: -g, b1: -g1 }
}

/// `(a′(ξ₁)−a′(ξ₂)+a′(ξ₃)−a′(ξ)) / (a(ξ₁)−a(ξ₂)+a(ξ₃)−a(ξ))`, undefined on the zero set.
pub fn raw_quotient(sym: &DispersionSymbol, x1: f64, x2: f64, x3: f64) -> f64 {
    let xi = x1 - x2 + x3;
    let (d1, d2, d3, d) = (sym.derivatives(x1), sym.derivatives(x2), sym.derivatives(x3), sym.derivatives(xi));
    (d1[1] - d2[1] + d3[1] - d[1]) / (d1[0] - d2[0] + d3[0] - d[0])
}

/// The normal-form symbol `c(ξ₁,ξ₂,ξ₃)`, continuous through the diagonal.
pub fn normal_form_c(sym: &DispersionSymbol, x1: f64, x2: f64, x3: f64) -> f64 {
    if sym.is_quadratic() {
        return 0.0;
    }
    let xi = x1 - x2 + x3;
    let (p, r) = (x1 - x2, x3 - x2);
    let width = NEAR_DIAG_WIDTH * (1.0 + xi * xi).sqrt();
    match (p.abs() < width, r.abs() < width) {
        (false, false) => raw_quotient(sym, x1, x2, x3),
        (true, true) => both_small_factors(sym, x2, p, r).c(),
        (p_small, _) => {
            let (small, large) = if p_small { (p, r) } else { (r, p) };
            let g = gauss(&GL3, |s| {
                let base = x2 + s * small;
                (sym.a1(base + large) - sym.a1(base)) / large
            });
            let g1 = gauss(&GL3, |s| {
                let base = x2 + s * small;
                (sym.a2(base + large) - sym.a2(base)) / large
            });
            g1 / g
        }
    }
}

/// `NormalFormSymbol`: `c` bound to a dispersion symbol with its switching width.
#[derive(Debug, Clone)]
pub struct NormalFormSymbol {
    pub sym: DispersionSymbol,
    pub near_diag_width: f64,
}

impl NormalFormSymbol {
    pub fn new(sym: &DispersionSymbol) -> NormalFormSymbol {
        NormalFormSymbol {
            sym: sym.clone(),
            near_diag_width: NEAR_DIAG_WIDTH,
        }
    }

    pub fn c(&self, x1: f64, x2: f64, x3: f64) -> f64 {
        normal_form_c(&self.sym, x1, x2, x3)
    }
}

/// Tensor Chebyshev approximation of a trilinear symbol on a box `[lo, hi]³`.
#[derive(Debug, Clone)]
pub struct ChebTrilinear {
    pub lo: f64,
    pub hi: f64,
    pub degree: usize,
    coef: Vec<C64>,
}

fn cheb_all(x: f64, d: usize) -> Vec<f64> {
    let mut t = vec![1.0; d];
    if d > 1 {
        t[1] = x;
    }
    for n in 2..d {
        t[n] = 2.0 * x * t[n - 1] - t[n - 2];
    }
    t
}

impl ChebTrilinear {
    pub fn fit(g: impl Fn(f64, f64, f64) -> C64 + Sync, (lo, hi): (f64, f64), degree: usize) -> ChebTrilinear {
        let d = degree;
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let nodes: Vec<f64> = (0..d)
            .map(|j| (std::f64::consts::PI * (j as f64 + 0.5) / d as f64).cos())
            .collect();
        let samples: Vec<C64> = (0..d * d * d)
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = (idx / (d * d), (idx / d) % d, idx % d);
                g(mid + half * nodes[i], mid + half * nodes[j], mid + half * nodes[k])
            })
            .collect();
        let tmat: Vec<Vec<f64>> = nodes.iter().map(|&x| cheb_all(x, d)).collect();
        let factor = |n: usize| if n == 0 { 1.0 / d as f64 } else { 2.0 / d as f64 };
        // Transform one axis at a time.
        let mut cur = samples;
        for axis in 0..3 {
            let mut next = vec![C64::new(0.0, 0.0); d * d * d];
            let stride = d.pow(2 - axis as u32);
            for idx in 0..d * d * d {
                let n = (idx / stride) % d;
                let base = idx - n * stride;
                let mut acc = C64::new(0.0, 0.0);
                for (j, row) in tmat.iter().enumerate() {
                    acc += cur[base + j * stride] * row[n];
                }
                next[idx] = acc * factor(n);
            }
            cur = next;
        }
        ChebTrilinear { lo, hi, degree, coef: cur }
    }

    fn local(&self, x: f64) -> f64 {
        (2.0 * x - self.lo - self.hi) / (self.hi - self.lo)
    }

    pub fn eval(&self, x1: f64, x2: f64, x3: f64) -> C64 {
        let d = self.degree;
        let (t1, t2, t3) = (
            cheb_all(self.local(x1), d),
            cheb_all(self.local(x2), d),
            cheb_all(self.local(x3), d),
        );
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    acc += self.coef[(i * d + j) * d + k] * (t1[i] * t2[j] * t3[k]);
                }
            }
        }
        acc
    }

    /// Applies the approximated trilinear form; inputs are truncated to the box.
    pub fn apply(&self, grid: &Grid, s: &[C64]) -> Result<Vec<C64>> {
        grid.check_len(s.len())?;
        let d = self.degree;
        let n = grid.n();
        let f: Vec<Vec<C64>> = (0..d)
            .map(|i| {
                let mut b: Vec<C64> = s
                    .iter()
                    .zip(grid.xi())
                    .map(|(z, &k)| {
                        if k >= self.lo && k <= self.hi {
                            z * cheb_all(self.local(k), i + 1)[i]
                        } else {
                            C64::new(0.0, 0.0)
                        }
                    })
                    .collect();
                grid.to_values_in_place(&mut b);
                b
            })
            .collect();
        let mut w = vec![C64::new(0.0, 0.0); n];
        let mut h = vec![C64::new(0.0, 0.0); n];
        for j in 0..d {
            h.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            for i in 0..d {
                for k in 0..d {
                    let c = self.coef[(i * d + j) * d + k];
                    if c.norm() == 0.0 {
                        continue;
                    }
                    for ((hz, a), b) in h.iter_mut().zip(&f[i]).zip(&f[k]) {
                        *hz += c * a * b;
                    }
                }
            }
            for ((wz, hz), fj) in w.iter_mut().zip(&h).zip(&f[j]) {
                *wz += hz * fj.conj();
            }
        }
        grid.to_spectrum_in_place(&mut w);
        grid.apply_mask(&mut w);
        Ok(w)
    }
}

/// Default Chebyshev degree of the separable approximation of `c·q`.
pub const CORRECTION_DEGREE: usize = 10;

/// Frequency interval capturing the spectrum of `s` above `rel·max|s|`.
pub fn spectral_support(grid: &Grid, s: &[C64], rel: f64) -> (f64, f64) {
    let peak = s.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let (lo, hi) = s
        .iter()
        .zip(grid.xi())
        .filter(|(z, _)| z.norm() > rel * peak)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &k)| (lo.min(k), hi.max(k)));
    if lo > hi {
        (0.0, grid.dxi())
    } else if hi - lo < grid.dxi() {
        (lo - grid.dxi(), hi + grid.dxi())
    } else {
        (lo, hi)
    }
}

/// `t·C(u,ū,u)` with symbol `c·q` restricted to balanced quadruples.
///
/// Direct triple sum for `N ≤ 256`, tensor-Chebyshev separable approximation above.
pub fn apply_correction(
    sym: &DispersionSymbol,
    q: &CubicSymbol,
    grid: &Grid,
    s: &[C64],
    t: f64,
    part: &DyadicPartition,
) -> Result<Vec<C64>> {
    grid.check_len(s.len())?;
    if sym.is_quadratic() || q.is_zero() || s.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return Ok(vec![C64::new(0.0, 0.0); s.len()]);
    }
    let g = |a: f64, b: f64, c: f64| q.eval(a, b, c) * normal_form_c(sym, a, b, c);
    let mut out = if grid.n() <= DENSE_LIMIT {
        balanced_part(grid, s, part, |v| apply_trilinear_dense(grid, v, g))?
    } else {
        let cheb = ChebTrilinear::fit(g, spectral_support(grid, s, 1e-10), CORRECTION_DEGREE);
        balanced_part(grid, s, part, |v| cheb.apply(grid, v))?
    };
    out.iter_mut().for_each(|z| *z *= t);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{make_preset, PRESET_NAMES};
    use crate::vectorfield::build_dyadic;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(grid: &Grid, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s: Vec<C64> = (0..grid.n())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        grid.apply_mask(&mut s);
        s
    }

    fn max_rel(a: &[C64], b: &[C64]) -> f64 {
        let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
    }

    /// Brute-force triple sum over all slot pairs, independent of the fast index bounds.
    fn brute(grid: &Grid, s: &[C64], q: impl Fn(f64, f64, f64) -> C64) -> Vec<C64> {
        let n = grid.n() as i64;
        let keep = |k: i64| k.abs() < n / 4;
        let mut out = vec![C64::new(0.0, 0.0); grid.n()];
        for a in 0..grid.n() {
            for b in 0..grid.n() {
                for c in 0..grid.n() {
                    let (k1, k2, k3) = (grid.signed_index(a), grid.signed_index(b), grid.signed_index(c));
                    let k = k1 - k2 + k3;
                    if !(keep(k1) && keep(k2) && keep(k3) && keep(k)) {
                        continue;
                    }
                    let xi = grid.dxi();
                    out[grid.slot(k)] += q(k1 as f64 * xi, k2 as f64 * xi, k3 as f64 * xi) * s[a] * s[b].conj() * s[c];
                }
            }
        }
        out.iter_mut().for_each(|z| *z /= grid.lx());
        out
    }

    #[test]
    fn plane_wave_is_invariant() {
        let g = Grid::new(64, 10.0).unwrap();
        let k = g.xi()[5];
        let u: Vec<C64> = g.x().iter().map(|&x| C64::from_polar(1.0, k * x)).collect();
        let s = g.to_spectrum(&u);
        let out = apply_cubic(&CubicSymbol::constant(1.0), &g, &s).unwrap();
        assert!(max_rel(&out, &s) < 1e-13);
    }

    #[test]
    fn fast_paths_match_triple_sum() {
        let g = Grid::new(32, 7.0).unwrap();
        let s = random_state(&g, 3);
        let oracle = brute(&g, &s, |_, _, _| C64::new(1.0, 0.0));
        let fast = apply_cubic(&CubicSymbol::constant(1.0), &g, &s).unwrap();
        assert!(max_rel(&fast, &oracle) < 1e-12);
        let dense = apply_cubic(&CubicSymbol::dense_expr("1").unwrap(), &g, &s).unwrap();
        assert!(max_rel(&dense, &oracle) < 1e-12);
        let one = SeparableTerm::from_exprs(["1", "1", "1", "1"]).unwrap();
        let sep = apply_cubic(&CubicSymbol::separable(vec![one], true), &g, &s).unwrap();
        assert!(max_rel(&sep, &oracle) < 1e-12);
    }

    #[test]
    fn separable_matches_triple_sum() {
        let g = Grid::new(32, 9.0).unwrap();
        let s = random_state(&g, 11);
        let term = SeparableTerm::from_exprs(["exp(-xi^2)", "cos(xi)", "1/(1+xi^2)", "xi"]).unwrap();
        let q = CubicSymbol::separable(vec![term], false);
        let oracle = brute(&g, &s, |a, b, c| q.eval(a, b, c));
        let fast = apply_cubic(&q, &g, &s).unwrap();
        assert!(max_rel(&fast, &oracle) < 1e-12);
    }

    #[test]
    fn diagonal_values() {
        assert_eq!(diagonal_coefficient(&CubicSymbol::constant(1.0), 3.0), C64::new(1.0, 0.0));
        let q = CubicSymbol::dense_expr("xi1 - xi2 + xi3").unwrap();
        assert_eq!(diagonal_coefficient(&q, 2.0), C64::new(2.0, 0.0));
        let term = SeparableTerm::from_exprs(["2", "xi", "xi^2", "1+xi"]).unwrap();
        let q = CubicSymbol::separable(vec![term], true);
        // 2 · 1.5 · 2.25 · 2.5
        assert!((diagonal_coefficient(&q, 1.5).re - 16.875).abs() < 1e-14);
    }

    #[test]
    fn calibration() {
        let g = Grid::new(64, 20.0).unwrap();
        let xi = g.xi()[4];
        assert!((calibrate_diagonal(&CubicSymbol::constant(1.0), &g, xi).unwrap() - 1.0).abs() < 1e-13);
        assert!((calibrate_diagonal(&CubicSymbol::constant(-2.0), &g, xi).unwrap() + 2.0).abs() < 1e-13);
        let q = CubicSymbol::dense_expr("exp(-(xi1^2 + xi2^2 + xi3^2)/10)").unwrap();
        let mu = calibrate_diagonal(&q, &g, xi).unwrap();
        assert!((mu - (-3.0 * xi * xi / 10.0).exp()).abs() < 1e-10);
        assert!(calibrate_diagonal(&q, &g, 0.123).is_err());
    }

    #[test]
    fn conservative_for_real_constant() {
        let g = Grid::new(64, 12.0).unwrap();
        let s = random_state(&g, 5);
        let qs = apply_cubic(&CubicSymbol::constant(1.7), &g, &s).unwrap();
        let pairing: C64 = qs.iter().zip(&s).map(|(a, b)| a * b.conj()).sum();
        assert!(pairing.im.abs() < 1e-12 * pairing.re.abs());
    }

    #[test]
    fn dense_limit_is_enforced() {
        let g = Grid::new(512, 12.0).unwrap();
        let s = vec![C64::new(0.0, 0.0); 512];
        let q = CubicSymbol::dense_expr("1").unwrap();
        assert!(matches!(apply_cubic(&q, &g, &s), Err(Error::DenseLimit { .. })));
    }

    /// Block-enumeration oracle for the balanced part.
    fn balanced_oracle(grid: &Grid, s: &[C64], part: &DyadicPartition) -> Vec<C64> {
        let weights: Vec<Vec<(i32, f64)>> = grid.xi().iter().map(|&k| part.index_weights(k)).collect();
        let w_at = |xi: f64| part.index_weights(xi);
        let n = grid.n() as i64;
        let keep = |k: i64| k.abs() < n / 4;
        let mut out = vec![C64::new(0.0, 0.0); grid.n()];
        for a in 0..grid.n() {
            for b in 0..grid.n() {
                for c in 0..grid.n() {
                    let (k1, k2, k3) = (grid.signed_index(a), grid.signed_index(b), grid.signed_index(c));
                    let k = k1 - k2 + k3;
                    if !(keep(k1) && keep(k2) && keep(k3) && keep(k)) {
                        continue;
                    }
                    let w4 = w_at(k as f64 * grid.dxi());
                    let mut bal = 0.0;
                    for &(m1, p1) in &weights[a] {
                        for &(m2, p2) in &weights[b] {
                            for &(m3, p3) in &weights[c] {
                                for &(m4, p4) in &w4 {
                                    let ms = [m1, m2, m3, m4];
                                    let range = ms.iter().max().unwrap() - ms.iter().min().unwrap();
                                    if range <= BALANCED_WINDOW {
                                        bal += p1 * p2 * p3 * p4;
                                    }
                                }
                            }
                        }
                    }
                    out[grid.slot(k)] += s[a] * s[b].conj() * s[c] * bal;
                }
            }
        }
        out.iter_mut().for_each(|z| *z /= grid.lx());
        out
    }

    #[test]
    fn balanced_split_matches_block_enumeration() {
        let g = Grid::new(128, 40.0).unwrap();
        let part = build_dyadic(&g, 0.35).unwrap();
        assert!(part.m_max() > BALANCED_WINDOW + 1);
        let s = random_state(&g, 9);
        let (bal, unbal) = split_balanced(&CubicSymbol::constant(1.0), &g, &s, &part).unwrap();
        let oracle = balanced_oracle(&g, &s, &part);
        assert!(max_rel(&bal, &oracle) < 1e-12);
        let total = apply_cubic(&CubicSymbol::constant(1.0), &g, &s).unwrap();
        let sum: Vec<C64> = bal.iter().zip(&unbal).map(|(a, b)| a + b).collect();
        assert!(max_rel(&sum, &total) < 1e-12);
        assert!(unbal.iter().map(|z| z.norm()).fold(0.0, f64::max) > 1e-6);
    }

    #[test]
    fn single_block_data_is_fully_balanced() {
        let g = Grid::new(128, 80.0).unwrap();
        let part = build_dyadic(&g, 0.5).unwrap();
        let mut s = vec![C64::new(0.0, 0.0); g.n()];
        for (k, &xi) in g.xi().iter().enumerate() {
            if (1.55..1.7).contains(&xi) {
                s[k] = C64::new(1.0, 0.5);
            }
        }
        let (_, unbal) = split_balanced(&CubicSymbol::constant(1.0), &g, &s, &part).unwrap();
        assert!(unbal.iter().all(|z| z.norm() < 1e-13));
    }

    #[test]
    fn far_separated_packets_create_unbalanced_terms() {
        let g = Grid::new(128, 40.0).unwrap();
        let part = build_dyadic(&g, 0.35).unwrap();
        let mut s = vec![C64::new(0.0, 0.0); g.n()];
        s[g.slot_of(g.xi()[1])] = C64::new(1.0, 0.0);
        s[g.slot_of(g.xi()[30])] = C64::new(1.0, 0.0);
        let (_, unbal) = split_balanced(&CubicSymbol::constant(1.0), &g, &s, &part).unwrap();
        let oracle = balanced_oracle(&g, &s, &part);
        let total = apply_cubic(&CubicSymbol::constant(1.0), &g, &s).unwrap();
        let expected: Vec<C64> = total.iter().zip(&oracle).map(|(a, b)| a - b).collect();
        assert!(unbal.iter().zip(&expected).all(|(a, b)| (a - b).norm() < 1e-12));
        assert!(unbal.iter().map(|z| z.norm()).fold(0.0, f64::max) > 1e-3);
    }

    #[test]
    fn nls_normal_form_vanishes() {
        let nls = make_preset("nls", &[]).unwrap();
        assert_eq!(normal_form_c(&nls, 0.3, -1.2, 2.0), 0.0);
        let f = division_factors(&nls, 0.3, -1.2, 2.0);
        assert!(f.c().abs() < 1e-14);
    }

    #[test]
    fn diagonal_limit_is_third_over_second_derivative() {
        for name in PRESET_NAMES {
            let s = make_preset(name, &[]).unwrap();
            for &xi in &[-2.0, -0.3, 0.0, 0.7, 3.1] {
                let expect = s.a3(xi) / s.a2(xi);
                assert!((normal_form_c(&s, xi, xi, xi) - expect).abs() < 1e-12, "{name} {xi}");
                let off = raw_quotient(&s, xi + 1e-3, xi, xi + 1.3e-3);
                assert!((off - expect).abs() < 1e-2 * expect.abs().max(1.0), "{name} {xi}");
            }
        }
    }

    #[test]
    fn hybrid_c_is_continuous_across_the_switch() {
        let kg = make_preset("klein_gordon", &[]).unwrap();
        // ξ₁ = ξ₂ forces ξ = ξ₃; compare with the quotient at perturbed inputs.
        for &(x2, x3) in &[(0.4, 1.5), (-1.0, 2.0), (2.0, -0.5)] {
            let at = normal_form_c(&kg, x2, x2, x3);
            assert!(at.is_finite());
            let near = raw_quotient(&kg, x2 + 2e-3, x2, x3);
            assert!((at - near).abs() < 5e-3 * at.abs().max(1.0));
            // Just inside the switching width the factorized branch agrees with the quotient.
            for frac in [0.5, 0.9, 0.999] {
                let p = frac * NEAR_DIAG_WIDTH * (1.0 + x3 * x3).sqrt();
                let branch = normal_form_c(&kg, x2 + p, x2, x3);
                let quotient = raw_quotient(&kg, x2 + p, x2, x3);
                assert!((branch - quotient).abs() < 1e-8 * quotient.abs().max(1.0));
            }
        }
    }

    #[test]
    fn c_is_symmetric_under_outer_swap() {
        let s = make_preset("kdv_like", &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (a, b, c): (f64, f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let (x, y) = (normal_form_c(&s, a, b, c), normal_form_c(&s, c, b, a));
            assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn correction_vanishes_for_nls_and_zero_data() {
        let g = Grid::new(64, 30.0).unwrap();
        let part = build_dyadic(&g, 0.5).unwrap();
        let s = random_state(&g, 1);
        let nls = make_preset("nls", &[]).unwrap();
        let q = CubicSymbol::constant(1.0);
        assert!(apply_correction(&nls, &q, &g, &s, 5.0, &part).unwrap().iter().all(|z| z.norm() == 0.0));
        let kg = make_preset("klein_gordon", &[]).unwrap();
        let zero = vec![C64::new(0.0, 0.0); 64];
        assert!(apply_correction(&kg, &q, &g, &zero, 5.0, &part).unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn chebyshev_correction_matches_dense() {
        let g = Grid::new(256, 100.0).unwrap();
        let part = build_dyadic(&g, 0.25).unwrap();
        let kg = make_preset("klein_gordon", &[]).unwrap();
        let q = CubicSymbol::constant(1.0);
        let s: Vec<C64> = g
            .xi()
            .iter()
            .map(|&k| C64::new((-(k - 1.0) * (k - 1.0) * 8.0).exp(), 0.0))
            .collect();
        let gfun = |a: f64, b: f64, c: f64| normal_form_c(&kg, a, b, c) * q.eval(a, b, c);
        let dense = balanced_part(&g, &s, &part, |v| apply_trilinear_dense(&g, v, gfun)).unwrap();
        let err = |d: usize| {
            let cheb = ChebTrilinear::fit(gfun, spectral_support(&g, &s, 1e-10), d);
            let fast = balanced_part(&g, &s, &part, |v| cheb.apply(&g, v)).unwrap();
            max_rel(&fast, &dense)
        };
        let (coarse, fine) = (err(CORRECTION_DEGREE), err(18));
        assert!(coarse < 1e-2, "{coarse}");
        assert!(fine < 1e-4 && fine < coarse / 10.0, "{fine} vs {coarse}");
    }
}
