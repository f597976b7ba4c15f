//! Dyadic frequency blocks with ratio `1+μ` and the induced velocity partition.

use std::f64::consts::FRAC_PI_4;

use crate::dispersion::DispersionSymbol;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// One frequency block `I_λ^±`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub lo: f64,
    pub hi: f64,
    /// Dyadic index `m` with `λ = (1+μ)^m`; zero for the low-frequency intervals.
    pub m: i32,
    pub center: f64,
}

/// Smooth partition of unity `1 = Σ_λ ν_λ(ξ)` subordinate to the blocks.
#[derive(Debug, Clone)]
pub struct DyadicPartition {
    mu: f64,
    blocks: Vec<Block>,
    /// Interior breakpoints `b_i` between block `i` and `i+1`.
    breaks: Vec<f64>,
    /// Half-width of the raised-cosine transition at each breakpoint.
    half: Vec<f64>,
}

fn ramp(xi: f64, b: f64, h: f64) -> f64 {
    if xi <= b - h {
        0.0
    } else if xi >= b + h {
        1.0
    } else {
        let s = (FRAC_PI_4 * (1.0 + (xi - b) / h)).sin();
        s * s
    }
}

/// Builds the partition covering the resolved frequencies of `grid`.
pub fn build_dyadic(grid: &Grid, mu: f64) -> Result<DyadicPartition> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::InvalidParameter(format!("dyadic ratio mu must lie in (0, 1], got {mu}")));
    }
    let n_low = (1.0 / mu).round().max(1.0) as usize;
    let low_width = 1.0 / n_low as f64;
    if low_width < 2.0 * grid.dxi() {
        return Err(Error::InvalidParameter(format!(
            "grid too coarse for mu = {mu}: block width {low_width} below two frequency steps {}",
            2.0 * grid.dxi()
        )));
    }
    let xi_top = grid.xi().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut positive = Vec::new();
    for j in 0..n_low {
        let lo = j as f64 * low_width;
        let hi = (j + 1) as f64 * low_width;
        positive.push(Block { lo, hi, m: 0, center: 0.5 * (lo + hi) });
    }
    let mut m = 1;
    loop {
        let lo = (1.0 + mu).powi(m - 1);
        let hi = (1.0 + mu).powi(m);
        positive.push(Block { lo, hi, m, center: (lo * hi).sqrt() });
        if hi > xi_top {
            break;
        }
        m += 1;
    }
    let mut blocks: Vec<Block> = positive
        .iter()
        .rev()
        .map(|b| Block { lo: -b.hi, hi: -b.lo, m: b.m, center: -b.center })
        .collect();
    blocks.extend(positive);
    let breaks: Vec<f64> = blocks.windows(2).map(|w| w[0].hi).collect();
    let half = blocks
        .windows(2)
        .map(|w| 0.1 * (w[0].hi - w[0].lo).min(w[1].hi - w[1].lo))
        .collect();
    Ok(DyadicPartition { mu, blocks, breaks, half })
}

impl DyadicPartition {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn m_max(&self) -> i32 {
        self.blocks.iter().map(|b| b.m).max().unwrap_or(0)
    }

    /// `ν_i(ξ)` for block `i`. The outermost blocks extend to `±∞`.
    pub fn weight(&self, i: usize, xi: f64) -> f64 {
        let left = if i == 0 { 1.0 } else { ramp(xi, self.breaks[i - 1], self.half[i - 1]) };
        let right = if i + 1 == self.blocks.len() {
            0.0
        } else {
            ramp(xi, self.breaks[i], self.half[i])
        };
        left - right
    }

    /// Index of the block whose core contains `xi`.
    pub fn locate(&self, xi: f64) -> usize {
        self.breaks.partition_point(|&b| b <= xi)
    }

    /// The (at most two) blocks with nonzero weight at `xi`.
    pub fn active(&self, xi: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
        let i = self.locate(xi);
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(self.blocks.len() - 1);
        (lo..=hi).filter_map(move |j| {
            let w = self.weight(j, xi);
            (w != 0.0).then_some((j, w))
        })
    }

    /// `Σ ν_λ(ξ)` over blocks with dyadic index in `[m_lo, m_hi]`.
    pub fn window_weight(&self, xi: f64, m_lo: i32, m_hi: i32) -> f64 {
        self.active(xi)
            .filter(|(j, _)| (m_lo..=m_hi).contains(&self.blocks[*j].m))
            .map(|(_, w)| w)
            .sum()
    }

    /// Weights aggregated by dyadic index, `Π_m(ξ) = Σ_{λ: m(λ)=m} ν_λ(ξ)`.
    pub fn index_weights(&self, xi: f64) -> Vec<(i32, f64)> {
        let mut out: Vec<(i32, f64)> = Vec::with_capacity(2);
        for (j, w) in self.active(xi) {
            let m = self.blocks[j].m;
            match out.iter_mut().find(|(mm, _)| *mm == m) {
                Some(e) => e.1 += w,
                None => out.push((m, w)),
            }
        }
        out
    }
}

/// Velocity blocks `J_λ = a′(I_λ)` at time `t` and the cutoffs in `x`.
#[derive(Debug, Clone)]
pub struct VelocityPartition {
    pub t: f64,
    /// `(J_λ, tJ_λ)` per frequency block.
    pub intervals: Vec<((f64, f64), (f64, f64))>,
    /// Threshold `λ₀` with `tλ₀²a″(λ₀) = 1`, when `σ < −2`.
    pub lambda0: Option<f64>,
    part: DyadicPartition,
    sym: DispersionSymbol,
}

/// Larger root of `t·λ²·a″(λ) = 1`, or `None` when `max λ²a″ < 1/t`.
pub fn lambda0(sym: &DispersionSymbol, t: f64) -> Option<f64> {
    let g = |l: f64| t * l * l * sym.a2(l) - 1.0;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..=600 {
        let l = 10f64.powf(-3.0 + 9.0 * k as f64 / 600.0);
        let v = g(l);
        if v > best.0 {
            best = (v, l);
        }
    }
    if best.0 < 0.0 {
        return None;
    }
    let mut lo = best.1;
    let mut hi = lo;
    while g(hi) >= 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

pub fn build_velocity_partition(part: &DyadicPartition, sym: &DispersionSymbol, t: f64) -> Result<VelocityPartition> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("velocity partition needs t > 0, got {t}")));
    }
    let intervals = part
        .blocks()
        .iter()
        .map(|b| {
            let j = (sym.a1(b.lo), sym.a1(b.hi));
            (j, (t * j.0, t * j.1))
        })
        .collect();
    let lambda0 = if sym.sigma() < -2.0 { lambda0(sym, t) } else { None };
    Ok(VelocityPartition {
        t,
        intervals,
        lambda0,
        part: part.clone(),
        sym: sym.clone(),
    })
}

/// Cutoff values at a spatial point.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCutoffs {
    /// `χ_λ(x)` for blocks below the threshold (all blocks when there is none).
    pub blocks: Vec<(usize, f64)>,
    pub hi: f64,
    pub out: f64,
}

impl VelocityPartition {
    /// `χ_λ(x) = ν_λ(ξ_{x/t})` inside `tV`, `χ_out = 1` outside; blocks with
    /// `|λ| ≥ λ₀` are merged into `χ_hi`.
    pub fn cutoffs(&self, x: f64) -> SpatialCutoffs {
        let v = x / self.t;
        let Ok(xi) = self.sym.invert_group_velocity(v) else {
            return SpatialCutoffs { blocks: Vec::new(), hi: 0.0, out: 1.0 };
        };
        let mut blocks = Vec::new();
        let mut hi = 0.0;
        for (j, w) in self.part.active(xi) {
            let b = self.part.blocks()[j];
            match self.lambda0 {
                Some(l0) if b.lo.abs().min(b.hi.abs()) >= l0 => hi += w,
                _ => blocks.push((j, w)),
            }
        }
        SpatialCutoffs { blocks, hi, out: 0.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::make_preset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid {
        Grid::new(1024, 200.0).unwrap()
    }

    #[test]
    fn partition_of_unity_at_random_points() {
        let g = grid();
        let p = build_dyadic(&g, 0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let top = g.xi().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        for _ in 0..10_000 {
            let xi = rng.gen_range(-top..top);
            let s: f64 = (0..p.blocks().len()).map(|i| p.weight(i, xi)).sum();
            assert!((s - 1.0).abs() < 1e-12, "{xi}: {s}");
            let fast: f64 = p.active(xi).map(|(_, w)| w).sum();
            assert!((fast - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn octave_blocks_for_unit_ratio() {
        let p = build_dyadic(&grid(), 1.0).unwrap();
        let pos: Vec<_> = p.blocks().iter().filter(|b| b.lo >= 0.0).collect();
        assert_eq!((pos[0].lo, pos[0].hi, pos[0].m), (0.0, 1.0, 0));
        for (k, b) in pos.iter().skip(1).enumerate() {
            assert_eq!(b.lo, 2f64.powi(k as i32));
            assert_eq!(b.hi, 2f64.powi(k as i32 + 1));
        }
    }

    #[test]
    fn weights_are_supported_in_doubled_blocks() {
        let p = build_dyadic(&grid(), 0.5).unwrap();
        let last = p.blocks().len() - 1;
        for (i, b) in p.blocks().iter().enumerate().filter(|(i, _)| *i != 0 && *i != last) {
            let w = b.hi - b.lo;
            for k in 0..200 {
                let xi = b.lo - w + 3.0 * w * k as f64 / 199.0;
                let inside = xi >= b.lo - 0.5 * w && xi <= b.hi + 0.5 * w;
                if !inside && p.weight(i, xi) != 0.0 {
                    panic!("block {i} leaks at {xi}");
                }
            }
        }
    }

    #[test]
    fn too_coarse_grid_is_rejected() {
        let g = Grid::new(64, 4.0).unwrap();
        assert!(build_dyadic(&g, 0.1).is_err());
    }

    #[test]
    fn klein_gordon_threshold_at_t_100() {
        let kg = make_preset("klein_gordon", &[]).unwrap();
        let l0 = lambda0(&kg, 100.0).unwrap();
        let resid = 100.0 * l0 * l0 * kg.a2(l0) - 1.0;
        assert!(resid.abs() < 1e-8);
        // Independent bisection of 100·λ²(1+λ²)^{−3/2} = 1 on [2, 1000].
        let f = |l: f64| 100.0 * l * l * (1.0 + l * l).powf(-1.5) - 1.0;
        let (mut lo, mut hi) = (2.0_f64, 1000.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((l0 - lo).abs() < 1e-9 * lo);
        assert!((l0 - 99.984997374).abs() < 1e-6);
        assert!(lambda0(&make_preset("nls", &[]).unwrap(), 100.0).map_or(true, |l| l > 0.0));
        // Too early: the maximum of λ²a″ is 2/3^{3/2} < 1/t.
        assert!(lambda0(&kg, 2.0).is_none());
    }

    #[test]
    fn velocity_cutoffs_sum_to_one() {
        let kg = make_preset("klein_gordon", &[]).unwrap();
        let p = build_dyadic(&grid(), 0.25).unwrap();
        let vp = build_velocity_partition(&p, &kg, 100.0).unwrap();
        assert!(vp.lambda0.is_some());
        for k in 0..400 {
            let x = -150.0 + 300.0 * k as f64 / 399.0;
            let c = vp.cutoffs(x);
            let s: f64 = c.blocks.iter().map(|(_, w)| w).sum::<f64>() + c.hi + c.out;
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(vp.cutoffs(120.0).out, 1.0);
    }
}
