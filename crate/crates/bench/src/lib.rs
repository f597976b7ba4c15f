//! Shared inputs for the benchmarks.

use std::sync::Arc;

use dispersim::{Grid, State, C64};

/// Modulated Gaussian `e^{−x²/(2w²)} e^{ix}` at time `t` on an `n`-point grid of length `lx`.
pub fn gaussian_state(n: usize, lx: f64, width: f64, t: f64) -> State {
    let grid = Arc::new(Grid::new(n, lx).expect("valid grid"));
    let v = grid
        .x()
        .iter()
        .map(|&x| C64::from_polar((-x * x / (2.0 * width * width)).exp(), x))
        .collect();
    State::from_values(grid, t, v).expect("grid-consistent values")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_peaks_at_one() {
        let s = gaussian_state(256, 40.0, 2.0, 1.0);
        assert!((s.sup() - 1.0).abs() < 1e-12);
        assert_eq!(s.t, 1.0);
    }
}
