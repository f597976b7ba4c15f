//! Log-log least-squares fits of power laws `value ≈ C·t^α`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted power law of one time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub quantity: String,
    pub t: Vec<f64>,
    pub value: Vec<f64>,
    pub window: (f64, f64),
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl FitReport {
    pub fn points(&self) -> usize {
        self.t.len()
    }

    /// `C·t^α` at `t`.
    pub fn predict(&self, t: f64) -> f64 {
        (self.intercept + self.slope * t.ln()).exp()
    }
}

/// Least-squares slope of `(ln t, ln value)` over the samples with `t` in `window`.
///
/// Needs at least five samples in the window, all with positive values.
pub fn fit_exponent(quantity: &str, t: &[f64], value: &[f64], window: (f64, f64)) -> Result<FitReport> {
    if t.len() != value.len() {
        return Err(Error::InvalidParameter(format!(
            "{quantity}: {} times but {} values",
            t.len(),
            value.len()
        )));
    }
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParameter(format!("{quantity}: degenerate window [{lo}, {hi}]")));
    }
    let tol = 1e-9;
    let picked: Vec<(f64, f64)> = t
        .iter()
        .zip(value)
        .filter(|(&tt, _)| tt >= lo * (1.0 - tol) && tt <= hi * (1.0 + tol))
        .map(|(&tt, &v)| (tt, v))
        .collect();
    if picked.len() < 5 {
        return Err(Error::InsufficientSamples(format!(
            "{quantity}: {} samples in [{lo}, {hi}], need 5",
            picked.len()
        )));
    }
    if let Some(&(tt, v)) = picked.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{quantity}: nonpositive value {v} at t = {tt}")));
    }
    let xs: Vec<f64> = picked.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = picked.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx <= 1e-14 * n {
        return Err(Error::InvalidParameter(format!("{quantity}: all samples at the same time")));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy <= 1e-300 { 1.0 } else { 1.0 - sse / syy };
    Ok(FitReport {
        quantity: quantity.to_string(),
        t: picked.iter().map(|p| p.0).collect(),
        value: picked.iter().map(|p| p.1).collect(),
        window,
        slope,
        intercept,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geometric(n: usize) -> Vec<f64> {
        (0..n).map(|k| 10.0 * 1.2_f64.powi(k as i32)).collect()
    }

    #[test]
    fn exact_power_law() {
        let t = geometric(20);
        let v: Vec<f64> = t.iter().map(|t| t.powf(-0.5)).collect();
        let f = fit_exponent("sup", &t, &v, (1.0, 1e6)).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!(f.intercept.abs() < 1e-11);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        let c = fit_exponent("c", &t, &vec![3.0; t.len()], (1.0, 1e6)).unwrap();
        assert!(c.slope.abs() < 1e-14);
        assert!((c.predict(77.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn window_and_validation() {
        let t = geometric(20);
        let v: Vec<f64> = t.iter().map(|&t| if t < 50.0 { 1.0 } else { 1.0 / t }).collect();
        let f = fit_exponent("w", &t, &v, (50.0, 1e9)).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!(f.t.iter().all(|&x| x >= 50.0));
        assert!(fit_exponent("few", &t, &v, (10.0, 20.0)).is_err());
        let mut bad = v.clone();
        bad[15] = 0.0;
        assert!(fit_exponent("neg", &t, &bad, (1.0, 1e9)).is_err());
        assert!(fit_exponent("deg", &t, &v, (5.0, 5.0)).is_err());
        assert!(fit_exponent("len", &t[..3], &v, (1.0, 1e9)).is_err());
    }

    proptest! {
        #[test]
        fn recovers_any_exponent(alpha in -3.0f64..3.0, c in 0.01f64..100.0) {
            let t = geometric(12);
            let v: Vec<f64> = t.iter().map(|t| c * t.powf(alpha)).collect();
            let f = fit_exponent("p", &t, &v, (1.0, 1e9)).unwrap();
            prop_assert!((f.slope - alpha).abs() < 1e-10);
            prop_assert!((f.intercept - c.ln()).abs() < 1e-9);
        }
    }
}
