//! Exact value of the discrete stopping problem for the `H = 0` process
//! `Y_j = ξ_j − ξ_0` with i.i.d. standard normals, by backward recursion.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};

/// `φ(x) + xΦ(x)`.
pub fn gamma(x: f64) -> f64 {
    if x > 0.0 {
        // φ even, Φ(x) = 1 − Φ(−x): avoids cancellation on the right
        return x + gamma(-x);
    }
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let cdf = 0.5 * libm::erfc(-x * FRAC_1_SQRT_2);
    pdf + x * cdf
}

#[derive(Clone, Debug, Serialize)]
pub struct H0Solution {
    pub steps: usize,
    /// `mu[j−1] = μ_j` for `j = 1..=J`; `μ_J = 0`.
    pub mu: Vec<f64>,
    /// `μ_1`, the value for unscaled increments `ξ_j − ξ_0`.
    pub value_unscaled: f64,
    /// The value for `(ξ_j − ξ_0)/√2`, the normalization the sampler uses.
    pub value_scaled: f64,
}

/// `μ_J = 0`, `μ_j = √(j/(j+1)) γ(μ_{j+1} √((j+1)/j))`.
pub fn solve(steps: usize) -> Result<H0Solution> {
    if steps == 0 {
        return Err(Error::Domain("the H=0 recursion needs at least one step".into()));
    }
    let mut mu = vec![0.0; steps];
    for j in (1..steps).rev() {
        let r = ((j + 1) as f64 / j as f64).sqrt();
        mu[j - 1] = gamma(mu[j] * r) / r;
    }
    let value_unscaled = mu[0];
    Ok(H0Solution { steps, mu, value_unscaled, value_scaled: value_unscaled * FRAC_1_SQRT_2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::sample_h0;
    use crate::stopping::StopEvaluation;

    #[test]
    fn gamma_values() {
        assert!((gamma(0.0) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-16);
        assert!(gamma(8.0) - 8.0 < 1e-14 && gamma(8.0) >= 8.0);
        assert!(gamma(-8.0) < 1e-14 && gamma(-8.0) > 0.0);
        // γ' = Φ, so γ is increasing and convex
        let h = 1e-5;
        for i in -40..40 {
            let x = i as f64 * 0.2;
            let d = (gamma(x + h) - gamma(x - h)) / (2.0 * h);
            let cdf = 0.5 * libm::erfc(-x * FRAC_1_SQRT_2);
            assert!((d - cdf).abs() < 1e-9, "x={x}");
        }
    }

    #[test]
    fn known_values() {
        let s = solve(100).unwrap();
        assert!((s.value_scaled - 1.5830).abs() < 5e-4, "{}", s.value_scaled);
        assert!((s.value_unscaled - 2.23874).abs() < 1e-5);
        assert_eq!(solve(1).unwrap().value_unscaled, 0.0);
        let two = solve(2).unwrap();
        assert!((two.value_unscaled - FRAC_1_SQRT_2 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!(solve(0).is_err());
    }

    #[test]
    fn structure() {
        let s = solve(300).unwrap();
        assert_eq!(*s.mu.last().unwrap(), 0.0);
        assert!(s.mu[..299].iter().all(|&m| m > 0.0));
        for j in 0..299 {
            assert!(s.mu[j] >= gamma(2.0 * s.mu[j + 1]) / 2.0);
        }
        let mut prev = 0.0;
        for j in 1..=1000 {
            let v = solve(j).unwrap().value_unscaled;
            assert!(v >= prev);
            prev = v;
        }
        assert!(solve(1000).unwrap().value_scaled > solve(100).unwrap().value_scaled + 0.5);
    }

    #[test]
    fn optimal_rule_achieves_the_value() {
        // With ȳ_j the mean of Y_0..Y_j (a martingale), continuing from j is worth
        // ȳ_j + μ_{j+1}; the scaled process scales both by 1/√2.
        let steps = 20;
        let s = solve(steps).unwrap();
        let b = sample_h0(steps, 200_000, 5).unwrap();
        let vals: Vec<f64> = (0..b.len())
            .map(|m| {
                let y = b.y.row(m);
                let mut sum = 0.0;
                for j in 1..steps {
                    sum += y[j];
                    if y[j] >= sum / (j + 1) as f64 + s.mu[j] * FRAC_1_SQRT_2 {
                        return y[j];
                    }
                }
                y[steps]
            })
            .collect();
        let e = StopEvaluation::from_samples(&vals);
        assert!((e.value - s.value_scaled).abs() < 4.0 * e.std_error, "{} vs {}", e.value, s.value_scaled);
    }
}
