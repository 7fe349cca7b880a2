//! Shared fixtures for the criterion benchmarks.

use rbse_core::domain::Pmf;

/// A peaked posterior over `n` symbols with mass decaying geometrically
/// from index 0.
pub fn geometric_posterior(n: usize, ratio: f64) -> Pmf {
    let weights: Vec<f64> = (0..n).map(|i| ratio.powi(i as i32)).collect();
    rbse_core::normalize(&weights).expect("geometric weights are positive")
}
