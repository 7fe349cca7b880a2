use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Gaussian-kernel density estimate over scalar scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    pub bandwidth: f64,
    pub centers: Vec<f64>,
}

/// Robust Silverman rule: `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
/// Returns zero for degenerate samples.
pub fn silverman_bandwidth(scores: &[f64]) -> f64 {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    0.9 * var.sqrt().min(iqr / 1.34) * n.powf(-0.2)
}

/// Linear interpolation between order statistics.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Kde {
    pub fn fit(scores: &[f64]) -> Result<Self> {
        if scores.len() < 2 {
            return Err(Error::InvalidParameter("kde needs at least two scores".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("kde scores must be finite".into()));
        }
        let mut bandwidth = silverman_bandwidth(scores);
        if bandwidth.is_nan() || bandwidth <= 0.0 {
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            bandwidth = 1e-3 * (1.0 + mean.abs());
        }
        Ok(Self { bandwidth, centers: scores.to_vec() })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self
            .centers
            .iter()
            .map(|&c| {
                let z = (x - c) / h;
                (-0.5 * z * z).exp()
            })
            .sum();
        sum * INV_SQRT_2PI / (h * self.centers.len() as f64)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self
            .centers
            .iter()
            .map(|&c| 0.5 * erfc(-(x - c) / (h * std::f64::consts::SQRT_2)))
            .sum();
        sum / self.centers.len() as f64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let c = self.centers[rng.random_range(0..self.centers.len())];
        let z: f64 = StandardNormal.sample(rng);
        c + self.bandwidth * z
    }

    pub fn support(&self) -> (f64, f64) {
        let lo = self.centers.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.centers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn mean(&self) -> f64 {
        self.centers.iter().sum::<f64>() / self.centers.len() as f64
    }
}
