//! Beta-fit confidence intervals and paired rank tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Largest nonzero-pair count handled by exact enumeration.
pub const EXACT_MAX_N: usize = 20;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Statistics("spearman needs two equally long samples of size >= 2".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Statistics("spearman is undefined for a constant sample".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaShape {
    pub alpha: f64,
    pub beta: f64,
}

/// Method-of-moments Beta fit with a central interval. `shape` is `None`
/// when the moments admit no Beta distribution; the interval is then the
/// point `[mean, mean]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub mean: f64,
    pub variance: f64,
    pub shape: Option<BetaShape>,
    pub mass: f64,
    pub lo: f64,
    pub hi: f64,
}

impl BetaFit {
    pub fn cdf(&self, x: f64) -> Option<f64> {
        self.shape.map(|s| beta_cdf(s, x))
    }
}

fn beta_cdf(shape: BetaShape, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta_reg(shape.alpha, shape.beta, x)
    }
}

/// Quantile of a Beta distribution by bisection on its CDF.
pub fn beta_quantile(shape: BetaShape, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_cdf(shape, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn beta_fit_ci(samples: &[f64], mass: f64) -> Result<BetaFit> {
    if samples.len() < 2 {
        return Err(Error::Statistics("beta fit needs at least two samples".into()));
    }
    if samples.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Statistics("beta fit samples must lie in [0, 1]".into()));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::Statistics("interval mass must lie in (0, 1)".into()));
    }
    let m = mean(samples);
    let v = sample_variance(samples);
    if v <= 0.0 || v >= m * (1.0 - m) {
        return Ok(BetaFit { mean: m, variance: v, shape: None, mass, lo: m, hi: m });
    }
    let k = m * (1.0 - m) / v - 1.0;
    let shape = BetaShape { alpha: m * k, beta: (1.0 - m) * k };
    let tail = (1.0 - mass) / 2.0;
    Ok(BetaFit {
        mean: m,
        variance: v,
        shape: Some(shape),
        mass,
        lo: beta_quantile(shape, tail),
        hi: beta_quantile(shape, 1.0 - tail),
    })
}

/// Paired signed-rank test of `a` against `b` on the differences `a - b`.
/// `p_greater` is for the alternative that `a` tends to exceed `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    pub statistic: f64,
    pub p_two_sided: f64,
    pub p_less: f64,
    pub p_greater: f64,
    pub exact: bool,
}

struct SignedRanks {
    ranks: Vec<f64>,
    w_plus: f64,
    w_minus: f64,
}

fn signed_ranks(a: &[f64], b: &[f64]) -> Result<SignedRanks> {
    if a.len() != b.len() {
        return Err(Error::Statistics(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| d.is_nan()) {
        return Err(Error::Statistics("paired samples contain NaN".into()));
    }
    if diffs.is_empty() {
        return Err(Error::Statistics("all paired differences are zero".into()));
    }
    if diffs.len() < 5 {
        return Err(Error::Statistics(format!("only {} nonzero differences; at least 5 needed", diffs.len())));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let w_minus = diffs.iter().zip(&ranks).filter(|(d, _)| **d < 0.0).map(|(_, r)| r).sum();
    Ok(SignedRanks { ranks, w_plus, w_minus })
}

fn finish(sr: &SignedRanks, p_less: f64, p_greater: f64, exact: bool) -> WilcoxonResult {
    WilcoxonResult {
        n: sr.ranks.len(),
        w_plus: sr.w_plus,
        w_minus: sr.w_minus,
        statistic: sr.w_plus.min(sr.w_minus),
        p_two_sided: (2.0 * p_less.min(p_greater)).min(1.0),
        p_less,
        p_greater,
        exact,
    }
}

/// Exact null distribution of `W⁺` by counting subset sums of the doubled
/// (integer) ranks.
fn exact_tails(sr: &SignedRanks) -> (f64, f64) {
    let doubled: Vec<usize> = sr.ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let patterns = 2f64.powi(doubled.len() as i32);
    let observed = (2.0 * sr.w_plus).round() as usize;
    let less: f64 = counts[..=observed].iter().sum();
    let greater: f64 = counts[observed..].iter().sum();
    (less / patterns, greater / patterns)
}

fn normal_tails(sr: &SignedRanks) -> (f64, f64) {
    let n = sr.ranks.len() as f64;
    let mu = n * (n + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = sr.ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let sd = var.sqrt();
    let z = Normal::standard();
    let p_less = z.cdf((sr.w_plus - mu + 0.5) / sd);
    let p_greater = z.sf((sr.w_plus - mu - 0.5) / sd);
    (p_less.min(1.0), p_greater.min(1.0))
}

/// Exact enumeration for at most 20 nonzero pairs, otherwise the normal
/// approximation with tie and continuity corrections. Zero differences
/// are dropped.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    let sr = signed_ranks(a, b)?;
    if sr.ranks.len() <= EXACT_MAX_N {
        let (l, g) = exact_tails(&sr);
        Ok(finish(&sr, l, g, true))
    } else {
        let (l, g) = normal_tails(&sr);
        Ok(finish(&sr, l, g, false))
    }
}

/// The normal approximation regardless of sample size.
pub fn wilcoxon_normal_approx(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    let sr = signed_ranks(a, b)?;
    let (l, g) = normal_tails(&sr);
    Ok(finish(&sr, l, g, false))
}
