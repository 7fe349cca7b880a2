//! Scalar EEG evidence: class-conditional densities over evidence scores,
//! sampling, and the expected likelihood ratios that drive query selection.
//!
//! Two backends share [`EvidenceModel`]:
//!
//! * a parametric unit-variance Gaussian pair keyed by a target AUC, and
//! * kernel density estimates fit to RDA scores of a calibration set.

mod auc;
mod kde;
mod rda;

pub use auc::auc;
pub use kde::{silverman_bandwidth, Kde};
pub use rda::{
    cv_select, fold_assignment, ml_moments, out_of_fold_scores, rda_fit, rda_score,
    synth_calibration, CalibrationSet, CvSelection, RdaModel,
};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Densities are clamped here before any division or logarithm.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Number of trapezoid nodes used for expectations over evidence scores.
pub const QUADRATURE_POINTS: usize = 4097;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// One-dimensional density over evidence scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Density {
    Gaussian { mean: f64, sd: f64 },
    Kde(Kde),
}

impl Density {
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Density::Gaussian { .. } => self.log_pdf(x).exp(),
            Density::Kde(k) => k.pdf(x).max(DENSITY_FLOOR),
        }
    }

    /// Log density, floored at `ln(DENSITY_FLOOR)`.
    pub fn log_pdf(&self, x: f64) -> f64 {
        let raw = match self {
            Density::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - LN_SQRT_2PI
            }
            Density::Kde(k) => k.pdf(x).max(DENSITY_FLOOR).ln(),
        };
        raw.max(DENSITY_FLOOR.ln())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Density::Gaussian { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Density::Kde(k) => k.sample(rng),
        }
    }

    fn support(&self) -> (f64, f64, f64) {
        match self {
            Density::Gaussian { mean, sd } => (*mean, *mean, *sd),
            Density::Kde(k) => {
                let (lo, hi) = k.support();
                (lo, hi, k.bandwidth)
            }
        }
    }

    fn center(&self) -> f64 {
        match self {
            Density::Gaussian { mean, .. } => *mean,
            Density::Kde(k) => k.mean(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Density::Gaussian { mean, sd } if mean.is_finite() && *sd > 0.0 && sd.is_finite() => Ok(()),
            Density::Kde(k)
                if k.bandwidth > 0.0
                    && k.bandwidth.is_finite()
                    && !k.centers.is_empty()
                    && k.centers.iter().all(|c| c.is_finite()) =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidParameter("density parameters are not valid".into())),
        }
    }
}

/// Uniform trapezoid grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl QuadratureGrid {
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.step();
        (0..self.points).map(move |i| self.lo + i as f64 * h)
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let h = self.step();
        let n = self.points;
        let mut total = 0.0;
        for (i, x) in self.nodes().enumerate() {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            total += w * f(x);
        }
        total * h
    }
}

/// Expected likelihood ratios under the target and nontarget classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimates {
    pub sigma_plus: f64,
    pub sigma_minus: f64,
}

impl SigmaEstimates {
    /// Whether the estimates describe informative evidence (`sigma_plus >= 1`).
    pub fn is_separated(&self) -> bool {
        self.sigma_plus >= 1.0
    }
}

/// Target (label 1) and nontarget (label 0) evidence densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceModel {
    pub target: Density,
    pub nontarget: Density,
}

impl EvidenceModel {
    pub fn new(target: Density, nontarget: Density) -> Result<Self> {
        target.validate()?;
        nontarget.validate()?;
        Ok(Self { target, nontarget })
    }

    pub fn density(&self, label: u8) -> &Density {
        if label == 1 {
            &self.target
        } else {
            &self.nontarget
        }
    }

    /// `ln p(e|1) - ln p(e|0)` with both densities floored.
    pub fn log_ratio(&self, e: f64) -> f64 {
        self.target.log_pdf(e) - self.nontarget.log_pdf(e)
    }

    pub fn ratio(&self, e: f64) -> f64 {
        self.log_ratio(e).exp()
    }

    /// Covers both supports padded by five bandwidths, then widened by the
    /// class separation so the ratio-weighted integrand is also covered.
    pub fn quadrature_grid(&self) -> QuadratureGrid {
        let (lo1, hi1, bw1) = self.target.support();
        let (lo0, hi0, bw0) = self.nontarget.support();
        let spread = (self.target.center() - self.nontarget.center()).abs();
        let lo = (lo1 - 5.0 * bw1).min(lo0 - 5.0 * bw0) - spread;
        let hi = (hi1 + 5.0 * bw1).max(hi0 + 5.0 * bw0) + spread;
        QuadratureGrid { lo, hi, points: QUADRATURE_POINTS }
    }

    /// Mass of each class density over the quadrature grid `(target, nontarget)`.
    pub fn grid_masses(&self) -> (f64, f64) {
        let grid = self.quadrature_grid();
        (grid.integrate(|x| self.target.pdf(x)), grid.integrate(|x| self.nontarget.pdf(x)))
    }

    pub fn sample<R: Rng + ?Sized>(&self, label: u8, rng: &mut R) -> f64 {
        self.density(label).sample(rng)
    }
}

/// Unit-variance Gaussians at `±d/2` with `d = √2 Φ⁻¹(auc)`, so the
/// analytic AUC equals `auc_target`.
pub fn gaussian_evidence_model(auc_target: f64) -> Result<EvidenceModel> {
    if !(0.5..1.0).contains(&auc_target) {
        return Err(Error::InvalidParameter(format!("target AUC {auc_target} outside [0.5, 1)")));
    }
    let d = separation_for_auc(auc_target);
    EvidenceModel::new(
        Density::Gaussian { mean: d / 2.0, sd: 1.0 },
        Density::Gaussian { mean: -d / 2.0, sd: 1.0 },
    )
}

/// Mean separation of a unit-variance Gaussian pair with the given AUC.
pub fn separation_for_auc(auc_target: f64) -> f64 {
    let normal = Normal::standard();
    std::f64::consts::SQRT_2 * normal.inverse_cdf(auc_target)
}

/// Analytic AUC of a unit-variance Gaussian pair with separation `d`.
pub fn auc_for_separation(d: f64) -> f64 {
    Normal::standard().cdf(d / std::f64::consts::SQRT_2)
}

/// `σ̂⁺ = E_{e|1}[p(e|1)/p(e|0)]` and `σ̂⁻ = E_{e|0}[p(e|1)/p(e|0)]` by
/// trapezoid quadrature.
pub fn sigma_point_estimates(model: &EvidenceModel) -> SigmaEstimates {
    let grid = model.quadrature_grid();
    let plus = grid.integrate(|e| (2.0 * model.target.log_pdf(e) - model.nontarget.log_pdf(e)).exp());
    let minus = grid.integrate(|e| model.target.log_pdf(e).exp());
    SigmaEstimates { sigma_plus: plus, sigma_minus: minus }
}

pub fn sample_evidence<R: Rng + ?Sized>(model: &EvidenceModel, label: u8, rng: &mut R) -> f64 {
    model.sample(label, rng)
}

/// Knobs of the synthetic calibration pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub dims: usize,
    pub n_target: usize,
    pub n_nontarget: usize,
    pub separation: f64,
    pub lambda_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            dims: 40,
            n_target: 100,
            n_nontarget: 1300,
            separation: 1.5,
            lambda_grid: vec![0.0, 0.1, 0.3, 0.6, 0.9],
            gamma_grid: vec![0.0, 0.1, 0.3, 0.6, 0.9],
            folds: 10,
            seed: 0,
        }
    }
}

/// Result of the synthetic calibration pipeline.
#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub model: EvidenceModel,
    pub selection: CvSelection,
    /// AUC of the out-of-fold evidence scores the densities were fit to.
    pub score_auc: f64,
    pub sigma: SigmaEstimates,
}

/// Synthetic features, RDA with cross-validated `(λ, γ)`, out-of-fold
/// scores, then a KDE per class.
pub fn calibrate_synthetic(params: &CalibrationParams) -> Result<CalibrationOutcome> {
    let data = synth_calibration(
        params.dims,
        params.n_target,
        params.n_nontarget,
        params.separation,
        params.seed,
    )?;
    let selection = cv_select(&data, &params.lambda_grid, &params.gamma_grid, params.folds, params.seed)?;
    let scores = out_of_fold_scores(&data, selection.lambda, selection.gamma, params.folds, params.seed)?;
    let mut targets = Vec::new();
    let mut nontargets = Vec::new();
    for (score, &label) in scores.iter().zip(&data.labels) {
        match (score, label) {
            (Some(s), 1) => targets.push(*s),
            (Some(s), _) => nontargets.push(*s),
            (None, _) => {}
        }
    }
    let model = EvidenceModel::new(Density::Kde(Kde::fit(&targets)?), Density::Kde(Kde::fit(&nontargets)?))?;
    let sigma = sigma_point_estimates(&model);
    Ok(CalibrationOutcome { score_auc: auc(&targets, &nontargets), model, selection, sigma })
}
